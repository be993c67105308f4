pub mod lp;
pub mod matroid;
pub mod packing;
pub mod polytope;

pub use lp::{Cmp, Constraint, DenseLp, LpSolution, LpStatus};
pub use matroid::{Matroid, MatroidKind};
pub use packing::{CpipData, PackingSystem, Request, TreeEdge, UfpTreeInstance};
pub use polytope::{Polytope, PolytopeKind};
