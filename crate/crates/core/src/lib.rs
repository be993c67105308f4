pub mod constraints;
pub mod error;
pub mod instance;
pub mod local_search;
pub mod rng;
pub mod rounding;
pub mod schemes;
pub mod submodular;
pub mod subset;
pub mod verification;

pub use error::{Error, Result};
pub use subset::{GroundSet, Subset};
