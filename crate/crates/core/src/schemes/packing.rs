//! Packing schemes: k-sparse systems, UFP on trees with unit demands, and
//! the grouping-and-scaling reduction for column-restricted systems.

use std::f64::consts::E;
use std::sync::Arc;

use rand::Rng;

use super::{CrScheme, SchemeParts};
use crate::constraints::packing::{PackingSystem, Request, TreeEdge, UfpTreeInstance};
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, SchemeRng};
use crate::subset::Subset;

const TOL: f64 = 1e-9;

fn check_len(n: usize, x: &[f64]) -> Result<()> {
    if x.len() != n {
        return Err(Error::Dimension(format!("point of length {} for a ground set of {n}", x.len())));
    }
    Ok(())
}

fn packing_participants(sys: &PackingSystem) -> Subset {
    Subset::from_elements((0..sys.len()).filter(|&j| sys.rows().iter().any(|r| r[j] > 0.0)))
}

fn check_scaled(sys: &PackingSystem, x: &[f64], b: f64) -> Result<()> {
    if !sys.contains_scaled(x, b, TOL) {
        return Err(Error::Precondition(format!("x / {b} violates the packing constraints")));
    }
    Ok(())
}

/// Mark-and-delete scheme for `k`-sparse systems, `b < 1/(2k)`.
///
/// Per row: exactly one big element (`a_ij > 1/2`) in `R` deletes the small
/// elements of that row; otherwise an overloaded row deletes everything
/// participating in it.
pub fn sparse_packing_scheme(sys: &PackingSystem, x: &[f64], b: f64) -> Result<CrScheme> {
    check_len(sys.len(), x)?;
    let k = sys.sparsity().max(1);
    if !(b > 0.0 && b < 1.0 / (2.0 * k as f64)) {
        return Err(Error::Precondition(format!("b = {b} must lie in (0, 1/(2k)) with k = {k}")));
    }
    check_scaled(sys, x, b)?;
    let rows: Arc<Vec<Vec<f64>>> = Arc::new(sys.rows().to_vec());
    let r = rows.clone();
    let resolver = move |a: Subset, _: &mut SchemeRng| {
        let mut deleted = Subset::EMPTY;
        for row in r.iter() {
            let mut big = a.iter().filter(|&j| row[j] > 0.5);
            let first = big.next();
            let single = first.is_some() && big.next().is_none();
            if single {
                deleted = deleted.union(Subset::from_elements(a.iter().filter(|&j| row[j] > 0.0 && row[j] <= 0.5)));
            } else if a.iter().map(|j| row[j]).sum::<f64>() > 1.0 + 1e-12 {
                deleted = deleted.union(Subset::from_elements(a.iter().filter(|&j| row[j] > 0.0)));
            }
        }
        a.difference(deleted)
    };
    let sf = sys.clone();
    CrScheme::from_parts(SchemeParts {
        name: "sparse".into(),
        x: x.to_vec(),
        participants: packing_participants(sys),
        b,
        c: 1.0 - 2.0 * k as f64 * b,
        monotone: true,
        deterministic: true,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| sf.is_feasible(s)),
    })
}

/// Overload-deletion scheme for systems of width `W >= 2`, `b < 1/(2e)`.
pub fn sparse_packing_width_scheme(sys: &PackingSystem, x: &[f64], b: f64) -> Result<CrScheme> {
    check_len(sys.len(), x)?;
    let w = sys.width();
    if w < 2 {
        return Err(Error::Precondition(format!("width {w} < 2")));
    }
    if !(b > 0.0 && b < 1.0 / (2.0 * E)) {
        return Err(Error::Precondition(format!("b = {b} must lie in (0, 1/(2e))")));
    }
    check_scaled(sys, x, b)?;
    let k = sys.sparsity().max(1) as f64;
    let c = if w == usize::MAX { 1.0 } else { 1.0 - k * (2.0 * E * b).powf((w - 1) as f64) };
    let rows: Arc<Vec<Vec<f64>>> = Arc::new(sys.rows().to_vec());
    let resolver = move |a: Subset, _: &mut SchemeRng| {
        let mut deleted = Subset::EMPTY;
        for row in rows.iter() {
            if a.iter().map(|j| row[j]).sum::<f64>() > 1.0 + 1e-12 {
                deleted = deleted.union(Subset::from_elements(a.iter().filter(|&j| row[j] > 0.0)));
            }
        }
        a.difference(deleted)
    };
    let sf = sys.clone();
    CrScheme::from_parts(SchemeParts {
        name: "sparse-width".into(),
        x: x.to_vec(),
        participants: packing_participants(sys),
        b,
        c,
        monotone: true,
        deterministic: true,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| sf.is_feasible(s)),
    })
}

/// Depth-ordered greedy routing for unit demands, `b < 1/(3e)`.
///
/// Requests are tried by increasing depth of their least common ancestor
/// (ties by index) and kept if they still fit. The scheme is deterministic
/// but not monotone in general.
pub fn ufp_tree_unit_scheme(inst: &UfpTreeInstance, x: &[f64], b: f64) -> Result<CrScheme> {
    check_len(inst.len(), x)?;
    if !inst.has_unit_demands() {
        return Err(Error::Precondition("the unit scheme needs all demands equal to 1".into()));
    }
    if let Some(e) = inst.edges().iter().find(|e| (e.cap - e.cap.round()).abs() > TOL) {
        return Err(Error::Precondition(format!("edge ({},{}) has non-integer capacity {}", e.u, e.v, e.cap)));
    }
    if !(b > 0.0 && b < 1.0 / (3.0 * E)) {
        return Err(Error::Precondition(format!("b = {b} must lie in (0, 1/(3e))")));
    }
    let mut load = vec![0.0; inst.edges().len()];
    for (i, xi) in x.iter().enumerate() {
        for &e in inst.path(i) {
            load[e] += xi;
        }
    }
    for (k, (l, e)) in load.iter().zip(inst.edges()).enumerate() {
        if *l > b * e.cap + TOL {
            return Err(Error::Precondition(format!("edge {k} carries {l} > b·u = {}", b * e.cap)));
        }
    }
    let mut order: Vec<usize> = (0..inst.len()).collect();
    order.sort_by_key(|&i| (inst.lca_depth(i), i));
    let caps: Vec<i64> = inst.edges().iter().map(|e| e.cap.round() as i64).collect();
    let paths: Vec<Vec<usize>> = (0..inst.len()).map(|i| inst.path(i).to_vec()).collect();
    let participants = Subset::from_elements((0..inst.len()).filter(|&i| !paths[i].is_empty()));
    let resolver = move |a: Subset, _: &mut SchemeRng| {
        let mut used = vec![0i64; caps.len()];
        let mut out = Subset::EMPTY;
        for &i in order.iter().filter(|&&i| a.contains(i)) {
            if paths[i].iter().all(|&e| used[e] < caps[e]) {
                for &e in &paths[i] {
                    used[e] += 1;
                }
                out.insert(i);
            }
        }
        out
    };
    let fi = inst.clone();
    let eb = E * b;
    CrScheme::from_parts(SchemeParts {
        name: "ufp".into(),
        x: x.to_vec(),
        participants,
        b,
        c: 1.0 - 2.0 * eb / (1.0 - eb),
        monotone: false,
        deterministic: true,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| fi.is_routable(s)),
    })
}

/// Builds a unit-demand scheme for `A y <= caps` (rows of the 0/1 incidence)
/// at the given point and scale.
pub type UnitFactory = Arc<dyn Fn(&[Vec<u8>], &[f64], &[f64], f64) -> Result<CrScheme> + Send + Sync>;

/// Unit-demand UFP on the same tree, edge capacities replaced by `caps`.
pub fn cpip_ufp_factory(inst: &UfpTreeInstance) -> UnitFactory {
    let inst = inst.clone();
    Arc::new(move |_inc: &[Vec<u8>], caps: &[f64], x: &[f64], beta: f64| {
        let edges: Vec<TreeEdge> =
            inst.edges().iter().zip(caps).map(|(e, &cap)| TreeEdge { u: e.u, v: e.v, cap }).collect();
        let requests: Vec<Request> = inst.requests().iter().map(|r| Request { s: r.s, t: r.t, demand: 1.0 }).collect();
        let unit = UfpTreeInstance::new_unchecked(inst.vertices(), edges, requests, inst.root())?;
        ufp_tree_unit_scheme(&unit, x, beta)
    })
}

/// The k-sparse mark-and-delete scheme on `A_i / caps_i`, restricted to the
/// support of the class point.
pub fn cpip_sparse_factory() -> UnitFactory {
    Arc::new(|inc: &[Vec<u8>], caps: &[f64], x: &[f64], beta: f64| {
        let n = x.len();
        let rows: Vec<Vec<f64>> = inc
            .iter()
            .zip(caps)
            .filter(|(_, c)| **c > 0.0)
            .map(|(row, c)| (0..n).map(|j| if x[j] > 0.0 { row[j] as f64 / c } else { 0.0 }).collect())
            .collect();
        let sys = PackingSystem::normalized(n, rows)?;
        sparse_packing_scheme(&sys, x, beta)
    })
}

/// Demand classes `N_h = { j : d_j ∈ (d_max/3^{h+1}, d_max/3^h] }`.
#[derive(Clone, Debug, PartialEq)]
pub struct CpipClasses {
    pub d_max: f64,
    /// Class index of each column.
    pub class_of: Vec<usize>,
    /// Columns of each class `0..=max class`; some may be empty.
    pub members: Vec<Vec<usize>>,
}

impl CpipClasses {
    pub fn new(demands: &[f64]) -> Result<Self> {
        if let Some(d) = demands.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("demand {d} must be positive")));
        }
        let d_max = demands.iter().copied().fold(0.0, f64::max);
        let class_of: Vec<usize> = demands
            .iter()
            .map(|&d| {
                let mut h = 0;
                while d <= d_max / 3f64.powi(h as i32 + 1) * (1.0 + 1e-12) {
                    h += 1;
                }
                h
            })
            .collect();
        let classes = class_of.iter().max().map_or(0, |m| m + 1);
        let mut members = vec![Vec::new(); classes];
        for (j, &h) in class_of.iter().enumerate() {
            members[h].push(j);
        }
        Ok(Self { d_max, class_of, members })
    }
}

/// Grouping and scaling: a unit-demand `(β, 1-β')` scheme per demand class
/// yields a `(β/6, (1-β')/2)` scheme for `A[d] y <= b`.
///
/// `x` must satisfy `x = (β/6) z` with `A[d] z <= b`, `z ∈ [0,1]^N`.
pub fn cpip_grouping_scaling(sys: &PackingSystem, factory: &UnitFactory, x: &[f64], beta: f64) -> Result<CrScheme> {
    let data = sys
        .cpip()
        .ok_or_else(|| Error::InvalidArgument("grouping and scaling needs a column-restricted system".into()))?;
    let n = sys.len();
    check_len(n, x)?;
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} must lie in (0,1]")));
    }
    let b = beta / 6.0;
    if let Some(i) = x.iter().position(|v| *v > b + TOL) {
        return Err(Error::Precondition(format!("x_{i} = {} exceeds beta/6 = {b}", x[i])));
    }
    check_scaled(sys, x, b)?;
    let classes = CpipClasses::new(&data.demands)?;
    let b_min = data.capacities.iter().copied().fold(f64::INFINITY, f64::min);
    let mut units: Vec<Option<CrScheme>> = Vec::with_capacity(classes.members.len());
    for members in &classes.members {
        if members.is_empty() {
            units.push(None);
            continue;
        }
        let point: Vec<f64> = (0..n).map(|j| if members.contains(&j) { x[j] } else { 0.0 }).collect();
        let caps: Vec<f64> = data
            .incidence
            .iter()
            .map(|row| {
                let v: f64 = members.iter().map(|&j| row[j] as f64 * point[j] / beta).sum();
                (v - TOL).max(0.0).ceil()
            })
            .collect();
        units.push(Some(factory(&data.incidence, &caps, &point, beta)?));
    }
    let present: Vec<&CrScheme> = units.iter().flatten().collect();
    let unit_c = present.iter().map(|s| s.c()).fold(1.0, f64::min);
    let monotone = present.iter().all(|s| s.is_monotone());
    let only_large = units.iter().skip(1).all(|u| u.is_none());
    let all_small = data.demands.iter().all(|&d| d <= b_min / 3.0 + TOL);
    let (mode, c) = if only_large {
        (Mode::Large, unit_c)
    } else if all_small {
        (Mode::Union, unit_c)
    } else {
        (Mode::Coin, unit_c / 2.0)
    };
    let units = Arc::new(units);
    let resolver = move |a: Subset, rng: &mut SchemeRng| {
        let base: u64 = rng.gen();
        let run = |h: usize| match &units[h] {
            Some(s) => s.resolve(a, &mut rng_from(derive(base, h as u64))),
            None => Subset::EMPTY,
        };
        let small = |from: usize| (from..units.len()).fold(Subset::EMPTY, |acc, h| acc.union(run(h)));
        match mode {
            Mode::Large => run(0),
            Mode::Union => small(0),
            Mode::Coin => {
                if rng.gen::<bool>() {
                    run(0)
                } else {
                    small(1)
                }
            }
        }
    };
    let sf = sys.clone();
    CrScheme::from_parts(SchemeParts {
        name: "cpip".into(),
        x: x.to_vec(),
        participants: packing_participants(sys),
        b,
        c,
        monotone,
        deterministic: false,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| sf.is_feasible(s)),
    })
}

#[derive(Clone, Copy, Debug)]
enum Mode {
    Large,
    Union,
    Coin,
}

/// UFP on a tree with general demands: grouping and scaling over the
/// unit-demand tree scheme.
pub fn ufp_general_scheme(inst: &UfpTreeInstance, x: &[f64], beta: f64) -> Result<CrScheme> {
    let sys = inst.packing_system()?;
    Ok(cpip_grouping_scaling(&sys, &cpip_ufp_factory(inst), x, beta)?.with_name("ufp-general"))
}
