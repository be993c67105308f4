//! Knapsack constraints: the all-or-nothing scheme for small items and
//! partial enumeration of large ones.

use std::sync::Arc;

use super::{CrScheme, SchemeParts};
use crate::error::{Error, Result};
use crate::rng::SchemeRng;
use crate::submodular::SetFunction;
use crate::subset::Subset;

const TOL: f64 = 1e-9;

/// Accept `R` whole if it fits the row `a·1_R <= 1`, otherwise reject it.
///
/// Requires `a·x <= 1 - eps` and `max a_i <= delta`; claims balance
/// `1 - exp(-eps² / (6 delta))` at scale `b = 1 - eps`.
pub fn knapsack_small_items_scheme(a: &[f64], x: &[f64], eps: f64, delta: f64) -> Result<CrScheme> {
    if a.len() != x.len() {
        return Err(Error::Dimension(format!("knapsack row of length {} for a point of length {}", a.len(), x.len())));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon = {eps} must lie in (0,1)")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("knapsack size {v} must be finite and >= 0")));
    }
    if let Some(i) = a.iter().position(|v| *v > delta + TOL) {
        return Err(Error::Precondition(format!("item {i} has size {} > delta = {delta}", a[i])));
    }
    let load: f64 = a.iter().zip(x).map(|(a, x)| a * x).sum();
    if load > 1.0 - eps + TOL {
        return Err(Error::Precondition(format!("fractional load {load} exceeds 1 - epsilon = {}", 1.0 - eps)));
    }
    let participants = Subset::from_elements((0..a.len()).filter(|&i| a[i] > 0.0));
    let row: Arc<Vec<f64>> = Arc::new(a.to_vec());
    let (r1, r2) = (row.clone(), row);
    let fits = move |s: Subset, r: &[f64]| s.iter().map(|i| r[i]).sum::<f64>() <= 1.0 + 1e-12;
    CrScheme::from_parts(SchemeParts {
        name: "knapsack".into(),
        x: x.to_vec(),
        participants,
        b: 1.0 - eps,
        c: 1.0 - (-eps * eps / (6.0 * delta)).exp(),
        monotone: true,
        deterministic: true,
        resolver: Arc::new(move |s: Subset, _: &mut SchemeRng| if fits(s, &r1) { s } else { Subset::EMPTY }),
        feasible: Arc::new(move |s| fits(s, &r2)),
    })
}

/// One guess `T` of large items together with what remains to be solved.
#[derive(Clone, Debug)]
pub struct ResidualInstance {
    pub t: Subset,
    /// `g(S) = f(S ∪ T)` on the full ground set.
    pub objective: SetFunction,
    /// Residual capacities `r = cap - a(T)` per row.
    pub capacities: Vec<f64>,
    /// Rows divided by their residual capacity, with disallowed columns zeroed.
    pub rows: Vec<Vec<f64>>,
    /// Items outside `T` whose size is at most `delta · r` in every row.
    pub allowed: Subset,
}

/// Enumerate feasible `T` with `|T| <= n0` in lexicographic order and build
/// the residual instance for each.
pub fn knapsack_partial_enumeration(
    f: &SetFunction,
    rows: &[Vec<f64>],
    caps: &[f64],
    n0: usize,
    delta: f64,
) -> Result<Vec<ResidualInstance>> {
    let n = f.len();
    if rows.len() != caps.len() {
        return Err(Error::Dimension(format!("{} knapsack rows but {} capacities", rows.len(), caps.len())));
    }
    for (k, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(Error::Dimension(format!("knapsack row {k} has length {}, expected {n}", r.len())));
        }
        if let Some(v) = r.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("knapsack row {k} has entry {v}")));
        }
    }
    if let Some(c) = caps.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::InvalidArgument(format!("capacity {c} must be positive")));
    }
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} must be positive")));
    }
    let base = f.tabulate()?;
    let mut out = Vec::new();
    let mut guesses = Vec::new();
    subsets_up_to(n, n0.min(n), &mut Vec::new(), 0, &mut guesses);
    for t in guesses {
        let used: Vec<f64> = rows.iter().map(|r| t.iter().map(|j| r[j]).sum()).collect();
        if used.iter().zip(caps).any(|(u, c)| *u > c + TOL) {
            continue;
        }
        let residual: Vec<f64> = caps.iter().zip(&used).map(|(c, u)| (c - u).max(0.0)).collect();
        let allowed = Subset::from_elements((0..n).filter(|&j| {
            !t.contains(j) && rows.iter().zip(&residual).all(|(r, res)| r[j] <= delta * res + 1e-12)
        }));
        let norm: Vec<Vec<f64>> = rows
            .iter()
            .zip(&residual)
            .map(|(r, res)| {
                (0..n).map(|j| if allowed.contains(j) && r[j] > 0.0 { r[j] / res } else { 0.0 }).collect()
            })
            .collect();
        let values: Vec<f64> = (0..1usize << n).map(|s| base[s | t.0 as usize]).collect();
        out.push(ResidualInstance {
            t,
            objective: SetFunction::table(n, values)?,
            capacities: residual,
            rows: norm,
            allowed,
        });
    }
    Ok(out)
}

fn subsets_up_to(n: usize, k: usize, cur: &mut Vec<usize>, start: usize, out: &mut Vec<Subset>) {
    out.push(Subset::from_elements(cur.iter().copied()));
    if cur.len() == k {
        return;
    }
    for j in start..n {
        cur.push(j);
        subsets_up_to(n, k, cur, j + 1, out);
        cur.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::balance_estimate;

    #[test]
    fn single_item_is_always_kept() {
        let s = knapsack_small_items_scheme(&[0.4], &[0.6], 0.4, 0.4).unwrap();
        let est = balance_estimate(&s, 5000, 0).unwrap();
        assert_eq!(est.min.unwrap().1, 1.0);
    }

    #[test]
    fn overloaded_point_is_rejected() {
        assert!(knapsack_small_items_scheme(&[0.5, 0.5], &[1.0, 1.0], 0.1, 0.5).is_err());
        assert!(knapsack_small_items_scheme(&[0.3], &[0.1], 0.1, 0.2).is_err());
    }

    #[test]
    fn tight_load_meets_floor() {
        let (eps, delta) = (0.5, 0.05);
        let n = 20;
        let x = vec![(1.0 - eps) / (delta * n as f64); n];
        let s = knapsack_small_items_scheme(&vec![delta; n], &x, eps, delta).unwrap();
        let est = balance_estimate(&s, 40_000, 3).unwrap();
        let (_, v, se) = est.min.unwrap();
        assert!(v >= s.c() - 3.0 * se, "{v} < {}", s.c());
    }

    #[test]
    fn enumeration_without_guesses_drops_big_items() {
        let f = SetFunction::modular(vec![1.0, 1.0, 1.0], 0.0).unwrap();
        let rows = vec![vec![0.9, 0.1, 0.1]];
        let res = knapsack_partial_enumeration(&f, &rows, &[1.0], 0, 0.5).unwrap();
        assert_eq!(res.len(), 1);
        assert_eq!(res[0].t, Subset::EMPTY);
        assert_eq!(res[0].allowed, Subset::from_elements([1, 2]));
    }

    #[test]
    fn enumeration_contracts_objective() {
        let f = SetFunction::modular(vec![5.0, 1.0, 1.0], 0.0).unwrap();
        let rows = vec![vec![0.9, 0.1, 0.1]];
        let res = knapsack_partial_enumeration(&f, &rows, &[1.0], 1, 1.0).unwrap();
        let r0 = res.iter().find(|r| r.t == Subset::singleton(0)).unwrap();
        assert!((r0.capacities[0] - 0.1).abs() < 1e-12);
        assert_eq!(r0.objective.value(Subset::EMPTY), 5.0);
        assert_eq!(r0.allowed, Subset::from_elements([1, 2]));
        assert!((r0.rows[0][1] - 1.0).abs() < 1e-12);
        assert_eq!(res.len(), 4);
    }
}
