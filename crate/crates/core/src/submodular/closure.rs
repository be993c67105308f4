//! The concave closure `f⁺(x)`: the best expected value of `f` over
//! distributions on `2^N` with marginals `x`.
//!
//! Solved by column generation on the master LP over set weights `α_S`,
//! pricing every subset exhaustively against the duals.

use super::multilinear::EXACT_LIMIT;
use super::SetFunction;
use crate::constraints::lp::{Constraint, DenseLp, LpStatus};
use crate::error::{Error, Result};
use crate::subset::Subset;

const PRICE_TOL: f64 = 1e-10;
const MAX_ROUNDS: usize = 10_000;
/// Columns added per pricing round.
const BATCH: usize = 8;

/// Chain decomposition of `x`: nested top-`k` sets with weights
/// `x_(k) - x_(k+1)`, a feasible starting basis.
fn chain(x: &[f64]) -> Vec<Subset> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let mut sets = vec![Subset::EMPTY];
    let mut s = Subset::EMPTY;
    for &i in &idx {
        s.insert(i);
        sets.push(s);
    }
    sets
}

pub fn concave_closure(f: &SetFunction, x: &[f64]) -> Result<f64> {
    let n = f.len();
    if x.len() != n {
        return Err(Error::Dimension(format!("point of length {} for a function on {n}", x.len())));
    }
    if n > EXACT_LIMIT {
        return Err(Error::Capacity { what: "concave closure", n, limit: EXACT_LIMIT });
    }
    if let Some(i) = x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidArgument(format!("coordinate {i} = {} outside [0,1]", x[i])));
    }
    let vals = f.tabulate()?;
    let mut cols = chain(x);
    let mut present = vec![false; 1 << n];
    for c in &cols {
        present[c.0 as usize] = true;
    }
    for _ in 0..MAX_ROUNDS {
        let mut lp = DenseLp::new(cols.iter().map(|s| vals[s.0 as usize]).collect());
        lp.push(Constraint::eq(vec![1.0; cols.len()], 1.0));
        for i in 0..n {
            lp.push(Constraint::eq(cols.iter().map(|s| if s.contains(i) { 1.0 } else { 0.0 }).collect(), x[i]));
        }
        let sol = lp.solve()?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Numeric(format!("closure master LP reported {:?}", sol.status)));
        }
        let (mu, y) = (sol.duals[0], &sol.duals[1..]);
        // Reduced costs f(S) - μ - y(S), with y(S) by lowest-bit recursion.
        let mut ys = vec![0.0f64; 1 << n];
        let mut best: Vec<(f64, usize)> = Vec::new();
        for m in 0..(1usize << n) {
            if m > 0 {
                ys[m] = ys[m & (m - 1)] + y[m.trailing_zeros() as usize];
            }
            let rc = vals[m] - mu - ys[m];
            if rc > PRICE_TOL * (1.0 + vals[m].abs()) && !present[m] {
                best.push((rc, m));
            }
        }
        if best.is_empty() {
            return Ok(sol.value);
        }
        best.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, m) in best.iter().take(BATCH) {
            present[m] = true;
            cols.push(Subset(m as u64));
        }
    }
    Err(Error::Numeric(format!("column generation did not converge in {MAX_ROUNDS} rounds")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::matroid::Matroid;

    #[test]
    fn vertex_gives_function_value() {
        let f = SetFunction::cut(3, vec![(0, 1, 1.0), (1, 2, 2.0)]).unwrap();
        assert!((concave_closure(&f, &[1.0, 0.0, 1.0]).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn modular_closure_is_linear() {
        let f = SetFunction::modular(vec![1.0, 3.0, 0.5], 2.0).unwrap();
        let v = concave_closure(&f, &[0.2, 0.4, 0.9]).unwrap();
        assert!((v - (2.0 + 0.2 + 1.2 + 0.45)).abs() < 1e-9);
    }

    #[test]
    fn uniform_rank_one() {
        let m = Matroid::uniform(2, 1).unwrap();
        let f = SetFunction::weighted_rank(&m, vec![1.0, 1.0]).unwrap();
        assert!((concave_closure(&f, &[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-9);
    }
}
