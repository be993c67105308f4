//! Independent oracles and statistical validators.

mod suite;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, sample_set, shards};
use crate::schemes::CrScheme;
use crate::submodular::{concave_closure, multilinear_exact, prune, Estimate, SetFunction, EXACT_LIMIT};
use crate::subset::Subset;

pub use suite::{inequality_suite, CheckRecord, MatroidPoint, SuiteInput, SuiteOptions};

/// Exhaustive `max {f(S) : feasible(S)}`; ties go to the lexicographically
/// smallest sorted element list. `None` if nothing is feasible.
pub fn brute_force_max<F>(f: &SetFunction, feasible: F) -> Result<Option<(Subset, f64)>>
where
    F: Fn(Subset) -> bool + Sync,
{
    let n = f.len();
    if n > EXACT_LIMIT {
        return Err(Error::Capacity { what: "brute-force maximization", n, limit: EXACT_LIMIT });
    }
    let better = |a: Option<(Subset, f64)>, b: Option<(Subset, f64)>| match (a, b) {
        (None, x) | (x, None) => x,
        (Some(a), Some(b)) => {
            if b.1 > a.1 || (b.1 == a.1 && b.0.lex_cmp(a.0).is_lt()) {
                Some(b)
            } else {
                Some(a)
            }
        }
    };
    let total = 1u64 << n;
    let chunk = 1u64 << 12;
    let best = (0..total.div_ceil(chunk))
        .into_par_iter()
        .map(|k| {
            let mut best = None;
            for m in k * chunk..((k + 1) * chunk).min(total) {
                let s = Subset(m);
                if feasible(s) {
                    best = better(best, Some((s, f.value(s))));
                }
            }
            best
        })
        .reduce(|| None, better);
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementBalance {
    pub estimate: f64,
    pub stderr: f64,
    /// Trials in which the element was sampled.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    /// `None` for elements never sampled.
    pub per_element: Vec<Option<ElementBalance>>,
    /// `(element, estimate, stderr)` of the smallest estimate.
    pub min: Option<(usize, f64, f64)>,
    pub trials: usize,
    /// Trials whose output was infeasible or escaped `R ∩ support(x)`.
    pub violations: usize,
}

impl BalanceReport {
    /// `min estimate - (claimed - sigmas·stderr)`, or `+∞` without data.
    pub fn margin(&self, claimed: f64, sigmas: f64) -> f64 {
        match self.min {
            Some(_) => self
                .per_element
                .iter()
                .flatten()
                .map(|e| e.estimate - claimed + sigmas * e.stderr)
                .fold(f64::INFINITY, f64::min),
            None => f64::INFINITY,
        }
    }
}

/// Conditional frequencies `Pr[i ∈ π(R) | i ∈ R]` over `trials` draws of
/// `R(x)` at the scheme's point.
pub fn balance_estimate(s: &CrScheme, trials: usize, seed: u64) -> Result<BalanceReport> {
    if trials == 0 {
        return Err(Error::InvalidArgument("balance estimation needs at least one trial".into()));
    }
    let n = s.len();
    let x = s.point();
    let parts: Vec<(Vec<usize>, Vec<usize>, usize)> = shards(trials)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(seed, k));
            let (mut hit, mut kept, mut bad) = (vec![0usize; n], vec![0usize; n], 0);
            for _ in 0..len {
                let r = sample_set(x, &mut rng);
                let out = s.resolve(r, &mut rng);
                if !out.is_subset_of(r) || !s.is_feasible(out) {
                    bad += 1;
                }
                for i in r.iter() {
                    hit[i] += 1;
                }
                for i in out.iter() {
                    kept[i] += 1;
                }
            }
            (hit, kept, bad)
        })
        .collect();
    let mut hit = vec![0usize; n];
    let mut kept = vec![0usize; n];
    let mut violations = 0;
    for (h, k, b) in parts {
        for i in 0..n {
            hit[i] += h[i];
            kept[i] += k[i];
        }
        violations += b;
    }
    let per_element: Vec<Option<ElementBalance>> = (0..n)
        .map(|i| {
            (hit[i] > 0).then(|| {
                let p = kept[i] as f64 / hit[i] as f64;
                ElementBalance { estimate: p, stderr: (p * (1.0 - p) / hit[i] as f64).sqrt(), samples: hit[i] }
            })
        })
        .collect();
    let min = per_element
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.map(|e| (i, e.estimate, e.stderr)))
        .fold(None, |acc: Option<(usize, f64, f64)>, c| match acc {
            Some(a) if a.1 <= c.1 => Some(a),
            _ => Some(c),
        });
    Ok(BalanceReport { per_element, min, trials, violations })
}

/// `F(x) / f⁺(x)`.
pub fn correlation_gap_estimate(f: &SetFunction, x: &[f64]) -> Result<f64> {
    let closure = concave_closure(f, x)?;
    if closure <= 0.0 {
        return Err(Error::InvalidArgument("concave closure is zero; the ratio is undefined".into()));
    }
    Ok(multilinear_exact(f, x)? / closure)
}

/// Mean of `f(η_f(π(R(x))))` over `trials` draws at the scheme's point.
pub fn rounding_estimate(f: &SetFunction, s: &CrScheme, trials: usize, seed: u64) -> Estimate {
    let parts: Vec<(f64, f64)> = shards(trials)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(seed, k));
            (0..len).fold((0.0, 0.0), |acc, _| {
                let r = sample_set(s.point(), &mut rng);
                let v = f.value(prune(f, s.resolve(r, &mut rng)));
                (acc.0 + v, acc.1 + v * v)
            })
        })
        .collect();
    let (sum, sq) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let h = trials as f64;
    let mean = sum / h;
    let var = if trials > 1 { ((sq - sum * mean) / (h - 1.0)).max(0.0) } else { 0.0 };
    Estimate { value: mean, stderr: (var / h).sqrt() }
}
