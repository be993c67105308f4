//! Matroid schemes: the deterministic span-ordering scheme and the
//! LP-optimal mixture of greedy mappings.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CrScheme, SchemeParts};
use crate::constraints::lp::{Constraint, DenseLp, LpStatus};
use crate::constraints::matroid::Matroid;
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, sample_set, shards, SchemeRng};
use crate::submodular::{multilinear::product_distribution, Estimate};
use crate::subset::Subset;

/// Largest matroid whose polytope membership is checked on construction.
const MEMBERSHIP_CHECK_LIMIT: usize = 12;
const EXACT_GAP_LIMIT: usize = 12;

fn check_point(m: &Matroid, x: &[f64], b: f64) -> Result<()> {
    if x.len() != m.len() {
        return Err(Error::Dimension(format!("point of length {} for a matroid on {}", x.len(), m.len())));
    }
    if !(b > 0.0 && b <= 1.0) {
        return Err(Error::InvalidArgument(format!("b = {b} must lie in (0,1]")));
    }
    if m.len() <= MEMBERSHIP_CHECK_LIMIT {
        let scaled: Vec<f64> = x.iter().map(|v| v / b).collect();
        if !m.polytope_contains(&scaled, 1e-9)? {
            return Err(Error::Precondition(format!("x / {b} is not in the matroid polytope")));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanSchemeConfig {
    pub samples_per_round: usize,
    pub seed: u64,
}

impl Default for SpanSchemeConfig {
    fn default() -> Self {
        Self { samples_per_round: 2000, seed: 0 }
    }
}

/// One round of the ordering construction: the element placed last among
/// those remaining and its estimated `Pr[i ∈ span(R)]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanRound {
    pub element: usize,
    pub estimate: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug)]
pub struct SpanScheme {
    pub scheme: CrScheme,
    /// Supported elements, first to last.
    pub order: Vec<usize>,
    /// Rounds in construction order (the first round picks the last element).
    pub rounds: Vec<SpanRound>,
}

/// Keep `i ∈ A` iff `i ∉ span(A ∩ {elements before i})`, for an ordering
/// that repeatedly moves the element least likely to be spanned to the end.
pub fn matroid_span_scheme(m: Arc<Matroid>, x: &[f64], b: f64, cfg: &SpanSchemeConfig) -> Result<SpanScheme> {
    check_point(&m, x, b)?;
    if cfg.samples_per_round == 0 {
        return Err(Error::InvalidArgument("span estimation needs at least one sample per round".into()));
    }
    m.rank_table();
    let mut remaining: Vec<usize> = Subset::support(x).to_vec();
    let mut rounds = Vec::with_capacity(remaining.len());
    let h = cfg.samples_per_round;
    while !remaining.is_empty() {
        let u = Subset::from_elements(remaining.iter().copied());
        let xr: Vec<f64> = (0..x.len()).map(|i| if u.contains(i) { x[i] } else { 0.0 }).collect();
        let round = rounds.len() as u64;
        let counts: Vec<Vec<usize>> = shards(h)
            .into_par_iter()
            .map(|(k, _, len)| {
                let mut rng = rng_from(derive(derive(cfg.seed, round), k));
                let mut c = vec![0usize; remaining.len()];
                for _ in 0..len {
                    let r = sample_set(&xr, &mut rng);
                    let rank = m.rank(r);
                    for (slot, &i) in remaining.iter().enumerate() {
                        if r.contains(i) || m.rank(r.with(i)) == rank {
                            c[slot] += 1;
                        }
                    }
                }
                c
            })
            .collect();
        let mut best = (0usize, usize::MAX);
        for slot in 0..remaining.len() {
            let c: usize = counts.iter().map(|v| v[slot]).sum();
            if c < best.1 {
                best = (slot, c);
            }
        }
        let p = best.1 as f64 / h as f64;
        rounds.push(SpanRound { element: remaining[best.0], estimate: p, stderr: (p * (1.0 - p) / h as f64).sqrt() });
        remaining.remove(best.0);
    }
    let order: Vec<usize> = rounds.iter().rev().map(|r| r.element).collect();
    let (mr, ord) = (m.clone(), order.clone());
    let resolver = move |a: Subset, _: &mut SchemeRng| {
        let seq: Vec<usize> = ord.iter().copied().filter(|&i| a.contains(i)).collect();
        mr.greedy_in_order(&seq)
    };
    let mf = m.clone();
    let scheme = CrScheme::from_parts(SchemeParts {
        name: "matroid-span".into(),
        x: x.to_vec(),
        participants: Subset::full(m.len()),
        b,
        c: 1.0 - b,
        monotone: true,
        deterministic: true,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| mf.is_independent(s)),
    })?;
    Ok(SpanScheme { scheme, order, rounds })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalSchemeConfig {
    pub epsilon: f64,
    /// Size of the shared batch used for every coefficient estimate.
    pub samples: usize,
    pub seed: u64,
    pub max_iters: usize,
}

impl Default for OptimalSchemeConfig {
    fn default() -> Self {
        Self { epsilon: 0.02, samples: 20_000, seed: 0, max_iters: 200 }
    }
}

/// The restricted LP pair behind the optimal matroid scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeLp {
    /// Each mapping is greedy along this order of positive-weight elements.
    pub mappings: Vec<Vec<usize>>,
    /// `q̃_{i,φ}` per mapping, indexed by element.
    pub q_tilde: Vec<Vec<f64>>,
    pub lambda: Vec<f64>,
    /// Optimum of the restricted primal.
    pub c_primal: f64,
    /// Optimum of the restricted dual.
    pub mu_dual: f64,
    /// `Σ q̃ y - μ` of the last separation call.
    pub last_violation: f64,
    pub iterations: usize,
    pub capped: bool,
}

#[derive(Clone, Debug)]
pub struct OptimalScheme {
    pub scheme: CrScheme,
    pub lp: SchemeLp,
}

fn greedy_order(y: &[f64], support: &[usize]) -> Vec<usize> {
    let mut ord: Vec<usize> = support.iter().copied().filter(|&i| y[i] > 0.0).collect();
    ord.sort_by(|&i, &j| y[j].total_cmp(&y[i]).then(i.cmp(&j)));
    ord
}

/// `q̃_{i,φ} = x_i Pr[i ∈ φ(R + i)] - (ε/2) x_i` on the shared batch.
fn estimate_q(m: &Matroid, order: &[usize], batch: &[Subset], x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len();
    let counts: Vec<Vec<usize>> = batch
        .par_chunks(crate::rng::SHARD)
        .map(|chunk| {
            let mut c = vec![0usize; n];
            for &r in chunk {
                let mut ind = Subset::EMPTY;
                for &e in order {
                    if m.is_independent(ind.with(e)) {
                        c[e] += 1;
                        if r.contains(e) {
                            ind.insert(e);
                        }
                    }
                }
            }
            c
        })
        .collect();
    let h = batch.len() as f64;
    (0..n)
        .map(|i| {
            let c: usize = counts.iter().map(|v| v[i]).sum();
            x[i] * (c as f64 / h) - 0.5 * eps * x[i]
        })
        .collect()
}

/// Mixture of greedy mappings found by constraint generation on the
/// restricted dual, with the restricted primal solved for the weights.
pub fn matroid_optimal_scheme(m: Arc<Matroid>, x: &[f64], b: f64, cfg: &OptimalSchemeConfig) -> Result<OptimalScheme> {
    check_point(&m, x, b)?;
    if !(cfg.epsilon > 0.0 && cfg.epsilon <= 0.2) {
        return Err(Error::InvalidArgument(format!("epsilon = {} must lie in (0, 0.2]", cfg.epsilon)));
    }
    if cfg.samples == 0 || cfg.max_iters == 0 {
        return Err(Error::InvalidArgument("samples and max_iters must be positive".into()));
    }
    m.rank_table();
    let n = x.len();
    let support: Vec<usize> = Subset::support(x).to_vec();
    let eps = cfg.epsilon;
    let batch: Vec<Subset> = shards(cfg.samples)
        .into_par_iter()
        .flat_map_iter(|(k, _, len)| {
            let mut rng = rng_from(derive(cfg.seed, k));
            (0..len).map(move |_| sample_set(x, &mut rng)).collect::<Vec<_>>()
        })
        .collect();

    let mut mappings: Vec<Vec<usize>> = Vec::new();
    let mut q_tilde: Vec<Vec<f64>> = Vec::new();
    let add = |ord: Vec<usize>, mappings: &mut Vec<Vec<usize>>, q_tilde: &mut Vec<Vec<f64>>| {
        if !mappings.contains(&ord) {
            q_tilde.push(estimate_q(&m, &ord, &batch, x, eps));
            mappings.push(ord);
            true
        } else {
            false
        }
    };
    add(greedy_order(&vec![1.0; n], &support), &mut mappings, &mut q_tilde);
    for &i in &support {
        add(vec![i], &mut mappings, &mut q_tilde);
    }

    let s = support.len();
    let (mut mu, mut last_violation, mut iterations, mut capped) = (0.0, 0.0, 0, false);
    if !support.is_empty() {
        capped = true;
        for it in 0..cfg.max_iters {
            iterations = it + 1;
            // Variables: y over the support, then μ (free). Minimize μ.
            let mut obj = vec![0.0; s + 1];
            obj[s] = -1.0;
            let mut lp = DenseLp::new(obj);
            lp.bound(s, f64::NEG_INFINITY, f64::INFINITY);
            for q in &q_tilde {
                let mut row: Vec<f64> = support.iter().map(|&i| q[i]).collect();
                row.push(-1.0);
                lp.push(Constraint::le(row, 0.0));
            }
            let mut norm: Vec<f64> = support.iter().map(|&i| x[i]).collect();
            norm.push(0.0);
            lp.push(Constraint::eq(norm, 1.0));
            let sol = lp.solve()?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Numeric(format!("restricted dual reported {:?}", sol.status)));
            }
            mu = sol.point[s];
            let mut y = vec![0.0; n];
            for (k, &i) in support.iter().enumerate() {
                y[i] = sol.point[k];
            }
            let ord = greedy_order(&y, &support);
            let qn = estimate_q(&m, &ord, &batch, x, eps);
            last_violation = support.iter().map(|&i| qn[i] * y[i]).sum::<f64>() - mu;
            if last_violation <= eps || mappings.contains(&ord) {
                capped = false;
                break;
            }
            mappings.push(ord);
            q_tilde.push(qn);
        }
    }

    // Restricted primal: max c s.t. Σ_φ q̃_{iφ} λ_φ >= x_i c, Σ λ = 1.
    let k = mappings.len();
    let mut obj = vec![0.0; k + 1];
    obj[k] = 1.0;
    let mut lp = DenseLp::new(obj);
    lp.bound(k, f64::NEG_INFINITY, 1.0);
    for &i in &support {
        let mut row: Vec<f64> = q_tilde.iter().map(|q| q[i]).collect();
        row.push(-x[i]);
        lp.push(Constraint::ge(row, 0.0));
    }
    let mut ones = vec![1.0; k];
    ones.push(0.0);
    lp.push(Constraint::eq(ones, 1.0));
    let sol = lp.solve()?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numeric(format!("restricted primal reported {:?}", sol.status)));
    }
    let lambda: Vec<f64> = sol.point[..k].iter().map(|v| v.max(0.0)).collect();
    let c_primal = if support.is_empty() { 1.0 } else { sol.point[k] };
    let total: f64 = lambda.iter().sum();
    let mut cum = Vec::with_capacity(k);
    let mut acc = 0.0;
    for l in &lambda {
        acc += l / total;
        cum.push(acc);
    }
    let (mr, maps, cumr) = (m.clone(), mappings.clone(), cum);
    let resolver = move |a: Subset, rng: &mut SchemeRng| {
        let u: f64 = rng.gen();
        let j = cumr.iter().position(|&c| u < c).unwrap_or(cumr.len() - 1);
        let seq: Vec<usize> = maps[j].iter().copied().filter(|&i| a.contains(i)).collect();
        mr.greedy_in_order(&seq)
    };
    let mf = m.clone();
    let mut scheme = CrScheme::from_parts(SchemeParts {
        name: "matroid-opt".into(),
        x: x.to_vec(),
        participants: Subset::full(n),
        b,
        c: c_primal.max(0.0),
        monotone: true,
        deterministic: false,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| mf.is_independent(s)),
    })?;
    if capped {
        scheme = scheme.note(format!("constraint generation stopped at the iteration cap {}", cfg.max_iters));
    }
    let lp = SchemeLp { mappings, q_tilde, lambda, c_primal, mu_dual: mu, last_violation, iterations, capped };
    Ok(OptimalScheme { scheme, lp })
}

/// `E[r_y(R(x))] / Σ x_i y_i`: exact for `n <= 12`, else sampled.
pub fn correlation_gap_lp_link(m: &Matroid, x: &[f64], y: &[f64], samples: usize, seed: u64) -> Result<Estimate> {
    let n = m.len();
    if x.len() != n || y.len() != n {
        return Err(Error::Dimension(format!("point and weights must have length {n}")));
    }
    if let Some(v) = y.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("weight {v} must be >= 0")));
    }
    let denom: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    if denom <= 0.0 {
        return Err(Error::InvalidArgument("Σ x_i y_i is zero; the ratio is undefined".into()));
    }
    if n <= EXACT_GAP_LIMIT {
        let p = product_distribution(x);
        let num: f64 = p.iter().enumerate().map(|(s, ps)| ps * m.weighted_rank(y, Subset(s as u64))).sum();
        return Ok(Estimate::exact(num / denom));
    }
    if samples == 0 {
        return Err(Error::InvalidArgument("sampled ratio needs at least one sample".into()));
    }
    let parts: Vec<(f64, f64)> = shards(samples)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(seed, k));
            (0..len).fold((0.0, 0.0), |a, _| {
                let v = m.weighted_rank(y, sample_set(x, &mut rng)) / denom;
                (a.0 + v, a.1 + v * v)
            })
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let h = samples as f64;
    let mean = s / h;
    let var = if samples > 1 { ((s2 - s * mean) / (h - 1.0)).max(0.0) } else { 0.0 };
    Ok(Estimate { value: mean, stderr: (var / h).sqrt() })
}
