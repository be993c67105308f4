//! Discretized fractional local search for `max {F(x) : x ∈ P}` and the
//! two-phase, box-restricted and general-polytope drivers built on it.

use serde::{Deserialize, Serialize};

use crate::constraints::polytope::Polytope;
use crate::error::{Error, Result};
use crate::rng::derive;
use crate::submodular::{gradient_exact, multilinear_exact, CommonSamples, Estimate, EstimatorConfig, FractionalPoint, SetFunction};

/// `(3 - √5) / 2`, the box cap used by the restricted search.
pub const GOLDEN_T: f64 = 0.381_966_011_250_105_1;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalSearchParams {
    /// Granularity of the vertex combination; `None` means `100 n^2`.
    pub q: Option<usize>,
    /// Stop tolerance; `None` means `M n / q`.
    pub delta: Option<f64>,
    pub max_iters: usize,
    pub estimator: EstimatorConfig,
}

impl Default for LocalSearchParams {
    fn default() -> Self {
        Self { q: None, delta: None, max_iters: 100_000, estimator: EstimatorConfig::default() }
    }
}

/// Parameters with defaults filled in for a particular `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedParams {
    pub q: usize,
    pub delta: f64,
    pub m: f64,
    pub max_iters: usize,
    pub estimator: EstimatorConfig,
}

impl LocalSearchParams {
    pub fn resolve(&self, f: &SetFunction) -> Result<ResolvedParams> {
        let n = f.len();
        self.estimator.validate()?;
        let q = self.q.unwrap_or(100 * n * n);
        if q < n || q == 0 {
            return Err(Error::InvalidArgument(format!("granularity q = {q} must be at least n = {n}")));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        let m = f.scale_constant();
        let delta = match self.delta {
            Some(d) if !(d > 0.0 && d.is_finite()) => {
                return Err(Error::InvalidArgument(format!("delta = {d} must be positive")))
            }
            Some(d) => d,
            None => m * n as f64 / q as f64,
        };
        Ok(ResolvedParams { q, delta, m, max_iters: self.max_iters, estimator: self.estimator })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalOptimum {
    pub point: FractionalPoint,
    pub value: Estimate,
    /// Last value of `max_{y∈P} (y - x)·∇̃F(x)`.
    pub certificate: f64,
    /// `4 δ n`.
    pub threshold: f64,
    pub certified: bool,
    pub iterations: usize,
    /// Estimated `F` after each accepted swap, starting at the initial point.
    pub trajectory: Vec<f64>,
    pub params: ResolvedParams,
}

/// Evaluation of `F` and `∇F` for one iteration: exact, or against one
/// shared batch of samples.
enum Eval<'a> {
    Exact(&'a SetFunction),
    Sampled(&'a SetFunction, CommonSamples),
}

impl<'a> Eval<'a> {
    fn new(f: &'a SetFunction, cfg: &EstimatorConfig, seed: u64) -> Self {
        if cfg.is_exact_for(f.len()) {
            Eval::Exact(f)
        } else {
            Eval::Sampled(f, CommonSamples::new(f.len(), cfg.samples, seed))
        }
    }

    fn value(&self, x: &[f64]) -> Result<Estimate> {
        match self {
            Eval::Exact(f) => multilinear_exact(f, x).map(Estimate::exact),
            Eval::Sampled(f, b) => Ok(b.estimate(f, x)),
        }
    }

    fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Eval::Exact(f) => gradient_exact(f, x),
            Eval::Sampled(f, b) => Ok(b.gradient(f, x).into_iter().map(|e| e.value).collect()),
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, Eval::Exact(_))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_vertex(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12)
}

fn average(combo: &[(Vec<f64>, usize)], n: usize, q: usize) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for (v, m) in combo {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += *m as f64 * vi;
        }
    }
    x.iter_mut().for_each(|v| *v = (*v / q as f64).clamp(0.0, 1.0));
    x
}

/// Core loop started from `q` copies of `start`.
fn search_from(
    f: &SetFunction,
    p: &Polytope,
    start: Vec<f64>,
    rp: ResolvedParams,
    stream: u64,
) -> Result<LocalOptimum> {
    let n = f.len();
    if p.dim() != n {
        return Err(Error::Dimension(format!("polytope of dimension {} for a function on {n}", p.dim())));
    }
    let q = rp.q;
    let threshold = 4.0 * rp.delta * n as f64;
    let mut combo: Vec<(Vec<f64>, usize)> = vec![(start, q)];
    let mut x = average(&combo, n, q);
    let cfg = rp.estimator;
    let seed = derive(cfg.seed, stream);
    let mut trajectory = Vec::new();
    let mut best: Option<(Vec<(Vec<f64>, usize)>, Estimate)> = None;
    let mut certificate = f64::INFINITY;
    let mut iterations = 0;
    let mut certified = false;

    for it in 0..rp.max_iters {
        iterations = it + 1;
        let eval = Eval::new(f, &cfg, derive(seed, it as u64));
        let fx = eval.value(&x)?;
        if it == 0 {
            trajectory.push(fx.value);
        }
        if best.as_ref().map_or(true, |b| fx.value > b.1.value) {
            best = Some((combo.clone(), fx));
        }
        let grad = eval.gradient(&x)?;
        let y = p
            .maximize(&grad)?
            .ok_or_else(|| Error::Infeasible("local search polytope is empty".into()))?;
        certificate = dot(&grad, &y) - dot(&grad, &x);
        if certificate <= threshold {
            certified = true;
            break;
        }
        // Replace one copy of the best vertex to swap out.
        let mut chosen: Option<(usize, Vec<f64>, Estimate)> = None;
        for (k, (v, _)) in combo.iter().enumerate() {
            if same_vertex(v, &y) {
                continue;
            }
            let cand: Vec<f64> =
                x.iter().zip(&y).zip(v).map(|((xi, yi), vi)| (xi + (yi - vi) / q as f64).clamp(0.0, 1.0)).collect();
            let val = eval.value(&cand)?;
            if chosen.as_ref().map_or(true, |c| val.value > c.2.value) {
                chosen = Some((k, cand, val));
            }
        }
        let Some((k, _, val)) = chosen else { break };
        if eval.is_exact() && val.value <= fx.value {
            break;
        }
        combo[k].1 -= 1;
        if combo[k].1 == 0 {
            combo.remove(k);
        }
        match combo.iter_mut().find(|(v, _)| same_vertex(v, &y)) {
            Some(e) => e.1 += 1,
            None => combo.push((y, 1)),
        }
        x = average(&combo, n, q);
        trajectory.push(val.value);
    }

    let (combo, value) = if certified {
        let v = Eval::new(f, &cfg, derive(seed, u64::MAX)).value(&x)?;
        (combo, v)
    } else {
        let b = best.expect("at least one iteration runs");
        (b.0, b.1)
    };
    let point = FractionalPoint::from_combo(combo)?;
    Ok(LocalOptimum { point, value, certificate, threshold, certified, iterations, trajectory, params: rp })
}

/// Local search over a down-monotone `P` started at the origin.
pub fn fractional_local_search(f: &SetFunction, p: &Polytope, params: &LocalSearchParams) -> Result<LocalOptimum> {
    if !p.is_down_monotone() {
        return Err(Error::Precondition("fractional local search needs a down-monotone polytope".into()));
    }
    let rp = params.resolve(f)?;
    search_from(f, p, vec![0.0; f.len()], rp, 1)
}

/// Estimated `F` of two points against one shared batch.
fn compare(f: &SetFunction, a: &[f64], b: &[f64], cfg: &EstimatorConfig, stream: u64) -> Result<(Estimate, Estimate)> {
    let eval = Eval::new(f, cfg, derive(cfg.seed, stream));
    Ok((eval.value(a)?, eval.value(b)?))
}

/// Both phases of the repeated search; `best` indexes the winner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoPhase {
    pub first: LocalOptimum,
    pub second: LocalOptimum,
    pub best: usize,
}

impl TwoPhase {
    pub fn winner(&self) -> &LocalOptimum {
        if self.best == 0 {
            &self.first
        } else {
            &self.second
        }
    }

    pub fn into_winner(self) -> LocalOptimum {
        if self.best == 0 {
            self.first
        } else {
            self.second
        }
    }
}

/// Search `P`, then `{y ∈ P : y <= 1 - x}`, and keep the better point.
pub fn repeated_local_search(f: &SetFunction, p: &Polytope, params: &LocalSearchParams) -> Result<TwoPhase> {
    if !p.is_down_monotone() {
        return Err(Error::Precondition("repeated local search needs a down-monotone polytope".into()));
    }
    let rp = params.resolve(f)?;
    let n = f.len();
    let first = search_from(f, p, vec![0.0; n], rp, 1)?;
    let caps: Vec<f64> = first.point.coords().iter().map(|v| (1.0 - v).max(0.0)).collect();
    let q = Polytope::box_cap(p.clone(), caps)?;
    let second = search_from(f, &q, vec![0.0; n], rp, 2)?;
    let (a, b) = compare(f, first.point.coords(), second.point.coords(), &rp.estimator, 3)?;
    let best = if b.value > a.value { 1 } else { 0 };
    Ok(TwoPhase { first, second, best })
}

/// Local search over `P ∩ [0,t]^N`.
pub fn restricted_local_search(
    f: &SetFunction,
    p: &Polytope,
    t: f64,
    params: &LocalSearchParams,
) -> Result<LocalOptimum> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(Error::InvalidArgument(format!("cap t = {t} must lie in (0,1]")));
    }
    if !p.is_down_monotone() {
        return Err(Error::Precondition("restricted local search needs a down-monotone polytope".into()));
    }
    let rp = params.resolve(f)?;
    let capped = Polytope::uniform_cap(p.clone(), t);
    search_from(f, &capped, vec![0.0; f.len()], rp, 1)
}

/// Local search over `P ∩ [0,(1+t)/2]^N` from a point of `P ∩ [0,t]^N`;
/// `P` need not be down-monotone.
pub fn general_polytope_local_search(
    f: &SetFunction,
    p: &Polytope,
    t: f64,
    params: &LocalSearchParams,
) -> Result<LocalOptimum> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidArgument(format!("cap t = {t} must lie in [0,1]")));
    }
    let rp = params.resolve(f)?;
    let inner = Polytope::uniform_cap(p.clone(), t);
    let start = inner
        .feasible_point()?
        .ok_or_else(|| Error::Infeasible(format!("P ∩ [0,{t}]^N is empty")))?;
    let outer = Polytope::uniform_cap(p.clone(), (1.0 + t) / 2.0);
    search_from(f, &outer, start, rp, 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::lp::Constraint;
    use crate::constraints::matroid::Matroid;
    use std::sync::Arc;

    fn exact(q: usize) -> LocalSearchParams {
        LocalSearchParams { q: Some(q), estimator: EstimatorConfig::exact(), ..Default::default() }
    }

    fn fine(q: usize, delta: f64) -> LocalSearchParams {
        LocalSearchParams { delta: Some(delta), ..exact(q) }
    }

    #[test]
    fn constant_function_stops_at_origin() {
        let f = SetFunction::modular(vec![0.0; 3], 2.0).unwrap();
        let p = Polytope::hypercube(3).unwrap();
        let r = fractional_local_search(&f, &p, &exact(27)).unwrap();
        assert!(r.certified);
        assert_eq!(r.certificate, 0.0);
        assert_eq!(r.point.coords(), &[0.0; 3]);
    }

    #[test]
    fn modular_over_matroid_reaches_greedy_optimum() {
        let m = Arc::new(Matroid::uniform(4, 2).unwrap());
        let f = SetFunction::modular(vec![1.0, 4.0, 2.0, 3.0], 0.0).unwrap();
        let r = fractional_local_search(&f, &Polytope::matroid(m), &fine(64, 1e-3)).unwrap();
        assert!(r.value.value >= 0.98 * 7.0, "{:?}", r.value);
        assert!(r.point.combo_consistent());
    }

    #[test]
    fn unit_cut_on_square() {
        let f = SetFunction::cut(2, vec![(0, 1, 1.0)]).unwrap();
        let p = Polytope::hypercube(2).unwrap();
        let params = LocalSearchParams {
            q: Some(64),
            estimator: EstimatorConfig::sampled(10_000, 4),
            ..Default::default()
        };
        let r = fractional_local_search(&f, &p, &params).unwrap();
        assert!(multilinear_exact(&f, r.point.coords()).unwrap() >= 0.45);
    }

    #[test]
    fn restricted_respects_cap() {
        let f = SetFunction::cut(3, vec![(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let p = Polytope::hypercube(3).unwrap();
        let r = restricted_local_search(&f, &p, GOLDEN_T, &exact(27)).unwrap();
        assert!(r.point.coords().iter().all(|v| *v <= GOLDEN_T + 1e-9));
    }

    #[test]
    fn general_variant_rejects_empty_start_region() {
        let f = SetFunction::cut(2, vec![(0, 1, 1.0)]).unwrap();
        let p = Polytope::explicit(2, vec![Constraint::ge(vec![1.0, 1.0], 1.5)]).unwrap();
        assert!(matches!(general_polytope_local_search(&f, &p, 0.5, &exact(8)), Err(Error::Infeasible(_))));
        assert!(general_polytope_local_search(&f, &p, 0.8, &exact(8)).is_ok());
    }
}
