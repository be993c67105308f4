//! One-call battery of the provable inequalities on a single instance.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{balance_estimate, brute_force_max, rounding_estimate};
use crate::constraints::matroid::Matroid;
use crate::constraints::polytope::Polytope;
use crate::error::Result;
use crate::local_search::{fractional_local_search, repeated_local_search, LocalSearchParams};
use crate::rng::{derive, rng_from};
use crate::schemes::{matroid_span_scheme, CrScheme, FeasibilityCheck, SpanSchemeConfig};
use crate::submodular::{concave_closure, gradient_exact, multilinear_exact, Estimate, SetFunction};
use crate::subset::Subset;

/// Largest ground set for checks that enumerate `2^n` sets per evaluation.
const EXACT_CHECK_LIMIT: usize = 12;
const TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRecord {
    pub name: String,
    /// Slack of the inequality; negative means the measured side fell short.
    pub margin: f64,
    /// Standard error attached to the margin (0 for exact checks).
    pub sigma: f64,
    pub pass: bool,
}

impl CheckRecord {
    fn exact(name: impl Into<String>, margin: f64) -> Self {
        Self { name: name.into(), margin, sigma: 0.0, pass: margin >= -TOL }
    }

    fn statistical(name: impl Into<String>, margin: f64, sigma: f64, sigmas: f64) -> Self {
        Self { name: name.into(), margin, sigma, pass: margin >= -sigmas * sigma - TOL }
    }
}

/// A matroid with a point `x ∈ b·P(M)` for the span and gap checks.
#[derive(Clone, Debug)]
pub struct MatroidPoint {
    pub matroid: Arc<Matroid>,
    pub x: Vec<f64>,
    pub b: f64,
}

pub struct SuiteInput {
    pub f: SetFunction,
    pub polytope: Polytope,
    /// Integral feasibility, used for the brute-force optimum.
    pub feasible: FeasibilityCheck,
    pub schemes: Vec<CrScheme>,
    pub matroids: Vec<MatroidPoint>,
}

#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Random `(x, y)` pairs for the gradient inequality.
    pub pairs: usize,
    /// Random vertices tested against a local optimum.
    pub vertices: usize,
    pub balance_trials: usize,
    pub rounding_trials: usize,
    /// Random weight vectors per matroid for the gap checks.
    pub weightings: usize,
    pub sigmas: f64,
    pub local_search: LocalSearchParams,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 200,
            vertices: 50,
            balance_trials: 20_000,
            rounding_trials: 10_000,
            weightings: 5,
            sigmas: 4.0,
            local_search: LocalSearchParams::default(),
        }
    }
}

fn join(a: &[f64], b: &[f64], max: bool) -> Vec<f64> {
    a.iter().zip(b).map(|(u, v)| if max { u.max(*v) } else { u.min(*v) }).collect()
}

fn uniform_point(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// Run every check that applies to the input. Checks needing exact
/// enumeration are skipped above 12 elements.
pub fn inequality_suite(input: &SuiteInput, opts: &SuiteOptions) -> Result<Vec<CheckRecord>> {
    let f = &input.f;
    let n = f.len();
    let exact = n <= EXACT_CHECK_LIMIT;
    let mut out = Vec::new();

    if exact {
        out.push(CheckRecord::exact("submodularity", submodularity_margin(f)));
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = {
            let mut rng = rng_from(derive(opts.seed, 1));
            (0..opts.pairs).map(|_| (uniform_point(n, &mut rng), uniform_point(n, &mut rng))).collect()
        };
        let margins: Vec<f64> = pairs
            .par_iter()
            .map(|(x, y)| -> Result<f64> {
                let g = gradient_exact(f, x)?;
                let lhs: f64 = g.iter().zip(y.iter().zip(x)).map(|(g, (y, x))| g * (y - x)).sum();
                let rhs = multilinear_exact(f, &join(x, y, true))? + multilinear_exact(f, &join(x, y, false))?
                    - 2.0 * multilinear_exact(f, x)?;
                Ok(lhs - rhs)
            })
            .collect::<Result<_>>()?;
        out.push(CheckRecord::exact("gradient-bound", margins.into_iter().fold(f64::INFINITY, f64::min)));

        let mut rng = rng_from(derive(opts.seed, 2));
        let mut closure = f64::INFINITY;
        for _ in 0..opts.pairs.min(20) {
            let x = uniform_point(n, &mut rng);
            closure = closure.min(concave_closure(f, &x)? - multilinear_exact(f, &x)?);
        }
        out.push(CheckRecord::exact("closure-dominates", closure));
    }

    let value = |x: &[f64], est: Estimate| -> Result<Estimate> {
        if exact {
            Ok(Estimate::exact(multilinear_exact(f, x)?))
        } else {
            Ok(est)
        }
    };

    let lo = fractional_local_search(f, &input.polytope, &opts.local_search)?;
    out.push(CheckRecord::exact("local-optimum-certified", lo.threshold - lo.certificate));
    if exact && lo.certified {
        let x = lo.point.coords();
        let fx = value(x, lo.value)?.value;
        let slack = 5.0 * lo.params.delta * n as f64;
        let mut rng = rng_from(derive(opts.seed, 3));
        let mut margin = f64::INFINITY;
        for _ in 0..opts.vertices {
            let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            if let Some(y) = input.polytope.maximize(&w)? {
                let m = 2.0 * fx - multilinear_exact(f, &join(x, &y, true))? - multilinear_exact(f, &join(x, &y, false))?
                    + slack;
                margin = margin.min(m);
            }
        }
        out.push(CheckRecord::exact("local-optimum", margin));
    }

    if n <= crate::submodular::EXACT_LIMIT {
        if let Some((_, opt)) = brute_force_max(f, |s| (input.feasible)(s))? {
            let two = repeated_local_search(f, &input.polytope, &opts.local_search)?;
            let a = value(two.first.point.coords(), two.first.value)?;
            let z = value(two.second.point.coords(), two.second.value)?;
            let slack = 10.0 * two.first.params.delta * n as f64;
            let sigma = 2.0 * (a.stderr * a.stderr + z.stderr * z.stderr).sqrt();
            out.push(CheckRecord::statistical(
                "two-phase-bound",
                2.0 * a.value + 2.0 * z.value - opt + slack,
                sigma,
                opts.sigmas,
            ));
        }
    }

    for (k, s) in input.schemes.iter().enumerate() {
        let seed = derive(opts.seed, 100 + k as u64);
        let rep = balance_estimate(s, opts.balance_trials, seed)?;
        out.push(CheckRecord::exact(format!("feasibility:{}", s.name()), -(rep.violations as f64)));
        if let Some((_, v, se)) = rep.min {
            out.push(CheckRecord::statistical(format!("balance:{}", s.name()), v - s.c(), se, opts.sigmas));
        }
        if exact && s.is_monotone() && s.len() == n {
            let Estimate { value: mean, stderr: se } = rounding_estimate(f, s, opts.rounding_trials, derive(seed, 1));
            let fx = multilinear_exact(f, s.point())?;
            out.push(CheckRecord::statistical(
                format!("rounding-inequality:{}", s.name()),
                mean - s.c() * fx,
                se,
                opts.sigmas,
            ));
        }
    }

    for (k, mp) in input.matroids.iter().enumerate() {
        let seed = derive(opts.seed, 200 + k as u64);
        let span = matroid_span_scheme(mp.matroid.clone(), &mp.x, mp.b, &SpanSchemeConfig { seed, ..Default::default() })?;
        if let Some(r) = span.rounds.iter().min_by(|a, b| {
            let ma = mp.b + 3.0 * a.stderr - a.estimate;
            let mb = mp.b + 3.0 * b.stderr - b.estimate;
            ma.total_cmp(&mb)
        }) {
            // Span rounds use a fixed 3σ band.
            out.push(CheckRecord::statistical("span-probability", mp.b - r.estimate, r.stderr, 3.0));
        }
        let m = mp.matroid.len();
        if m <= EXACT_CHECK_LIMIT {
            let mut rng = rng_from(derive(seed, 1));
            let p: Vec<f64> = mp.x.iter().map(|v| v / mp.b).collect();
            let floor_gap = 1.0 - (1.0 - 1.0 / m as f64).powi(m as i32);
            let floor_link = (1.0 - (1.0 - mp.b / m as f64).powi(m as i32)) / mp.b;
            let (mut gap, mut link) = (f64::INFINITY, f64::INFINITY);
            for _ in 0..opts.weightings {
                let y: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
                let r = SetFunction::weighted_rank(&mp.matroid, y.clone())?;
                if concave_closure(&r, &p)? > 0.0 {
                    gap = gap.min(super::correlation_gap_estimate(&r, &p)? - floor_gap);
                }
                if mp.x.iter().zip(&y).any(|(a, b)| a * b > 0.0) {
                    let e = crate::schemes::correlation_gap_lp_link(&mp.matroid, &mp.x, &y, 0, 0)?;
                    link = link.min(e.value - floor_link);
                }
            }
            if gap.is_finite() {
                out.push(CheckRecord::exact("correlation-gap", gap));
            }
            if link.is_finite() {
                out.push(CheckRecord::exact("correlation-gap-link", link));
            }
        }
    }
    Ok(out)
}

fn submodularity_margin(f: &SetFunction) -> f64 {
    let n = f.len();
    (0..1u64 << n)
        .into_par_iter()
        .map(|m| {
            let s = Subset(m);
            let base = f.value(s);
            let mut worst = f64::INFINITY;
            for i in (0..n).filter(|&i| !s.contains(i)) {
                let fi = f.value(s.with(i));
                for j in (i + 1..n).filter(|&j| !s.contains(j)) {
                    worst = worst.min(fi + f.value(s.with(j)) - base - f.value(s.with(i).with(j)));
                }
            }
            worst
        })
        .reduce(|| f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::submodular::EstimatorConfig;

    #[test]
    fn modular_free_instance_passes_everything() {
        let f = SetFunction::modular(vec![1.0, 2.0, 0.5], 0.0).unwrap();
        let p = Polytope::hypercube(3).unwrap();
        let s = CrScheme::always_accept(vec![0.5, 0.5, 0.5], 1.0).unwrap();
        let m = Arc::new(Matroid::uniform(3, 3).unwrap());
        let input = SuiteInput {
            f,
            polytope: p,
            feasible: Arc::new(|_| true),
            schemes: vec![s],
            matroids: vec![MatroidPoint { matroid: m, x: vec![0.5; 3], b: 1.0 }],
        };
        let opts = SuiteOptions {
            local_search: LocalSearchParams { estimator: EstimatorConfig::exact(), ..Default::default() },
            ..Default::default()
        };
        let rec = inequality_suite(&input, &opts).unwrap();
        assert!(rec.len() >= 8);
        for r in &rec {
            assert!(r.pass, "{r:?}");
        }
    }
}
