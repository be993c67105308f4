//! Relax, optimize, contention-resolve, prune.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constraints::polytope::Polytope;
use crate::error::{Error, Result};
use crate::local_search::{
    general_polytope_local_search, repeated_local_search, restricted_local_search, LocalOptimum, LocalSearchParams,
    GOLDEN_T,
};
use crate::rng::{derive, rng_from, sample_set};
use crate::schemes::{strictify, CrScheme, StrictifyConfig};
use crate::submodular::{prune, Estimate, SetFunction};
use crate::subset::Subset;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Two-phase repeated local search.
    Ls25,
    /// Local search in `P ∩ [0,t]^N`.
    Ls309,
    /// General-polytope local search.
    Lsgen,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ls25" => Ok(Self::Ls25),
            "ls309" => Ok(Self::Ls309),
            "lsgen" => Ok(Self::Lsgen),
            _ => Err(Error::InvalidArgument(format!("unknown algorithm '{s}' (expected ls25, ls309 or lsgen)"))),
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Ls25 => "ls25",
            Self::Ls309 => "ls309",
            Self::Lsgen => "lsgen",
        })
    }
}

/// How non-monotone objectives are protected after resolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cleanup {
    /// Prune when `f` is not monotone.
    Auto,
    /// Strictify the scheme and skip pruning.
    Strictify,
    /// Always prune.
    Prune,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub algo: Algorithm,
    pub b: f64,
    /// Box cap for `ls309` and `lsgen`; defaults to `(3 - √5)/2` and `0`.
    pub t: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    pub cleanup: Cleanup,
    pub local_search: LocalSearchParams,
    pub strictify: StrictifyConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            algo: Algorithm::Ls25,
            b: 1.0,
            t: None,
            reps: 1,
            seed: 0,
            cleanup: Cleanup::Auto,
            local_search: LocalSearchParams::default(),
            strictify: StrictifyConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub algo: Algorithm,
    pub scheme: String,
    pub b: f64,
    pub point: Vec<f64>,
    /// `F(x*)` as estimated by the local search.
    pub relaxed: Estimate,
    pub certified: bool,
    pub claimed_c: f64,
    pub pruned: bool,
    pub strictified: bool,
    pub reps: usize,
    /// Mean and standard error of `f` over the repetitions.
    pub single_shot: Estimate,
    pub best_value: f64,
    /// `best_value / F(x*)`, `None` when `F(x*) = 0`.
    pub realized_ratio: Option<f64>,
    /// Repetitions whose output failed the scheme's feasibility check.
    pub violations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rounded {
    pub set: Subset,
    pub value: f64,
    pub report: PipelineReport,
}

/// Builds a scheme for the point `x ∈ b·P`.
pub type SchemeFactory<'a> = dyn Fn(&[f64], f64, u64) -> Result<CrScheme> + Sync + 'a;

fn clean(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| if *v < 1e-12 { 0.0 } else { v.min(1.0) }).collect()
}

/// Run the relaxation step alone: optimize `F` over `b·P`. Unless given,
/// the stop tolerance is scaled by `b` along with the polytope.
pub fn relax(f: &SetFunction, p: &Polytope, cfg: &PipelineConfig) -> Result<LocalOptimum> {
    if !(cfg.b > 0.0 && cfg.b <= 1.0) {
        return Err(Error::InvalidArgument(format!("b = {} must lie in (0,1]", cfg.b)));
    }
    let scaled = if cfg.b < 1.0 { Polytope::scaled(p.clone(), cfg.b)? } else { p.clone() };
    let mut params = cfg.local_search;
    params.estimator.seed = derive(cfg.seed, 1);
    if params.delta.is_none() && cfg.b < 1.0 {
        let rp = params.resolve(f)?;
        if rp.delta > 0.0 {
            params.delta = Some(cfg.b * rp.delta);
        }
    }
    match cfg.algo {
        Algorithm::Ls25 => Ok(repeated_local_search(f, &scaled, &params)?.into_winner()),
        Algorithm::Ls309 => restricted_local_search(f, &scaled, cfg.t.unwrap_or(GOLDEN_T), &params),
        Algorithm::Lsgen => general_polytope_local_search(f, &scaled, cfg.t.unwrap_or(0.0), &params),
    }
}

/// Optimize over `b·P`, round `x*` with the scheme `reps` times, clean up and
/// keep the best set.
pub fn maximize_constrained(f: &SetFunction, p: &Polytope, factory: &SchemeFactory, cfg: &PipelineConfig) -> Result<Rounded> {
    if cfg.reps == 0 {
        return Err(Error::InvalidArgument("at least one rounding repetition is required".into()));
    }
    if p.dim() != f.len() {
        return Err(Error::Dimension(format!("polytope of dimension {} for {} elements", p.dim(), f.len())));
    }
    let lo = relax(f, p, cfg)?;
    let x = clean(lo.point.coords());
    let mut scheme = factory(&x, cfg.b, derive(cfg.seed, 2))?;
    let strictified = cfg.cleanup == Cleanup::Strictify;
    if strictified {
        let sc = StrictifyConfig { seed: derive(cfg.seed, 3), ..cfg.strictify };
        scheme = strictify(&scheme, scheme.c(), &sc)?;
    }
    let pruned = match cfg.cleanup {
        Cleanup::Auto => !f.is_monotone(),
        Cleanup::Prune => true,
        Cleanup::Strictify => false,
    };
    Ok(round_point(f, &scheme, lo.value, lo.certified, pruned, strictified, cfg))
}

fn round_point(
    f: &SetFunction,
    scheme: &CrScheme,
    relaxed: Estimate,
    certified: bool,
    pruned: bool,
    strictified: bool,
    cfg: &PipelineConfig,
) -> Rounded {
    let stream = derive(cfg.seed, 4);
    let outcomes: Vec<(Subset, f64, bool)> = (0..cfg.reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng_from(derive(stream, r as u64));
            let sample = sample_set(scheme.point(), &mut rng);
            let out = scheme.resolve(sample, &mut rng);
            let ok = out.is_subset_of(sample) && scheme.is_feasible(out);
            let set = if pruned { prune(f, out) } else { out };
            (set, f.value(set), ok)
        })
        .collect();
    let mut best: Option<(Subset, f64)> = None;
    let (mut sum, mut sq, mut violations) = (0.0, 0.0, 0);
    for &(s, v, ok) in &outcomes {
        sum += v;
        sq += v * v;
        if !ok {
            violations += 1;
            continue;
        }
        best = match best {
            Some(b) if b.1 > v || (b.1 == v && b.0.lex_cmp(s).is_le()) => Some(b),
            _ => Some((s, v)),
        };
    }
    let best = best.unwrap_or((Subset::EMPTY, f.value(Subset::EMPTY)));
    let h = cfg.reps as f64;
    let mean = sum / h;
    let var = if cfg.reps > 1 { ((sq - sum * mean) / (h - 1.0)).max(0.0) } else { 0.0 };
    let report = PipelineReport {
        algo: cfg.algo,
        scheme: scheme.name().to_string(),
        b: cfg.b,
        point: scheme.point().to_vec(),
        relaxed,
        certified,
        claimed_c: scheme.c(),
        pruned,
        strictified,
        reps: cfg.reps,
        single_shot: Estimate { value: mean, stderr: (var / h).sqrt() },
        best_value: best.1,
        realized_ratio: (relaxed.value > 0.0).then(|| best.1 / relaxed.value),
        violations,
    };
    Rounded { set: best.0, value: best.1, report }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constraints::matroid::Matroid;
    use crate::schemes::{matroid_optimal_scheme, OptimalSchemeConfig};
    use crate::submodular::EstimatorConfig;
    use std::sync::Arc;

    fn exact_cfg() -> PipelineConfig {
        PipelineConfig {
            local_search: LocalSearchParams { estimator: EstimatorConfig::exact(), ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn zero_function_returns_empty_set() {
        let f = SetFunction::modular(vec![0.0; 3], 0.0).unwrap();
        let m = Arc::new(Matroid::uniform(3, 1).unwrap());
        let p = Polytope::matroid(m);
        let factory = |x: &[f64], b: f64, _: u64| CrScheme::always_accept(x.to_vec(), b);
        let r = maximize_constrained(&f, &p, &factory, &PipelineConfig { reps: 5, ..exact_cfg() }).unwrap();
        assert_eq!((r.set, r.value), (Subset::EMPTY, 0.0));
        assert_eq!(r.report.realized_ratio, None);
    }

    #[test]
    fn modular_with_optimal_matroid_scheme() {
        let w = vec![3.0, 1.0, 2.0, 5.0, 4.0, 1.5];
        let f = SetFunction::modular(w, 0.0).unwrap();
        let m = Arc::new(Matroid::partition(6, vec![vec![0, 1, 2], vec![3, 4, 5]], vec![1, 1]).unwrap());
        let p = Polytope::matroid(m.clone());
        let factory = move |x: &[f64], b: f64, seed: u64| {
            Ok(matroid_optimal_scheme(m.clone(), x, b, &OptimalSchemeConfig { seed, ..Default::default() })?.scheme)
        };
        let mut total = 0.0;
        for seed in 0..20 {
            let cfg = PipelineConfig { seed, ..exact_cfg() };
            let r = maximize_constrained(&f, &p, &factory, &cfg).unwrap();
            assert_eq!(r.report.violations, 0);
            total += r.value;
        }
        assert!(total / 20.0 >= (1.0 - (-1.0f64).exp() - 0.05) * 8.0);
    }

    #[test]
    fn reps_must_be_positive() {
        let f = SetFunction::modular(vec![1.0], 0.0).unwrap();
        let p = Polytope::hypercube(1).unwrap();
        let factory = |x: &[f64], b: f64, _: u64| CrScheme::always_accept(x.to_vec(), b);
        assert!(maximize_constrained(&f, &p, &factory, &PipelineConfig { reps: 0, ..exact_cfg() }).is_err());
    }
}
