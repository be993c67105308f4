//! Contention-resolution schemes.
//!
//! A scheme is built for one fractional point `x` and maps any `A` to a
//! feasible `I ⊆ A ∩ support(x)`. Elements the underlying constraint does
//! not touch pass through unchanged, so schemes for different constraints
//! compose by intersection.

mod knapsack;
mod matroid;
mod packing;

use std::fmt;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, SchemeRng};
use crate::subset::Subset;

pub use knapsack::{knapsack_partial_enumeration, knapsack_small_items_scheme, ResidualInstance};
pub use matroid::{
    correlation_gap_lp_link, matroid_optimal_scheme, matroid_span_scheme, OptimalScheme, OptimalSchemeConfig,
    SchemeLp, SpanRound, SpanScheme, SpanSchemeConfig,
};
pub use packing::{
    cpip_grouping_scaling, cpip_sparse_factory, cpip_ufp_factory, sparse_packing_scheme, sparse_packing_width_scheme,
    ufp_general_scheme, ufp_tree_unit_scheme, CpipClasses, UnitFactory,
};

/// The randomized core of a scheme. Receives `A ∩ support(x) ∩ participants`.
pub trait Resolver: Send + Sync {
    fn resolve(&self, a: Subset, rng: &mut SchemeRng) -> Subset;
}

impl<F> Resolver for F
where
    F: Fn(Subset, &mut SchemeRng) -> Subset + Send + Sync,
{
    fn resolve(&self, a: Subset, rng: &mut SchemeRng) -> Subset {
        self(a, rng)
    }
}

pub type FeasibilityCheck = Arc<dyn Fn(Subset) -> bool + Send + Sync>;

#[derive(Clone)]
pub struct CrScheme {
    name: String,
    x: Vec<f64>,
    support: Subset,
    participants: Subset,
    b: f64,
    c: f64,
    monotone: bool,
    deterministic: bool,
    strict: bool,
    resolver: Arc<dyn Resolver>,
    feasible: FeasibilityCheck,
    notes: Vec<String>,
}

impl fmt::Debug for CrScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CrScheme")
            .field("name", &self.name)
            .field("n", &self.x.len())
            .field("b", &self.b)
            .field("c", &self.c)
            .field("monotone", &self.monotone)
            .field("deterministic", &self.deterministic)
            .field("strict", &self.strict)
            .field("notes", &self.notes)
            .finish()
    }
}

/// Builder-style description of a new scheme.
pub struct SchemeParts {
    pub name: String,
    pub x: Vec<f64>,
    pub participants: Subset,
    pub b: f64,
    pub c: f64,
    pub monotone: bool,
    pub deterministic: bool,
    pub resolver: Arc<dyn Resolver>,
    pub feasible: FeasibilityCheck,
}

impl CrScheme {
    pub fn from_parts(p: SchemeParts) -> Result<Self> {
        if !(p.b > 0.0 && p.b <= 1.0) {
            return Err(Error::InvalidArgument(format!("scheme scale b = {} must lie in (0,1]", p.b)));
        }
        if let Some(i) = p.x.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!("coordinate {i} = {} outside [0,1]", p.x[i])));
        }
        crate::subset::check_ground(p.x.len())?;
        Ok(Self {
            name: p.name,
            support: Subset::support(&p.x),
            x: p.x,
            participants: p.participants,
            b: p.b,
            c: p.c.clamp(0.0, 1.0),
            monotone: p.monotone,
            deterministic: p.deterministic,
            strict: false,
            resolver: p.resolver,
            feasible: p.feasible,
            notes: Vec::new(),
        })
    }

    /// Keeps every element; feasible for the free constraint.
    pub fn always_accept(x: Vec<f64>, b: f64) -> Result<Self> {
        let n = x.len();
        Self::from_parts(SchemeParts {
            name: "accept".into(),
            participants: Subset::full(n),
            x,
            b,
            c: 1.0,
            monotone: true,
            deterministic: true,
            resolver: Arc::new(|a: Subset, _: &mut SchemeRng| a),
            feasible: Arc::new(|_| true),
        })
    }

    /// Rejects every element.
    pub fn always_reject(x: Vec<f64>, b: f64) -> Result<Self> {
        let n = x.len();
        Self::from_parts(SchemeParts {
            name: "reject".into(),
            participants: Subset::full(n),
            x,
            b,
            c: 0.0,
            monotone: true,
            deterministic: true,
            resolver: Arc::new(|_: Subset, _: &mut SchemeRng| Subset::EMPTY),
            feasible: Arc::new(|_| true),
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// The point the scheme was built for.
    pub fn point(&self) -> &[f64] {
        &self.x
    }

    pub fn support(&self) -> Subset {
        self.support
    }

    pub fn participants(&self) -> Subset {
        self.participants
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Claimed balance.
    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn is_deterministic(&self) -> bool {
        self.deterministic
    }

    pub fn is_strict(&self) -> bool {
        self.strict
    }

    pub fn notes(&self) -> &[String] {
        &self.notes
    }

    pub(crate) fn note(mut self, s: impl Into<String>) -> Self {
        self.notes.push(s.into());
        self
    }

    pub(crate) fn with_name(mut self, s: impl Into<String>) -> Self {
        self.name = s.into();
        self
    }

    /// `π_x(A)`.
    pub fn resolve(&self, a: Subset, rng: &mut SchemeRng) -> Subset {
        let a = a.intersection(self.support);
        let inner = a.intersection(self.participants);
        let out = self.resolver.resolve(inner, rng).intersection(inner);
        out.union(a.difference(self.participants))
    }

    pub fn is_feasible(&self, s: Subset) -> bool {
        (self.feasible)(s)
    }

    pub fn feasibility_check(&self) -> FeasibilityCheck {
        self.feasible.clone()
    }
}

/// `(b, c)` to `(1, b c)`: thin participants with probability `1 - b`, then
/// apply `s`. The result is built for `x / b`.
pub fn scale_to_bc(s: &CrScheme) -> Result<CrScheme> {
    if s.b >= 1.0 {
        return Ok(s.clone());
    }
    let b = s.b;
    let inner = s.clone();
    let x = s.x.iter().map(|v| (v / b).min(1.0)).collect();
    let resolver = move |a: Subset, rng: &mut SchemeRng| {
        let mut kept = Subset::EMPTY;
        for i in a.iter() {
            if rng.gen::<f64>() < b {
                kept.insert(i);
            }
        }
        inner.resolve(kept, rng)
    };
    let mut out = CrScheme::from_parts(SchemeParts {
        name: format!("scaled({})", s.name),
        x,
        participants: s.participants,
        b: 1.0,
        c: b * s.c,
        monotone: s.monotone,
        deterministic: false,
        resolver: Arc::new(resolver),
        feasible: s.feasible.clone(),
    })?;
    out.notes = s.notes.clone();
    Ok(out)
}

/// Intersection of schemes built for the same point with a common `b`;
/// claimed balance `Π c_i`. Each sub-scheme gets its own stream.
pub fn compose(schemes: &[CrScheme]) -> Result<CrScheme> {
    let first = schemes.first().ok_or_else(|| Error::InvalidArgument("compose needs at least one scheme".into()))?;
    if schemes.len() == 1 {
        return Ok(first.clone());
    }
    for s in &schemes[1..] {
        if (s.b - first.b).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("cannot compose schemes with b = {} and b = {}", first.b, s.b)));
        }
        if s.x.len() != first.x.len() || s.x.iter().zip(&first.x).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::InvalidArgument("composed schemes must be built for the same point".into()));
        }
    }
    let parts: Vec<CrScheme> = schemes.to_vec();
    let checks: Vec<FeasibilityCheck> = parts.iter().map(|s| s.feasible.clone()).collect();
    let participants = parts.iter().fold(Subset::EMPTY, |acc, s| acc.union(s.participants));
    let c = parts.iter().map(|s| s.c).product();
    let monotone = parts.iter().all(|s| s.monotone);
    let deterministic = parts.iter().all(|s| s.deterministic);
    let name = format!("compose({})", parts.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join(", "));
    let notes = parts.iter().flat_map(|s| s.notes.iter().cloned()).collect();
    let resolver = move |a: Subset, rng: &mut SchemeRng| {
        let base: u64 = rng.gen();
        parts
            .iter()
            .enumerate()
            .fold(a, |acc, (k, s)| acc.intersection(s.resolve(a, &mut rng_from(derive(base, k as u64)))))
    };
    let mut out = CrScheme::from_parts(SchemeParts {
        name,
        x: first.x.clone(),
        participants,
        b: first.b,
        c,
        monotone,
        deterministic,
        resolver: Arc::new(resolver),
        feasible: Arc::new(move |s| checks.iter().all(|f| f(s))),
    })?;
    out.notes = notes;
    Ok(out)
}

/// Monte Carlo budget for `strictify`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct StrictifyConfig {
    pub trials: usize,
    pub seed: u64,
    /// An estimate below `c - sigmas·stderr` is a violation.
    pub sigmas: f64,
}

impl Default for StrictifyConfig {
    fn default() -> Self {
        Self { trials: 20_000, seed: 0, sigmas: 3.0 }
    }
}

/// Thin the output so every supported element survives with conditional
/// probability about `c`: estimate `c'_i` and drop `i ∈ I` with
/// probability `1 - c / c'_i`.
pub fn strictify(s: &CrScheme, c: f64, cfg: &StrictifyConfig) -> Result<CrScheme> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::InvalidArgument(format!("target balance {c} outside [0,1]")));
    }
    let est = crate::verification::balance_estimate(s, cfg.trials, cfg.seed)?;
    let mut keep = vec![1.0; s.len()];
    for (i, e) in est.per_element.iter().enumerate() {
        if let Some(e) = e {
            if e.estimate < c - cfg.sigmas * e.stderr {
                return Err(Error::BalanceViolated { element: i, claimed: c, estimated: e.estimate });
            }
            if e.estimate > 0.0 {
                keep[i] = (c / e.estimate).min(1.0);
            }
        }
    }
    let inner = s.clone();
    let probs = keep.clone();
    let resolver = move |a: Subset, rng: &mut SchemeRng| {
        let out = inner.resolve(a, rng);
        let mut kept = Subset::EMPTY;
        for i in out.iter() {
            if probs[i] >= 1.0 || rng.gen::<f64>() < probs[i] {
                kept.insert(i);
            }
        }
        kept
    };
    let mut out = CrScheme::from_parts(SchemeParts {
        name: format!("strict({})", s.name),
        x: s.x.clone(),
        participants: Subset::full(s.len()),
        b: s.b,
        c,
        monotone: s.monotone,
        deterministic: false,
        resolver: Arc::new(resolver),
        feasible: s.feasible.clone(),
    })?;
    out.strict = true;
    out.notes = s.notes.clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::balance_estimate;

    #[test]
    fn output_inside_support() {
        let s = CrScheme::always_accept(vec![0.5, 0.0, 1.0], 1.0).unwrap();
        let mut rng = rng_from(1);
        assert_eq!(s.resolve(Subset::full(3), &mut rng), Subset::from_elements([0, 2]));
    }

    #[test]
    fn scaling_identity_and_half() {
        let s = CrScheme::always_accept(vec![0.3; 4], 1.0).unwrap();
        let t = scale_to_bc(&s).unwrap();
        assert_eq!(t.c(), 1.0);
        let h = CrScheme::always_accept(vec![0.25; 4], 0.5).unwrap();
        let t = scale_to_bc(&h).unwrap();
        assert_eq!((t.b(), t.c()), (1.0, 0.5));
        assert_eq!(t.point(), &[0.5; 4]);
        let est = balance_estimate(&t, 40_000, 3).unwrap();
        let (_, m, se) = est.min.unwrap();
        assert!((m - 0.5).abs() <= 3.0 * se + 0.01, "{m} ± {se}");
    }

    #[test]
    fn compose_rejects_mismatched_b() {
        let a = CrScheme::always_accept(vec![0.2; 2], 0.5).unwrap();
        let b = CrScheme::always_accept(vec![0.2; 2], 1.0).unwrap();
        assert!(compose(&[a.clone(), b]).is_err());
        let one = compose(&[a.clone()]).unwrap();
        assert_eq!(one.c(), a.c());
    }

    #[test]
    fn strictify_free_scheme_to_half() {
        let s = CrScheme::always_accept(vec![0.5; 3], 1.0).unwrap();
        let t = strictify(&s, 0.5, &StrictifyConfig::default()).unwrap();
        let est = balance_estimate(&t, 40_000, 9).unwrap();
        for e in est.per_element.iter().flatten() {
            assert!((e.estimate - 0.5).abs() < 0.02, "{e:?}");
        }
        let r = CrScheme::always_reject(vec![0.5; 3], 1.0).unwrap();
        assert!(matches!(strictify(&r, 0.5, &StrictifyConfig::default()), Err(Error::BalanceViolated { .. })));
    }
}
