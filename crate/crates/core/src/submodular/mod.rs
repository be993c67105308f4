//! Set-function oracles and the pruning map `η_f`.

mod closure;
pub(crate) mod multilinear;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::constraints::matroid::{Matroid, MatroidKind};
use crate::error::{Error, Result};
use crate::subset::{check_ground, GroundSet, Subset};

pub use closure::concave_closure;
pub use multilinear::{
    estimate_value, gradient_estimate, gradient_estimates, gradient_exact, multilinear_estimate, multilinear_exact,
    CommonSamples, Estimate, EstimatorConfig, FractionalPoint, EXACT_LIMIT,
};

/// Largest ground set whose submodularity is checked when tabulated
/// functions are built.
pub const SUBMODULAR_CHECK_LIMIT: usize = 16;

const NEG_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureTerm {
    pub weight: f64,
    pub function: FunctionSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FunctionSpec {
    /// Weighted size of the union of the chosen sets; `sets[i]` lists the
    /// universe items covered by element `i`.
    Coverage {
        universe: usize,
        sets: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
    },
    /// Weight of edges `(u, v, w)` with exactly one endpoint in `S`.
    Cut { edges: Vec<(usize, usize, f64)> },
    Modular {
        weights: Vec<f64>,
        #[serde(default)]
        constant: f64,
    },
    WeightedMatroidRank { matroid: MatroidKind, weights: Vec<f64> },
    /// `values[S]` indexed by the bitmask of `S`.
    CustomTable { values: Vec<f64> },
    /// Non-negative combination of functions on the same ground set.
    Mixture { terms: Vec<MixtureTerm> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FunctionKind {
    Coverage,
    Cut,
    Modular,
    WeightedMatroidRank,
    CustomTable,
    Mixture,
}

#[derive(Debug)]
enum Oracle {
    Coverage { words: usize, masks: Vec<Vec<u64>>, weights: Option<Vec<f64>> },
    Cut(Vec<(usize, usize, f64)>),
    Modular { weights: Vec<f64>, constant: f64 },
    Rank { matroid: Matroid, weights: Vec<f64> },
    Table(Vec<f64>),
    Mixture(Vec<(f64, SetFunction)>),
}

/// A non-negative set function over `0..n` with monotonicity and
/// submodularity metadata.
#[derive(Debug)]
pub struct SetFunction {
    n: usize,
    spec: FunctionSpec,
    oracle: Oracle,
    monotone: bool,
    submodular: bool,
    table: OnceLock<Vec<f64>>,
}

impl Clone for SetFunction {
    fn clone(&self) -> Self {
        let f = Self::new(self.n, self.spec.clone()).expect("spec was validated on construction");
        if let Some(t) = self.table.get() {
            let _ = f.table.set(t.clone());
        }
        f
    }
}

impl PartialEq for SetFunction {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.spec == other.spec
    }
}

fn check_weights(what: &str, w: &[f64], n: usize) -> Result<()> {
    if w.len() != n {
        return Err(Error::Dimension(format!("{what} has {} weights, expected {n}", w.len())));
    }
    if let Some(i) = w.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("{what} weight {i} is {} (must be finite and >= 0)", w[i])));
    }
    Ok(())
}

impl SetFunction {
    pub fn new(n: usize, spec: FunctionSpec) -> Result<Self> {
        check_ground(n)?;
        let (oracle, monotone, submodular) = match &spec {
            FunctionSpec::Coverage { universe, sets, weights } => {
                if sets.len() != n {
                    return Err(Error::Dimension(format!("coverage lists {} sets, expected {n}", sets.len())));
                }
                if let Some(w) = weights {
                    check_weights("coverage", w, *universe)?;
                }
                let words = universe.div_ceil(64).max(1);
                let mut masks = vec![vec![0u64; words]; n];
                for (i, set) in sets.iter().enumerate() {
                    for &u in set {
                        if u >= *universe {
                            return Err(Error::Dimension(format!("set {i} covers item {u} >= universe {universe}")));
                        }
                        masks[i][u / 64] |= 1 << (u % 64);
                    }
                }
                (Oracle::Coverage { words, masks, weights: weights.clone() }, true, true)
            }
            FunctionSpec::Cut { edges } => {
                for (k, &(u, v, w)) in edges.iter().enumerate() {
                    if u >= n || v >= n {
                        return Err(Error::Dimension(format!("cut edge {k} ({u},{v}) leaves the ground set")));
                    }
                    if !(w.is_finite() && w >= 0.0) {
                        return Err(Error::InvalidArgument(format!("cut edge {k} has weight {w}")));
                    }
                }
                let monotone = edges.iter().all(|&(u, v, w)| u == v || w == 0.0);
                (Oracle::Cut(edges.clone()), monotone, true)
            }
            FunctionSpec::Modular { weights, constant } => {
                if weights.len() != n {
                    return Err(Error::Dimension(format!("modular has {} weights, expected {n}", weights.len())));
                }
                let low: f64 = constant + weights.iter().filter(|w| **w < 0.0).sum::<f64>();
                if !weights.iter().chain([constant]).all(|w| w.is_finite()) || low < -NEG_TOL {
                    return Err(Error::InvalidArgument(format!("modular function attains negative value {low}")));
                }
                let monotone = weights.iter().all(|w| *w >= 0.0);
                (Oracle::Modular { weights: weights.clone(), constant: *constant }, monotone, true)
            }
            FunctionSpec::WeightedMatroidRank { matroid, weights } => {
                check_weights("weighted rank", weights, n)?;
                let matroid = Matroid::new(n, matroid.clone())?;
                (Oracle::Rank { matroid, weights: weights.clone() }, true, true)
            }
            FunctionSpec::CustomTable { values } => {
                if n > EXACT_LIMIT {
                    return Err(Error::Capacity { what: "custom-table functions", n, limit: EXACT_LIMIT });
                }
                if values.len() != 1 << n {
                    return Err(Error::Dimension(format!("custom table has {} values, expected 2^{n}", values.len())));
                }
                if let Some(m) = values.iter().position(|v| !(v.is_finite() && *v >= -NEG_TOL)) {
                    return Err(Error::InvalidArgument(format!("custom table value at {} is {}", Subset(m as u64), values[m])));
                }
                let submodular = n <= SUBMODULAR_CHECK_LIMIT && table_is_submodular(n, values);
                (Oracle::Table(values.clone()), table_is_monotone(n, values), submodular)
            }
            FunctionSpec::Mixture { terms } => {
                if terms.is_empty() {
                    return Err(Error::InvalidArgument("mixture with no terms".into()));
                }
                let mut parts = Vec::with_capacity(terms.len());
                for (k, t) in terms.iter().enumerate() {
                    if !(t.weight.is_finite() && t.weight >= 0.0) {
                        return Err(Error::InvalidArgument(format!("mixture term {k} has weight {}", t.weight)));
                    }
                    parts.push((t.weight, SetFunction::new(n, t.function.clone())?));
                }
                let monotone = parts.iter().all(|(_, f)| f.monotone);
                let submodular = parts.iter().all(|(_, f)| f.submodular);
                (Oracle::Mixture(parts), monotone, submodular)
            }
        };
        Ok(Self { n, spec, oracle, monotone, submodular, table: OnceLock::new() })
    }

    pub fn coverage(universe: usize, sets: Vec<Vec<usize>>) -> Result<Self> {
        Self::new(sets.len(), FunctionSpec::Coverage { universe, sets, weights: None })
    }

    pub fn cut(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        Self::new(n, FunctionSpec::Cut { edges })
    }

    pub fn modular(weights: Vec<f64>, constant: f64) -> Result<Self> {
        Self::new(weights.len(), FunctionSpec::Modular { weights, constant })
    }

    pub fn weighted_rank(matroid: &Matroid, weights: Vec<f64>) -> Result<Self> {
        Self::new(matroid.len(), FunctionSpec::WeightedMatroidRank { matroid: matroid.kind().clone(), weights })
    }

    pub fn table(n: usize, values: Vec<f64>) -> Result<Self> {
        Self::new(n, FunctionSpec::CustomTable { values })
    }

    pub fn mixture(n: usize, terms: Vec<(f64, FunctionSpec)>) -> Result<Self> {
        let terms = terms.into_iter().map(|(weight, function)| MixtureTerm { weight, function }).collect();
        Self::new(n, FunctionSpec::Mixture { terms })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spec(&self) -> &FunctionSpec {
        &self.spec
    }

    pub fn kind(&self) -> FunctionKind {
        match self.spec {
            FunctionSpec::Coverage { .. } => FunctionKind::Coverage,
            FunctionSpec::Cut { .. } => FunctionKind::Cut,
            FunctionSpec::Modular { .. } => FunctionKind::Modular,
            FunctionSpec::WeightedMatroidRank { .. } => FunctionKind::WeightedMatroidRank,
            FunctionSpec::CustomTable { .. } => FunctionKind::CustomTable,
            FunctionSpec::Mixture { .. } => FunctionKind::Mixture,
        }
    }

    pub fn is_monotone(&self) -> bool {
        self.monotone
    }

    pub fn is_submodular(&self) -> bool {
        self.submodular
    }

    fn eval(&self, s: Subset) -> f64 {
        match &self.oracle {
            Oracle::Coverage { words, masks, weights } => {
                let mut acc = vec![0u64; *words];
                for i in s.iter() {
                    for (a, m) in acc.iter_mut().zip(&masks[i]) {
                        *a |= m;
                    }
                }
                match weights {
                    None => acc.iter().map(|w| w.count_ones() as f64).sum(),
                    Some(w) => acc
                        .iter()
                        .enumerate()
                        .flat_map(|(k, &word)| Subset(word).iter().map(move |b| k * 64 + b))
                        .map(|u| w[u])
                        .sum(),
                }
            }
            Oracle::Cut(edges) => {
                edges.iter().filter(|&&(u, v, _)| s.contains(u) != s.contains(v)).map(|e| e.2).sum()
            }
            Oracle::Modular { weights, constant } => constant + s.iter().map(|i| weights[i]).sum::<f64>(),
            Oracle::Rank { matroid, weights } => matroid.weighted_rank(weights, s),
            Oracle::Table(v) => v[s.0 as usize],
            Oracle::Mixture(parts) => parts.iter().map(|(w, f)| w * f.value(s)).sum(),
        }
    }

    /// `f(S)`.
    #[inline]
    pub fn value(&self, s: Subset) -> f64 {
        let v = match self.table.get() {
            Some(t) => t[s.0 as usize],
            None => self.eval(s),
        };
        debug_assert!(v >= -NEG_TOL, "f({s}) = {v} is negative");
        v
    }

    /// Marginal `f(S + i) - f(S)`.
    pub fn marginal(&self, s: Subset, i: usize) -> f64 {
        self.value(s.with(i)) - self.value(s.without(i))
    }

    /// All `2^n` values, computed once. Errors above `EXACT_LIMIT`.
    pub fn tabulate(&self) -> Result<&[f64]> {
        if self.n > EXACT_LIMIT {
            return Err(Error::Capacity { what: "exhaustive tabulation", n: self.n, limit: EXACT_LIMIT });
        }
        Ok(self.table.get_or_init(|| match &self.oracle {
            Oracle::Table(v) => v.clone(),
            _ => (0..1u64 << self.n).map(|m| self.eval(Subset(m))).collect(),
        }))
    }

    pub fn is_tabulated(&self) -> bool {
        self.table.get().is_some()
    }

    /// `max {f(i), f(N - i)}` over all `i`.
    pub fn scale_constant(&self) -> f64 {
        let full = Subset::full(self.n);
        (0..self.n).map(|i| self.value(Subset::singleton(i)).max(self.value(full.without(i)))).fold(0.0, f64::max)
    }
}

fn table_is_monotone(n: usize, v: &[f64]) -> bool {
    (0..v.len()).all(|m| (0..n).all(|i| m & (1 << i) != 0 || v[m] <= v[m | (1 << i)] + 1e-12))
}

fn table_is_submodular(n: usize, v: &[f64]) -> bool {
    (0..v.len()).all(|m| {
        (0..n).filter(|i| m & (1 << i) == 0).all(|i| {
            (i + 1..n).filter(|j| m & (1 << j) == 0).all(|j| {
                v[m | 1 << i] + v[m | 1 << j] + 1e-12 >= v[m | 1 << i | 1 << j] + v[m]
            })
        })
    })
}

/// `η_f(I)` scanning in index order.
pub fn prune(f: &SetFunction, i: Subset) -> Subset {
    let order: Vec<usize> = (0..f.len()).collect();
    prune_scan(f, i, &order)
}

/// `η_f(I)` scanning in the ground set's element order: an element joins
/// `J` iff its marginal with respect to the current `J` is strictly positive.
pub fn prune_in_order(f: &SetFunction, ground: &GroundSet, i: Subset) -> Subset {
    prune_scan(f, i, ground.order())
}

fn prune_scan(f: &SetFunction, i: Subset, order: &[usize]) -> Subset {
    let mut j = Subset::EMPTY;
    let mut fj = f.value(j);
    for &e in order {
        if i.contains(e) {
            let v = f.value(j.with(e));
            if v - fj > 0.0 {
                j.insert(e);
                fj = v;
            }
        }
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prune_drops_negative_and_zero_marginals() {
        let f = SetFunction::cut(2, vec![(0, 1, 1.0)]).unwrap();
        assert_eq!(prune(&f, Subset::full(2)), Subset::singleton(0));
        let g = SetFunction::modular(vec![1.0, 0.0, 2.0], 0.0).unwrap();
        assert_eq!(prune(&g, Subset::full(3)), Subset::from_elements([0, 2]));
    }

    #[test]
    fn prune_follows_ground_order() {
        let f = SetFunction::cut(2, vec![(0, 1, 1.0)]).unwrap();
        let g = GroundSet::with_order(2, vec![1, 0]).unwrap();
        assert_eq!(prune_in_order(&f, &g, Subset::full(2)), Subset::singleton(1));
    }

    #[test]
    fn family_flags() {
        assert!(!SetFunction::cut(2, vec![(0, 1, 1.0)]).unwrap().is_monotone());
        assert!(SetFunction::coverage(3, vec![vec![0], vec![0, 1], vec![2]]).unwrap().is_monotone());
        let t = SetFunction::table(1, vec![1.0, 0.0]).unwrap();
        assert!(!t.is_monotone() && t.is_submodular());
        let sup = SetFunction::table(2, vec![0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!sup.is_submodular());
    }

    #[test]
    fn negative_values_rejected() {
        assert!(SetFunction::modular(vec![-1.0, 2.0], 0.5).is_err());
        assert!(SetFunction::modular(vec![-1.0, 2.0], 1.0).is_ok());
        assert!(SetFunction::table(1, vec![0.0, -1.0]).is_err());
    }

    #[test]
    fn coverage_weights_and_wide_universe() {
        let f = SetFunction::new(
            2,
            FunctionSpec::Coverage { universe: 70, sets: vec![vec![0, 69], vec![69]], weights: None },
        )
        .unwrap();
        assert_eq!(f.value(Subset::full(2)), 2.0);
        assert_eq!(f.value(Subset::singleton(1)), 1.0);
        let w = SetFunction::new(
            2,
            FunctionSpec::Coverage { universe: 2, sets: vec![vec![0], vec![0, 1]], weights: Some(vec![3.0, 0.5]) },
        )
        .unwrap();
        assert_eq!(w.value(Subset::full(2)), 3.5);
    }

    #[test]
    fn mixture_sums_terms() {
        let f = SetFunction::mixture(
            2,
            vec![
                (2.0, FunctionSpec::Cut { edges: vec![(0, 1, 1.0)] }),
                (1.0, FunctionSpec::Modular { weights: vec![1.0, 1.0], constant: 0.0 }),
            ],
        )
        .unwrap();
        assert_eq!(f.value(Subset::singleton(0)), 3.0);
        assert_eq!(f.value(Subset::full(2)), 2.0);
        assert!(!f.is_monotone() && f.is_submodular());
    }
}
