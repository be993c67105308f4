//! The multilinear extension `F(x) = E[f(R(x))]`: exact enumeration,
//! Monte Carlo estimates and gradients.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SetFunction;
use crate::error::{Error, Result};
use crate::rng::{derive, rng_from, sample_set, shards};
use crate::subset::Subset;

/// Largest ground set for exhaustive `2^n` enumeration.
pub const EXACT_LIMIT: usize = 22;

const COMBO_TOL: f64 = 1e-12;

/// A point of `[0,1]^n`, optionally with its representation
/// `x = (1/q) Σ m_k v_k` as a multiset of vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FractionalPoint {
    coords: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    combo: Option<Vec<(Vec<f64>, usize)>>,
}

impl FractionalPoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(i) = coords.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!("coordinate {i} = {} outside [0,1]", coords[i])));
        }
        Ok(Self { coords, combo: None })
    }

    pub fn zeros(n: usize) -> Self {
        Self { coords: vec![0.0; n], combo: None }
    }

    /// Point carried as a vertex multiset; coordinates are its average.
    pub fn from_combo(combo: Vec<(Vec<f64>, usize)>) -> Result<Self> {
        let n = combo.first().map(|v| v.0.len()).ok_or_else(|| Error::InvalidArgument("empty combination".into()))?;
        if combo.iter().any(|(v, _)| v.len() != n) {
            return Err(Error::Dimension("combination vertices differ in length".into()));
        }
        let q: usize = combo.iter().map(|c| c.1).sum();
        if q == 0 {
            return Err(Error::InvalidArgument("combination multiplicities sum to 0".into()));
        }
        let coords = combo_average(&combo, q);
        let mut p = Self::new(coords.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())?;
        p.combo = Some(combo);
        Ok(p)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn combo(&self) -> Option<&[(Vec<f64>, usize)]> {
        self.combo.as_deref()
    }

    /// Granularity `q = Σ multiplicities`, or 1 without a combination.
    pub fn q(&self) -> usize {
        self.combo.as_ref().map_or(1, |c| c.iter().map(|e| e.1).sum())
    }

    /// Whether the stored combination averages to the coordinates.
    pub fn combo_consistent(&self) -> bool {
        match &self.combo {
            None => true,
            Some(c) => combo_average(c, self.q()).iter().zip(&self.coords).all(|(a, b)| (a - b).abs() <= COMBO_TOL),
        }
    }
}

fn combo_average(combo: &[(Vec<f64>, usize)], q: usize) -> Vec<f64> {
    let n = combo[0].0.len();
    let mut x = vec![0.0; n];
    for (v, m) in combo {
        for (xi, vi) in x.iter_mut().zip(v) {
            *xi += *m as f64 * vi;
        }
    }
    x.iter().map(|v| v / q as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub samples: usize,
    pub seed: u64,
    /// Ground sets with `n <= exact_threshold` are summed exactly.
    pub exact_threshold: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, exact_threshold: 12 }
    }
}

impl EstimatorConfig {
    pub fn sampled(samples: usize, seed: u64) -> Self {
        Self { samples, seed, exact_threshold: 0 }
    }

    pub fn exact() -> Self {
        Self { samples: 1, seed: 0, exact_threshold: EXACT_LIMIT }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        if self.exact_threshold > EXACT_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "exact threshold {} exceeds {EXACT_LIMIT}",
                self.exact_threshold
            )));
        }
        Ok(())
    }

    pub fn is_exact_for(&self, n: usize) -> bool {
        n <= self.exact_threshold
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0 }
    }

    fn from_moments(sum: f64, sumsq: f64, h: usize) -> Self {
        let mean = sum / h as f64;
        if h < 2 {
            return Self { value: mean, stderr: 0.0 };
        }
        let var = ((sumsq - sum * mean) / (h - 1) as f64).max(0.0);
        Self { value: mean, stderr: (var / h as f64).sqrt() }
    }
}

fn check_point(f: &SetFunction, x: &[f64]) -> Result<()> {
    if x.len() != f.len() {
        return Err(Error::Dimension(format!("point of length {} for a function on {}", x.len(), f.len())));
    }
    Ok(())
}

/// `Pr[R(x) = S]` for every mask `S`.
pub(crate) fn product_distribution(x: &[f64]) -> Vec<f64> {
    let mut p = Vec::with_capacity(1 << x.len());
    p.push(1.0);
    for &xi in x {
        let len = p.len();
        p.resize(2 * len, 0.0);
        for m in 0..len {
            let v = p[m];
            p[m] = v * (1.0 - xi);
            p[m + len] = v * xi;
        }
    }
    p
}

fn values<'a>(f: &'a SetFunction) -> Result<std::borrow::Cow<'a, [f64]>> {
    if f.len() <= 16 || f.is_tabulated() {
        Ok(std::borrow::Cow::Borrowed(f.tabulate()?))
    } else {
        Ok(std::borrow::Cow::Owned((0..1u64 << f.len()).map(|m| f.value(Subset(m))).collect()))
    }
}

/// `Σ_S f(S) Π_{i∈S} x_i Π_{j∉S} (1 - x_j)` by full enumeration.
pub fn multilinear_exact(f: &SetFunction, x: &[f64]) -> Result<f64> {
    check_point(f, x)?;
    if f.len() > EXACT_LIMIT {
        return Err(Error::Capacity { what: "exact multilinear extension", n: f.len(), limit: EXACT_LIMIT });
    }
    let vals = values(f)?;
    Ok(product_distribution(x).iter().zip(vals.iter()).map(|(p, v)| p * v).sum())
}

/// `∂F/∂x_i = F(x | x_i = 1) - F(x | x_i = 0)` for every `i`, exactly.
pub fn gradient_exact(f: &SetFunction, x: &[f64]) -> Result<Vec<f64>> {
    check_point(f, x)?;
    if f.len() > EXACT_LIMIT {
        return Err(Error::Capacity { what: "exact gradient", n: f.len(), limit: EXACT_LIMIT });
    }
    let vals = values(f)?;
    let mut y = x.to_vec();
    Ok((0..f.len())
        .map(|i| {
            y[i] = 0.0;
            let p = product_distribution(&y);
            y[i] = x[i];
            let bit = 1usize << i;
            (0..p.len()).filter(|m| m & bit == 0).map(|m| p[m] * (vals[m | bit] - vals[m])).sum()
        })
        .collect())
}

/// Sampled `F̃(x) = (1/H) Σ_h f(R_h)`, sharded and reduced in shard order.
pub fn multilinear_estimate(f: &SetFunction, x: &[f64], cfg: &EstimatorConfig) -> Result<Estimate> {
    check_point(f, x)?;
    cfg.validate()?;
    let parts: Vec<(f64, f64)> = shards(cfg.samples)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(cfg.seed, k));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let v = f.value(sample_set(x, &mut rng));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(Estimate::from_moments(s, s2, cfg.samples))
}

/// `F(x)` exactly when `n <= cfg.exact_threshold`, otherwise sampled.
pub fn estimate_value(f: &SetFunction, x: &[f64], cfg: &EstimatorConfig) -> Result<Estimate> {
    if cfg.is_exact_for(f.len()) {
        multilinear_exact(f, x).map(Estimate::exact)
    } else {
        multilinear_estimate(f, x, cfg)
    }
}

/// Sampled `E[f(R + i) - f(R - i)]` for every `i` from one shared batch.
pub fn gradient_estimates(f: &SetFunction, x: &[f64], cfg: &EstimatorConfig) -> Result<Vec<Estimate>> {
    check_point(f, x)?;
    cfg.validate()?;
    let n = f.len();
    let parts: Vec<Vec<(f64, f64)>> = shards(cfg.samples)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(cfg.seed, k));
            let mut acc = vec![(0.0, 0.0); n];
            for _ in 0..len {
                let r = sample_set(x, &mut rng);
                let fr = f.value(r);
                for (i, a) in acc.iter_mut().enumerate() {
                    let d = if r.contains(i) { fr - f.value(r.without(i)) } else { f.value(r.with(i)) - fr };
                    a.0 += d;
                    a.1 += d * d;
                }
            }
            acc
        })
        .collect();
    Ok((0..n)
        .map(|i| {
            let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p[i].0, a.1 + p[i].1));
            Estimate::from_moments(s, s2, cfg.samples)
        })
        .collect())
}

/// Sampled partial derivative in coordinate `i`.
pub fn gradient_estimate(f: &SetFunction, x: &[f64], i: usize, cfg: &EstimatorConfig) -> Result<Estimate> {
    if i >= f.len() {
        return Err(Error::InvalidArgument(format!("element {i} outside ground set of {}", f.len())));
    }
    check_point(f, x)?;
    cfg.validate()?;
    let parts: Vec<(f64, f64)> = shards(cfg.samples)
        .into_par_iter()
        .map(|(k, _, len)| {
            let mut rng = rng_from(derive(cfg.seed, k));
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..len {
                let r = sample_set(x, &mut rng);
                let d = f.value(r.with(i)) - f.value(r.without(i));
                s += d;
                s2 += d * d;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok(Estimate::from_moments(s, s2, cfg.samples))
}

/// A fixed batch of uniforms `U_{h,i}`; `R_h(x) = {i : U_{h,i} < x_i}`.
/// Evaluating several points against one batch gives common random numbers.
#[derive(Clone, Debug)]
pub struct CommonSamples {
    n: usize,
    h: usize,
    uniforms: Vec<f64>,
}

impl CommonSamples {
    pub fn new(n: usize, samples: usize, seed: u64) -> Self {
        let mut uniforms = vec![0.0; n * samples];
        uniforms.par_chunks_mut(n.max(1) * crate::rng::SHARD).enumerate().for_each(|(k, chunk)| {
            let mut rng = rng_from(derive(seed, k as u64));
            chunk.iter_mut().for_each(|u| *u = rng.gen());
        });
        Self { n, h: samples, uniforms }
    }

    pub fn len(&self) -> usize {
        self.h
    }

    pub fn is_empty(&self) -> bool {
        self.h == 0
    }

    fn set(&self, h: usize, x: &[f64]) -> Subset {
        let u = &self.uniforms[h * self.n..(h + 1) * self.n];
        let mut s = 0u64;
        for i in 0..self.n {
            if u[i] < x[i] {
                s |= 1 << i;
            }
        }
        Subset(s)
    }

    pub fn estimate(&self, f: &SetFunction, x: &[f64]) -> Estimate {
        let parts: Vec<(f64, f64)> = (0..self.h)
            .collect::<Vec<_>>()
            .par_chunks(crate::rng::SHARD)
            .map(|hs| {
                hs.iter().fold((0.0, 0.0), |a, &h| {
                    let v = f.value(self.set(h, x));
                    (a.0 + v, a.1 + v * v)
                })
            })
            .collect();
        let (s, s2) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
        Estimate::from_moments(s, s2, self.h)
    }

    pub fn gradient(&self, f: &SetFunction, x: &[f64]) -> Vec<Estimate> {
        let n = self.n;
        let parts: Vec<Vec<(f64, f64)>> = (0..self.h)
            .collect::<Vec<_>>()
            .par_chunks(crate::rng::SHARD)
            .map(|hs| {
                let mut acc = vec![(0.0, 0.0); n];
                for &h in hs {
                    let r = self.set(h, x);
                    let fr = f.value(r);
                    for (i, a) in acc.iter_mut().enumerate() {
                        let d = if r.contains(i) { fr - f.value(r.without(i)) } else { f.value(r.with(i)) - fr };
                        a.0 += d;
                        a.1 += d * d;
                    }
                }
                acc
            })
            .collect();
        (0..n)
            .map(|i| {
                let (s, s2) = parts.iter().fold((0.0, 0.0), |a, p| (a.0 + p[i].0, a.1 + p[i].1));
                Estimate::from_moments(s, s2, self.h)
            })
            .collect()
    }
}
