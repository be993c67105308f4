//! Solvable polytopes in `[0,1]^n` with a linear-maximization oracle.
//!
//! Matroid polytopes alone are optimized by greedy. Every other combination
//! is flattened into explicit rows and solved with the dense simplex; matroid
//! components contribute rank inequalities lazily through a cutting-plane
//! loop whose cuts are pooled across calls.

use std::sync::{Arc, Mutex};

use crate::constraints::lp::{Cmp, Constraint, DenseLp, LpStatus};
use crate::constraints::matroid::{Matroid, MatroidKind, RANK_TABLE_LIMIT};
use crate::error::{Error, Result};
use crate::subset::{check_ground, Subset};

const MEMBER_TOL: f64 = 1e-9;
const MAX_CUT_ROUNDS: usize = 2000;

#[derive(Clone, Debug)]
pub enum PolytopeKind {
    Matroid(Arc<Matroid>),
    /// `A x <= b`, `A >= 0`, `x in [0,1]^n`.
    Packing { rows: Vec<Vec<f64>>, rhs: Vec<f64> },
    /// `P ∩ {x <= caps}`.
    BoxCap { inner: Box<Polytope>, caps: Vec<f64> },
    /// `factor · P`.
    Scaled { inner: Box<Polytope>, factor: f64 },
    Intersection(Vec<Polytope>),
    /// Arbitrary rows over `[0,1]^n`; not necessarily down-monotone.
    Explicit(Vec<Constraint>),
}

#[derive(Debug)]
pub struct Polytope {
    n: usize,
    kind: PolytopeKind,
    cuts: Mutex<Vec<Constraint>>,
}

impl Clone for Polytope {
    fn clone(&self) -> Self {
        Self { n: self.n, kind: self.kind.clone(), cuts: Mutex::new(self.cuts.lock().unwrap().clone()) }
    }
}

#[derive(Default)]
struct Flat {
    rows: Vec<Constraint>,
    caps: Vec<f64>,
    matroids: Vec<(Arc<Matroid>, f64)>,
}

impl Polytope {
    fn make(n: usize, kind: PolytopeKind) -> Self {
        Self { n, kind, cuts: Mutex::new(Vec::new()) }
    }

    pub fn matroid(m: Arc<Matroid>) -> Self {
        Self::make(m.len(), PolytopeKind::Matroid(m))
    }

    pub fn packing(n: usize, rows: Vec<Vec<f64>>, rhs: Vec<f64>) -> Result<Self> {
        check_ground(n)?;
        if rows.len() != rhs.len() {
            return Err(Error::Dimension(format!("{} rows but {} right-hand sides", rows.len(), rhs.len())));
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("knapsack row {r} has length {}, expected {n}", row.len())));
            }
            if row.iter().any(|v| *v < 0.0) || rhs[r] < 0.0 {
                return Err(Error::InvalidArgument(format!("knapsack row {r} must be non-negative")));
            }
        }
        Ok(Self::make(n, PolytopeKind::Packing { rows, rhs }))
    }

    pub fn hypercube(n: usize) -> Result<Self> {
        Self::packing(n, Vec::new(), Vec::new())
    }

    pub fn box_cap(inner: Polytope, caps: Vec<f64>) -> Result<Self> {
        if caps.len() != inner.n {
            return Err(Error::Dimension(format!("{} caps for a polytope in dimension {}", caps.len(), inner.n)));
        }
        let n = inner.n;
        Ok(Self::make(n, PolytopeKind::BoxCap { inner: Box::new(inner), caps }))
    }

    pub fn uniform_cap(inner: Polytope, t: f64) -> Self {
        let n = inner.n;
        Self::make(n, PolytopeKind::BoxCap { inner: Box::new(inner), caps: vec![t; n] })
    }

    pub fn scaled(inner: Polytope, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::InvalidArgument(format!("scale factor {factor} must lie in (0,1]")));
        }
        let n = inner.n;
        Ok(Self::make(n, PolytopeKind::Scaled { inner: Box::new(inner), factor }))
    }

    pub fn intersection(parts: Vec<Polytope>) -> Result<Self> {
        let n = parts.first().map(|p| p.n).ok_or_else(|| Error::InvalidArgument("empty intersection".into()))?;
        if parts.iter().any(|p| p.n != n) {
            return Err(Error::Dimension("intersected polytopes differ in dimension".into()));
        }
        Ok(Self::make(n, PolytopeKind::Intersection(parts)))
    }

    pub fn explicit(n: usize, rows: Vec<Constraint>) -> Result<Self> {
        check_ground(n)?;
        if let Some(k) = rows.iter().position(|r| r.coeffs.len() != n) {
            return Err(Error::Dimension(format!("row {k} has length {}, expected {n}", rows[k].coeffs.len())));
        }
        Ok(Self::make(n, PolytopeKind::Explicit(rows)))
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> &PolytopeKind {
        &self.kind
    }

    /// Structural down-monotonicity: only explicit rows can break it.
    pub fn is_down_monotone(&self) -> bool {
        match &self.kind {
            PolytopeKind::Matroid(_) | PolytopeKind::Packing { .. } => true,
            PolytopeKind::BoxCap { inner, .. } | PolytopeKind::Scaled { inner, .. } => inner.is_down_monotone(),
            PolytopeKind::Intersection(ps) => ps.iter().all(Polytope::is_down_monotone),
            PolytopeKind::Explicit(rows) => rows
                .iter()
                .all(|r| r.cmp == Cmp::Le && r.rhs >= 0.0 && r.coeffs.iter().all(|a| *a >= 0.0)),
        }
    }

    fn flatten(&self, scale: f64, out: &mut Flat) {
        for c in out.caps.iter_mut() {
            *c = c.min(scale);
        }
        match &self.kind {
            PolytopeKind::Matroid(m) => out.matroids.push((m.clone(), scale)),
            PolytopeKind::Packing { rows, rhs } => {
                for (r, b) in rows.iter().zip(rhs) {
                    out.rows.push(Constraint::le(r.clone(), b * scale));
                }
            }
            PolytopeKind::BoxCap { inner, caps } => {
                for (c, k) in out.caps.iter_mut().zip(caps) {
                    *c = c.min(k * scale);
                }
                inner.flatten(scale, out);
            }
            PolytopeKind::Scaled { inner, factor } => inner.flatten(scale * factor, out),
            PolytopeKind::Intersection(ps) => ps.iter().for_each(|p| p.flatten(scale, out)),
            PolytopeKind::Explicit(rows) => {
                for r in rows {
                    out.rows.push(Constraint { coeffs: r.coeffs.clone(), cmp: r.cmp, rhs: r.rhs * scale });
                }
            }
        }
    }

    fn flat(&self) -> Flat {
        let mut f = Flat { caps: vec![1.0; self.n], ..Default::default() };
        self.flatten(1.0, &mut f);
        f
    }

    /// A maximizer of `w·x` over the polytope. `None` if the polytope is empty.
    pub fn maximize(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        if w.len() != self.n {
            return Err(Error::Dimension(format!("weight vector of length {} for dimension {}", w.len(), self.n)));
        }
        match &self.kind {
            PolytopeKind::Matroid(m) => Ok(Some(m.polytope_maximize(w))),
            PolytopeKind::Scaled { inner, factor } if matches!(inner.kind, PolytopeKind::Matroid(_)) => {
                Ok(inner.maximize(w)?.map(|v| v.into_iter().map(|x| x * factor).collect()))
            }
            _ => self.lp_maximize(w),
        }
    }

    fn lp_maximize(&self, w: &[f64]) -> Result<Option<Vec<f64>>> {
        let flat = self.flat();
        let mut lp = DenseLp::new(w.to_vec());
        for (j, c) in flat.caps.iter().enumerate() {
            lp.bound(j, 0.0, c.max(0.0));
        }
        lp.rows = flat.rows;
        for (m, s) in &flat.matroids {
            lp.rows.push(Constraint::le(vec![1.0; self.n], s * m.rank(Subset::full(self.n)) as f64));
        }
        lp.rows.extend(self.cuts.lock().unwrap().iter().cloned());
        for _ in 0..MAX_CUT_ROUNDS {
            let sol = lp.solve()?;
            match sol.status {
                LpStatus::Infeasible => return Ok(None),
                LpStatus::Unbounded => return Err(Error::Numeric("bounded polytope reported unbounded".into())),
                LpStatus::Optimal => {}
            }
            let mut added = false;
            for (m, s) in &flat.matroids {
                let scaled: Vec<f64> = sol.point.iter().map(|v| v / s).collect();
                let (set, viol) = m.most_violated(&scaled)?;
                if viol > 1e-10 {
                    let cut = Constraint::le(set.indicator(self.n), s * m.rank(set) as f64);
                    self.cuts.lock().unwrap().push(cut.clone());
                    lp.rows.push(cut);
                    added = true;
                }
            }
            if !added {
                return Ok(Some(sol.point.into_iter().map(|v| v.max(0.0)).collect()));
            }
        }
        Err(Error::Numeric(format!("cutting-plane loop exceeded {MAX_CUT_ROUNDS} rounds")))
    }

    /// Any point of the polytope, found by a zero-objective LP.
    pub fn feasible_point(&self) -> Result<Option<Vec<f64>>> {
        self.lp_maximize(&vec![0.0; self.n])
    }

    /// Membership within `1e-9`. Matroid components over more than
    /// `RANK_TABLE_LIMIT` elements are only checked on `x(N) <= r(N)`.
    pub fn contains(&self, x: &[f64]) -> Result<bool> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point of length {} for dimension {}", x.len(), self.n)));
        }
        let flat = self.flat();
        if x.iter().zip(&flat.caps).any(|(v, c)| *v < -MEMBER_TOL || *v > c + MEMBER_TOL) {
            return Ok(false);
        }
        if !flat.rows.iter().all(|r| r.satisfied(x, MEMBER_TOL)) {
            return Ok(false);
        }
        for (m, s) in &flat.matroids {
            let scaled: Vec<f64> = x.iter().map(|v| v / s).collect();
            if m.len() <= RANK_TABLE_LIMIT || !matches!(m.kind(), MatroidKind::Graphic { .. }) {
                if !m.polytope_contains(&scaled, MEMBER_TOL)? {
                    return Ok(false);
                }
            } else if scaled.iter().sum::<f64>() > m.rank(Subset::full(self.n)) as f64 + MEMBER_TOL {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
