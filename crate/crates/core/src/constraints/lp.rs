//! Dense two-phase simplex with Bland's anti-cycling rule.
//!
//! Sized for desk-scale problems (a few thousand rows and columns). The final
//! basis is re-solved against the original data with partial pivoting, which
//! is what makes the reported point and duals accurate to ~1e-12.

use crate::error::{Error, Result};

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cmp {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub cmp: Cmp,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Le, rhs }
    }
    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Ge, rhs }
    }
    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, cmp: Cmp::Eq, rhs }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().zip(x).map(|(a, v)| a * v).sum()
    }

    /// Whether `x` satisfies the row within `tol` (scaled by the row magnitude).
    pub fn satisfied(&self, x: &[f64], tol: f64) -> bool {
        let act = self.activity(x);
        let scale = 1.0f64.max(self.rhs.abs()).max(self.coeffs.iter().zip(x).map(|(a, v)| (a * v).abs()).sum());
        let t = tol * scale;
        match self.cmp {
            Cmp::Le => act <= self.rhs + t,
            Cmp::Ge => act >= self.rhs - t,
            Cmp::Eq => (act - self.rhs).abs() <= t,
        }
    }
}

/// `maximize objective·x` subject to `rows` and `lower <= x <= upper`.
/// Bounds may be infinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLp {
    pub objective: Vec<f64>,
    pub rows: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl DenseLp {
    /// Variables default to `[0, +inf)`.
    pub fn new(objective: Vec<f64>) -> Self {
        let n = objective.len();
        Self { objective, rows: Vec::new(), bounds: vec![(0.0, f64::INFINITY); n] }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn push(&mut self, row: Constraint) -> &mut Self {
        self.rows.push(row);
        self
    }

    pub fn bound(&mut self, j: usize, lower: f64, upper: f64) -> &mut Self {
        self.bounds[j] = (lower, upper);
        self
    }

    pub fn solve(&self) -> Result<LpSolution> {
        lp_solve(self)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Optimal point (empty unless `Optimal`).
    pub point: Vec<f64>,
    pub value: f64,
    /// One dual multiplier per row; `>= 0` for `Le` rows of a maximization.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    fn status_only(status: LpStatus, pivots: usize) -> Self {
        Self { status, point: Vec::new(), value: f64::NAN, duals: Vec::new(), pivots }
    }
}

#[derive(Clone, Copy)]
enum VarMap {
    /// x = lower + col
    Shift { col: usize, lower: f64 },
    /// x = upper - col
    Neg { col: usize, upper: f64 },
    /// x = pos - neg
    Free { pos: usize, neg: usize },
}

struct Tableau {
    m: usize,
    w: usize,
    t: Vec<f64>,
    d: Vec<f64>,
    basis: Vec<usize>,
    pivots: usize,
}

impl Tableau {
    #[inline]
    fn at(&self, r: usize, j: usize) -> f64 {
        self.t[r * self.w + j]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let w = self.w;
        let p = self.t[r * w + j];
        let inv = 1.0 / p;
        for v in &mut self.t[r * w..(r + 1) * w] {
            *v *= inv;
        }
        self.t[r * w + j] = 1.0;
        let prow: Vec<f64> = self.t[r * w..(r + 1) * w].to_vec();
        for rr in 0..self.m {
            if rr == r {
                continue;
            }
            let f = self.t[rr * w + j];
            if f != 0.0 {
                let row = &mut self.t[rr * w..(rr + 1) * w];
                for (v, pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let f = self.d[j];
        if f != 0.0 {
            for (v, pv) in self.d.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.d[j] = 0.0;
        }
        self.basis[r] = j;
        self.pivots += 1;
    }

    /// Runs Bland's rule over `allowed` columns. Returns false if unbounded.
    fn run(&mut self, allowed: &[bool], limit: usize) -> Result<bool> {
        let rhs = self.w - 1;
        loop {
            if self.pivots > limit {
                return Err(Error::Numeric(format!("pivot limit {limit} exceeded")));
            }
            let Some(j) = (0..rhs).find(|&j| allowed[j] && self.d[j] > COST_TOL) else {
                return Ok(true);
            };
            let mut best: Option<(usize, f64)> = None;
            for r in 0..self.m {
                let a = self.at(r, j);
                if a > PIVOT_TOL {
                    let ratio = self.at(r, rhs).max(0.0) / a;
                    best = match best {
                        None => Some((r, ratio)),
                        Some((br, bv)) => {
                            let tie = (ratio - bv).abs() <= 1e-12 * (1.0 + bv.abs());
                            if ratio < bv && !tie || tie && self.basis[r] < self.basis[br] {
                                Some((r, ratio))
                            } else {
                                Some((br, bv))
                            }
                        }
                    };
                }
            }
            match best {
                None => return Ok(false),
                Some((r, _)) => self.pivot(r, j),
            }
        }
    }
}

/// Solves `x = B^{-1} b` (or `B^T y = c` when `transpose`) by Gaussian
/// elimination with partial pivoting. `None` if singular.
fn dense_solve(mut a: Vec<f64>, m: usize, mut b: Vec<f64>, transpose: bool) -> Option<Vec<f64>> {
    if transpose {
        let mut at = vec![0.0; m * m];
        for r in 0..m {
            for c in 0..m {
                at[c * m + r] = a[r * m + c];
            }
        }
        a = at;
    }
    for col in 0..m {
        let piv = (col..m).max_by(|&x, &y| a[x * m + col].abs().total_cmp(&a[y * m + col].abs()))?;
        if a[piv * m + col].abs() < 1e-13 {
            return None;
        }
        if piv != col {
            for c in 0..m {
                a.swap(piv * m + c, col * m + c);
            }
            b.swap(piv, col);
        }
        let p = a[col * m + col];
        for r in col + 1..m {
            let f = a[r * m + col] / p;
            if f != 0.0 {
                for c in col..m {
                    a[r * m + c] -= f * a[col * m + c];
                }
                b[r] -= f * b[col];
            }
        }
    }
    for col in (0..m).rev() {
        let mut s = b[col];
        for c in col + 1..m {
            s -= a[col * m + c] * b[c];
        }
        b[col] = s / a[col * m + col];
    }
    Some(b)
}

/// Solves a dense LP. Infeasible and unbounded problems are reported through
/// [`LpStatus`]; malformed input and numeric trouble are errors.
pub fn lp_solve(lp: &DenseLp) -> Result<LpSolution> {
    let n = lp.objective.len();
    if lp.bounds.len() != n {
        return Err(Error::Dimension(format!("{} bounds for {} variables", lp.bounds.len(), n)));
    }
    for (k, row) in lp.rows.iter().enumerate() {
        if row.coeffs.len() != n {
            return Err(Error::Dimension(format!("row {k} has {} coefficients, expected {n}", row.coeffs.len())));
        }
        if !row.rhs.is_finite() || row.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("row {k} has non-finite data")));
        }
    }
    if lp.objective.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("objective has non-finite entries".into()));
    }

    // Standard form: columns are non-negative.
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for &(lo, hi) in &lp.bounds {
        if lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
            return Ok(LpSolution::status_only(LpStatus::Infeasible, 0));
        }
        if lo.is_finite() {
            if hi.is_finite() {
                upper_rows.push((ncols, hi - lo));
            }
            maps.push(VarMap::Shift { col: ncols, lower: lo });
            ncols += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Neg { col: ncols, upper: hi });
            ncols += 1;
        } else {
            maps.push(VarMap::Free { pos: ncols, neg: ncols + 1 });
            ncols += 2;
        }
    }

    struct StdRow {
        coeffs: Vec<f64>,
        cmp: Cmp,
        rhs: f64,
        sign: f64,
    }
    let mut rows: Vec<StdRow> = Vec::with_capacity(lp.rows.len() + upper_rows.len());
    for row in &lp.rows {
        let mut coeffs = vec![0.0; ncols];
        let mut rhs = row.rhs;
        for (j, &a) in row.coeffs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            match maps[j] {
                VarMap::Shift { col, lower } => {
                    coeffs[col] += a;
                    rhs -= a * lower;
                }
                VarMap::Neg { col, upper } => {
                    coeffs[col] -= a;
                    rhs -= a * upper;
                }
                VarMap::Free { pos, neg } => {
                    coeffs[pos] += a;
                    coeffs[neg] -= a;
                }
            }
        }
        rows.push(StdRow { coeffs, cmp: row.cmp, rhs, sign: 1.0 });
    }
    for &(col, cap) in &upper_rows {
        let mut coeffs = vec![0.0; ncols];
        coeffs[col] = 1.0;
        rows.push(StdRow { coeffs, cmp: Cmp::Le, rhs: cap, sign: 1.0 });
    }
    for r in &mut rows {
        if r.rhs < 0.0 {
            r.rhs = -r.rhs;
            r.sign = -1.0;
            for v in &mut r.coeffs {
                *v = -*v;
            }
            r.cmp = match r.cmp {
                Cmp::Le => Cmp::Ge,
                Cmp::Ge => Cmp::Le,
                Cmp::Eq => Cmp::Eq,
            };
        }
    }

    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.cmp != Cmp::Eq).count();
    let n_art = rows.iter().filter(|r| r.cmp != Cmp::Le).count();
    let total = ncols + n_slack + n_art;
    let w = total + 1;
    let mut t = vec![0.0; m * w];
    let mut basis = vec![0usize; m];
    let mut is_art = vec![false; total];
    let mut s_idx = ncols;
    let mut a_idx = ncols + n_slack;
    for (r, row) in rows.iter().enumerate() {
        t[r * w..r * w + ncols].copy_from_slice(&row.coeffs);
        t[r * w + total] = row.rhs;
        match row.cmp {
            Cmp::Le => {
                t[r * w + s_idx] = 1.0;
                basis[r] = s_idx;
                s_idx += 1;
            }
            Cmp::Ge => {
                t[r * w + s_idx] = -1.0;
                s_idx += 1;
                t[r * w + a_idx] = 1.0;
                is_art[a_idx] = true;
                basis[r] = a_idx;
                a_idx += 1;
            }
            Cmp::Eq => {
                t[r * w + a_idx] = 1.0;
                is_art[a_idx] = true;
                basis[r] = a_idx;
                a_idx += 1;
            }
        }
    }
    // Original standard-form matrix, kept for the final re-solve.
    let original = t.clone();
    let identity_col = basis.clone();

    let limit = 200_000usize.max(50 * (m + total));
    let mut tab = Tableau { m, w, t, d: vec![0.0; w], basis, pivots: 0 };

    if n_art > 0 {
        // Phase 1: maximize -sum(artificials).
        for j in 0..w {
            if j < total && is_art[j] {
                continue;
            }
            let mut s = 0.0;
            for r in 0..m {
                if is_art[tab.basis[r]] {
                    s += tab.at(r, j);
                }
            }
            tab.d[j] = s;
        }
        let allowed = vec![true; total];
        tab.run(&allowed, limit)?;
        let infeas = tab.d[total];
        let scale = 1.0 + rows.iter().map(|r| r.rhs).fold(0.0, f64::max);
        if infeas > FEAS_TOL * scale {
            return Ok(LpSolution::status_only(LpStatus::Infeasible, tab.pivots));
        }
        for r in 0..m {
            if is_art[tab.basis[r]] {
                if let Some(j) = (0..total).find(|&j| !is_art[j] && tab.at(r, j).abs() > 1e-9) {
                    tab.pivot(r, j);
                }
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; total];
    let mut offset = 0.0;
    for (j, &c) in lp.objective.iter().enumerate() {
        match maps[j] {
            VarMap::Shift { col, lower } => {
                cost[col] = c;
                offset += c * lower;
            }
            VarMap::Neg { col, upper } => {
                cost[col] = -c;
                offset += c * upper;
            }
            VarMap::Free { pos, neg } => {
                cost[pos] = c;
                cost[neg] = -c;
            }
        }
    }
    for j in 0..w {
        let cj = if j < total { cost[j] } else { 0.0 };
        let mut s = cj;
        for r in 0..m {
            s -= cost[tab.basis[r]] * tab.at(r, j);
        }
        tab.d[j] = s;
    }
    let allowed: Vec<bool> = is_art.iter().map(|a| !a).collect();
    if !tab.run(&allowed, limit)? {
        return Ok(LpSolution::status_only(LpStatus::Unbounded, tab.pivots));
    }

    // Re-solve the final basis on the original data.
    let mut bmat = vec![0.0; m * m];
    for r in 0..m {
        for (k, &col) in tab.basis.iter().enumerate() {
            bmat[r * m + k] = original[r * w + col];
        }
    }
    let rhs: Vec<f64> = rows.iter().map(|r| r.rhs).collect();
    let xb = match dense_solve(bmat.clone(), m, rhs, false) {
        Some(v) if v.iter().all(|x| x.is_finite() && *x > -1e-7) => v,
        _ => (0..m).map(|r| tab.at(r, total)).collect(),
    };
    let cb: Vec<f64> = tab.basis.iter().map(|&c| cost[c]).collect();
    let u = dense_solve(bmat, m, cb, true)
        .unwrap_or_else(|| identity_col.iter().map(|&c| -tab.d[c]).collect());

    let mut std_x = vec![0.0; total];
    for (k, &col) in tab.basis.iter().enumerate() {
        std_x[col] = xb[k].max(0.0);
    }
    let point: Vec<f64> = maps
        .iter()
        .map(|mp| match *mp {
            VarMap::Shift { col, lower } => lower + std_x[col],
            VarMap::Neg { col, upper } => upper - std_x[col],
            VarMap::Free { pos, neg } => std_x[pos] - std_x[neg],
        })
        .collect();
    let duals: Vec<f64> = (0..lp.rows.len()).map(|r| rows[r].sign * u[r]).collect();
    let value: f64 = lp.objective.iter().zip(&point).map(|(c, x)| c * x).sum();
    let _ = offset;

    for (k, row) in lp.rows.iter().enumerate() {
        if !row.satisfied(&point, FEAS_TOL) {
            return Err(Error::Numeric(format!(
                "row {k} violated by {:.3e} at the reported optimum",
                (row.activity(&point) - row.rhs).abs()
            )));
        }
    }
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        let tol = FEAS_TOL * (1.0 + point[j].abs());
        if point[j] < lo - tol || point[j] > hi + tol {
            return Err(Error::Numeric(format!("variable {j} violates its bounds at the reported optimum")));
        }
    }
    Ok(LpSolution { status: LpStatus::Optimal, point, value, duals, pivots: tab.pivots })
}
