//! Packing systems `Ax <= 1` and unsplittable-flow instances on trees.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{check_ground, Subset};

/// Non-negative packing matrix normalized to unit right-hand sides.
#[derive(Clone, Debug, PartialEq)]
pub struct PackingSystem {
    n: usize,
    rows: Vec<Vec<f64>>,
    sparsity: usize,
    width: usize,
    column_restricted: bool,
    /// Pre-normalization data of a column-restricted system: 0/1 incidence,
    /// demands `d` and capacities `b` with `rows[i][j] = inc[i][j] d_j / b_i`.
    cpip: Option<CpipData>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpipData {
    pub incidence: Vec<Vec<u8>>,
    pub demands: Vec<f64>,
    pub capacities: Vec<f64>,
}

impl PackingSystem {
    /// Rows already scaled to right-hand side 1.
    pub fn normalized(n: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        check_ground(n)?;
        let mut max_entry = 0.0f64;
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("packing row {r} has length {}, expected {n}", row.len())));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidArgument(format!("packing row {r} has entry {v}; entries must be >= 0")));
            }
            max_entry = row.iter().copied().fold(max_entry, f64::max);
        }
        if max_entry > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "entry {max_entry} exceeds the normalized capacity 1 (width would be 0)"
            )));
        }
        let sparsity = (0..n).map(|j| rows.iter().filter(|r| r[j] > 0.0).count()).max().unwrap_or(0);
        let width = if max_entry > 0.0 { (1.0 / max_entry + 1e-12).floor() as usize } else { usize::MAX };
        let column_restricted = (0..n).all(|j| {
            let mut nz = rows.iter().map(|r| r[j]).filter(|v| *v > 0.0);
            match nz.next() {
                None => true,
                Some(first) => nz.all(|v| (v - first).abs() <= 1e-12 * first),
            }
        });
        Ok(Self { n, rows, sparsity, width, column_restricted, cpip: None })
    }

    /// `A x <= b` with `b > 0`, normalized row-wise.
    pub fn from_rows(n: usize, rows: Vec<Vec<f64>>, rhs: &[f64]) -> Result<Self> {
        if rows.len() != rhs.len() {
            return Err(Error::Dimension(format!("{} rows but {} right-hand sides", rows.len(), rhs.len())));
        }
        if let Some(b) = rhs.iter().find(|b| !(**b > 0.0)) {
            return Err(Error::InvalidArgument(format!("right-hand side {b} must be positive")));
        }
        let rows = rows.into_iter().zip(rhs).map(|(r, b)| r.into_iter().map(|v| v / b).collect()).collect();
        Self::normalized(n, rows)
    }

    /// Column-restricted system `A[d] x <= b` from a 0/1 matrix.
    pub fn column_restricted(incidence: Vec<Vec<u8>>, demands: Vec<f64>, capacities: Vec<f64>) -> Result<Self> {
        let n = demands.len();
        if incidence.len() != capacities.len() {
            return Err(Error::Dimension(format!(
                "{} incidence rows but {} capacities",
                incidence.len(),
                capacities.len()
            )));
        }
        for (r, row) in incidence.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Dimension(format!("incidence row {r} has length {}, expected {n}", row.len())));
            }
            if row.iter().any(|v| *v > 1) {
                return Err(Error::InvalidArgument(format!("incidence row {r} is not 0/1")));
            }
        }
        if let Some(d) = demands.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidArgument(format!("demand {d} must be positive")));
        }
        let d_max = demands.iter().copied().fold(0.0, f64::max);
        let b_min = capacities.iter().copied().fold(f64::INFINITY, f64::min);
        if d_max > b_min {
            return Err(Error::Precondition(format!("no-bottleneck violated: d_max = {d_max} > b_min = {b_min}")));
        }
        let rows: Vec<Vec<f64>> = incidence
            .iter()
            .zip(&capacities)
            .map(|(row, b)| row.iter().zip(&demands).map(|(&a, d)| a as f64 * d / b).collect())
            .collect();
        let mut sys = Self::normalized(n, rows)?;
        sys.cpip = Some(CpipData { incidence, demands, capacities });
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// Largest number of nonzeros in a column.
    pub fn sparsity(&self) -> usize {
        self.sparsity
    }

    /// `floor(1 / max a_ij)`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_column_restricted(&self) -> bool {
        self.column_restricted
    }

    pub fn cpip(&self) -> Option<&CpipData> {
        self.cpip.as_ref()
    }

    pub fn load(&self, row: usize, s: Subset) -> f64 {
        s.iter().map(|j| self.rows[row][j]).sum()
    }

    pub fn is_feasible(&self, s: Subset) -> bool {
        (0..self.rows.len()).all(|r| self.load(r, s) <= 1.0 + 1e-12)
    }

    /// Whether `x` satisfies `Ax <= scale` and `0 <= x <= 1`.
    pub fn contains_scaled(&self, x: &[f64], scale: f64, tol: f64) -> bool {
        x.iter().all(|v| *v >= -tol && *v <= 1.0 + tol)
            && self.rows.iter().all(|r| r.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() <= scale + tol)
    }
}

/// Request `(s, t)` with demand `d`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Request {
    pub s: usize,
    pub t: usize,
    pub demand: f64,
}

/// Tree edge `(u, v)` with capacity `cap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeEdge {
    pub u: usize,
    pub v: usize,
    pub cap: f64,
}

/// Capacitated tree with routing requests; requests are the ground set.
#[derive(Clone, Debug, PartialEq)]
pub struct UfpTreeInstance {
    vertices: usize,
    edges: Vec<TreeEdge>,
    requests: Vec<Request>,
    root: usize,
    paths: Vec<Vec<usize>>,
    depth: Vec<usize>,
}

impl UfpTreeInstance {
    pub fn new(vertices: usize, edges: Vec<TreeEdge>, requests: Vec<Request>, root: usize) -> Result<Self> {
        Self::build(vertices, edges, requests, root, true)
    }

    /// Skips the no-bottleneck check; used internally for per-class
    /// capacity vectors that may contain zero-capacity unused edges.
    pub(crate) fn new_unchecked(vertices: usize, edges: Vec<TreeEdge>, requests: Vec<Request>, root: usize) -> Result<Self> {
        Self::build(vertices, edges, requests, root, false)
    }

    fn build(vertices: usize, edges: Vec<TreeEdge>, requests: Vec<Request>, root: usize, check: bool) -> Result<Self> {
        check_ground(requests.len())?;
        if vertices == 0 || edges.len() + 1 != vertices {
            return Err(Error::InvalidArgument(format!(
                "a tree on {vertices} vertices needs {} edges, got {}",
                vertices.saturating_sub(1),
                edges.len()
            )));
        }
        if root >= vertices {
            return Err(Error::Dimension(format!("root {root} >= {vertices} vertices")));
        }
        let mut adj = vec![Vec::new(); vertices];
        for (k, e) in edges.iter().enumerate() {
            if e.u >= vertices || e.v >= vertices || e.u == e.v {
                return Err(Error::InvalidArgument(format!("edge {k} ({},{}) is invalid", e.u, e.v)));
            }
            if !(e.cap >= 0.0 && e.cap.is_finite()) {
                return Err(Error::InvalidArgument(format!("edge {k} has capacity {}", e.cap)));
            }
            adj[e.u].push((e.v, k));
            adj[e.v].push((e.u, k));
        }
        let mut parent = vec![None::<(usize, usize)>; vertices];
        let mut depth = vec![usize::MAX; vertices];
        depth[root] = 0;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &(w, k) in &adj[v] {
                if depth[w] == usize::MAX {
                    depth[w] = depth[v] + 1;
                    parent[w] = Some((v, k));
                    queue.push_back(w);
                }
            }
        }
        if depth.iter().any(|d| *d == usize::MAX) {
            return Err(Error::InvalidArgument("edges do not form a connected tree".into()));
        }
        let u_min = edges.iter().map(|e| e.cap).fold(f64::INFINITY, f64::min);
        let mut paths = Vec::with_capacity(requests.len());
        let mut lca_depth = Vec::with_capacity(requests.len());
        for (i, r) in requests.iter().enumerate() {
            if r.s >= vertices || r.t >= vertices {
                return Err(Error::Dimension(format!("request {i} names a vertex >= {vertices}")));
            }
            if !(r.demand > 0.0 && r.demand.is_finite()) {
                return Err(Error::InvalidArgument(format!("request {i} has demand {}", r.demand)));
            }
            if check && r.demand > u_min {
                return Err(Error::Precondition(format!(
                    "no-bottleneck violated by request {i}: demand {} > u_min = {u_min}",
                    r.demand
                )));
            }
            let (mut a, mut b) = (r.s, r.t);
            let mut path = Vec::new();
            while a != b {
                if depth[a] >= depth[b] {
                    let (p, k) = parent[a].unwrap();
                    path.push(k);
                    a = p;
                } else {
                    let (p, k) = parent[b].unwrap();
                    path.push(k);
                    b = p;
                }
            }
            path.sort_unstable();
            paths.push(path);
            lca_depth.push(depth[a]);
        }
        Ok(Self { vertices, edges, requests, root, paths, depth: lca_depth })
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    pub fn edges(&self) -> &[TreeEdge] {
        &self.edges
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn root(&self) -> usize {
        self.root
    }

    /// Edge indices of the unique path of request `i`.
    pub fn path(&self, i: usize) -> &[usize] {
        &self.paths[i]
    }

    /// Depth of the least common ancestor of request `i`'s endpoints.
    pub fn lca_depth(&self, i: usize) -> usize {
        self.depth[i]
    }

    pub fn has_unit_demands(&self) -> bool {
        self.requests.iter().all(|r| r.demand == 1.0)
    }

    pub fn edge_loads(&self, s: Subset) -> Vec<f64> {
        let mut load = vec![0.0; self.edges.len()];
        for i in s.iter() {
            for &e in &self.paths[i] {
                load[e] += self.requests[i].demand;
            }
        }
        load
    }

    pub fn is_routable(&self, s: Subset) -> bool {
        self.edge_loads(s).iter().zip(&self.edges).all(|(l, e)| *l <= e.cap + 1e-9)
    }

    /// Edge-request incidence (rows are edges).
    pub fn incidence(&self) -> Vec<Vec<u8>> {
        let mut inc = vec![vec![0u8; self.requests.len()]; self.edges.len()];
        for (i, p) in self.paths.iter().enumerate() {
            for &e in p {
                inc[e][i] = 1;
            }
        }
        inc
    }

    /// The path-capacity relaxation as a column-restricted packing system.
    pub fn packing_system(&self) -> Result<PackingSystem> {
        PackingSystem::column_restricted(
            self.incidence(),
            self.requests.iter().map(|r| r.demand).collect(),
            self.edges.iter().map(|e| e.cap).collect(),
        )
    }
}
