//! Uniform, partition and graphic matroids with rank, span and greedy.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::subset::{check_ground, Subset};

/// Largest ground set for which the full rank table is cached.
pub const RANK_TABLE_LIMIT: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MatroidKind {
    Uniform { k: usize },
    /// Elements outside every block are unconstrained.
    Partition { blocks: Vec<Vec<usize>>, caps: Vec<usize> },
    /// Element `e` is edge `edges[e]` of a multigraph on `vertices` nodes.
    Graphic { vertices: usize, edges: Vec<(usize, usize)> },
}

#[derive(Debug)]
pub struct Matroid {
    n: usize,
    kind: MatroidKind,
    block_of: Vec<Option<usize>>,
    rank_table: OnceLock<Vec<u8>>,
}

impl Clone for Matroid {
    fn clone(&self) -> Self {
        Self { n: self.n, kind: self.kind.clone(), block_of: self.block_of.clone(), rank_table: OnceLock::new() }
    }
}

impl PartialEq for Matroid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.kind == other.kind
    }
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        Self((0..n).collect())
    }
    fn find(&mut self, mut v: usize) -> usize {
        while self.0[v] != v {
            self.0[v] = self.0[self.0[v]];
            v = self.0[v];
        }
        v
    }
    /// False if `a` and `b` were already connected.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.0[ra] = rb;
        true
    }
}

impl Matroid {
    pub fn new(n: usize, kind: MatroidKind) -> Result<Self> {
        check_ground(n)?;
        let mut block_of = vec![None; n];
        match &kind {
            MatroidKind::Uniform { .. } => {}
            MatroidKind::Partition { blocks, caps } => {
                if blocks.len() != caps.len() {
                    return Err(Error::Dimension(format!("{} blocks but {} capacities", blocks.len(), caps.len())));
                }
                for (b, block) in blocks.iter().enumerate() {
                    for &e in block {
                        if e >= n {
                            return Err(Error::Dimension(format!("block {b} names element {e} >= n = {n}")));
                        }
                        if block_of[e].replace(b).is_some() {
                            return Err(Error::InvalidArgument(format!("element {e} appears in two blocks")));
                        }
                    }
                }
            }
            MatroidKind::Graphic { vertices, edges } => {
                if edges.len() != n {
                    return Err(Error::Dimension(format!("graphic matroid has {} edges, expected n = {n}", edges.len())));
                }
                if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| u >= *vertices || v >= *vertices) {
                    return Err(Error::Dimension(format!("edge ({u},{v}) names a vertex >= {vertices}")));
                }
            }
        }
        Ok(Self { n, kind, block_of, rank_table: OnceLock::new() })
    }

    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        Self::new(n, MatroidKind::Uniform { k })
    }

    pub fn partition(n: usize, blocks: Vec<Vec<usize>>, caps: Vec<usize>) -> Result<Self> {
        Self::new(n, MatroidKind::Partition { blocks, caps })
    }

    pub fn graphic(vertices: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::new(edges.len(), MatroidKind::Graphic { vertices, edges })
    }

    /// Graphic matroid of the complete graph on `v` vertices.
    pub fn complete_graph(v: usize) -> Result<Self> {
        let edges = (0..v).flat_map(|a| (a + 1..v).map(move |b| (a, b))).collect();
        Self::graphic(v, edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn kind(&self) -> &MatroidKind {
        &self.kind
    }

    pub fn is_independent(&self, s: Subset) -> bool {
        if let Some(t) = self.rank_table.get() {
            return t[s.0 as usize] as usize == s.len();
        }
        match &self.kind {
            MatroidKind::Uniform { k } => s.len() <= *k,
            MatroidKind::Partition { caps, .. } => {
                let mut used = vec![0usize; caps.len()];
                for e in s.iter() {
                    if let Some(b) = self.block_of[e] {
                        used[b] += 1;
                        if used[b] > caps[b] {
                            return false;
                        }
                    }
                }
                true
            }
            MatroidKind::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                s.iter().all(|e| uf.union(edges[e].0, edges[e].1))
            }
        }
    }

    fn rank_direct(&self, s: Subset) -> usize {
        match &self.kind {
            MatroidKind::Uniform { k } => s.len().min(*k),
            MatroidKind::Partition { caps, .. } => {
                let mut used = vec![0usize; caps.len()];
                let mut free = 0;
                for e in s.iter() {
                    match self.block_of[e] {
                        Some(b) => used[b] += 1,
                        None => free += 1,
                    }
                }
                free + used.iter().zip(caps).map(|(u, c)| *u.min(c)).sum::<usize>()
            }
            MatroidKind::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                s.iter().filter(|&e| uf.union(edges[e].0, edges[e].1)).count()
            }
        }
    }

    /// Cached ranks of all `2^n` subsets (only for `n <= RANK_TABLE_LIMIT`).
    pub fn rank_table(&self) -> Option<&[u8]> {
        if self.n > RANK_TABLE_LIMIT {
            return None;
        }
        Some(self.rank_table.get_or_init(|| {
            (0..1u64 << self.n).map(|m| self.rank_direct(Subset(m)) as u8).collect()
        }))
    }

    pub fn rank(&self, s: Subset) -> usize {
        match self.rank_table.get() {
            Some(t) => t[s.0 as usize] as usize,
            None => self.rank_direct(s),
        }
    }

    pub fn span(&self, s: Subset) -> Subset {
        let r = self.rank(s);
        Subset::from_elements((0..self.n).filter(|&i| s.contains(i) || self.rank(s.with(i)) == r))
    }

    /// Maximum-weight independent subset of `a`: scan by non-increasing weight
    /// (ties by smaller index), skip non-positive weights, keep an element if
    /// it preserves independence.
    pub fn greedy_max_weight(&self, weights: &[f64], a: Subset) -> Subset {
        let mut elems: Vec<usize> = a.iter().filter(|&i| weights[i] > 0.0).collect();
        elems.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]).then(i.cmp(&j)));
        self.greedy_in_order(&elems)
    }

    /// Greedy insertion in the given order.
    pub fn greedy_in_order(&self, order: &[usize]) -> Subset {
        let mut out = Subset::EMPTY;
        match &self.kind {
            MatroidKind::Graphic { vertices, edges } => {
                let mut uf = UnionFind::new(*vertices);
                for &e in order {
                    if uf.union(edges[e].0, edges[e].1) {
                        out.insert(e);
                    }
                }
            }
            _ => {
                for &e in order {
                    if self.is_independent(out.with(e)) {
                        out.insert(e);
                    }
                }
            }
        }
        out
    }

    /// Weight of a maximum-weight independent subset of `s`.
    pub fn weighted_rank(&self, weights: &[f64], s: Subset) -> f64 {
        self.greedy_max_weight(weights, s).iter().map(|i| weights[i]).sum()
    }

    /// Linear maximization over the matroid polytope: the greedy vertex on
    /// strictly positive weights.
    pub fn polytope_maximize(&self, weights: &[f64]) -> Vec<f64> {
        self.greedy_max_weight(weights, Subset::full(self.n)).indicator(self.n)
    }

    fn separate_by_blocks(&self, x: &[f64]) -> Option<(Subset, f64)> {
        match &self.kind {
            MatroidKind::Uniform { k } => Some(best_prefix(&(0..self.n).collect::<Vec<_>>(), x, *k)),
            MatroidKind::Partition { blocks, caps } => {
                Some(blocks.iter().zip(caps).map(|(b, &c)| best_prefix(b, x, c)).fold((Subset::EMPTY, 0.0), |a, v| {
                    (a.0.union(v.0), a.1 + v.1)
                }))
            }
            MatroidKind::Graphic { .. } => None,
        }
    }

    /// Most violated rank inequality `x(S) <= r(S)`, found by enumeration.
    /// Returns `(S, x(S) - r(S))` for the maximizer.
    /// Uniform and partition matroids beyond `RANK_TABLE_LIMIT` are separated
    /// in closed form by sorting within each block.
    pub fn most_violated(&self, x: &[f64]) -> Result<(Subset, f64)> {
        let Some(table) = self.rank_table() else {
            return self.separate_by_blocks(x).ok_or(Error::Capacity {
                what: "graphic matroid polytope separation",
                n: self.n,
                limit: RANK_TABLE_LIMIT,
            });
        };
        let n = self.n;
        // x(S) over all masks by lowest-bit recursion.
        let mut xs = vec![0.0f64; 1 << n];
        let mut best = (Subset::EMPTY, 0.0);
        for m in 1..(1usize << n) {
            let low = m.trailing_zeros() as usize;
            xs[m] = xs[m & (m - 1)] + x[low];
            let viol = xs[m] - table[m] as f64;
            if viol > best.1 {
                best = (Subset(m as u64), viol);
            }
        }
        Ok(best)
    }

    /// Membership in the matroid polytope within `tol`.
    pub fn polytope_contains(&self, x: &[f64], tol: f64) -> Result<bool> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!("point of length {} for matroid on {}", x.len(), self.n)));
        }
        if x.iter().any(|&v| v < -tol || v > 1.0 + tol) {
            return Ok(false);
        }
        Ok(self.most_violated(x)?.1 <= tol)
    }

    pub fn is_loop(&self, i: usize) -> bool {
        self.rank(Subset::singleton(i)) == 0
    }
}

/// Among prefixes of `elems` sorted by decreasing `x`, the one maximizing
/// `x(S) - min(|S|, cap)`; empty when nothing is violated.
fn best_prefix(elems: &[usize], x: &[f64], cap: usize) -> (Subset, f64) {
    let mut order = elems.to_vec();
    order.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(a.cmp(&b)));
    let (mut sum, mut best, mut len) = (0.0, 0.0, 0);
    for (s, &e) in order.iter().enumerate() {
        sum += x[e];
        let v = sum - (s + 1).min(cap) as f64;
        if v > best {
            best = v;
            len = s + 1;
        }
    }
    (Subset::from_elements(order[..len].iter().copied()), best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_best(m: &Matroid, w: &[f64], a: Subset) -> f64 {
        (0..1u64 << m.len())
            .map(Subset)
            .filter(|s| s.is_subset_of(a) && m.is_independent(*s))
            .map(|s| s.iter().map(|i| w[i]).sum::<f64>())
            .fold(0.0, f64::max)
    }

    #[test]
    fn block_separation_matches_enumeration() {
        let ms = [
            Matroid::uniform(7, 3).unwrap(),
            Matroid::partition(8, vec![vec![0, 2, 4], vec![1, 3, 5, 6]], vec![1, 2]).unwrap(),
        ];
        let mut state = 17u64;
        for m in &ms {
            for _ in 0..200 {
                let x: Vec<f64> = (0..m.len())
                    .map(|_| {
                        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        (state >> 11) as f64 / (1u64 << 53) as f64
                    })
                    .collect();
                let (set, v) = m.separate_by_blocks(&x).unwrap();
                let (_, want) = m.most_violated(&x).unwrap();
                assert!((v - want).abs() < 1e-9, "{v} vs {want}");
                let direct: f64 = set.iter().map(|i| x[i]).sum::<f64>() - m.rank(set) as f64;
                assert!((direct - v).abs() < 1e-9 || set.is_empty());
            }
        }
    }

    #[test]
    fn large_uniform_is_separated() {
        let m = Matroid::uniform(30, 2).unwrap();
        let mut x = vec![0.0; 30];
        x[3] = 0.9;
        x[7] = 0.8;
        x[11] = 0.7;
        let (s, v) = m.most_violated(&x).unwrap();
        assert_eq!(s, Subset::from_elements([3, 7, 11]));
        assert!((v - 0.4).abs() < 1e-12);
    }

    #[test]
    fn uniform_greedy_matches_brute_force() {
        let m = Matroid::uniform(3, 2).unwrap();
        let w = [3.0, 1.0, 2.0];
        let s = m.greedy_max_weight(&w, Subset::full(3));
        assert_eq!(s, Subset::from_elements([0, 2]));
        assert_eq!(brute_best(&m, &w, Subset::full(3)), 5.0);
    }

    #[test]
    fn zero_weights_give_empty_set() {
        let m = Matroid::complete_graph(4).unwrap();
        assert_eq!(m.greedy_max_weight(&[0.0; 6], Subset::full(6)), Subset::EMPTY);
    }

    #[test]
    fn triangle_tie_break_by_index() {
        let m = Matroid::graphic(3, vec![(0, 1), (1, 2), (0, 2)]).unwrap();
        let s = m.greedy_max_weight(&[1.0; 3], Subset::full(3));
        assert_eq!(s, Subset::from_elements([0, 1]));
        // two edges span the third
        assert_eq!(m.span(Subset::from_elements([0, 1])), Subset::full(3));
    }

    #[test]
    fn span_edge_cases() {
        let m = Matroid::complete_graph(4).unwrap();
        assert_eq!(m.span(Subset::EMPTY), Subset::EMPTY);
        let loops = Matroid::graphic(2, vec![(0, 0), (0, 1)]).unwrap();
        assert_eq!(loops.span(Subset::EMPTY), Subset::singleton(0));
        let u = Matroid::uniform(5, 2).unwrap();
        assert_eq!(u.span(Subset::from_elements([1, 4])), Subset::full(5));
    }

    #[test]
    fn polytope_maximize_basics() {
        let m = Matroid::uniform(3, 1).unwrap();
        assert_eq!(m.polytope_maximize(&[-1.0, -2.0, -0.5]), vec![0.0; 3]);
        assert_eq!(m.polytope_maximize(&[2.0, 5.0, 1.0]), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn partition_with_free_elements() {
        let m = Matroid::partition(4, vec![vec![0, 1]], vec![1]).unwrap();
        assert!(m.is_independent(Subset::from_elements([0, 2, 3])));
        assert!(!m.is_independent(Subset::from_elements([0, 1])));
        assert_eq!(m.rank(Subset::full(4)), 3);
        assert!(Matroid::partition(3, vec![vec![0], vec![0]], vec![1, 1]).is_err());
    }

    #[test]
    fn separation_finds_violated_rank_constraint() {
        let m = Matroid::uniform(3, 1).unwrap();
        let (s, v) = m.most_violated(&[0.6, 0.6, 0.0]).unwrap();
        assert_eq!(s, Subset::from_elements([0, 1]));
        assert!((v - 0.2).abs() < 1e-12);
        assert!(m.polytope_contains(&[0.5, 0.5, 0.0], 1e-9).unwrap());
    }
}
