//! Ground sets and bitset subsets.
//!
//! Elements are the indices `0..n`, `n <= 64`, so a subset is a single
//! machine word.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest ground set representable by [`Subset`].
pub const MAX_GROUND: usize = 64;

/// A subset of `0..64` stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Subset(pub u64);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn full(n: usize) -> Subset {
        if n >= 64 {
            Subset(u64::MAX)
        } else {
            Subset((1u64 << n) - 1)
        }
    }

    pub fn singleton(i: usize) -> Subset {
        Subset(1u64 << i)
    }

    pub fn from_elements<I: IntoIterator<Item = usize>>(elems: I) -> Subset {
        let mut s = Subset::EMPTY;
        for i in elems {
            s.insert(i);
        }
        s
    }

    /// Elements `i` with `x[i] > 0`.
    pub fn support(x: &[f64]) -> Subset {
        Subset::from_elements(x.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i))
    }

    #[inline]
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.0 |= 1u64 << i;
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.0 &= !(1u64 << i);
    }

    #[inline]
    pub fn with(self, i: usize) -> Subset {
        Subset(self.0 | 1u64 << i)
    }

    #[inline]
    pub fn without(self, i: usize) -> Subset {
        Subset(self.0 & !(1u64 << i))
    }

    #[inline]
    pub fn union(self, o: Subset) -> Subset {
        Subset(self.0 | o.0)
    }

    #[inline]
    pub fn intersection(self, o: Subset) -> Subset {
        Subset(self.0 & o.0)
    }

    #[inline]
    pub fn difference(self, o: Subset) -> Subset {
        Subset(self.0 & !o.0)
    }

    #[inline]
    pub fn is_subset_of(self, o: Subset) -> bool {
        self.0 & !o.0 == 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Elements in increasing index order.
    pub fn iter(self) -> SubsetIter {
        SubsetIter(self.0)
    }

    pub fn to_vec(self) -> Vec<usize> {
        self.iter().collect()
    }

    /// 0/1 indicator vector of length `n`.
    pub fn indicator(self, n: usize) -> Vec<f64> {
        (0..n).map(|i| if self.contains(i) { 1.0 } else { 0.0 }).collect()
    }

    /// Lexicographic comparison of the sorted element lists.
    pub fn lex_cmp(self, other: Subset) -> std::cmp::Ordering {
        let mut a = self.iter();
        let mut b = other.iter();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return std::cmp::Ordering::Equal,
                (None, Some(_)) => return std::cmp::Ordering::Less,
                (Some(_), None) => return std::cmp::Ordering::Greater,
                (Some(x), Some(y)) if x != y => return x.cmp(&y),
                _ => {}
            }
        }
    }
}

impl fmt::Debug for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

pub struct SubsetIter(u64);

impl Iterator for SubsetIter {
    type Item = usize;

    #[inline]
    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            None
        } else {
            let i = self.0.trailing_zeros() as usize;
            self.0 &= self.0 - 1;
            Some(i)
        }
    }
}

/// The ground set `0..n` together with the fixed scan order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundSet {
    n: usize,
    order: Vec<usize>,
}

impl GroundSet {
    pub fn new(n: usize) -> Result<Self> {
        Self::with_order(n, (0..n).collect())
    }

    pub fn with_order(n: usize, order: Vec<usize>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("ground set must be non-empty".into()));
        }
        if n > MAX_GROUND {
            return Err(Error::Capacity { what: "bitset subsets", n, limit: MAX_GROUND });
        }
        let mut seen = vec![false; n];
        if order.len() != n || order.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidArgument("order must be a permutation of 0..n".into()));
        }
        Ok(Self { n, order })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn full(&self) -> Subset {
        Subset::full(self.n)
    }
}

pub(crate) fn check_ground(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidArgument("ground set must be non-empty".into()));
    }
    if n > MAX_GROUND {
        return Err(Error::Capacity { what: "bitset subsets", n, limit: MAX_GROUND });
    }
    Ok(())
}
