use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

/// Sparse real vector: strictly increasing dimensions, no stored zeros.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pairs: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds from arbitrary (dim, value) pairs; duplicates are summed and
    /// zeros dropped.
    pub fn from_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Self {
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for (d, v) in pairs {
            *acc.entry(d).or_default() += v;
        }
        SparseVector {
            pairs: acc.into_iter().filter(|&(_, v)| v != 0.0).collect(),
        }
    }

    pub fn from_dense(values: &[f64]) -> Self {
        SparseVector {
            pairs: values
                .iter()
                .enumerate()
                .filter(|&(_, &v)| v != 0.0)
                .map(|(d, &v)| (d, v))
                .collect(),
        }
    }

    pub(crate) fn from_counts(counts: HashMap<usize, usize>) -> Self {
        let mut pairs: Vec<(usize, f64)> = counts
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .map(|(d, c)| (d, c as f64))
            .collect();
        pairs.sort_unstable_by_key(|p| p.0);
        SparseVector { pairs }
    }

    pub fn pairs(&self) -> &[(usize, f64)] {
        &self.pairs
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.pairs.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, dim: usize) -> f64 {
        self.pairs
            .binary_search_by_key(&dim, |p| p.0)
            .map_or(0.0, |i| self.pairs[i].1)
    }

    pub fn max_dim(&self) -> Option<usize> {
        self.pairs.last().map(|p| p.0)
    }

    /// Shifts every dimension by `offset`, appending onto `out`.
    pub(crate) fn append_shifted(&self, offset: usize, out: &mut Vec<(usize, f64)>) {
        out.extend(self.pairs.iter().map(|&(d, v)| (d + offset, v)));
    }

    /// Trusts the caller to supply sorted, unique, nonzero pairs.
    pub(crate) fn from_sorted_unchecked(pairs: Vec<(usize, f64)>) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        debug_assert!(pairs.iter().all(|p| p.1 != 0.0));
        SparseVector { pairs }
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.pairs.iter().map(|&(d, v)| v * dense[d]).sum()
    }
}
