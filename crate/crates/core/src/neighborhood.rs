//! Move sets of the m-order integer neighborhood: every nonzero step vector
//! with L1 norm at most `m`.

use crate::model::VarBlock;
use std::collections::BTreeMap;

/// A nonzero move, keyed by offset inside a block.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Delta {
    entries: BTreeMap<usize, i64>,
}

impl Delta {
    /// Builds a delta from `(offset, step)` pairs; zero steps are dropped.
    /// Returns `None` for the zero move.
    pub fn new(pairs: impl IntoIterator<Item = (usize, i64)>) -> Option<Self> {
        let mut entries = BTreeMap::new();
        for (k, s) in pairs {
            if s != 0 {
                *entries.entry(k).or_insert(0) += s;
            }
        }
        entries.retain(|_, s| *s != 0);
        (!entries.is_empty()).then_some(Delta { entries })
    }

    pub fn entries(&self) -> &BTreeMap<usize, i64> {
        &self.entries
    }

    pub fn l1(&self) -> i64 {
        self.entries.values().map(|s| s.abs()).sum()
    }

    /// The same move keyed by joint variable index.
    pub fn joint(&self, block: &VarBlock) -> BTreeMap<usize, i64> {
        self.entries
            .iter()
            .map(|(&k, &s)| (block.start + k, s))
            .collect()
    }

    fn sort_key(&self) -> (Vec<usize>, Vec<i64>) {
        (
            self.entries.keys().copied().collect(),
            self.entries.values().copied().collect(),
        )
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum NeighborhoodError {
    #[error("neighborhood order must be at least 1, got {0}")]
    BadOrder(i64),
    #[error("dimension must be at least 1")]
    EmptyDimension,
}

/// All `δ ∈ ℤⁿ` with `0 < ‖δ‖₁ ≤ m`, ordered by support then steps.
pub fn enumerate_deltas(n: usize, m: i64) -> Result<Vec<Delta>, NeighborhoodError> {
    if m < 1 {
        return Err(NeighborhoodError::BadOrder(m));
    }
    if n == 0 {
        return Err(NeighborhoodError::EmptyDimension);
    }
    let mut out = Vec::new();
    let mut current = Vec::new();
    extend(n, 0, m, &mut current, &mut out);
    out.sort_by_cached_key(Delta::sort_key);
    Ok(out)
}

fn extend(n: usize, from: usize, budget: i64, current: &mut Vec<(usize, i64)>, out: &mut Vec<Delta>) {
    for k in from..n {
        for mag in 1..=budget {
            for step in [-mag, mag] {
                current.push((k, step));
                out.push(Delta::new(current.iter().copied()).expect("nonzero"));
                extend(n, k + 1, budget - mag, current, out);
                current.pop();
            }
        }
    }
}

/// Drops moves that leave the block's box from every starting point, i.e.
/// any coordinate with `|step| > upper - lower`.
pub fn prune_deltas(deltas: Vec<Delta>, block: &VarBlock) -> Vec<Delta> {
    deltas
        .into_iter()
        .filter(|d| {
            d.entries
                .iter()
                .all(|(&k, &s)| s.abs() <= block.upper[k] - block.lower[k])
        })
        .collect()
}

/// Enumerated and pruned moves for one block.
pub fn block_deltas(block: &VarBlock, m: i64) -> Result<Vec<Delta>, NeighborhoodError> {
    if block.is_empty() {
        return Ok(Vec::new());
    }
    Ok(prune_deltas(enumerate_deltas(block.len(), m)?, block))
}
