use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::error::{Error, Result};

/// Size of the low/high training groups and how far they sit from the ends
/// of the score ordering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionSpec {
    pub k: usize,
    #[serde(default)]
    pub offset: usize,
    /// Conversations trimmed from each end to form the test block. `None`
    /// picks 30 for a 156-conversation corpus (the middle 96) and `k + offset`
    /// otherwise, never less than `k + offset`.
    #[serde(default)]
    pub test_exclude: Option<usize>,
}

impl SelectionSpec {
    pub fn new(k: usize, offset: usize) -> Self {
        Self {
            k,
            offset,
            test_exclude: None,
        }
    }

    pub fn test_exclusion(&self, n: usize) -> usize {
        let reach = self.k + self.offset;
        match self.test_exclude {
            Some(e) => e,
            None if n == 156 => reach.max(30),
            None => reach,
        }
    }
}

impl Default for SelectionSpec {
    fn default() -> Self {
        Self::new(20, 0)
    }
}

/// Indices into the score-sorted corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub low: Vec<usize>,
    pub high: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn select_extremes(corpus: &Corpus, spec: &SelectionSpec) -> Result<Selection> {
    let n = corpus.len();
    if spec.k == 0 {
        return Err(Error::Config("group size K must be at least 1".into()));
    }
    let reach = spec.k + spec.offset;
    if 2 * reach > n {
        return Err(Error::OverlappingGroups(format!(
            "2(K + offset) = {} exceeds corpus size {n}",
            2 * reach
        )));
    }
    let low: Vec<usize> = (spec.offset..reach).collect();
    let high: Vec<usize> = (n - reach..n - spec.offset).collect();
    let excl = spec.test_exclusion(n);
    if excl < reach {
        return Err(Error::OverlappingGroups(format!(
            "test exclusion {excl} is smaller than K + offset = {reach}"
        )));
    }
    let test: Vec<usize> = if 2 * excl < n { (excl..n - excl).collect() } else { Vec::new() };
    Ok(Selection { low, high, test })
}
