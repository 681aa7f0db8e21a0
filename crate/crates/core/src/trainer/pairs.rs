use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A training pair of corpus indices. `similar` is the contrastive label
/// (`y = 1`): both members come from the same score group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub similar: bool,
}

impl Pair {
    pub fn swapped(self) -> Self {
        Self {
            a: self.b,
            b: self.a,
            similar: self.similar,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairSet {
    pub pairs: Vec<Pair>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.pairs.iter().filter(|p| p.similar).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }
}

/// All unordered within-group pairs (`K^2 - K` positives over both groups)
/// and all cross-group pairs (`K^2` negatives), shuffled by `seed`.
pub fn build_pairs(low: &[usize], high: &[usize], seed: u64) -> Result<PairSet> {
    if low.is_empty() || low.len() != high.len() {
        return Err(Error::Config(format!(
            "groups must be non-empty and equal in size (got {} and {})",
            low.len(),
            high.len()
        )));
    }
    let low_set: HashSet<usize> = low.iter().copied().collect();
    let high_set: HashSet<usize> = high.iter().copied().collect();
    if low_set.len() != low.len() || high_set.len() != high.len() {
        return Err(Error::OverlappingGroups("duplicate member within a group".into()));
    }
    if let Some(x) = low_set.intersection(&high_set).next() {
        return Err(Error::OverlappingGroups(format!("index {x} is in both groups")));
    }

    let k = low.len();
    let mut pairs = Vec::with_capacity(2 * k * k - k);
    for group in [low, high] {
        for i in 0..k {
            for j in i + 1..k {
                pairs.push(Pair {
                    a: group[i],
                    b: group[j],
                    similar: true,
                });
            }
        }
    }
    for &a in low {
        for &b in high {
            pairs.push(Pair { a, b, similar: false });
        }
    }
    pairs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(PairSet { pairs })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(k: usize) -> (Vec<usize>, Vec<usize>) {
        ((0..k).collect(), (100..100 + k).collect())
    }

    #[test]
    fn counts_follow_closed_form() {
        for (k, total) in [(1, 1), (10, 190), (15, 435), (20, 780), (25, 1225), (30, 1770)] {
            let (lo, hi) = groups(k);
            let p = build_pairs(&lo, &hi, 0).unwrap();
            assert_eq!(p.len(), total);
            assert_eq!(p.positives(), k * k - k);
            assert_eq!(p.negatives(), k * k);
        }
    }

    #[test]
    fn no_self_or_duplicate_pairs() {
        let (lo, hi) = groups(6);
        let p = build_pairs(&lo, &hi, 3).unwrap();
        let mut seen = HashSet::new();
        for pair in &p.pairs {
            assert_ne!(pair.a, pair.b);
            let key = (pair.a.min(pair.b), pair.a.max(pair.b));
            assert!(seen.insert(key));
            assert_eq!(pair.similar, (pair.a < 100) == (pair.b < 100));
        }
    }

    #[test]
    fn shuffle_is_seeded() {
        let (lo, hi) = groups(5);
        assert_eq!(build_pairs(&lo, &hi, 1).unwrap(), build_pairs(&lo, &hi, 1).unwrap());
        assert_ne!(build_pairs(&lo, &hi, 1).unwrap(), build_pairs(&lo, &hi, 2).unwrap());
    }

    #[test]
    fn overlapping_groups_rejected() {
        assert!(matches!(
            build_pairs(&[1, 2], &[2, 3], 0),
            Err(Error::OverlappingGroups(_))
        ));
        assert!(build_pairs(&[1, 2], &[3], 0).is_err());
    }
}
