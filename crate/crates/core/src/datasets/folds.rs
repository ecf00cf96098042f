use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::DatasetManifest;
use crate::error::{Error, Result};

pub const NUM_FOLDS: usize = 4;
const MAX_BLOCKS: usize = 10;
const TARGET: [f64; 3] = [0.7, 0.2, 0.1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Speaker sets of one cross-validation fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

impl Fold {
    pub fn split_of(&self, speaker: &str) -> Option<Split> {
        let has = |v: &[String]| v.iter().any(|s| s == speaker);
        if has(&self.train) {
            Some(Split::Train)
        } else if has(&self.validation) {
            Some(Split::Validation)
        } else if has(&self.test) {
            Some(Split::Test)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

pub fn build_folds(manifest: &DatasetManifest, seed: u64) -> Result<FoldPlan> {
    build_folds_from_counts(manifest.entries.iter().map(|e| e.speaker.as_str()), seed)
}

/// Packs speakers into up to ten blocks of roughly equal utterance count
/// (largest speaker first into the lightest block), then rotates: fold `k`
/// tests on the block(s) starting at `k·n_test`, validates on the blocks
/// that follow cyclically, and trains on the rest. Block counts per split
/// follow the 70/20/10 proportions.
pub fn build_folds_from_counts<'a>(speakers: impl IntoIterator<Item = &'a str>, seed: u64) -> Result<FoldPlan> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in speakers {
        *counts.entry(s).or_default() += 1;
    }
    if counts.len() < NUM_FOLDS {
        return Err(Error::Data(format!(
            "speaker-independent {NUM_FOLDS}-fold splitting needs at least {NUM_FOLDS} speakers, found {}",
            counts.len()
        )));
    }
    let mut order: Vec<(&str, usize)> = counts.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by_key(|e| std::cmp::Reverse(e.1));

    let n_blocks = order.len().min(MAX_BLOCKS);
    let mut blocks: Vec<(usize, Vec<String>)> = vec![(0, Vec::new()); n_blocks];
    for (speaker, n) in order {
        let lightest = (0..n_blocks).min_by_key(|&b| (blocks[b].0, b)).unwrap();
        blocks[lightest].0 += n;
        blocks[lightest].1.push(speaker.to_string());
    }
    let n_test = ((TARGET[2] * n_blocks as f64).round() as usize).max(1);
    let n_val = ((TARGET[1] * n_blocks as f64).round() as usize).max(1);
    let total: usize = blocks.iter().map(|b| b.0).sum();

    let folds = (0..NUM_FOLDS)
        .map(|k| {
            let mut fold = Fold {
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
            };
            let mut sizes = [0usize; 3];
            for step in 0..n_blocks {
                let (n, members) = &blocks[(k * n_test + step) % n_blocks];
                let (dest, slot) = if step < n_test {
                    (&mut fold.test, 2)
                } else if step < n_test + n_val {
                    (&mut fold.validation, 1)
                } else {
                    (&mut fold.train, 0)
                };
                dest.extend(members.iter().cloned());
                sizes[slot] += n;
            }
            for (slot, &target) in TARGET.iter().enumerate() {
                let frac = sizes[slot] as f64 / total as f64;
                if (frac - target).abs() > 0.15 {
                    log::warn!("fold {k}: split {slot} holds {:.0}% of utterances (target {:.0}%)", frac * 100.0, target * 100.0);
                }
            }
            fold
        })
        .collect();
    Ok(FoldPlan { folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn speakers(counts: &[usize]) -> Vec<String> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| std::iter::repeat_n(format!("s{i}"), n))
            .collect()
    }

    fn plan(counts: &[usize], seed: u64) -> FoldPlan {
        let s = speakers(counts);
        build_folds_from_counts(s.iter().map(String::as_str), seed).unwrap()
    }

    #[test]
    fn ten_equal_speakers_split_seven_two_one() {
        let p = plan(&[20; 10], 1);
        assert_eq!(p.folds.len(), 4);
        let mut tests = BTreeSet::new();
        for f in &p.folds {
            assert_eq!((f.train.len(), f.validation.len(), f.test.len()), (7, 2, 1));
            assert!(tests.insert(f.test[0].clone()), "test speaker reused");
        }
    }

    #[test]
    fn dominant_speaker_keeps_disjointness() {
        let p = plan(&[900, 20, 20, 20, 20, 20], 3);
        for f in &p.folds {
            let all: Vec<&String> = f.train.iter().chain(&f.validation).chain(&f.test).collect();
            let uniq: BTreeSet<_> = all.iter().collect();
            assert_eq!(all.len(), uniq.len());
            assert_eq!(all.len(), 6);
        }
    }

    #[test]
    fn deterministic_and_needs_four_speakers() {
        assert_eq!(plan(&[5, 7, 9, 11, 13], 9), plan(&[5, 7, 9, 11, 13], 9));
        let s = speakers(&[5, 5, 5]);
        assert!(matches!(build_folds_from_counts(s.iter().map(String::as_str), 0), Err(Error::Data(_))));
    }

    proptest! {
        #[test]
        fn every_speaker_in_exactly_one_split(counts in proptest::collection::vec(1usize..50, 4..30), seed in 0u64..100) {
            let p = plan(&counts, seed);
            let mut test_speakers = BTreeSet::new();
            for f in &p.folds {
                for i in 0..counts.len() {
                    let s = format!("s{i}");
                    let hits = [&f.train, &f.validation, &f.test].iter().filter(|v| v.contains(&s)).count();
                    prop_assert_eq!(hits, 1);
                }
                prop_assert!(!f.train.is_empty() && !f.validation.is_empty() && !f.test.is_empty());
                for s in &f.test {
                    prop_assert!(test_speakers.insert(s.clone()));
                }
            }
        }
    }
}
