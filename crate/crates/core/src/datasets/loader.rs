use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{DatasetManifest, FoldPlan, Split};
use crate::audio::{compute_stats, normalize, read_cache, NormStats};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One fixed-size model input with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    /// Utterance the item was cut from; segments of one utterance share it.
    pub utterance: String,
    pub label: usize,
    pub speaker: String,
    /// `[T, F]`
    pub frames: Tensor,
}

/// All inputs of a dataset, held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub name: String,
    pub classes: Vec<String>,
    pub items: Vec<CorpusItem>,
}

impl Corpus {
    /// Loads the cached spectrogram of every manifest entry. Entries point at
    /// `.tensor` files with `.meta` sidecars, as written by preprocessing
    /// and the synthetic generator.
    pub fn from_manifest(name: &str, manifest: &DatasetManifest) -> Result<Self> {
        let items = manifest
            .entries
            .par_iter()
            .map(|e| {
                let missing = |path: &Path| Error::Data(format!("utterance {}: no cached spectrogram at {}", e.id, path.display()));
                if !e.path.exists() {
                    return Err(missing(&e.path));
                }
                let (frames, meta) = read_cache(&e.path).map_err(|err| match err {
                    Error::Io { path, .. } => missing(&path),
                    other => other,
                })?;
                if frames.rank() != 2 {
                    return Err(Error::Data(format!("utterance {}: cached tensor must be [T, F]", e.id)));
                }
                Ok(CorpusItem {
                    id: e.id.clone(),
                    utterance: meta.utterance,
                    label: manifest.class_id(&e.label).expect("manifest labels are indexed"),
                    speaker: e.speaker.clone(),
                    frames,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let corpus = Corpus {
            name: name.to_string(),
            classes: manifest.classes().to_vec(),
            items,
        };
        corpus.input_shape()?;
        Ok(corpus)
    }

    /// Common `[T, F]` of every item.
    pub fn input_shape(&self) -> Result<[usize; 2]> {
        let first = self.items.first().ok_or_else(|| Error::Data("corpus is empty".into()))?;
        let shape = [first.frames.shape()[0], first.frames.shape()[1]];
        if let Some(bad) = self.items.iter().find(|i| i.frames.shape() != shape) {
            return Err(Error::Data(format!(
                "item {} has shape {:?}, expected {shape:?}; pad or segment first",
                bad.id,
                bad.frames.shape()
            )));
        }
        Ok(shape)
    }

    pub fn num_utterances(&self) -> usize {
        let mut u: Vec<&str> = self.items.iter().map(|i| i.utterance.as_str()).collect();
        u.sort_unstable();
        u.dedup();
        u.len()
    }
}

/// A batch shaped for the network: `[batch, 1, T, F]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub utterances: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct SplitData {
    pub items: Vec<CorpusItem>,
}

impl SplitData {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn batch_of(&self, idx: &[usize]) -> Batch {
        let [t, f] = [self.items[0].frames.shape()[0], self.items[0].frames.shape()[1]];
        let mut data = Vec::with_capacity(idx.len() * t * f);
        let mut labels = Vec::with_capacity(idx.len());
        let mut utterances = Vec::with_capacity(idx.len());
        for &i in idx {
            data.extend_from_slice(self.items[i].frames.data());
            labels.push(self.items[i].label);
            utterances.push(self.items[i].utterance.clone());
        }
        Batch {
            inputs: Tensor::new(&[idx.len(), 1, t, f], data).expect("uniform item shapes"),
            labels,
            utterances,
        }
    }

    /// Batches in stored order.
    pub fn batches(&self, batch_size: usize) -> Vec<Batch> {
        let order: Vec<usize> = (0..self.items.len()).collect();
        order.chunks(batch_size.max(1)).map(|c| self.batch_of(c)).collect()
    }

    /// Batches over a fresh permutation drawn from `rng`.
    pub fn shuffled_batches<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Vec<Batch> {
        let mut order: Vec<usize> = (0..self.items.len()).collect();
        order.shuffle(rng);
        order.chunks(batch_size.max(1)).map(|c| self.batch_of(c)).collect()
    }
}

/// Normalised train / validation / test data of one fold.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub train: SplitData,
    pub validation: SplitData,
    pub test: SplitData,
    pub stats: NormStats,
}

/// Splits `corpus` by the speakers of fold `index` and normalises all three
/// splits with statistics of the training split.
pub fn load_fold(corpus: &Corpus, plan: &FoldPlan, index: usize) -> Result<FoldData> {
    let fold = plan
        .folds
        .get(index)
        .ok_or_else(|| Error::Parameter(format!("fold {index} out of range ({} folds)", plan.folds.len())))?;
    let (mut train, mut validation, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for item in &corpus.items {
        match fold.split_of(&item.speaker) {
            Some(Split::Train) => train.push(item),
            Some(Split::Validation) => validation.push(item),
            Some(Split::Test) => test.push(item),
            None => return Err(Error::Data(format!("speaker {} of {} is not in fold {index}", item.speaker, item.id))),
        }
    }
    if train.is_empty() || validation.is_empty() || test.is_empty() {
        return Err(Error::Data(format!("fold {index} has an empty split")));
    }
    let stats = compute_stats(train.iter().map(|i| &i.frames))?;
    let norm = |items: Vec<&CorpusItem>| SplitData {
        items: items
            .into_iter()
            .map(|i| CorpusItem {
                frames: normalize(&i.frames, stats),
                ..i.clone()
            })
            .collect(),
    };
    Ok(FoldData {
        train: norm(train),
        validation: norm(validation),
        test: norm(test),
        stats,
    })
}
