use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::convnet::{cross_entropy, softmax, softmax_cross_entropy_grad, AdamConfig, AdamState};
use crate::datasets::{FoldData, SplitData};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement tolerated before stopping.
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l2_grid: Vec<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 500,
            patience: 10,
            batch_size: 32,
            learning_rate: 1e-3,
            l2_grid: vec![1e-5, 1e-4, 1e-3, 1e-2],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Parameter("max_epochs and batch_size must be positive".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Parameter(format!(
                "patience {} must be below max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(Error::Parameter(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if self.l2_grid.is_empty() || self.l2_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(Error::Parameter("L2 grid must be non-empty and non-negative".into()));
        }
        Ok(())
    }
}

/// Mixes a master seed with a path of job coordinates (splitmix64).
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    };
    path.iter().fold(mix(master), |acc, &p| mix(acc ^ mix(p)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Patience counter over validation losses; epochs are 1-based.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            self.stale = 0;
            return StopDecision::Improved;
        }
        self.stale += 1;
        if self.stale >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub best_val_accuracy: f64,
    /// Mean wall-clock seconds of one training pass over the training split.
    pub seconds_per_epoch: f64,
}

impl TrainOutcome {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

/// Loss and utterance-level accuracy on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    /// Mean cross-entropy over segments.
    pub loss: f64,
    /// Fraction of utterances whose segment-averaged probabilities peak at
    /// the true class.
    pub accuracy: f64,
    pub utterances: usize,
}

/// Runs `net` over `split` in stored order. Segment probabilities of one
/// utterance are averaged before the argmax.
pub fn evaluate<T: Scalar>(net: &mut Network<T>, split: &SplitData, batch_size: usize) -> Result<Evaluation> {
    if split.is_empty() {
        return Err(Error::Data("cannot evaluate an empty split".into()));
    }
    let classes = net.classes();
    let mut loss_sum = 0.0;
    let mut per_utt: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for batch in split.batches(batch_size) {
        let (logits, _) = net.forward(&batch.inputs.cast())?;
        let probs = softmax(&logits)?;
        loss_sum += cross_entropy(&probs, &batch.labels)?.as_f64() * batch.labels.len() as f64;
        for (row, (utt, &label)) in probs.data().chunks(classes).zip(batch.utterances.iter().zip(&batch.labels)) {
            let entry = per_utt.entry(utt.clone()).or_insert_with(|| (vec![0.0; classes], label));
            entry.0.iter_mut().zip(row).for_each(|(a, p)| *a += p.as_f64());
        }
    }
    let correct = per_utt
        .values()
        .filter(|(sum, label)| {
            let arg = sum
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0;
            arg == *label
        })
        .count();
    Ok(Evaluation {
        loss: loss_sum / split.len() as f64,
        accuracy: correct as f64 / per_utt.len() as f64,
        utterances: per_utt.len(),
    })
}

/// Trains with Adam (coefficient `l2`) and per-step MTS weight averaging
/// until validation loss stalls for `patience` epochs, then restores the
/// best-validation parameters.
pub fn train<T: Scalar>(net: &mut Network<T>, data: &FoldData, config: &TrainConfig, l2: f64) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::Data("training and validation splits must be non-empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut adam = AdamState::new(AdamConfig {
        learning_rate: config.learning_rate,
        l2,
        ..AdamConfig::default()
    });
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = net.clone();
    let mut best_val_accuracy = 0.0;
    let mut history = Vec::new();
    let mut train_secs = 0.0;
    for epoch in 1..=config.max_epochs {
        let started = Instant::now();
        let mut loss_sum = 0.0;
        for (b, batch) in data.train.shuffled_batches(config.batch_size, &mut rng).into_iter().enumerate() {
            let (logits, cache) = net.forward(&batch.inputs.cast())?;
            let probs = softmax(&logits)?;
            let loss = cross_entropy(&probs, &batch.labels)?.as_f64();
            if !loss.is_finite() {
                let norms: Vec<String> = net.layer_norms().iter().map(|(l, n)| format!("{l}={n:.4e}")).collect();
                return Err(Error::Diverged(format!(
                    "loss {loss} at epoch {epoch}, batch {b}; parameter norms: {}",
                    norms.join(", ")
                )));
            }
            loss_sum += loss * batch.labels.len() as f64;
            let grad = softmax_cross_entropy_grad(&probs, &batch.labels)?;
            let grads = net.backward(&grad, &cache)?;
            net.apply_gradients(&mut adam, &grads)?;
        }
        let epoch_secs = started.elapsed().as_secs_f64();
        train_secs += epoch_secs;
        let val = evaluate(net, &data.validation, config.batch_size)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / data.train.len() as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
            seconds: epoch_secs,
        });
        log::debug!("epoch {epoch}: train {:.4} val {:.4} acc {:.3}", loss_sum / data.train.len() as f64, val.loss, val.accuracy);
        match stopper.observe(epoch, val.loss) {
            StopDecision::Improved => {
                best = net.clone();
                best_val_accuracy = val.accuracy;
            }
            StopDecision::Continue => {}
            StopDecision::Stop => break,
        }
    }
    *net = best;
    net.reset_usage();
    Ok(TrainOutcome {
        seconds_per_epoch: train_secs / history.len() as f64,
        history,
        best_epoch: stopper.best_epoch(),
        best_val_loss: stopper.best_loss(),
        best_val_accuracy,
    })
}
