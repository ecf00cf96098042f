use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::SynthConfig;
use crate::error::{Error, Result};
use crate::interp::ScaleSet;
use crate::trainer::{ArchId, ExperimentConfig, TrainConfig};

macro_rules! layered_config {
    ($($(#[$doc:meta])* $field:ident : $ty:ty = $default:expr,)*) => {
        /// Fully resolved run configuration, serialised next to every
        /// result as `config.toml`.
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct RunConfig {
            $($(#[$doc])* pub $field: $ty,)*
        }

        /// One precedence layer (defaults, file, command line); unset keys
        /// fall through to the layer below.
        #[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
        #[serde(deny_unknown_fields)]
        pub struct ConfigLayer {
            $(#[serde(default, skip_serializing_if = "Option::is_none")] pub $field: Option<$ty>,)*
        }

        impl ConfigLayer {
            /// Keys set in `higher` win.
            pub fn overlay(self, higher: ConfigLayer) -> ConfigLayer {
                ConfigLayer { $($field: higher.$field.or(self.$field),)* }
            }

            pub fn resolve(self) -> RunConfig {
                RunConfig { $($field: self.$field.unwrap_or_else(|| $default),)* }
            }
        }
    };
}

layered_config! {
    /// Dataset name used in results; `synth` generates the synthetic corpus
    /// in memory when no manifest is given.
    dataset: String = "synth".into(),
    manifest: Option<PathBuf> = None,
    out: PathBuf = PathBuf::from("results"),
    seed: u64 = 0,
    /// Parallel jobs; 0 uses every core.
    workers: usize = 0,
    archs: Vec<ArchId> = ArchId::ALL.to_vec(),
    mts: bool = false,
    /// Candidate scale sets, e.g. `"0.5,1,2"`.
    scales: Vec<ScaleSet> = ScaleSet::published_grid(),
    max_epochs: usize = 500,
    patience: usize = 10,
    batch_size: usize = 32,
    learning_rate: f64 = 1e-3,
    l2_grid: Vec<f64> = vec![1e-5, 1e-4, 1e-3, 1e-2],
    folds: Vec<usize> = Vec::new(),
    classes: usize = 4,
    factors: Vec<f64> = vec![0.5, 1.0, 2.0],
    samples_per_class: usize = 200,
    noise: f64 = SynthConfig::default().noise,
    frames: usize = SynthConfig::default().frames,
    bins: usize = SynthConfig::default().bins,
    template_frames: usize = SynthConfig::default().template_frames,
    speakers: usize = SynthConfig::default().speakers,
}

impl ConfigLayer {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }
}

/// Defaults, then the optional config file, then command-line values.
pub fn resolve(file: Option<&Path>, cli: ConfigLayer) -> Result<RunConfig> {
    let file_layer = match file {
        Some(p) => ConfigLayer::from_file(p)?,
        None => ConfigLayer::default(),
    };
    Ok(ConfigLayer::default().overlay(file_layer).overlay(cli).resolve())
}

impl RunConfig {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            l2_grid: self.l2_grid.clone(),
            seed: self.seed,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            classes: self.classes,
            factors: self.factors.clone(),
            samples_per_class: self.samples_per_class,
            noise: self.noise,
            seed: self.seed,
            frames: self.frames,
            bins: self.bins,
            template_frames: self.template_frames,
            speakers: self.speakers,
        }
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        ExperimentConfig {
            dataset: self.dataset.clone(),
            archs: self.archs.clone(),
            scale_sets: self.scales.clone(),
            train: self.train_config(),
            folds: self.folds.clone(),
            workers: self.workers,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(e.to_string()))
    }

    /// Writes `config.toml` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("config.toml");
        let text = format!("code_version = \"{}\"\n{}", crate::CODE_VERSION, self.to_toml()?);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Creates `dir` or accepts it when empty.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        let mut entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        if entries.next().is_some() {
            return Err(Error::Usage(format!("output directory {} is not empty", dir.display())));
        }
        return Ok(());
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}
