//! Corpus description, speaker-independent cross-validation and the
//! synthetic time-stretched corpus.

mod folds;
mod loader;
mod manifest;
mod synth;

pub use folds::{build_folds, build_folds_from_counts, Fold, FoldPlan, Split, NUM_FOLDS};
pub use loader::{load_fold, Batch, Corpus, CorpusItem, FoldData, SplitData};
pub use manifest::{DatasetManifest, ManifestEntry};
pub use synth::{class_name, class_templates, synth_generate, write_synth, SynthConfig, SynthSample};
