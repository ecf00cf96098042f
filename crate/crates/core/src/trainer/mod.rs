//! Architectures, training loop and cross-validated experiments.

mod arch;
mod experiment;
mod network;
mod train;

pub use arch::{build_model, ArchId, ArchitectureSpec, LayerSpec};
pub use experiment::{
    fold_pairs, grid_search, read_records, render_csv, render_table, run_experiment, run_fold, select_best, summarize,
    write_records, ExperimentConfig, ExperimentReport, ExperimentResult, FoldOutcome, GridSearch, ModelType,
    ResultRecord, TableEntry, RESULTS_SCHEMA, RESULTS_VERSION,
};
pub use network::{ForwardCache, Layer, Network};
pub use train::{
    derive_seed, evaluate, train, EarlyStopping, EpochRecord, Evaluation, StopDecision, TrainConfig, TrainOutcome,
};
