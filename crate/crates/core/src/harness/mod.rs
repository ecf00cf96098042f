//! Command-line front end: configuration layering, output directories and
//! the `preprocess`, `synth`, `train`, `experiment`, `report` and
//! `selftest` subcommands.

mod config;
mod preprocess;
mod selftest;

pub use config::{prepare_output_dir, resolve, ConfigLayer, RunConfig};
pub use preprocess::{preprocess, LengthPolicy};
pub use selftest::{run_selftest, CheckResult};

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::datasets::{build_folds_from_counts, load_fold, write_synth, Corpus, DatasetManifest};
use crate::error::{Error, Result};
use crate::interp::ScaleSet;
use crate::stats::{wilcoxon_cells, PairedCell};
use crate::trainer::{
    build_model, derive_seed, evaluate, fold_pairs, read_records, render_csv, render_table, run_experiment, summarize,
    train, write_records, ArchId, ArchitectureSpec, ExperimentResult, FoldOutcome, ModelType, Network, TableEntry,
};

#[derive(Debug, Parser)]
#[command(name = "mtsconv", version, about = "Multi-time-scale CNN experiments on spectrograms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert a WAV manifest into spectrogram caches and a cache manifest.
    Preprocess(PreprocessArgs),
    /// Generate the synthetic time-stretched corpus.
    Synth(SynthArgs),
    /// Train one architecture on one fold.
    Train(TrainArgs),
    /// Grid-search standard and MTS models over all folds.
    Experiment(ExperimentArgs),
    /// Render results files as a comparison table with a significance line.
    Report(ReportArgs),
    /// Run gradient checks and the degenerate-equivalence check.
    Selftest,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat TOML file with run settings; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (created, or must be empty).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainingFlags {
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Comma-separated L2 coefficients.
    #[arg(long, value_delimiter = ',')]
    l2: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
struct SynthFlags {
    #[arg(long)]
    classes: Option<usize>,
    /// Comma-separated stretch factors.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<f64>>,
    #[arg(long)]
    samples_per_class: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    template_frames: Option<usize>,
    #[arg(long)]
    speakers: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LengthMode {
    Pad,
    Segment,
}

#[derive(Debug, Args)]
struct PreprocessArgs {
    #[command(flatten)]
    common: Common,
    /// Manifest whose paths point at WAV files.
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "pad")]
    mode: LengthMode,
    /// Pad target in frames; defaults to the longest utterance.
    #[arg(long)]
    pad_frames: Option<usize>,
    #[arg(long, default_value_t = 399)]
    segment_frames: usize,
    #[arg(long, default_value_t = 200)]
    segment_hop: usize,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    synth: SynthFlags,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    training: TrainingFlags,
    #[command(flatten)]
    synth: SynthFlags,
    #[arg(long)]
    arch: ArchId,
    /// Replace the flagged convolutions with MTS layers.
    #[arg(long)]
    mts: bool,
    /// Scale set for `--mts`, e.g. `0.5,1,2`.
    #[arg(long)]
    scales: Option<ScaleSet>,
    /// Cache manifest; the synthetic corpus is generated when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value_t = 0)]
    fold: usize,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    training: TrainingFlags,
    #[command(flatten)]
    synth: SynthFlags,
    /// Dataset name; `synth` generates the synthetic corpus unless a
    /// manifest is given.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Comma-separated architecture ids.
    #[arg(long, value_delimiter = ',')]
    archs: Option<Vec<ArchId>>,
    /// Candidate scale set; repeat for several.
    #[arg(long = "scales")]
    scales: Option<Vec<ScaleSet>>,
    /// Comma-separated fold indices.
    #[arg(long, value_delimiter = ',')]
    folds: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Text,
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pairing {
    Cell,
    Fold,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results file, or a directory searched recursively for `*.jsonl`.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "text")]
    format: ReportFormat,
    /// Wilcoxon pairing unit.
    #[arg(long, value_enum, default_value = "cell")]
    pairing: Pairing,
}

impl Common {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            seed: self.seed,
            workers: self.workers,
            out: self.out.clone(),
            ..ConfigLayer::default()
        }
    }
}

impl TrainingFlags {
    fn apply(&self, l: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            max_epochs: self.max_epochs.or(l.max_epochs),
            patience: self.patience.or(l.patience),
            batch_size: self.batch_size.or(l.batch_size),
            learning_rate: self.learning_rate.or(l.learning_rate),
            l2_grid: self.l2.clone().or(l.l2_grid),
            ..l
        }
    }
}

impl SynthFlags {
    fn apply(&self, l: ConfigLayer) -> ConfigLayer {
        ConfigLayer {
            classes: self.classes.or(l.classes),
            factors: self.factors.clone().or(l.factors),
            samples_per_class: self.samples_per_class.or(l.samples_per_class),
            noise: self.noise.or(l.noise),
            frames: self.frames.or(l.frames),
            bins: self.bins.or(l.bins),
            template_frames: self.template_frames.or(l.template_frames),
            speakers: self.speakers.or(l.speakers),
            ..l
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code: 0 on success, 2 for usage errors and
/// missing inputs, 1 for runtime failures.
pub fn cli_dispatch<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 2,
        Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Preprocess(a) => cmd_preprocess(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Report(a) => cmd_report(a),
        Command::Selftest => cmd_selftest(),
    }
}

fn input_exists(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Usage(format!("{} does not exist", path.display())))
    }
}

fn cmd_preprocess(a: PreprocessArgs) -> Result<()> {
    input_exists(&a.manifest)?;
    let cfg = resolve(
        a.common.config.as_deref(),
        ConfigLayer {
            manifest: Some(Some(a.manifest.clone())),
            ..a.common.layer()
        },
    )?;
    prepare_output_dir(&cfg.out)?;
    let manifest = DatasetManifest::load(&a.manifest)?;
    let policy = match a.mode {
        LengthMode::Pad => LengthPolicy::Pad(a.pad_frames),
        LengthMode::Segment => LengthPolicy::Segment {
            frames: a.segment_frames,
            hop: a.segment_hop,
        },
    };
    let out = preprocess(&manifest, &cfg.out, policy)?;
    cfg.write_to(&cfg.out)?;
    println!("wrote {} cache entries to {}", out.entries.len(), cfg.out.display());
    Ok(())
}

fn cmd_synth(a: SynthArgs) -> Result<()> {
    let cfg = resolve(a.common.config.as_deref(), a.synth.apply(a.common.layer()))?;
    prepare_output_dir(&cfg.out)?;
    let manifest = write_synth(&cfg.synth_config(), &cfg.out)?;
    cfg.write_to(&cfg.out)?;
    println!("wrote {} synthetic samples to {}", manifest.entries.len(), cfg.out.display());
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    match &cfg.manifest {
        Some(path) => {
            input_exists(path)?;
            Corpus::from_manifest(&cfg.dataset, &DatasetManifest::load(path)?)
        }
        None if cfg.dataset == "synth" => Corpus::from_synth(&cfg.synth_config()),
        None => Err(Error::Usage(format!("dataset {:?} needs --manifest", cfg.dataset))),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let mut layer = a.synth.apply(a.training.apply(a.common.layer()));
    layer.mts = a.mts.then_some(true);
    layer.archs = Some(vec![a.arch]);
    layer.dataset = a.dataset.clone();
    layer.manifest = a.manifest.clone().map(Some);
    layer.folds = Some(vec![a.fold]);
    if let Some(s) = &a.scales {
        layer.scales = Some(vec![s.clone()]);
    }
    let cfg = resolve(a.common.config.as_deref(), layer)?;
    if cfg.mts && cfg.scales.len() != 1 {
        return Err(Error::Usage("train --mts needs exactly one scale set (--scales)".into()));
    }
    let l2 = match cfg.l2_grid.as_slice() {
        [l2] => *l2,
        _ => return Err(Error::Usage("train needs exactly one L2 value (--l2)".into())),
    };
    let corpus = load_corpus(&cfg)?;
    prepare_output_dir(&cfg.out)?;
    let train_cfg = cfg.train_config();
    let plan = build_folds_from_counts(
        corpus.items.iter().map(|i| i.speaker.as_str()),
        derive_seed(cfg.seed, &[1]),
    )?;
    let data = load_fold(&corpus, &plan, a.fold)?;
    let spec = if cfg.mts {
        ArchitectureSpec::mts(a.arch, cfg.scales[0].clone())
    } else {
        ArchitectureSpec::standard(a.arch)
    };
    let input = corpus.input_shape()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2, a.arch as u64, a.fold as u64]));
    let mut net: Network = build_model(&spec, input, corpus.classes.len(), &mut rng)?;
    let outcome = train(
        &mut net,
        &data,
        &crate::trainer::TrainConfig {
            seed: derive_seed(cfg.seed, &[3, a.arch as u64, a.fold as u64]),
            ..train_cfg
        },
        l2,
    )?;
    net.save_checkpoint(&cfg.out.join("model.ckpt"))?;
    let test = evaluate(&mut net, &data.test, cfg.batch_size)?;
    let result = ExperimentResult {
        dataset: cfg.dataset.clone(),
        arch: a.arch,
        model_type: if cfg.mts { ModelType::Mts } else { ModelType::Standard },
        l2,
        scales: spec.scales.clone(),
        folds: vec![FoldOutcome {
            fold: a.fold,
            test_accuracy: test.accuracy,
            test_loss: test.loss,
            val_accuracy: outcome.best_val_accuracy,
            val_loss: outcome.best_val_loss,
            epochs: outcome.epochs_run(),
            best_epoch: outcome.best_epoch,
            seconds_per_epoch: outcome.seconds_per_epoch,
            usage: net.branch_usage()?,
        }],
    };
    let config_json = serde_json::to_value(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    write_records(&cfg.out.join("results.jsonl"), &result.records(&config_json))?;
    write_json(&cfg.out.join("history.json"), &outcome)?;
    cfg.write_to(&cfg.out)?;
    println!(
        "{} {} fold {}: test accuracy {:.4} after {} epochs (best {})",
        a.arch,
        result.model_type,
        a.fold,
        test.accuracy,
        outcome.epochs_run(),
        outcome.best_epoch
    );
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> Result<()> {
    let mut layer = a.synth.apply(a.training.apply(a.common.layer()));
    layer.dataset = a.dataset.clone();
    layer.manifest = a.manifest.clone().map(Some);
    layer.archs = a.archs.clone();
    layer.scales = a.scales.clone();
    layer.folds = a.folds.clone();
    let cfg = resolve(a.common.config.as_deref(), layer)?;
    let corpus = load_corpus(&cfg)?;
    prepare_output_dir(&cfg.out)?;
    let report = run_experiment(&corpus, &cfg.experiment_config())?;
    let config_json = serde_json::to_value(&cfg).map_err(|e| Error::Format(e.to_string()))?;
    let records: Vec<_> = report.selected().flat_map(|r| r.records(&config_json)).collect();
    write_records(&cfg.out.join("results.jsonl"), &records)?;
    write_json(
        &cfg.out.join("report.json"),
        &serde_json::json!({
            "code_version": crate::CODE_VERSION,
            "config": config_json,
            "table": report.table,
            "timing": report.timing,
            "wilcoxon": report.wilcoxon,
            "candidates": report.searches.iter().flat_map(|s| s.candidates.iter()).collect::<Vec<_>>(),
        }),
    )?;
    let rendered = report.render();
    let table_path = cfg.out.join("table.txt");
    fs::write(&table_path, &rendered).map_err(|e| Error::io(&table_path, e))?;
    cfg.write_to(&cfg.out)?;
    print!("{rendered}");
    Ok(())
}

fn collect_jsonl(path: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    if path.is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut entries: Vec<PathBuf> = fs::read_dir(path)
        .map_err(|e| Error::io(path, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_jsonl(&p, out)?;
        } else if p.extension().is_some_and(|e| e == "jsonl") {
            out.push(p);
        }
    }
    Ok(())
}

fn cmd_report(a: ReportArgs) -> Result<()> {
    input_exists(&a.input)?;
    let mut files = Vec::new();
    collect_jsonl(&a.input, &mut files)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("no .jsonl results under {}", a.input.display())));
    }
    let mut records = Vec::new();
    for f in &files {
        records.extend(read_records(f)?);
    }
    let table = summarize(&records);
    let pairs: Vec<PairedCell> = match a.pairing {
        Pairing::Cell => table.iter().filter_map(TableEntry::paired).collect(),
        Pairing::Fold => fold_pairs(&records),
    };
    let wilcoxon = wilcoxon_cells(&pairs).ok();
    match a.format {
        ReportFormat::Text => {
            print!("{}", render_table(&table));
            match &wilcoxon {
                Some(w) => println!(
                    "Wilcoxon signed-rank ({} pairs, {:?} pairing): W = {}, p = {:.4}",
                    w.n, a.pairing, w.statistic, w.p_value
                ),
                None => println!("Wilcoxon signed-rank: no standard/MTS pairs"),
            }
        }
        ReportFormat::Csv => print!("{}", render_csv(&table)),
        ReportFormat::Json => {
            let v = serde_json::json!({ "table": table, "wilcoxon": wilcoxon });
            println!("{}", serde_json::to_string_pretty(&v).map_err(|e| Error::Format(e.to_string()))?);
        }
    }
    Ok(())
}

fn cmd_selftest() -> Result<()> {
    let results = run_selftest();
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(Error::State(format!("{failed} self-test check(s) failed")));
    }
    Ok(())
}
