use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::arch::{build_model, ArchId, ArchitectureSpec};
use super::network::Network;
use super::train::{derive_seed, evaluate, train, TrainConfig};
use crate::datasets::{build_folds_from_counts, load_fold, Corpus, FoldData, NUM_FOLDS};
use crate::error::{Error, Result};
use crate::interp::ScaleSet;
use crate::stats::{timing_summary, wilcoxon_cells, PairedCell, TimingSummary, WilcoxonResult};
use crate::CODE_VERSION;

pub const RESULTS_SCHEMA: &str = "mtsconv-results";
pub const RESULTS_VERSION: u32 = 1;

const SEED_FOLDS: u64 = 1;
const SEED_INIT: u64 = 2;
const SEED_SHUFFLE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Standard,
    Mts,
}

impl std::fmt::Display for ModelType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelType::Standard => "standard",
            ModelType::Mts => "mts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub archs: Vec<ArchId>,
    pub scale_sets: Vec<ScaleSet>,
    pub train: TrainConfig,
    /// Fold indices to run; all folds when empty.
    pub folds: Vec<usize>,
    /// Parallel jobs; 0 uses every core.
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            dataset: "synth".into(),
            archs: ArchId::ALL.to_vec(),
            scale_sets: ScaleSet::published_grid(),
            train: TrainConfig::default(),
            folds: Vec::new(),
            workers: 0,
        }
    }
}

impl ExperimentConfig {
    fn fold_indices(&self) -> Result<Vec<usize>> {
        if self.folds.is_empty() {
            return Ok((0..NUM_FOLDS).collect());
        }
        if let Some(&bad) = self.folds.iter().find(|&&f| f >= NUM_FOLDS) {
            return Err(Error::Parameter(format!("fold {bad} out of range (0..{NUM_FOLDS})")));
        }
        Ok(self.folds.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub test_accuracy: f64,
    pub test_loss: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub seconds_per_epoch: f64,
    /// Test-set branch usage per MTS layer.
    pub usage: Vec<Vec<f64>>,
}

/// One trained configuration evaluated over all requested folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub dataset: String,
    pub arch: ArchId,
    pub model_type: ModelType,
    pub l2: f64,
    pub scales: Option<ScaleSet>,
    pub folds: Vec<FoldOutcome>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

impl ExperimentResult {
    pub fn mean_test_accuracy(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.test_accuracy))
    }

    pub fn mean_val_accuracy(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.val_accuracy))
    }

    pub fn mean_val_loss(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.val_loss))
    }

    pub fn seconds_per_epoch(&self) -> f64 {
        mean(self.folds.iter().map(|f| f.seconds_per_epoch))
    }

    /// Fold-averaged usage per MTS layer.
    pub fn mean_usage(&self) -> Vec<Vec<f64>> {
        average_usage(self.folds.iter().map(|f| &f.usage))
    }
}

fn average_usage<'a>(usages: impl Iterator<Item = &'a Vec<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut acc: Vec<Vec<f64>> = Vec::new();
    let mut n = 0;
    for u in usages {
        if acc.is_empty() {
            acc = u.iter().map(|l| vec![0.0; l.len()]).collect();
        }
        for (a, l) in acc.iter_mut().zip(u) {
            a.iter_mut().zip(l).for_each(|(x, y)| *x += y);
        }
        n += 1;
    }
    for a in &mut acc {
        a.iter_mut().for_each(|x| *x /= n as f64);
    }
    acc
}

/// Index of the candidate with the highest mean validation accuracy; ties
/// go to the lower mean validation loss, then to the earlier candidate.
pub fn select_best(candidates: &[ExperimentResult]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in candidates.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let (ca, ba) = (c.mean_val_accuracy(), candidates[b].mean_val_accuracy());
                ca > ba || (ca == ba && c.mean_val_loss() < candidates[b].mean_val_loss())
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Trains and evaluates `spec` on one fold. Initialisation and shuffling
/// depend only on the master seed, architecture and fold, so standard and
/// MTS runs of the same cell start from identical parameters.
pub fn run_fold(
    spec: &ArchitectureSpec,
    data: &FoldData,
    fold: usize,
    classes: usize,
    config: &TrainConfig,
    l2: f64,
) -> Result<FoldOutcome> {
    let input = {
        let s = data.train.items[0].frames.shape();
        [s[0], s[1]]
    };
    let arch = spec.id as u64;
    let mut init = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[SEED_INIT, arch, fold as u64]));
    let mut net: Network = build_model(spec, input, classes, &mut init)?;
    let run_config = TrainConfig {
        seed: derive_seed(config.seed, &[SEED_SHUFFLE, arch, fold as u64]),
        ..config.clone()
    };
    let outcome = train(&mut net, data, &run_config, l2)?;
    net.reset_usage();
    let test = evaluate(&mut net, &data.test, config.batch_size)?;
    let usage = net.branch_usage()?;
    Ok(FoldOutcome {
        fold,
        test_accuracy: test.accuracy,
        test_loss: test.loss,
        val_accuracy: outcome.best_val_accuracy,
        val_loss: outcome.best_val_loss,
        epochs: outcome.epochs_run(),
        best_epoch: outcome.best_epoch,
        seconds_per_epoch: outcome.seconds_per_epoch,
        usage,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    pub candidates: Vec<ExperimentResult>,
    pub best: usize,
}

impl GridSearch {
    pub fn best(&self) -> &ExperimentResult {
        &self.candidates[self.best]
    }
}

/// Evaluates every (scale set, L2) candidate of one architecture and model
/// type over `folds` and selects by mean validation accuracy. Standard
/// models ignore `scale_sets`.
pub fn grid_search(
    dataset: &str,
    folds: &[(usize, FoldData)],
    classes: usize,
    arch: ArchId,
    model_type: ModelType,
    scale_sets: &[ScaleSet],
    config: &TrainConfig,
) -> Result<GridSearch> {
    if folds.is_empty() || config.l2_grid.is_empty() {
        return Err(Error::Parameter("grid search needs folds and a non-empty L2 grid".into()));
    }
    let specs: Vec<ArchitectureSpec> = match model_type {
        ModelType::Standard => vec![ArchitectureSpec::standard(arch)],
        ModelType::Mts => {
            if scale_sets.is_empty() {
                return Err(Error::Parameter("MTS grid search needs at least one scale set".into()));
            }
            scale_sets.iter().map(|s| ArchitectureSpec::mts(arch, s.clone())).collect()
        }
    };
    let points: Vec<(&ArchitectureSpec, f64)> = specs
        .iter()
        .flat_map(|s| config.l2_grid.iter().map(move |&l2| (s, l2)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..folds.len()).map(move |f| (p, f)))
        .collect();
    let outcomes: Vec<FoldOutcome> = jobs
        .par_iter()
        .map(|&(p, f)| {
            let (spec, l2) = points[p];
            let (index, data) = &folds[f];
            log::info!("{dataset} {arch} {model_type} scales={:?} l2={l2} fold {index}", spec.scales.as_ref().map(|s| s.to_string()));
            run_fold(spec, data, *index, classes, config, l2)
        })
        .collect::<Result<_>>()?;
    let mut outcomes = outcomes.into_iter();
    let candidates: Vec<ExperimentResult> = points
        .iter()
        .map(|&(spec, l2)| ExperimentResult {
            dataset: dataset.to_string(),
            arch,
            model_type,
            l2,
            scales: spec.scales.clone(),
            folds: outcomes.by_ref().take(folds.len()).collect(),
        })
        .collect();
    let best = select_best(&candidates).expect("non-empty grid");
    Ok(GridSearch { candidates, best })
}

/// One row of the results file: a selected configuration on one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: String,
    pub version: u32,
    pub code_version: String,
    pub dataset: String,
    pub arch: ArchId,
    pub model_type: ModelType,
    pub fold: usize,
    pub l2: f64,
    pub scales: Option<ScaleSet>,
    pub test_accuracy: f64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub seconds_per_epoch: f64,
    pub usage: Vec<Vec<f64>>,
    pub config: serde_json::Value,
}

impl ExperimentResult {
    pub fn records(&self, config: &serde_json::Value) -> Vec<ResultRecord> {
        self.folds
            .iter()
            .map(|f| ResultRecord {
                schema: RESULTS_SCHEMA.into(),
                version: RESULTS_VERSION,
                code_version: CODE_VERSION.into(),
                dataset: self.dataset.clone(),
                arch: self.arch,
                model_type: self.model_type,
                fold: f.fold,
                l2: self.l2,
                scales: self.scales.clone(),
                test_accuracy: f.test_accuracy,
                val_accuracy: f.val_accuracy,
                val_loss: f.val_loss,
                epochs: f.epochs,
                best_epoch: f.best_epoch,
                seconds_per_epoch: f.seconds_per_epoch,
                usage: f.usage.clone(),
                config: config.clone(),
            })
            .collect()
    }
}

pub fn write_records(path: &Path, records: &[ResultRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Format(e.to_string()))?);
        out.push('\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_records(path: &Path) -> Result<Vec<ResultRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: ResultRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if r.schema != RESULTS_SCHEMA || r.version != RESULTS_VERSION {
            return Err(Error::Format(format!(
                "{}:{}: unsupported results schema {} v{}",
                path.display(),
                n + 1,
                r.schema,
                r.version
            )));
        }
        records.push(r);
    }
    Ok(records)
}

/// One dataset × architecture column of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub dataset: String,
    pub arch: ArchId,
    /// Mean test accuracy in percent.
    pub standard: Option<f64>,
    pub mts: Option<f64>,
    pub scales: Option<ScaleSet>,
    /// Mean test-set usage per MTS layer.
    pub usage: Vec<Vec<f64>>,
}

impl TableEntry {
    pub fn paired(&self) -> Option<PairedCell> {
        Some(PairedCell {
            dataset: self.dataset.clone(),
            arch: self.arch.to_string(),
            standard: self.standard?,
            mts: self.mts?,
        })
    }
}

/// Aggregates per-fold records into table columns, ordered by first
/// appearance of the dataset and then by architecture.
pub fn summarize(records: &[ResultRecord]) -> Vec<TableEntry> {
    let mut datasets: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<(usize, ArchId, ModelType), Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        let d = match datasets.iter().position(|&d| d == r.dataset) {
            Some(d) => d,
            None => {
                datasets.push(&r.dataset);
                datasets.len() - 1
            }
        };
        groups.entry((d, r.arch, r.model_type)).or_default().push(r);
    }
    let mut entries: BTreeMap<(usize, ArchId), TableEntry> = BTreeMap::new();
    for ((d, arch, ty), rs) in groups {
        let e = entries.entry((d, arch)).or_insert_with(|| TableEntry {
            dataset: datasets[d].to_string(),
            arch,
            standard: None,
            mts: None,
            scales: None,
            usage: Vec::new(),
        });
        let acc = 100.0 * mean(rs.iter().map(|r| r.test_accuracy));
        match ty {
            ModelType::Standard => e.standard = Some(acc),
            ModelType::Mts => {
                e.mts = Some(acc);
                e.scales = rs[0].scales.clone();
                e.usage = average_usage(rs.iter().map(|r| &r.usage));
            }
        }
    }
    entries.into_values().collect()
}

/// Fold-level pairs `(dataset, arch@fold)` for the alternative Wilcoxon
/// pairing unit.
pub fn fold_pairs(records: &[ResultRecord]) -> Vec<PairedCell> {
    type Pair = (Option<f64>, Option<f64>);
    let mut map: BTreeMap<(String, ArchId, usize), Pair> = BTreeMap::new();
    for r in records {
        let e = map.entry((r.dataset.clone(), r.arch, r.fold)).or_default();
        match r.model_type {
            ModelType::Standard => e.0 = Some(100.0 * r.test_accuracy),
            ModelType::Mts => e.1 = Some(100.0 * r.test_accuracy),
        }
    }
    map.into_iter()
        .filter_map(|((d, a, f), (s, m))| {
            Some(PairedCell {
                dataset: d,
                arch: format!("{a}@{f}"),
                standard: s?,
                mts: m?,
            })
        })
        .collect()
}

fn usage_text(usage: &[Vec<f64>]) -> String {
    usage
        .iter()
        .map(|l| l.iter().map(|u| format!("{:.0}", 100.0 * u)).collect::<Vec<_>>().join("/"))
        .collect::<Vec<_>>()
        .join("; ")
}

fn opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2}"))
}

/// Plain-text table: one block per dataset with columns A1..A4 and rows
/// Standard, MTS, best scale factors and use of parallel branches (%).
pub fn render_table(entries: &[TableEntry]) -> String {
    let mut out = String::new();
    let mut datasets: Vec<&str> = Vec::new();
    for e in entries {
        if !datasets.contains(&e.dataset.as_str()) {
            datasets.push(&e.dataset);
        }
    }
    for d in datasets {
        let cols: Vec<&TableEntry> = entries.iter().filter(|e| e.dataset == d).collect();
        let rows: [(&str, Vec<String>); 4] = [
            ("Standard", cols.iter().map(|e| opt(e.standard)).collect()),
            ("MTS", cols.iter().map(|e| opt(e.mts)).collect()),
            (
                "Best scale factors",
                cols.iter()
                    .map(|e| e.scales.as_ref().map_or("-".into(), |s| format!("({s})")))
                    .collect(),
            ),
            ("Use of parallel branches", cols.iter().map(|e| usage_text(&e.usage)).collect()),
        ];
        let width = rows
            .iter()
            .flat_map(|(_, v)| v.iter().map(String::len))
            .chain(std::iter::once(6))
            .max()
            .unwrap();
        let _ = write!(out, "{d:<26}");
        for e in &cols {
            let _ = write!(out, " | {:<width$}", e.arch.to_string());
        }
        out.push('\n');
        for (label, vals) in &rows {
            let _ = write!(out, "{label:<26}");
            for v in vals {
                let _ = write!(out, " | {v:<width$}");
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

pub fn render_csv(entries: &[TableEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "arch", "standard", "mts", "scales", "usage"]).unwrap();
    for e in entries {
        let scales = e.scales.as_ref().map_or(String::new(), ScaleSet::to_string);
        w.write_record([
            e.dataset.clone(),
            e.arch.to_string(),
            e.standard.map_or(String::new(), |v| format!("{v:.4}")),
            e.mts.map_or(String::new(), |v| format!("{v:.4}")),
            scales,
            usage_text(&e.usage),
        ])
        .unwrap();
    }
    String::from_utf8(w.into_inner().unwrap()).unwrap()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub searches: Vec<GridSearch>,
    pub table: Vec<TableEntry>,
    /// Standard vs 3-branch MTS seconds per epoch over the selected runs.
    pub timing: Option<TimingSummary>,
    pub wilcoxon: Option<WilcoxonResult>,
}

impl ExperimentReport {
    pub fn selected(&self) -> impl Iterator<Item = &ExperimentResult> {
        self.searches.iter().map(GridSearch::best)
    }

    pub fn records(&self) -> Result<Vec<ResultRecord>> {
        let config = serde_json::to_value(&self.config).map_err(|e| Error::Format(e.to_string()))?;
        Ok(self.selected().flat_map(|r| r.records(&config)).collect())
    }

    pub fn render(&self) -> String {
        let mut out = render_table(&self.table);
        if let Some(t) = &self.timing {
            let _ = writeln!(
                out,
                "seconds/epoch: standard {:.3}, MTS (3 branches) {:.3}, ratio {:.2}",
                t.standard_secs_per_epoch, t.mts_secs_per_epoch, t.ratio
            );
        }
        if let Some(w) = &self.wilcoxon {
            let _ = writeln!(out, "Wilcoxon signed-rank: W = {}, n = {}, p = {:.4}", w.statistic, w.n, w.p_value);
        }
        out
    }
}

/// Builds the speaker folds of `corpus` from the master seed, grid-searches
/// every architecture as standard and MTS model, and assembles the
/// comparison table, timing and significance summaries.
pub fn run_experiment(corpus: &Corpus, config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.train.validate()?;
    if config.archs.is_empty() {
        return Err(Error::Parameter("no architectures requested".into()));
    }
    let plan = build_folds_from_counts(
        corpus.items.iter().map(|i| i.speaker.as_str()),
        derive_seed(config.train.seed, &[SEED_FOLDS]),
    )?;
    let folds: Vec<(usize, FoldData)> = config
        .fold_indices()?
        .into_iter()
        .map(|k| Ok((k, load_fold(corpus, &plan, k)?)))
        .collect::<Result<_>>()?;
    let classes = corpus.classes.len();
    let run = || -> Result<Vec<GridSearch>> {
        let jobs: Vec<(ArchId, ModelType)> = config
            .archs
            .iter()
            .flat_map(|&a| [(a, ModelType::Standard), (a, ModelType::Mts)])
            .collect();
        jobs.par_iter()
            .map(|&(arch, ty)| grid_search(&config.dataset, &folds, classes, arch, ty, &config.scale_sets, &config.train))
            .collect()
    };
    let searches = if config.workers == 0 {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build()
            .map_err(|e| Error::Parameter(format!("cannot start {} workers: {e}", config.workers)))?
            .install(run)?
    };
    let mut report = ExperimentReport {
        config: config.clone(),
        searches,
        table: Vec::new(),
        timing: None,
        wilcoxon: None,
    };
    report.table = summarize(&report.records()?);
    let std_secs: Vec<f64> = report
        .selected()
        .filter(|r| r.model_type == ModelType::Standard)
        .flat_map(|r| r.folds.iter().map(|f| f.seconds_per_epoch))
        .collect();
    let mts_secs: Vec<f64> = report
        .selected()
        .filter(|r| r.scales.as_ref().is_some_and(|s| s.len() == 3))
        .flat_map(|r| r.folds.iter().map(|f| f.seconds_per_epoch))
        .collect();
    report.timing = timing_summary(&std_secs, &mts_secs).ok();
    let cells: Vec<PairedCell> = report.table.iter().filter_map(TableEntry::paired).collect();
    report.wilcoxon = wilcoxon_cells(&cells).ok();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn result(val_acc: f64, val_loss: f64) -> ExperimentResult {
        ExperimentResult {
            dataset: "d".into(),
            arch: ArchId::A1,
            model_type: ModelType::Standard,
            l2: 0.0,
            scales: None,
            folds: vec![FoldOutcome {
                fold: 0,
                test_accuracy: 0.5,
                test_loss: 1.0,
                val_accuracy: val_acc,
                val_loss,
                epochs: 3,
                best_epoch: 1,
                seconds_per_epoch: 0.1,
                usage: Vec::new(),
            }],
        }
    }

    #[test]
    fn selection_matches_exhaustive_scan() {
        let table = [(0.5, 1.0), (0.8, 0.9), (0.8, 0.7), (0.6, 0.1), (0.8, 0.7)];
        let candidates: Vec<_> = table.iter().map(|&(a, l)| result(a, l)).collect();
        let oracle = (0..table.len())
            .max_by(|&i, &j| {
                table[i]
                    .0
                    .partial_cmp(&table[j].0)
                    .unwrap()
                    .then(table[j].1.partial_cmp(&table[i].1).unwrap())
                    .then(j.cmp(&i))
            })
            .unwrap();
        assert_eq!(select_best(&candidates), Some(oracle));
        assert_eq!(oracle, 2);
        assert_eq!(select_best(&[]), None);
    }

    fn record(dataset: &str, arch: ArchId, ty: ModelType, fold: usize, acc: f64) -> ResultRecord {
        ResultRecord {
            schema: RESULTS_SCHEMA.into(),
            version: RESULTS_VERSION,
            code_version: CODE_VERSION.into(),
            dataset: dataset.into(),
            arch,
            model_type: ty,
            fold,
            l2: 1e-4,
            scales: (ty == ModelType::Mts).then(|| "0.5,1,2".parse().unwrap()),
            test_accuracy: acc,
            val_accuracy: acc,
            val_loss: 1.0,
            epochs: 10,
            best_epoch: 5,
            seconds_per_epoch: 1.0,
            usage: if ty == ModelType::Mts { vec![vec![0.25, 0.5, 0.25]] } else { Vec::new() },
            config: serde_json::json!({"seed": 1}),
        }
    }

    #[test]
    fn summary_and_table_layout() {
        let records = vec![
            record("EMODB", ArchId::A2, ModelType::Standard, 0, 0.6),
            record("EMODB", ArchId::A2, ModelType::Standard, 1, 0.8),
            record("EMODB", ArchId::A2, ModelType::Mts, 0, 0.7),
            record("EMODB", ArchId::A2, ModelType::Mts, 1, 0.9),
            record("EMODB", ArchId::A1, ModelType::Standard, 0, 0.5),
        ];
        let entries = summarize(&records);
        assert_eq!(entries.len(), 2);
        assert_eq!(entries[0].arch, ArchId::A1);
        assert!((entries[1].standard.unwrap() - 70.0).abs() < 1e-12);
        assert!((entries[1].mts.unwrap() - 80.0).abs() < 1e-12);
        assert_eq!(entries[1].usage, vec![vec![0.25, 0.5, 0.25]]);
        assert!(entries[0].paired().is_none());
        let table = render_table(&entries);
        for needle in ["EMODB", "Standard", "MTS", "Best scale factors", "Use of parallel branches", "(0.5,1,2)", "25/50/25"] {
            assert!(table.contains(needle), "{needle} missing from\n{table}");
        }
        let csv = render_csv(&entries);
        assert_eq!(csv.lines().count(), 3);
        assert_eq!(fold_pairs(&records).len(), 2);
    }

    #[test]
    fn records_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        let records = vec![
            record("x", ArchId::A1, ModelType::Standard, 0, 0.5),
            record("x", ArchId::A1, ModelType::Mts, 0, 0.75),
        ];
        write_records(&path, &records).unwrap();
        assert_eq!(read_records(&path).unwrap(), records);
        std::fs::write(&path, "{\"schema\":\"other\"}\n").unwrap();
        assert!(matches!(read_records(&path), Err(Error::Format(_))));
    }
}
