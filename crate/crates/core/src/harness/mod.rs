//! Benchmark orchestration behind the `hqbench` command line: runs
//! strategies over datasets, times phases and writes run records.

mod record;
mod summary;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::complementarity::{complementarity_report, oracle_exceeding, oracle_utilization, prediction_metrics, ComplementarityReport};
use crate::data::{load_split_pair, SplitPair};
use crate::ensembles::{fit_base_pair, run_strategy, EnsembleConfig, Strategy};
use crate::error::{Error, Result};
use crate::hydra::{HydraConfig, HydraTransform};
use crate::matrix::argmax_rows;
use crate::quant::{quant_transform, QuantConfig};

pub use record::{Accuracies, Environment, OracleFields, RunRecord, RunStatus, SCHEMA_VERSION};
pub use summary::{summary_csv, summary_rows, SummaryRow, BEST_TOLERANCE};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Json,
    Csv,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<OutputFormat> {
        match s {
            "json" => Ok(OutputFormat::Json),
            "csv" => Ok(OutputFormat::Csv),
            other => Err(Error::Config(format!("unknown output format {other:?}; expected json or csv"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    /// Dataset directories, each holding a train and a test file.
    pub datasets: Vec<PathBuf>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    pub folds: usize,
    pub cawpe_alpha: f64,
    /// Row cap for the feature-level complementarity metrics.
    pub cap: usize,
    pub timeout: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub format: OutputFormat,
    /// Run datasets concurrently.
    pub parallel: bool,
    /// Oracle gain at or above which an ensemble is recommended.
    pub threshold: f64,
    pub hydra: HydraConfig,
    pub quant: QuantConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            datasets: vec![],
            strategies: vec![],
            seeds: vec![42],
            folds: 5,
            cawpe_alpha: 4.0,
            cap: 5000,
            timeout: None,
            out_dir: None,
            format: OutputFormat::Json,
            parallel: false,
            threshold: 0.05,
            hydra: HydraConfig::default(),
            quant: QuantConfig::default(),
        }
    }
}

impl RunConfig {
    /// Checks that apply to every command.
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::Config("at least one --data path is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.cap == 0 {
            return Err(Error::Config("--cap must be at least 1".into()));
        }
        self.ensemble(Strategy::Cawpe, self.seeds[0]).validate()
    }

    fn validate_bench(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("at least one --strategy is required".into()));
        }
        self.validate()
    }

    pub fn ensemble(&self, strategy: Strategy, seed: u64) -> EnsembleConfig {
        let mut cfg = EnsembleConfig::new(strategy);
        cfg.folds = self.folds;
        cfg.seed = seed;
        cfg.cawpe_alpha = self.cawpe_alpha;
        cfg.timeout = self.timeout;
        cfg.hydra = self.hydra.clone();
        cfg.quant = self.quant.clone();
        cfg
    }
}

fn dataset_label(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Runs `f`, turning a panic into an error so one bad run cannot take the
/// rest down.
fn isolated<T>(f: impl FnOnce() -> Result<T>) -> Result<T> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(r) => r,
        Err(panic) => {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "unknown panic".into());
            Err(Error::InvalidDataset(format!("run panicked: {msg}")))
        }
    }
}

fn for_each_dataset<T: Send>(config: &RunConfig, per_dataset: impl Fn(&Path) -> Vec<T> + Sync) -> Vec<T> {
    if config.parallel {
        std::thread::scope(|scope| {
            let handles: Vec<_> = config
                .datasets
                .iter()
                .map(|p| {
                    let f = &per_dataset;
                    scope.spawn(move || f(p))
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("dataset worker panicked"))
                .collect()
        })
    } else {
        config.datasets.iter().flat_map(|p| per_dataset(p)).collect()
    }
}

/// One strategy run on a loaded dataset.
pub fn bench_run(config: &RunConfig, pair: &SplitPair, strategy: Strategy, seed: u64) -> RunRecord {
    let cfg = config.ensemble(strategy, seed);
    let mut record = RunRecord::pending(&pair.name, strategy, seed, config);
    record.describe_data(pair);
    match isolated(|| run_strategy(&cfg, pair)) {
        Ok(outcome) => {
            let truth = pair.test.labels();
            let pm = prediction_metrics(&outcome.pred_h, &outcome.pred_q, truth);
            let (rescued, both_wrong) = oracle_exceeding(&outcome.pred_h, &outcome.pred_q, &outcome.pred, truth);
            record.complete(&outcome, pm.ok(), rescued, both_wrong, pair.train.len());
        }
        Err(e) => record.fail(&e),
    }
    record
}

/// Runs every (dataset, strategy, seed) combination. Failures are recorded
/// per run and do not stop the others. Writes one JSON file per run and a
/// summary table when an output directory is configured.
pub fn cmd_bench(config: &RunConfig) -> Result<Vec<RunRecord>> {
    config.validate_bench()?;
    let records = for_each_dataset(config, |path| {
        let pair = load_split_pair(path);
        let mut out = Vec::new();
        for &seed in &config.seeds {
            for &strategy in &config.strategies {
                out.push(match &pair {
                    Ok(pair) => bench_run(config, pair, strategy, seed),
                    Err(e) => {
                        let mut r = RunRecord::pending(&dataset_label(path), strategy, seed, config);
                        r.fail(e);
                        r
                    }
                });
            }
        }
        out
    });
    if let Some(dir) = &config.out_dir {
        write_bench_outputs(dir, &records)?;
    }
    Ok(records)
}

pub fn write_bench_outputs(dir: &Path, records: &[RunRecord]) -> Result<()> {
    let runs = dir.join("runs");
    std::fs::create_dir_all(&runs).map_err(|e| Error::io(&runs, e))?;
    for r in records {
        let path = runs.join(r.file_name());
        let json = serde_json::to_string_pretty(r)?;
        std::fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("summary.csv");
    std::fs::write(&path, summary_csv(records)?).map_err(|e| Error::io(&path, e))
}

/// A complementarity report, or the reason it could not be produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplementarityRecord {
    pub dataset: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub report: Option<ComplementarityReport>,
}

pub fn complementarity_for(config: &RunConfig, pair: &SplitPair) -> Result<ComplementarityReport> {
    let seed = config.seeds[0];
    let fit = fit_base_pair(&config.ensemble(Strategy::Cawpe, seed), pair)?;
    complementarity_report(
        &pair.name,
        &fit.h_test,
        &fit.q_test,
        &argmax_rows(&fit.test_h),
        &argmax_rows(&fit.test_q),
        pair.test.labels(),
        config.cap,
        seed,
    )
}

/// Fits both bases on each dataset's full training split; feature metrics
/// use at most `cap` test rows, prediction metrics the whole test split.
pub fn cmd_complementarity(config: &RunConfig) -> Result<Vec<ComplementarityRecord>> {
    config.validate()?;
    let records = for_each_dataset(config, |path| {
        let result = isolated(|| complementarity_for(config, &load_split_pair(path)?));
        vec![match result {
            Ok(report) => ComplementarityRecord {
                dataset: report.dataset.clone(),
                status: RunStatus::Ok,
                error: None,
                report: Some(report),
            },
            Err(e) => ComplementarityRecord {
                dataset: dataset_label(path),
                status: RunStatus::Failed,
                error: Some(e.to_string()),
                report: None,
            },
        }]
    });
    if let Some(dir) = &config.out_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("complementarity.json");
        std::fs::write(&path, serde_json::to_string_pretty(&records)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(records)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformKind {
    Hydra,
    Quant,
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<TransformKind> {
        match s {
            "hydra" => Ok(TransformKind::Hydra),
            "quant" => Ok(TransformKind::Quant),
            other => Err(Error::Config(format!("unknown transform {other:?}; expected hydra or quant"))),
        }
    }
}

/// Files written by [`cmd_extract`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExtractOutput {
    pub dataset: String,
    pub train: PathBuf,
    pub test: PathBuf,
    /// Fitted transform, when the transform has fitted state.
    pub transform: Option<PathBuf>,
    pub n_columns: usize,
}

/// Fits the transform on the training split and writes train and test
/// feature blobs (plus the fitted Hydra transform) into `out_dir`.
pub fn cmd_extract(dataset: &Path, kind: TransformKind, out_dir: &Path, seed: u64) -> Result<ExtractOutput> {
    let pair = load_split_pair(dataset)?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let stem = |part: &str, ext: &str| out_dir.join(format!("{}.{}.{part}.{ext}", pair.name, kind_name(kind)));
    let (train, test, transform) = match kind {
        TransformKind::Hydra => {
            let cfg = HydraConfig {
                seed,
                ..HydraConfig::default()
            };
            let t = HydraTransform::fit(&cfg, &pair.train)?;
            let path = stem("transform", "hydr");
            t.save(&path)?;
            (t.transform(&pair.train)?, t.transform(&pair.test)?, Some(path))
        }
        TransformKind::Quant => {
            let cfg = QuantConfig::default();
            (quant_transform(&cfg, &pair.train)?, quant_transform(&cfg, &pair.test)?, None)
        }
    };
    let (train_path, test_path) = (stem("train", "fmat"), stem("test", "fmat"));
    train.save(&train_path)?;
    test.save(&test_path)?;
    Ok(ExtractOutput {
        dataset: pair.name.clone(),
        train: train_path,
        test: test_path,
        transform,
        n_columns: train.ncols(),
    })
}

fn kind_name(kind: TransformKind) -> &'static str {
    match kind {
        TransformKind::Hydra => "hydra",
        TransformKind::Quant => "quant",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProbeResult {
    pub dataset: String,
    pub acc_h: f64,
    pub acc_q: f64,
    pub acc_oracle: f64,
    pub oracle_gain: f64,
    pub threshold: f64,
    pub recommended: bool,
}

impl ProbeResult {
    pub fn line(&self) -> String {
        format!(
            "{}: acc_h={:.4} acc_q={:.4} acc_oracle={:.4} oracle_gain={:.4} threshold={:.4} -> {}",
            self.dataset,
            self.acc_h,
            self.acc_q,
            self.acc_oracle,
            self.oracle_gain,
            self.threshold,
            if self.recommended {
                "ensemble recommended"
            } else {
                "ensemble not recommended"
            }
        )
    }
}

pub fn oracle_probe(config: &RunConfig, pair: &SplitPair) -> Result<ProbeResult> {
    let fit = fit_base_pair(&config.ensemble(Strategy::Cawpe, config.seeds[0]), pair)?;
    let pm = prediction_metrics(&argmax_rows(&fit.test_h), &argmax_rows(&fit.test_q), pair.test.labels())?;
    Ok(ProbeResult {
        dataset: pair.name.clone(),
        acc_h: pm.acc_h,
        acc_q: pm.acc_q,
        acc_oracle: pm.acc_oracle,
        oracle_gain: pm.oracle_gain,
        threshold: config.threshold,
        recommended: pm.oracle_gain >= config.threshold,
    })
}

/// Fits both bases once per dataset and reports whether the oracle gain
/// clears the threshold.
pub fn cmd_oracle_probe(config: &RunConfig) -> Result<Vec<std::result::Result<ProbeResult, (String, String)>>> {
    config.validate()?;
    if !(config.threshold >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {}", config.threshold)));
    }
    Ok(for_each_dataset(config, |path| {
        vec![isolated(|| oracle_probe(config, &load_split_pair(path)?)).map_err(|e| (dataset_label(path), e.to_string()))]
    }))
}

/// Oracle utilisation with the reason when it is undefined.
pub fn utilization_with_reason(gain: f64, oracle_gain: f64) -> (Option<f64>, Option<String>) {
    match oracle_utilization(gain, oracle_gain) {
        Some(u) => (Some(u), None),
        None => (None, Some("oracle gain is zero: no row has exactly one base correct".into())),
    }
}

/// Groups records by `(dataset, seed)` in first-seen order.
pub(crate) fn group_records(records: &[RunRecord]) -> Vec<((String, u64), Vec<&RunRecord>)> {
    let mut order: Vec<(String, u64)> = Vec::new();
    let mut groups: BTreeMap<(String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.dataset.clone(), r.seed);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        groups.entry(key).or_default().push(r);
    }
    order
        .into_iter()
        .map(|k| {
            let v = groups.remove(&k).unwrap();
            (k, v)
        })
        .collect()
}
