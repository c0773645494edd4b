use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{utilization_with_reason, RunConfig};
use crate::complementarity::PredictionMetrics;
use crate::data::SplitPair;
use crate::ensembles::{CawpeDetails, PhaseTimings, Strategy, StrategyOutcome};
use crate::error::Error;

/// Bumped whenever a field is renamed, removed or changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Accuracies {
    pub hydra: f64,
    pub quant: f64,
    pub ensemble: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleFields {
    pub acc_oracle: f64,
    pub oracle_gain: f64,
    pub oracle_utilization: Option<f64>,
    pub error_corr: Option<f64>,
    pub disagreement: f64,
    pub both_wrong_count: usize,
    /// Rows both bases got wrong that the ensemble got right.
    pub ensemble_correct_on_both_wrong: usize,
    pub oracle_exceeding_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub threads: usize,
    pub version: &'static str,
    pub debug_assertions: bool,
    /// How ridge scores become probabilities.
    pub ridge_probability_map: &'static str,
}

impl Environment {
    pub fn current() -> Environment {
        Environment {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            threads: rayon::current_num_threads(),
            version: env!("CARGO_PKG_VERSION"),
            debug_assertions: cfg!(debug_assertions),
            ridge_probability_map: "softmax",
        }
    }
}

/// One (dataset, strategy, seed) run, as written to disk.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub dataset: String,
    pub strategy: Strategy,
    pub strategy_label: &'static str,
    pub seed: u64,
    pub folds: usize,
    pub cawpe_alpha: f64,
    pub status: RunStatus,
    pub error: Option<String>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub n_classes: Option<usize>,
    pub n_channels: Option<usize>,
    pub series_length: Option<usize>,
    pub accuracy: Option<Accuracies>,
    pub ensemble_gain: Option<f64>,
    pub oracle: Option<OracleFields>,
    pub cawpe: Option<CawpeDetails>,
    pub meta_width: Option<usize>,
    pub timings: Option<PhaseTimings>,
    /// `transform_fit + classifier_fit + oof_generation + base_refit`.
    pub training_time: Option<f64>,
    pub time_per_1000_train: Option<f64>,
    pub environment: Environment,
    /// Reason for every `null` metric in an otherwise successful run.
    pub undefined: BTreeMap<String, String>,
}

impl RunRecord {
    pub(crate) fn pending(dataset: &str, strategy: Strategy, seed: u64, config: &RunConfig) -> RunRecord {
        RunRecord {
            schema_version: SCHEMA_VERSION,
            dataset: dataset.to_string(),
            strategy,
            strategy_label: strategy.label(),
            seed,
            folds: config.folds,
            cawpe_alpha: config.cawpe_alpha,
            status: RunStatus::Failed,
            error: None,
            n_train: None,
            n_test: None,
            n_classes: None,
            n_channels: None,
            series_length: None,
            accuracy: None,
            ensemble_gain: None,
            oracle: None,
            cawpe: None,
            meta_width: None,
            timings: None,
            training_time: None,
            time_per_1000_train: None,
            environment: Environment::current(),
            undefined: BTreeMap::new(),
        }
    }

    pub(crate) fn describe_data(&mut self, pair: &SplitPair) {
        self.n_train = Some(pair.train.len());
        self.n_test = Some(pair.test.len());
        self.n_classes = Some(pair.train.n_classes());
        self.n_channels = Some(pair.train.n_channels());
        self.series_length = Some(pair.train.series_length());
    }

    pub(crate) fn fail(&mut self, e: &Error) {
        self.status = RunStatus::Failed;
        self.error = Some(e.to_string());
    }

    pub(crate) fn complete(
        &mut self,
        outcome: &StrategyOutcome,
        metrics: Option<PredictionMetrics>,
        rescued: usize,
        both_wrong: usize,
        n_train: usize,
    ) {
        self.status = RunStatus::Ok;
        self.accuracy = Some(Accuracies {
            hydra: outcome.acc_h,
            quant: outcome.acc_q,
            ensemble: outcome.acc,
        });
        let gain = outcome.gain();
        self.ensemble_gain = Some(gain);
        if let Some(pm) = metrics {
            let (utilization, reason) = utilization_with_reason(gain, pm.oracle_gain);
            if let Some(reason) = reason {
                self.undefined.insert("oracle.oracle_utilization".into(), reason);
            }
            if pm.error_corr.is_none() {
                self.undefined
                    .insert("oracle.error_corr".into(), "a base's error indicator has zero variance".into());
            }
            let exceeding = if both_wrong == 0 {
                self.undefined
                    .insert("oracle.oracle_exceeding_rate".into(), "no row has both bases wrong".into());
                None
            } else {
                Some(rescued as f64 / both_wrong as f64)
            };
            self.oracle = Some(OracleFields {
                acc_oracle: pm.acc_oracle,
                oracle_gain: pm.oracle_gain,
                oracle_utilization: utilization,
                error_corr: pm.error_corr,
                disagreement: pm.disagreement,
                both_wrong_count: both_wrong,
                ensemble_correct_on_both_wrong: rescued,
                oracle_exceeding_rate: exceeding,
            });
        }
        self.cawpe = outcome.cawpe.clone();
        self.meta_width = Some(outcome.meta_width);
        self.timings = Some(outcome.timings);
        let training = outcome.timings.training_time();
        self.training_time = Some(training);
        self.time_per_1000_train = Some(training / (n_train as f64 / 1000.0));
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn file_name(&self) -> String {
        let safe: String = self
            .dataset
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        format!("{safe}__{}__seed{}.json", self.strategy.name(), self.seed)
    }

    /// The record with timing and environment fields cleared, for
    /// comparing runs that should agree bit for bit.
    pub fn metrics_only(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("records serialise");
        let obj = v.as_object_mut().expect("record is an object");
        for key in ["timings", "training_time", "time_per_1000_train", "environment"] {
            obj.remove(key);
        }
        v
    }
}
