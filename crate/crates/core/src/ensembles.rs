//! The six Hydra + Quant combination strategies and out-of-fold logit
//! generation.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifiers::{
    forest_fit, ridge_fit, scores_to_probs, ForestConfig, ForestModel, RidgeConfig, RidgeModel,
};
use crate::data::{stratified_kfold, Dataset, SplitPair};
use crate::error::{Error, Result};
use crate::hydra::{HydraConfig, HydraTransform};
use crate::matrix::{accuracy, argmax_rows, ColumnTag, FeatureMatrix, LogitSource, ProbMatrix, Split};
use crate::quant::{quant_transform, QuantConfig};
use crate::rng::derive_seed;

/// RNG stream of the meta-learner, kept apart from the base forest's.
const META_STREAM: u64 = 0x4d45_5441;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    FcRidge,
    FcEt,
    QfeatHlogitRidge,
    QfeatHlogitEt,
    DualOofEt,
    Cawpe,
}

impl Strategy {
    pub const ALL: [Strategy; 6] = [
        Strategy::FcRidge,
        Strategy::FcEt,
        Strategy::QfeatHlogitRidge,
        Strategy::QfeatHlogitEt,
        Strategy::DualOofEt,
        Strategy::Cawpe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::FcRidge => "fc_ridge",
            Strategy::FcEt => "fc_et",
            Strategy::QfeatHlogitRidge => "qfeat_hlogit_ridge",
            Strategy::QfeatHlogitEt => "qfeat_hlogit_et",
            Strategy::DualOofEt => "dual_oof_et",
            Strategy::Cawpe => "cawpe",
        }
    }

    /// Display label, as used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Strategy::FcRidge => "FC-Ridge",
            Strategy::FcEt => "FC-ET",
            Strategy::QfeatHlogitRidge => "QFeat-HLogit-Ridge",
            Strategy::QfeatHlogitEt => "QFeat-HLogit-ET",
            Strategy::DualOofEt => "DualOOF-ET",
            Strategy::Cawpe => "CAWPE",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Strategy> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Strategy::ALL
            .into_iter()
            .find(|st| st.name() == key)
            .ok_or_else(|| {
                let names: Vec<_> = Strategy::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown strategy {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetaLearner {
    Ridge,
    Forest,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub strategy: Strategy,
    pub folds: usize,
    pub seed: u64,
    pub cawpe_alpha: f64,
    pub hydra: HydraConfig,
    pub quant: QuantConfig,
    pub ridge: RidgeConfig,
    pub forest: ForestConfig,
    /// Wall-clock budget for the whole run, in seconds.
    pub timeout: Option<f64>,
}

impl EnsembleConfig {
    pub fn new(strategy: Strategy) -> EnsembleConfig {
        EnsembleConfig {
            strategy,
            folds: 5,
            seed: 42,
            cawpe_alpha: 4.0,
            hydra: HydraConfig::default(),
            quant: QuantConfig::default(),
            ridge: RidgeConfig::default(),
            forest: ForestConfig::default(),
            timeout: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be at least 2, got {}", self.folds)));
        }
        if !(self.cawpe_alpha > 0.0 && self.cawpe_alpha.is_finite()) {
            return Err(Error::Config(format!("cawpe alpha must be positive, got {}", self.cawpe_alpha)));
        }
        if let Some(t) = self.timeout {
            if !(t > 0.0) {
                return Err(Error::Config(format!("timeout must be positive, got {t}")));
            }
        }
        self.hydra.validate()?;
        self.quant.validate()
    }

    fn hydra_seeded(&self, seed: u64) -> HydraConfig {
        HydraConfig {
            seed,
            ..self.hydra.clone()
        }
    }

    fn forest_seeded(&self, seed: u64) -> ForestConfig {
        ForestConfig {
            seed,
            ..self.forest.clone()
        }
    }

    fn ridge_seeded(&self, seed: u64) -> RidgeConfig {
        RidgeConfig {
            seed,
            ..self.ridge.clone()
        }
    }
}

/// Class probabilities from one base pipeline.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitMatrix {
    pub values: ProbMatrix,
    pub source: LogitSource,
    /// Every row was predicted by a model that never saw it.
    pub oof: bool,
}

impl LogitMatrix {
    pub fn to_features(&self, split: Split) -> FeatureMatrix {
        let columns = (0..self.values.ncols())
            .map(|c| ColumnTag::Logit {
                source: self.source,
                class: c as u32,
            })
            .collect();
        FeatureMatrix::new(self.values.clone(), columns, split).expect("one tag per column")
    }
}

/// A base learner: transform plus classifier, fitted as a unit.
pub trait Pipeline: Sync {
    fn source(&self) -> LogitSource;
    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedPipeline>>;
}

pub trait FittedPipeline: Send + Sync {
    fn predict_proba(&self, data: &Dataset) -> Result<ProbMatrix>;
}

/// Hydra features into ridge, scores softmaxed.
#[derive(Clone, Debug, PartialEq)]
pub struct HydraRidge {
    pub hydra: HydraConfig,
    pub ridge: RidgeConfig,
}

pub struct FittedHydraRidge {
    pub transform: HydraTransform,
    pub ridge: RidgeModel,
}

impl Pipeline for HydraRidge {
    fn source(&self) -> LogitSource {
        LogitSource::HydraRidge
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedPipeline>> {
        let cfg = HydraConfig {
            seed,
            ..self.hydra.clone()
        };
        let transform = HydraTransform::fit(&cfg, train)?;
        let features = transform.transform(train)?;
        let ridge = ridge_fit(&features, train.labels(), train.n_classes(), &self.ridge)?;
        Ok(Box::new(FittedHydraRidge { transform, ridge }))
    }
}

impl FittedPipeline for FittedHydraRidge {
    fn predict_proba(&self, data: &Dataset) -> Result<ProbMatrix> {
        let features = self.transform.transform(data)?;
        Ok(scores_to_probs(&self.ridge.decision(&features)?))
    }
}

/// Quant features into the extremely randomised forest.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantForest {
    pub quant: QuantConfig,
    pub forest: ForestConfig,
}

pub struct FittedQuantForest {
    pub quant: QuantConfig,
    pub forest: ForestModel,
}

impl Pipeline for QuantForest {
    fn source(&self) -> LogitSource {
        LogitSource::QuantForest
    }

    fn fit(&self, train: &Dataset, seed: u64) -> Result<Box<dyn FittedPipeline>> {
        let features = quant_transform(&self.quant, train)?;
        let cfg = ForestConfig {
            seed,
            ..self.forest.clone()
        };
        let forest = forest_fit(&features, train.labels(), train.n_classes(), &cfg)?;
        Ok(Box::new(FittedQuantForest {
            quant: self.quant.clone(),
            forest,
        }))
    }
}

impl FittedPipeline for FittedQuantForest {
    fn predict_proba(&self, data: &Dataset) -> Result<ProbMatrix> {
        self.forest.predict_proba(&quant_transform(&self.quant, data)?)
    }
}

/// Wall-clock budget checked between phases and folds.
#[derive(Clone, Copy, Debug)]
pub struct Deadline {
    start: Instant,
    limit: Option<Duration>,
}

impl Deadline {
    pub fn new(limit_secs: Option<f64>) -> Deadline {
        Deadline {
            start: Instant::now(),
            limit: limit_secs.map(Duration::from_secs_f64),
        }
    }

    pub fn none() -> Deadline {
        Deadline::new(None)
    }

    pub fn check(&self) -> Result<()> {
        match self.limit {
            Some(limit) if self.start.elapsed() > limit => Err(Error::Timeout(limit.as_secs_f64())),
            _ => Ok(()),
        }
    }
}

/// Out-of-fold class probabilities: each fold's pipeline, transform included,
/// is fitted on the other folds only and predicts the held-out rows.
pub fn oof_logits(pipeline: &dyn Pipeline, train: &Dataset, folds: usize, seed: u64) -> Result<LogitMatrix> {
    oof_logits_until(pipeline, train, folds, seed, &Deadline::none())
}

fn oof_logits_until(
    pipeline: &dyn Pipeline,
    train: &Dataset,
    folds: usize,
    seed: u64,
    deadline: &Deadline,
) -> Result<LogitMatrix> {
    train.split().ensure_train("out-of-fold generation")?;
    let assignment = stratified_kfold(train.labels(), folds, seed)?;
    let mut values = Array2::<f64>::zeros((train.len(), train.n_classes()));
    for fold in 0..folds {
        deadline.check()?;
        let held = assignment.held_out(fold);
        let fitted = pipeline.fit(&train.subset(&assignment.training(fold)), derive_seed(seed, fold as u64))?;
        let probs = fitted.predict_proba(&train.subset(&held))?;
        for (r, &i) in held.iter().enumerate() {
            values.row_mut(i).assign(&probs.row(r));
        }
    }
    Ok(LogitMatrix {
        values,
        source: pipeline.source(),
        oof: true,
    })
}

/// Accuracy-weighted average of two probability matrices, each weighted by
/// its accuracy raised to `alpha`.
pub fn cawpe_combine(p_h: &ProbMatrix, p_q: &ProbMatrix, acc_h: f64, acc_q: f64, alpha: f64) -> Result<ProbMatrix> {
    if p_h.dim() != p_q.dim() {
        return Err(Error::DimensionMismatch(format!(
            "probability matrices {:?} and {:?}",
            p_h.dim(),
            p_q.dim()
        )));
    }
    let (w_h, w_q) = cawpe_weights(acc_h, acc_q, alpha);
    if !(w_h + w_q > 0.0) {
        return Err(Error::Undefined("both base accuracies are zero".into()));
    }
    Ok((p_h * w_h + p_q * w_q) / (w_h + w_q))
}

pub fn cawpe_weights(acc_h: f64, acc_q: f64, alpha: f64) -> (f64, f64) {
    (acc_h.powf(alpha), acc_q.powf(alpha))
}

/// Ensemble accuracy minus the better base accuracy.
pub fn ensemble_gain(acc_ensemble: f64, acc_h: f64, acc_q: f64) -> f64 {
    acc_ensemble - acc_h.max(acc_q)
}

/// A fitted meta-learner of either family.
pub enum MetaModel {
    Ridge(RidgeModel),
    Forest(ForestModel),
}

impl MetaModel {
    pub fn fit(
        kind: MetaLearner,
        x: &FeatureMatrix,
        y: &[usize],
        n_classes: usize,
        cfg: &EnsembleConfig,
    ) -> Result<MetaModel> {
        let seed = derive_seed(cfg.seed, META_STREAM);
        Ok(match kind {
            MetaLearner::Ridge => MetaModel::Ridge(ridge_fit(x, y, n_classes, &cfg.ridge_seeded(seed))?),
            MetaLearner::Forest => MetaModel::Forest(forest_fit(x, y, n_classes, &cfg.forest_seeded(seed))?),
        })
    }

    pub fn predict_proba(&self, x: &FeatureMatrix) -> Result<ProbMatrix> {
        match self {
            MetaModel::Ridge(m) => Ok(scores_to_probs(&m.decision(x)?)),
            MetaModel::Forest(m) => m.predict_proba(x),
        }
    }
}

/// Seconds spent in each phase of a run.
///
/// Training time is `transform_fit + classifier_fit + oof_generation +
/// base_refit`. `baseline_eval` covers base models fitted only to report
/// their accuracy, and is not part of the strategy's cost.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub transform_fit: f64,
    pub transform_apply: f64,
    pub classifier_fit: f64,
    pub oof_generation: f64,
    pub base_refit: f64,
    pub predict: f64,
    pub baseline_eval: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    TransformFit,
    TransformApply,
    ClassifierFit,
    OofGeneration,
    BaseRefit,
    Predict,
    BaselineEval,
}

impl PhaseTimings {
    pub fn training_time(&self) -> f64 {
        self.transform_fit + self.classifier_fit + self.oof_generation + self.base_refit
    }

    fn slot(&mut self, phase: Phase) -> &mut f64 {
        match phase {
            Phase::TransformFit => &mut self.transform_fit,
            Phase::TransformApply => &mut self.transform_apply,
            Phase::ClassifierFit => &mut self.classifier_fit,
            Phase::OofGeneration => &mut self.oof_generation,
            Phase::BaseRefit => &mut self.base_refit,
            Phase::Predict => &mut self.predict,
            Phase::BaselineEval => &mut self.baseline_eval,
        }
    }
}

struct Clock<'a> {
    timings: PhaseTimings,
    deadline: &'a Deadline,
}

impl Clock<'_> {
    fn time<T>(&mut self, phase: Phase, f: impl FnOnce() -> Result<T>) -> Result<T> {
        self.deadline.check()?;
        let start = Instant::now();
        let out = f();
        *self.timings.slot(phase) += start.elapsed().as_secs_f64();
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CawpeDetails {
    /// Training-set accuracies used as competence estimates.
    pub train_acc_h: f64,
    pub train_acc_q: f64,
    pub weight_h: f64,
    pub weight_q: f64,
    pub alpha: f64,
}

/// Everything a strategy run produces on the test split.
#[derive(Clone, Debug)]
pub struct StrategyOutcome {
    pub strategy: Strategy,
    pub probs: ProbMatrix,
    pub pred: Vec<usize>,
    pub pred_h: Vec<usize>,
    pub pred_q: Vec<usize>,
    pub acc: f64,
    pub acc_h: f64,
    pub acc_q: f64,
    /// Column count of the meta-learner's input (0 for CAWPE).
    pub meta_width: usize,
    pub cawpe: Option<CawpeDetails>,
    pub timings: PhaseTimings,
}

impl StrategyOutcome {
    pub fn gain(&self) -> f64 {
        ensemble_gain(self.acc, self.acc_h, self.acc_q)
    }
}

struct Bases {
    h_train: FeatureMatrix,
    h_test: FeatureMatrix,
    q_train: FeatureMatrix,
    q_test: FeatureMatrix,
}

fn transform_both(cfg: &EnsembleConfig, pair: &SplitPair, clock: &mut Clock, fit: Phase) -> Result<Bases> {
    let hydra = clock.time(fit, || HydraTransform::fit(&cfg.hydra_seeded(cfg.seed), &pair.train))?;
    let h_train = clock.time(fit, || hydra.transform(&pair.train))?;
    let q_train = clock.time(fit, || quant_transform(&cfg.quant, &pair.train))?;
    let h_test = clock.time(Phase::TransformApply, || hydra.transform(&pair.test))?;
    let q_test = clock.time(Phase::TransformApply, || quant_transform(&cfg.quant, &pair.test))?;
    Ok(Bases {
        h_train,
        h_test,
        q_train,
        q_test,
    })
}

struct BaseProbs {
    train_h: ProbMatrix,
    train_q: ProbMatrix,
    test_h: ProbMatrix,
    test_q: ProbMatrix,
}

/// Fits ridge on Hydra and the forest on Quant over the full training set.
fn fit_bases(cfg: &EnsembleConfig, pair: &SplitPair, b: &Bases, clock: &mut Clock, fit: Phase) -> Result<BaseProbs> {
    let y = pair.train.labels();
    let c = pair.train.n_classes();
    let ridge = clock.time(fit, || ridge_fit(&b.h_train, y, c, &cfg.ridge_seeded(cfg.seed)))?;
    let forest = clock.time(fit, || forest_fit(&b.q_train, y, c, &cfg.forest_seeded(cfg.seed)))?;
    let train_h = clock.time(fit, || Ok(scores_to_probs(&ridge.decision(&b.h_train)?)))?;
    let train_q = clock.time(fit, || forest.predict_proba(&b.q_train))?;
    let test_h = clock.time(Phase::Predict, || Ok(scores_to_probs(&ridge.decision(&b.h_test)?)))?;
    let test_q = clock.time(Phase::Predict, || forest.predict_proba(&b.q_test))?;
    Ok(BaseProbs {
        train_h,
        train_q,
        test_h,
        test_q,
    })
}

/// Both base pipelines fitted on the full training split and applied to the
/// test split.
pub struct BasePairFit {
    pub h_test: FeatureMatrix,
    pub q_test: FeatureMatrix,
    pub train_h: ProbMatrix,
    pub train_q: ProbMatrix,
    pub test_h: ProbMatrix,
    pub test_q: ProbMatrix,
    pub timings: PhaseTimings,
}

pub fn fit_base_pair(cfg: &EnsembleConfig, pair: &SplitPair) -> Result<BasePairFit> {
    cfg.validate()?;
    let deadline = Deadline::new(cfg.timeout);
    let mut clock = Clock {
        timings: PhaseTimings::default(),
        deadline: &deadline,
    };
    let b = transform_both(cfg, pair, &mut clock, Phase::TransformFit)?;
    let p = fit_bases(cfg, pair, &b, &mut clock, Phase::ClassifierFit)?;
    deadline.check()?;
    Ok(BasePairFit {
        h_test: b.h_test,
        q_test: b.q_test,
        train_h: p.train_h,
        train_q: p.train_q,
        test_h: p.test_h,
        test_q: p.test_q,
        timings: clock.timings,
    })
}

fn logit_features(values: &ProbMatrix, source: LogitSource, split: Split) -> FeatureMatrix {
    LogitMatrix {
        values: values.clone(),
        source,
        oof: false,
    }
    .to_features(split)
}

/// Runs one strategy on a train/test pair. Every fit sees only the training
/// split; the test split is only ever transformed and predicted.
pub fn run_strategy(cfg: &EnsembleConfig, pair: &SplitPair) -> Result<StrategyOutcome> {
    cfg.validate()?;
    pair.train.split().ensure_train("ensemble training")?;
    let deadline = Deadline::new(cfg.timeout);
    let mut clock = Clock {
        timings: PhaseTimings::default(),
        deadline: &deadline,
    };
    let y = pair.train.labels();
    let c = pair.train.n_classes();
    let truth = pair.test.labels();

    let (probs, bases, meta_width, cawpe) = match cfg.strategy {
        Strategy::FcRidge | Strategy::FcEt => {
            let meta = if cfg.strategy == Strategy::FcRidge {
                MetaLearner::Ridge
            } else {
                MetaLearner::Forest
            };
            let b = transform_both(cfg, pair, &mut clock, Phase::TransformFit)?;
            let x_train = b.h_train.hstack(&b.q_train)?;
            let x_test = b.h_test.hstack(&b.q_test)?;
            let model = clock.time(Phase::ClassifierFit, || MetaModel::fit(meta, &x_train, y, c, cfg))?;
            let probs = clock.time(Phase::Predict, || model.predict_proba(&x_test))?;
            let bases = fit_bases(cfg, pair, &b, &mut clock, Phase::BaselineEval)?;
            (probs, bases, x_train.ncols(), None)
        }
        Strategy::QfeatHlogitRidge | Strategy::QfeatHlogitEt => {
            let meta = if cfg.strategy == Strategy::QfeatHlogitRidge {
                MetaLearner::Ridge
            } else {
                MetaLearner::Forest
            };
            let hydra_ridge = HydraRidge {
                hydra: cfg.hydra.clone(),
                ridge: cfg.ridge.clone(),
            };
            let oof = clock.time(Phase::OofGeneration, || {
                oof_logits_until(&hydra_ridge, &pair.train, cfg.folds, cfg.seed, &deadline)
            })?;
            // The full-train Hydra refit supplies the test-time logits.
            let b = transform_both(cfg, pair, &mut clock, Phase::TransformFit)?;
            let bases = fit_bases(cfg, pair, &b, &mut clock, Phase::BaseRefit)?;
            let x_train = b.q_train.hstack(&oof.to_features(Split::Train))?;
            let x_test = b
                .q_test
                .hstack(&logit_features(&bases.test_h, LogitSource::HydraRidge, Split::Test))?;
            let model = clock.time(Phase::ClassifierFit, || MetaModel::fit(meta, &x_train, y, c, cfg))?;
            let probs = clock.time(Phase::Predict, || model.predict_proba(&x_test))?;
            (probs, bases, x_train.ncols(), None)
        }
        Strategy::DualOofEt => {
            let hydra_ridge = HydraRidge {
                hydra: cfg.hydra.clone(),
                ridge: cfg.ridge.clone(),
            };
            let quant_forest = QuantForest {
                quant: cfg.quant.clone(),
                forest: cfg.forest.clone(),
            };
            let oof_h = clock.time(Phase::OofGeneration, || {
                oof_logits_until(&hydra_ridge, &pair.train, cfg.folds, cfg.seed, &deadline)
            })?;
            let oof_q = clock.time(Phase::OofGeneration, || {
                oof_logits_until(&quant_forest, &pair.train, cfg.folds, cfg.seed, &deadline)
            })?;
            let b = transform_both(cfg, pair, &mut clock, Phase::BaseRefit)?;
            let bases = fit_bases(cfg, pair, &b, &mut clock, Phase::BaseRefit)?;
            let x_train = oof_h
                .to_features(Split::Train)
                .hstack(&oof_q.to_features(Split::Train))?;
            let x_test = logit_features(&bases.test_h, LogitSource::HydraRidge, Split::Test).hstack(
                &logit_features(&bases.test_q, LogitSource::QuantForest, Split::Test),
            )?;
            let model = clock.time(Phase::ClassifierFit, || {
                MetaModel::fit(MetaLearner::Forest, &x_train, y, c, cfg)
            })?;
            let probs = clock.time(Phase::Predict, || model.predict_proba(&x_test))?;
            (probs, bases, x_train.ncols(), None)
        }
        Strategy::Cawpe => {
            let b = transform_both(cfg, pair, &mut clock, Phase::TransformFit)?;
            let bases = fit_bases(cfg, pair, &b, &mut clock, Phase::ClassifierFit)?;
            let train_acc_h = accuracy(&argmax_rows(&bases.train_h), y);
            let train_acc_q = accuracy(&argmax_rows(&bases.train_q), y);
            let (weight_h, weight_q) = cawpe_weights(train_acc_h, train_acc_q, cfg.cawpe_alpha);
            let probs = clock.time(Phase::Predict, || {
                cawpe_combine(&bases.test_h, &bases.test_q, train_acc_h, train_acc_q, cfg.cawpe_alpha)
            })?;
            let details = CawpeDetails {
                train_acc_h,
                train_acc_q,
                weight_h,
                weight_q,
                alpha: cfg.cawpe_alpha,
            };
            (probs, bases, 0, Some(details))
        }
    };
    deadline.check()?;

    let pred = argmax_rows(&probs);
    let pred_h = argmax_rows(&bases.test_h);
    let pred_q = argmax_rows(&bases.test_q);
    Ok(StrategyOutcome {
        strategy: cfg.strategy,
        acc: accuracy(&pred, truth),
        acc_h: accuracy(&pred_h, truth),
        acc_q: accuracy(&pred_q, truth),
        probs,
        pred,
        pred_h,
        pred_q,
        meta_width,
        cawpe,
        timings: clock.timings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert_eq!("FC-ET".parse::<Strategy>().unwrap(), Strategy::FcEt);
        assert!(matches!("stacking".parse::<Strategy>(), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        let mut cfg = EnsembleConfig::new(Strategy::Cawpe);
        assert!(cfg.validate().is_ok());
        cfg.folds = 1;
        assert!(cfg.validate().is_err());
        cfg.folds = 5;
        cfg.cawpe_alpha = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cawpe_worked_example() {
        let (w_h, w_q) = cawpe_weights(0.9, 0.8, 4.0);
        assert!((w_h - 0.6561).abs() < 1e-12 && (w_q - 0.4096).abs() < 1e-12);
        let out = cawpe_combine(&array![[0.6, 0.4]], &array![[0.3, 0.7]], 0.9, 0.8, 4.0).unwrap();
        // (0.6561·0.6 + 0.4096·0.3) / 1.0657 = 0.51654 / 1.0657
        assert!((out[[0, 0]] - 0.4847).abs() < 1e-4, "{}", out[[0, 0]]);
        assert!((out[[0, 1]] - 0.5153).abs() < 1e-4);
    }

    #[test]
    fn cawpe_degenerate_cases() {
        let p = array![[0.2, 0.8], [0.5, 0.5]];
        let q = array![[0.9, 0.1], [0.0, 1.0]];
        assert!(matches!(cawpe_combine(&p, &q, 0.0, 0.0, 4.0), Err(Error::Undefined(_))));
        assert_eq!(cawpe_combine(&p, &p, 0.3, 0.9, 4.0).unwrap(), p);
        let mean = cawpe_combine(&p, &q, 0.7, 0.7, 4.0).unwrap();
        for (m, (a, b)) in mean.iter().zip(p.iter().zip(q.iter())) {
            assert!((m - (a + b) / 2.0).abs() < 1e-12);
        }
        assert!(cawpe_combine(&p, &q.slice(ndarray::s![..1, ..]).to_owned(), 0.5, 0.5, 4.0).is_err());
    }

    #[test]
    fn gain_examples() {
        assert!((ensemble_gain(0.8932, 0.8099, 0.8698) - 0.0234).abs() < 1e-12);
        assert!((ensemble_gain(0.6626, 0.6304, 0.6648) + 0.0022).abs() < 1e-12);
        assert_eq!(ensemble_gain(0.7, 0.7, 0.5), 0.0);
    }

    #[test]
    fn deadline_trips() {
        let d = Deadline::new(Some(1e-9));
        std::thread::sleep(Duration::from_millis(2));
        assert!(matches!(d.check(), Err(Error::Timeout(_))));
        assert!(Deadline::none().check().is_ok());
    }
}
