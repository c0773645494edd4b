//! Hydra and Quant time series features, their base classifiers, six ways of
//! combining them, and tools for measuring how complementary they are.
//!
//! The modules follow the data flow:
//!
//! * [`data`] loads and folds labelled series, and tags every split as train
//!   or test so that fit routines can refuse test rows.
//! * [`hydra`] and [`quant`] turn series into feature matrices.
//! * [`classifiers`] holds the ridge and extremely randomised tree learners.
//! * [`ensembles`] wires the base pipelines, out-of-fold logits and the six
//!   strategies.
//! * [`complementarity`] compares feature spaces and prediction errors.
//! * [`harness`] runs reproducible benchmarks and writes run records.
//!
//! ```
//! use hydra_quant::ensembles::{run_strategy, EnsembleConfig, Strategy};
//! use hydra_quant::hydra::HydraConfig;
//! use hydra_quant::synthetic::{generate, SyntheticConfig, SyntheticKind};
//!
//! let pair = generate(&SyntheticConfig::new(SyntheticKind::Offset, 30, 15, 1)).unwrap();
//! let mut cfg = EnsembleConfig::new(Strategy::Cawpe);
//! cfg.hydra = HydraConfig { groups: 4, ..HydraConfig::default() };
//! let out = run_strategy(&cfg, &pair).unwrap();
//! assert_eq!(out.pred.len(), 15);
//! ```

pub mod blob;
pub mod classifiers;
pub mod complementarity;
pub mod data;
pub mod ensembles;
pub mod error;
pub mod harness;
pub mod hydra;
pub mod matrix;
pub mod quant;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};

// The guide's code blocks run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/hydra.md")]
    mod hydra {}
    #[doc = include_str!("../../../book/src/quant.md")]
    mod quant {}
    #[doc = include_str!("../../../book/src/classifiers.md")]
    mod classifiers {}
    #[doc = include_str!("../../../book/src/ensembles.md")]
    mod ensembles {}
    #[doc = include_str!("../../../book/src/complementarity.md")]
    mod complementarity {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
}
