//! Daily OHLCV forecasting toolkit.
//!
//! The crate covers the whole pipeline: CSV ingestion and week blocking
//! ([`dataio`]), min-max feature derivation ([`features`]), a small dense
//! numeric kernel ([`numcore`]), eight classical regressors
//! ([`classic`]), LSTM networks trained with hand-written BPTT ([`lstm`]),
//! daily and walk-forward evaluation protocols ([`backtest`]) and report
//! rendering ([`metrics`], [`report`]).

pub mod backtest;
pub mod classic;
pub mod dataio;
pub mod error;
pub mod features;
pub mod lstm;
pub mod metrics;
pub mod numcore;
pub mod report;
pub mod rng;
pub mod synth;

pub use dataio::{DatasetSplit, IngestSummary, OhlcvRecord, WeekBlock};
pub use error::{Error, Result};
pub use features::{FeatureRow, ScalerParams, SupervisedSet};
pub use numcore::Matrix;

/// Forecast horizon in trading days. Fixed at one week block.
pub const HORIZON: usize = 5;
