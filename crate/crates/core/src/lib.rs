//! Hourly patient-arrival forecasting.
//!
//! The crate covers the whole pipeline: ingesting admission events and
//! weather, generating synthetic arrivals, five forecasting models (weekly
//! persistence, reduced-rank VAR, a Kalman-filtered time-varying linear
//! model, TBATS and an LSTM), and a rolling-origin evaluation harness.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod eval;
pub mod ingest;
pub mod models;
pub mod optim;
pub mod synth;
pub mod timeseries;

pub use error::{Error, Result};
pub use models::{Forecaster, ModelKind, ModelSettings};
pub use timeseries::{ForecastResult, HourStamp, HourlyCountSeries, SeriesView, WeekBlock};
