//! Forecasting models and the registry the harness and CLI dispatch on.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{ForecastResult, SeriesView, HOURS_PER_WEEK};

pub mod kalman;
pub mod lstm;
pub mod naive;
pub mod rvar;
pub mod tbats;

/// A model that can be fitted once and then asked for forecasts from
/// successive origins.
pub trait Forecaster: Send {
    /// Hours of fully observed history immediately before the origin that
    /// every forecast call needs.
    fn context_hours(&self) -> usize;

    fn fit(&mut self, train: SeriesView<'_>) -> Result<()>;

    /// Forecast `horizon` hours following `context.end()`. `context` holds
    /// everything observed up to the origin and nothing after it.
    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult>;
}

/// Every model the toolkit knows by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[serde(rename = "tvlinear")]
    TvLinear,
    Tbats,
    Lstm3,
    #[serde(rename = "lstm3w")]
    Lstm3W,
    Lstm7,
    #[serde(rename = "lstm7w")]
    Lstm7W,
    Naive,
    Rvar,
}

/// Descriptive row for the model-summary table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSummary {
    pub label: &'static str,
    pub features: &'static str,
    pub input_horizon: &'static str,
    pub forecast_horizon: &'static str,
    pub explainable: bool,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::TvLinear,
        ModelKind::Tbats,
        ModelKind::Lstm3,
        ModelKind::Lstm3W,
        ModelKind::Lstm7,
        ModelKind::Lstm7W,
        ModelKind::Naive,
        ModelKind::Rvar,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Naive => "naive",
            ModelKind::Rvar => "rvar",
            ModelKind::TvLinear => "tvlinear",
            ModelKind::Tbats => "tbats",
            ModelKind::Lstm3 => "lstm3",
            ModelKind::Lstm7 => "lstm7",
            ModelKind::Lstm3W => "lstm3w",
            ModelKind::Lstm7W => "lstm7w",
        }
    }

    /// Hours per forecast window; `None` means the whole test span from a
    /// single fit.
    pub fn horizon_hours(self) -> Option<usize> {
        match self {
            ModelKind::Tbats => None,
            ModelKind::Lstm3 | ModelKind::Lstm3W => Some(72),
            _ => Some(HOURS_PER_WEEK),
        }
    }

    pub fn uses_weather(self) -> bool {
        matches!(self, ModelKind::Lstm3W | ModelKind::Lstm7W)
    }

    pub fn summary(self) -> ModelSummary {
        const ARRIVALS: &str = "Hourly Arrivals";
        const WITH_TEMP: &str = "Hourly Arrivals, Maximum Temperature";
        let (label, features, input_horizon, forecast_horizon, explainable) = match self {
            ModelKind::TvLinear => ("Time-varying linear model", ARRIVALS, "7 days", "7 days", true),
            ModelKind::Tbats => ("TBATS", ARRIVALS, "Whole history", "Whole test span", false),
            ModelKind::Lstm3 => ("LSTM3", ARRIVALS, "7 days", "3 days", false),
            ModelKind::Lstm3W => ("LSTM3-W", WITH_TEMP, "7 days", "3 days", false),
            ModelKind::Lstm7 => ("LSTM7", ARRIVALS, "7 days", "7 days", false),
            ModelKind::Lstm7W => ("LSTM7-W", WITH_TEMP, "7 days", "7 days", false),
            ModelKind::Naive => ("Naive Approach", ARRIVALS, "7 days", "7 days", true),
            ModelKind::Rvar => ("RVAR", ARRIVALS, "14 days", "7 days", true),
        };
        ModelSummary {
            label,
            features,
            input_horizon,
            forecast_horizon,
            explainable,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::invalid("model", format!("unknown model {s:?}")))
    }
}

/// Per-model settings, one section each.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub rvar: rvar::RvarConfig,
    pub tvlinear: kalman::KalmanConfig,
    pub tbats: tbats::TbatsSettings,
    pub lstm: lstm::LstmSettings,
}

/// Instantiates an unfitted model. `seed` overrides the per-model seeds.
pub fn build_model(kind: ModelKind, settings: &ModelSettings, seed: Option<u64>) -> Box<dyn Forecaster> {
    match kind {
        ModelKind::Naive => Box::new(naive::NaiveModel),
        ModelKind::Rvar => {
            let mut cfg = settings.rvar;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Box::new(rvar::RvarForecaster::new(cfg))
        }
        ModelKind::TvLinear => Box::new(kalman::TvLinearForecaster::new(settings.tvlinear.clone())),
        ModelKind::Tbats => Box::new(tbats::TbatsForecaster::new(settings.tbats.clone())),
        ModelKind::Lstm3 | ModelKind::Lstm7 | ModelKind::Lstm3W | ModelKind::Lstm7W => {
            let days = if matches!(kind, ModelKind::Lstm3 | ModelKind::Lstm3W) {
                3
            } else {
                7
            };
            let mut cfg = settings.lstm.train_config(days, kind.uses_weather());
            if let Some(s) = seed {
                cfg.seed = s;
            }
            Box::new(lstm::LstmForecaster::new(cfg))
        }
    }
}
