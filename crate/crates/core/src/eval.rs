//! Rolling-origin evaluation and reporting.
//!
//! Every model sees one continuous history running from the start of the
//! training span to the end of the test span, with any gap between them
//! masked. A forecast from origin `s` receives exactly the prefix before
//! `s`, so the context is always observed data and never the model's own
//! output. Windows advance by the horizon and do not overlap.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{join_weather, WeatherReading};
use crate::models::{build_model, Forecaster, ModelKind, ModelSettings};
use crate::timeseries::{HourStamp, HourlyCountSeries, SeriesView};

/// How a model is walked across the test span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalProtocol {
    /// Hours per window; `None` forecasts the whole test span at once.
    pub horizon_hours: Option<usize>,
}

impl EvalProtocol {
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            horizon_hours: kind.horizon_hours(),
        }
    }

    /// `(offset, length)` of each window within a test span of `test_len`
    /// hours; a trailing partial window is dropped.
    pub fn windows(&self, test_len: usize) -> Result<Vec<(usize, usize)>> {
        let h = self.horizon_hours.unwrap_or(test_len);
        if h == 0 {
            return Err(Error::invalid("horizon_hours", "must be positive"));
        }
        if test_len < h || test_len == 0 {
            return Err(Error::InsufficientData {
                required: h.max(1),
                actual: test_len,
            });
        }
        Ok((0..test_len / h).map(|w| (w * h, h)).collect())
    }
}

/// Train and test spans laid out on one hourly axis.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalData {
    pub history: HourlyCountSeries,
    /// Aligned with `history` when temperature is available.
    pub tmax: Option<Vec<f64>>,
    pub train_len: usize,
    /// Index of the first test hour in `history`.
    pub test_offset: usize,
    pub test_len: usize,
}

impl EvalData {
    /// Joins `train` and `test` (which must not overlap), masking any gap.
    pub fn new(train: &HourlyCountSeries, test: &HourlyCountSeries) -> Result<Self> {
        let gap = test.start().hours_since(train.end());
        if gap < 0 {
            return Err(Error::invalid("test", "starts before the training span ends"));
        }
        let gap = gap as usize;
        let mut counts = train.counts().to_vec();
        let mut valid = train.valid().to_vec();
        counts.extend(std::iter::repeat_n(0, gap));
        valid.extend(std::iter::repeat_n(false, gap));
        counts.extend_from_slice(test.counts());
        valid.extend_from_slice(test.valid());
        Ok(Self {
            history: HourlyCountSeries::new(train.start(), counts, valid)?,
            tmax: None,
            train_len: train.len(),
            test_offset: train.len() + gap,
            test_len: test.len(),
        })
    }

    pub fn with_weather(mut self, readings: &[WeatherReading]) -> Result<Self> {
        self.tmax = Some(join_weather(&self.history, readings)?.tmax);
        Ok(self)
    }

    pub fn view(&self) -> SeriesView<'_> {
        SeriesView {
            tmax: self.tmax.as_deref(),
            ..self.history.view()
        }
    }

    pub fn train_view(&self) -> SeriesView<'_> {
        self.view().prefix(self.train_len)
    }

    pub fn test_start(&self) -> HourStamp {
        self.history.stamp_at(self.test_offset)
    }
}

/// One forecast call and the data it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastWindow {
    pub start: HourStamp,
    /// Exclusive end of the context handed to the model.
    pub context_end: HourStamp,
    pub forecast: Vec<f64>,
    pub observed: Vec<u32>,
    pub valid: Vec<bool>,
}

impl ForecastWindow {
    fn scored(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.forecast
            .iter()
            .zip(&self.observed)
            .zip(&self.valid)
            .filter(|(_, ok)| **ok)
            .map(|((f, o), _)| (*f, f64::from(*o)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RollingOutcome {
    pub windows: Vec<ForecastWindow>,
    /// Windows whose required context contained masked hours.
    pub skipped: usize,
    pub mse: f64,
    pub mae: f64,
    pub scored_hours: usize,
    pub prediction_seconds: f64,
}

/// Squared and absolute error over every scored hour of `windows`.
pub fn aggregate(windows: &[ForecastWindow]) -> Result<(f64, f64, usize)> {
    let (mut se, mut ae, mut n) = (0.0, 0.0, 0usize);
    for (f, o) in windows.iter().flat_map(|w| w.scored()) {
        se += (f - o).powi(2);
        ae += (f - o).abs();
        n += 1;
    }
    if n == 0 {
        return Err(Error::NoScoredPositions);
    }
    Ok((se / n as f64, ae / n as f64, n))
}

/// Walks a fitted model across the test span of `data`.
pub fn rolling_evaluate(model: &mut dyn Forecaster, data: &EvalData, protocol: EvalProtocol) -> Result<RollingOutcome> {
    let full = data.view();
    let need = model.context_hours();
    let mut windows = Vec::new();
    let mut skipped = 0;
    let mut prediction_seconds = 0.0;
    for (offset, len) in protocol.windows(data.test_len)? {
        let start = data.test_offset + offset;
        let context = full.prefix(start);
        let usable = context.tail(need).is_some_and(|t| t.all_valid());
        if !usable {
            skipped += 1;
            continue;
        }
        let clock = Instant::now();
        let result = model.forecast(context, len)?;
        prediction_seconds += clock.elapsed().as_secs_f64();
        if result.point.len() != len {
            return Err(Error::LengthMismatch {
                left: result.point.len(),
                right: len,
            });
        }
        windows.push(ForecastWindow {
            start: data.history.stamp_at(start),
            context_end: context.end(),
            forecast: result.point,
            observed: data.history.counts()[start..start + len].to_vec(),
            valid: data.history.valid()[start..start + len].to_vec(),
        });
    }
    let (mse, mae, scored_hours) = aggregate(&windows)?;
    Ok(RollingOutcome {
        windows,
        skipped,
        mse,
        mae,
        scored_hours,
        prediction_seconds,
    })
}

/// A model's full evaluation, including timings.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelEvaluation {
    pub kind: ModelKind,
    pub outcome: RollingOutcome,
    pub training_seconds: f64,
}

impl ModelEvaluation {
    pub fn row(&self) -> MetricsRow {
        MetricsRow {
            model: self.kind,
            mse: self.outcome.mse,
            mae: self.outcome.mae,
            scored_hours: self.outcome.scored_hours,
            windows: self.outcome.windows.len(),
            training_time_s: self.training_seconds,
            prediction_time_s: self.outcome.prediction_seconds,
        }
    }
}

/// Builds, fits (timed) and evaluates one model.
pub fn evaluate_model(
    kind: ModelKind,
    settings: &ModelSettings,
    seed: Option<u64>,
    data: &EvalData,
) -> Result<ModelEvaluation> {
    if kind.uses_weather() && data.tmax.is_none() {
        return Err(Error::invalid("weather", format!("{kind} needs a temperature series")));
    }
    let mut model = build_model(kind, settings, seed);
    let clock = Instant::now();
    model.fit(data.train_view())?;
    let training_seconds = clock.elapsed().as_secs_f64();
    let outcome = rolling_evaluate(model.as_mut(), data, EvalProtocol::for_model(kind))?;
    Ok(ModelEvaluation {
        kind,
        outcome,
        training_seconds,
    })
}

/// Evaluates several models in parallel; results keep the input order.
pub fn compare_models(
    kinds: &[ModelKind],
    settings: &ModelSettings,
    seed: Option<u64>,
    data: &EvalData,
) -> Vec<(ModelKind, Result<ModelEvaluation>)> {
    kinds
        .par_iter()
        .map(|&k| (k, evaluate_model(k, settings, seed, data)))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub model: ModelKind,
    pub mse: f64,
    pub mae: f64,
    pub scored_hours: usize,
    pub windows: usize,
    pub training_time_s: f64,
    pub prediction_time_s: f64,
}

/// Run identity stamped on every report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config_hash: String,
    pub data_fingerprint: String,
    pub seed: u64,
}

/// Hex SHA-256 of arbitrary bytes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of a series: start, then every count and mask bit, then the
/// temperature bits when present.
pub fn data_fingerprint(data: &EvalData) -> String {
    let mut h = Sha256::new();
    h.update(data.history.start().to_string().as_bytes());
    for (c, v) in data.history.counts().iter().zip(data.history.valid()) {
        h.update(c.to_le_bytes());
        h.update([u8::from(*v)]);
    }
    for t in data.tmax.iter().flatten() {
        h.update(t.to_bits().to_le_bytes());
    }
    h.update((data.train_len as u64).to_le_bytes());
    h.update((data.test_offset as u64).to_le_bytes());
    hex::encode(h.finalize())
}

/// Machine-readable report row; wall-clock timings are kept out so the
/// file is reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCsvRow {
    pub model: String,
    pub label: String,
    pub mse: f64,
    pub mae: f64,
    pub scored_hours: usize,
    pub windows: usize,
    pub features: String,
    pub input_horizon: String,
    pub forecast_horizon: String,
    pub explainable: bool,
    pub config_hash: String,
    pub data_fingerprint: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingCsvRow {
    pub model: String,
    pub training_time_s: f64,
    pub prediction_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedReport {
    pub markdown: String,
    pub csv: String,
    pub timings_csv: String,
}

fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Artifact(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Metrics table, model-summary table and their CSV forms.
pub fn render_report(rows: &[MetricsRow], meta: &RunMetadata) -> Result<RenderedReport> {
    if rows.is_empty() {
        return Err(Error::InsufficientData { required: 1, actual: 0 });
    }
    let mut md = String::from("# Forecasting results on hourly arrival counts\n\n");
    md.push_str("| Model | MSE | MAE | Training Time [s] | Prediction Time [s] |\n");
    md.push_str("|---|---|---|---|---|\n");
    for r in rows {
        md.push_str(&format!(
            "| {} | {:.2} | {:.2} | {:.2} | {:.2} |\n",
            r.model.summary().label,
            r.mse,
            r.mae,
            r.training_time_s,
            r.prediction_time_s
        ));
    }
    md.push_str("\nTimes are wall-clock seconds and depend on the machine.\n\n");
    md.push_str("# Model summary\n\n");
    md.push_str("| Model | Features | Input horizon | Forecast Horizon | Explainable |\n");
    md.push_str("|---|---|---|---|---|\n");
    for r in rows {
        let s = r.model.summary();
        md.push_str(&format!(
            "| {} | {} | {} | {} | {} |\n",
            s.label,
            s.features,
            s.input_horizon,
            s.forecast_horizon,
            if s.explainable { "Yes" } else { "No" }
        ));
    }
    md.push_str(&format!(
        "\nconfig `{}` · data `{}` · seed {}\n",
        meta.config_hash, meta.data_fingerprint, meta.seed
    ));

    let csv_rows: Vec<ReportCsvRow> = rows
        .iter()
        .map(|r| {
            let s = r.model.summary();
            ReportCsvRow {
                model: r.model.name().to_string(),
                label: s.label.to_string(),
                mse: r.mse,
                mae: r.mae,
                scored_hours: r.scored_hours,
                windows: r.windows,
                features: s.features.to_string(),
                input_horizon: s.input_horizon.to_string(),
                forecast_horizon: s.forecast_horizon.to_string(),
                explainable: s.explainable,
                config_hash: meta.config_hash.clone(),
                data_fingerprint: meta.data_fingerprint.clone(),
                seed: meta.seed,
            }
        })
        .collect();
    let timing_rows: Vec<TimingCsvRow> = rows
        .iter()
        .map(|r| TimingCsvRow {
            model: r.model.name().to_string(),
            training_time_s: (r.training_time_s * 100.0).round() / 100.0,
            prediction_time_s: (r.prediction_time_s * 100.0).round() / 100.0,
        })
        .collect();
    Ok(RenderedReport {
        markdown: md,
        csv: csv_string(&csv_rows)?,
        timings_csv: csv_string(&timing_rows)?,
    })
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportCsvRow>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastCsvRow {
    pub model: String,
    pub timestamp: HourStamp,
    /// Empty for masked hours.
    pub observed: Option<u32>,
    pub forecast: f64,
}

/// Long-format forecasts, one row per forecast hour per model.
pub fn export_forecasts<W: Write>(models: &[(&str, &[ForecastWindow])], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for (name, windows) in models {
        for win in windows.iter() {
            for (j, f) in win.forecast.iter().enumerate() {
                w.serialize(ForecastCsvRow {
                    model: (*name).to_string(),
                    timestamp: win.start.add_hours(j as i64),
                    observed: win.valid[j].then_some(win.observed[j]),
                    forecast: *f,
                })?;
            }
        }
    }
    w.flush().map_err(|e| Error::Artifact(e.to_string()))?;
    Ok(())
}
