//! Time-varying linear regression tracked by a Kalman filter.
//!
//! The hidden coefficient vector follows `β_i = B·β_{i−1} + ε₁` with
//! `B = diag(α)` and `ε₁ ~ N(0, q·I)`, and each hourly count is observed
//! as `y_i = h_i·β_i + ε₂` with `ε₂ ~ N(0, σ²)`. The regressors `h_i` are
//! a day-of-week one-hot, the count one week earlier, and an intercept.
//!
//! Observations are processed one hour at a time. The marginal likelihood
//! of the sequence is the product of the one-step predictive Gaussians,
//! so hyperparameters are chosen by an exhaustive grid over it.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::timeseries::{
    hour_of_week, ForecastResult, Gaussian1D, HourStamp, SeriesView, HOURS_PER_DAY, HOURS_PER_WEEK,
};

/// Regressor count of [`build_design_row`]: 7 day indicators, the lag-168
/// count, and an intercept.
pub const DESIGN_DIM: usize = 9;
const LAG_INDEX: usize = 7;
const INTERCEPT_INDEX: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanHyperParams {
    /// Diagonal of the state transition matrix.
    pub alpha: DVector<f64>,
    /// Observation noise standard deviation.
    pub sigma: f64,
    /// State noise variance (diagonal of Q).
    pub q_scale: f64,
    pub mu0: DVector<f64>,
    pub v0: DMatrix<f64>,
}

impl KalmanHyperParams {
    /// Shared `alpha` on every state, `μ₀ = 0`, `V₀ = prior_scale²·I`.
    pub fn isotropic(dim: usize, alpha: f64, sigma: f64, q_scale: f64, prior_scale: f64) -> Self {
        Self {
            alpha: DVector::from_element(dim, alpha),
            sigma,
            q_scale,
            mu0: DVector::zeros(dim),
            v0: DMatrix::identity(dim, dim) * (prior_scale * prior_scale),
        }
    }

    pub fn dim(&self) -> usize {
        self.alpha.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if !(self.sigma > 0.0) {
            return Err(Error::invalid("sigma", "must be positive"));
        }
        if !(self.q_scale >= 0.0) {
            return Err(Error::invalid("q_scale", "must be non-negative"));
        }
        if self.mu0.len() != d || self.v0.shape() != (d, d) {
            return Err(Error::invalid("mu0/v0", format!("dimensions must match alpha ({d})")));
        }
        if (&self.v0 - self.v0.transpose()).abs().max() > 1e-12 * (1.0 + self.v0.abs().max()) {
            return Err(Error::invalid("v0", "must be symmetric"));
        }
        Ok(())
    }

    pub fn initial_state(&self) -> StateEstimate {
        StateEstimate {
            mu: self.mu0.clone(),
            v: self.v0.clone(),
        }
    }
}

/// Posterior mean and covariance of the coefficient vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateEstimate {
    pub mu: DVector<f64>,
    pub v: DMatrix<f64>,
}

/// One-step-ahead prior `(B·μ, B·V·Bᵀ + Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriorEstimate {
    pub mean: DVector<f64>,
    pub p: DMatrix<f64>,
}

/// Regressor row for one observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow(pub DVector<f64>);

impl DesignRow {
    pub fn from_slice(values: &[f64]) -> Self {
        DesignRow(DVector::from_column_slice(values))
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }
}

pub fn build_design_row(hour_of_week: usize, lag168_count: u32) -> Result<DesignRow> {
    if hour_of_week >= HOURS_PER_WEEK {
        return Err(Error::invalid("hour_of_week", format!("{hour_of_week} outside 0..168")));
    }
    let mut h = DVector::zeros(DESIGN_DIM);
    h[hour_of_week / HOURS_PER_DAY] = 1.0;
    h[LAG_INDEX] = f64::from(lag168_count);
    h[INTERCEPT_INDEX] = 1.0;
    Ok(DesignRow(h))
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in i + 1..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

pub fn predict_step(state: &StateEstimate, hp: &KalmanHyperParams) -> PriorEstimate {
    let a = &hp.alpha;
    let mean = state.mu.component_mul(a);
    let mut p = DMatrix::from_fn(a.len(), a.len(), |i, j| a[i] * state.v[(i, j)] * a[j]);
    for i in 0..a.len() {
        p[(i, i)] += hp.q_scale;
    }
    symmetrize(&mut p);
    PriorEstimate { mean, p }
}

pub fn predictive_density(prior: &PriorEstimate, h: &DesignRow, sigma: f64) -> Gaussian1D {
    let h = &h.0;
    Gaussian1D {
        mean: h.dot(&prior.mean),
        variance: sigma * sigma + (&prior.p * h).dot(h),
    }
}

pub fn update_step(prior: &PriorEstimate, h: &DesignRow, y: f64, sigma: f64) -> StateEstimate {
    let hv = &h.0;
    let ph = &prior.p * hv;
    let s = sigma * sigma + ph.dot(hv);
    let gain = &ph / s;
    let mu = &prior.mean + &gain * (y - hv.dot(&prior.mean));
    // P − G·h·P = P − (P·hᵀ)(h·P)/s
    let mut v = &prior.p - &gain * ph.transpose();
    symmetrize(&mut v);
    StateEstimate { mu, v }
}

/// Result of filtering a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterRun {
    pub log_likelihood: f64,
    /// Observations that contributed a likelihood term.
    pub observed: usize,
    pub state: StateEstimate,
}

/// Runs the filter from `state`. `None` entries advance the state without
/// an observation and contribute nothing to the likelihood.
pub fn filter<'a>(
    state: StateEstimate,
    hp: &KalmanHyperParams,
    observations: impl IntoIterator<Item = Option<(&'a DesignRow, f64)>>,
) -> FilterRun {
    let mut state = state;
    let mut log_likelihood = 0.0;
    let mut observed = 0;
    for obs in observations {
        let prior = predict_step(&state, hp);
        state = match obs {
            Some((h, y)) => {
                log_likelihood += predictive_density(&prior, h, hp.sigma).log_pdf(y);
                observed += 1;
                update_step(&prior, h, y, hp.sigma)
            }
            None => StateEstimate {
                mu: prior.mean,
                v: prior.p,
            },
        };
    }
    FilterRun {
        log_likelihood,
        observed,
        state,
    }
}

/// `log p(y₁, …, y_T)` starting from `(μ₀, V₀)`.
pub fn log_marginal_likelihood(ys: &[f64], rows: &[DesignRow], hp: &KalmanHyperParams) -> Result<f64> {
    if ys.len() != rows.len() {
        return Err(Error::LengthMismatch {
            left: ys.len(),
            right: rows.len(),
        });
    }
    hp.validate()?;
    let run = filter(hp.initial_state(), hp, rows.iter().zip(ys).map(|(h, y)| Some((h, *y))));
    Ok(run.log_likelihood)
}

/// Per-hour observations of a series: `Some` when both the hour and the
/// hour one week earlier are valid. The first week only advances the
/// state.
pub fn series_observations(series: SeriesView<'_>) -> Vec<Option<(DesignRow, f64)>> {
    (0..series.len()).map(|i| hour_observation(series, i)).collect()
}

fn hour_observation(series: SeriesView<'_>, i: usize) -> Option<(DesignRow, f64)> {
    if i < HOURS_PER_WEEK || !series.valid[i] || !series.valid[i - HOURS_PER_WEEK] {
        return None;
    }
    let how = hour_of_week(series.start.add_hours(i as i64));
    let row = build_design_row(how, series.counts[i - HOURS_PER_WEEK]).expect("hour of week in range");
    Some((row, f64::from(series.counts[i])))
}

/// Candidate values for the hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanGrid {
    pub alpha: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Ignored when the state noise is tied to the observation noise.
    pub q_scale: Vec<f64>,
    /// `q = σ²` when true.
    pub tie_noise: bool,
}

impl Default for KalmanGrid {
    fn default() -> Self {
        Self {
            alpha: vec![0.90, 0.95, 0.99, 1.0],
            sigma: vec![1.0, 2.0, 3.0, 4.0, 5.0],
            q_scale: vec![1e-6, 1e-5, 1e-4, 1e-3],
            tie_noise: true,
        }
    }
}

impl KalmanGrid {
    /// Every `(alpha, sigma, q_scale)` point in axis order.
    pub fn points(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::new();
        for &a in &self.alpha {
            for &s in &self.sigma {
                if self.tie_noise {
                    out.push((a, s, s * s));
                } else {
                    for &q in &self.q_scale {
                        out.push((a, s, q));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    pub best: KalmanHyperParams,
    pub best_log_likelihood: f64,
    /// `(alpha, sigma, q_scale, log-likelihood)` for every grid point.
    pub evaluations: Vec<(f64, f64, f64, f64)>,
}

/// Exhaustive search over `grid`, scoring each point by the marginal
/// likelihood of the prepared observations. Ties go to the smallest
/// `(sigma, q_scale, |alpha − 1|)`.
pub fn grid_search_observations(
    observations: &[Option<(DesignRow, f64)>],
    dim: usize,
    grid: &KalmanGrid,
    prior_scale: f64,
) -> Result<GridSearchResult> {
    let points = grid.points();
    if points.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let evaluations: Vec<(f64, f64, f64, f64)> = points
        .par_iter()
        .map(|&(a, s, q)| {
            let hp = KalmanHyperParams::isotropic(dim, a, s, q, prior_scale);
            let run = filter(
                hp.initial_state(),
                &hp,
                observations.iter().map(|o| o.as_ref().map(|(h, y)| (h, *y))),
            );
            let ll = if run.log_likelihood.is_nan() {
                f64::NEG_INFINITY
            } else {
                run.log_likelihood
            };
            (a, s, q, ll)
        })
        .collect();

    let tie_key = |e: &(f64, f64, f64, f64)| (e.1, e.2, (e.0 - 1.0).abs());
    let best = evaluations
        .iter()
        .copied()
        .reduce(|best, e| {
            if e.3 > best.3 || (e.3 == best.3 && tie_key(&e) < tie_key(&best)) {
                e
            } else {
                best
            }
        })
        .expect("non-empty grid");
    for &(a, s, q, _) in &evaluations {
        KalmanHyperParams::isotropic(dim, a, s, q, prior_scale).validate()?;
    }
    Ok(GridSearchResult {
        best: KalmanHyperParams::isotropic(dim, best.0, best.1, best.2, prior_scale),
        best_log_likelihood: best.3,
        evaluations,
    })
}

/// Grid search on an hourly training series using the standard design.
pub fn grid_search(train: SeriesView<'_>, grid: &KalmanGrid, prior_scale: f64) -> Result<GridSearchResult> {
    grid_search_observations(&series_observations(train), DESIGN_DIM, grid, prior_scale)
}

/// Forecasts the hours described by `rows` from the end-of-week state
/// without updating it: mean `h·B·μ`, variance `σ² + h·P·hᵀ`.
pub fn forecast_week(
    state: &StateEstimate,
    hp: &KalmanHyperParams,
    origin: HourStamp,
    rows: &[DesignRow],
) -> Result<ForecastResult> {
    let prior = predict_step(state, hp);
    let (point, var): (Vec<f64>, Vec<f64>) = rows
        .iter()
        .map(|h| {
            let g = predictive_density(&prior, h, hp.sigma);
            (g.mean.max(0.0), g.variance)
        })
        .unzip();
    ForecastResult::new(origin, point, Some(var))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanConfig {
    pub grid: KalmanGrid,
    /// Prior standard deviation of each coefficient (`V₀ = scale²·I`).
    pub prior_scale: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self {
            grid: KalmanGrid::default(),
            prior_scale: 10.0,
        }
    }
}

/// Fitted model plus the filter state, which keeps absorbing observed
/// hours as forecasting moves forward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TvLinearState {
    pub hp: KalmanHyperParams,
    pub state: StateEstimate,
    /// First hour not yet absorbed by the filter.
    pub next_hour: HourStamp,
}

#[derive(Debug, Clone)]
pub struct TvLinearForecaster {
    pub config: KalmanConfig,
    pub fitted: Option<TvLinearState>,
    pub last_search: Option<GridSearchResult>,
}

impl TvLinearForecaster {
    pub fn new(config: KalmanConfig) -> Self {
        Self {
            config,
            fitted: None,
            last_search: None,
        }
    }

    /// Brings the filter up to `context.end()`.
    fn absorb(&mut self, context: SeriesView<'_>) -> Result<()> {
        let fitted = self.fitted.as_mut().ok_or(Error::NotFitted)?;
        let from = fitted.next_hour.hours_since(context.start);
        if from < 0 {
            return Err(Error::invalid("context", "starts after the filter position"));
        }
        let from = from as usize;
        if from >= context.len() {
            return Ok(());
        }
        let obs: Vec<Option<(DesignRow, f64)>> = (from..context.len()).map(|i| hour_observation(context, i)).collect();
        let run = filter(
            fitted.state.clone(),
            &fitted.hp,
            obs.iter().map(|o| o.as_ref().map(|(h, y)| (h, *y))),
        );
        fitted.state = run.state;
        fitted.next_hour = context.end();
        Ok(())
    }
}

impl Forecaster for TvLinearForecaster {
    fn context_hours(&self) -> usize {
        HOURS_PER_WEEK
    }

    fn fit(&mut self, train: SeriesView<'_>) -> Result<()> {
        let observations = series_observations(train);
        let search = grid_search_observations(&observations, DESIGN_DIM, &self.config.grid, self.config.prior_scale)?;
        let hp = search.best.clone();
        let run = filter(
            hp.initial_state(),
            &hp,
            observations.iter().map(|o| o.as_ref().map(|(h, y)| (h, *y))),
        );
        self.fitted = Some(TvLinearState {
            hp,
            state: run.state,
            next_hour: train.end(),
        });
        self.last_search = Some(search);
        Ok(())
    }

    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult> {
        if horizon > HOURS_PER_WEEK {
            return Err(Error::invalid("horizon", format!("{horizon} exceeds one week")));
        }
        self.absorb(context)?;
        let last_week = context.tail(HOURS_PER_WEEK).ok_or(Error::InsufficientData {
            required: HOURS_PER_WEEK,
            actual: context.len(),
        })?;
        if !last_week.valid[..horizon].iter().all(|v| *v) {
            return Err(Error::MaskedInput);
        }
        let rows = (0..horizon)
            .map(|j| build_design_row(context.end().add_hours(j as i64).hour_of_week(), last_week.counts[j]))
            .collect::<Result<Vec<_>>>()?;
        let fitted = self.fitted.as_ref().ok_or(Error::NotFitted)?;
        forecast_week(&fitted.state, &fitted.hp, context.end().add_hours(-1), &rows)
    }
}
