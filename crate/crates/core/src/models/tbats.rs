//! TBATS: Box-Cox transform, damped local trend, ARMA errors and
//! trigonometric seasonality.
//!
//! On the transformed scale the one-step prediction is
//! `l + Φ·b + Σ S_j + (Σ φ_i·d_{t−i} + Σ θ_j·ε_{t−j})`; the observation
//! fixes the innovation `ε` and the ARMA error `d`, and `d` drives every
//! state update. Each seasonal component is a set of harmonic pairs
//! rotated by `λ_j = 2πj/m` per step.

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::timeseries::{ForecastResult, HourStamp, SeriesView};

/// Added to counts before the Box-Cox transform so zero counts stay in
/// the domain; subtracted again after the inverse.
pub const COUNT_OFFSET: f64 = 1.0;

pub fn boxcox(y: f64, omega: f64) -> Result<f64> {
    if omega == 0.0 {
        if y <= 0.0 {
            return Err(Error::invalid("y", format!("log transform needs y > 0, got {y}")));
        }
        Ok(y.ln())
    } else {
        if y < 0.0 || (y == 0.0 && omega < 0.0) {
            return Err(Error::invalid("y", format!("power transform undefined at {y}")));
        }
        Ok((y.powf(omega) - 1.0) / omega)
    }
}

/// Inverse of [`boxcox`]. Values outside the image of the transform map
/// to the boundary (zero).
pub fn inv_boxcox(z: f64, omega: f64) -> f64 {
    if omega == 0.0 {
        z.exp()
    } else {
        let base = omega * z + 1.0;
        if base <= 0.0 {
            0.0
        } else {
            base.powf(1.0 / omega)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbatsConfig {
    pub omega: f64,
    pub periods: Vec<usize>,
    pub harmonics: Vec<usize>,
    pub ar_order: usize,
    pub ma_order: usize,
    /// Trend damping `Φ`.
    pub phi: f64,
    /// Without a trend the slope state stays at zero.
    pub use_trend: bool,
}

impl Default for TbatsConfig {
    fn default() -> Self {
        Self {
            omega: 0.5,
            periods: vec![24, 168],
            harmonics: vec![3, 5],
            ar_order: 1,
            ma_order: 1,
            phi: 0.98,
            use_trend: true,
        }
    }
}

impl TbatsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods.len() != self.harmonics.len() {
            return Err(Error::invalid("harmonics", "one harmonic count per period"));
        }
        if self.periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("periods", "must be strictly increasing"));
        }
        for (&m, &k) in self.periods.iter().zip(&self.harmonics) {
            if k == 0 || 2 * k > m {
                return Err(Error::invalid("harmonics", format!("k={k} invalid for period {m}")));
            }
        }
        if self.use_trend && !(self.phi > 0.0 && self.phi <= 1.0) && self.phi != 0.0 {
            return Err(Error::invalid("phi", format!("{} outside [0, 1]", self.phi)));
        }
        if !self.omega.is_finite() {
            return Err(Error::invalid("omega", "must be finite"));
        }
        Ok(())
    }

    fn max_period(&self) -> usize {
        self.periods.iter().copied().max().unwrap_or(1)
    }

    fn frequencies(&self) -> Vec<Vec<(f64, f64)>> {
        self.periods
            .iter()
            .zip(&self.harmonics)
            .map(|(&m, &k)| {
                (1..=k)
                    .map(|j| {
                        let lambda = 2.0 * PI * j as f64 / m as f64;
                        (lambda.cos(), lambda.sin())
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbatsParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma1: Vec<f64>,
    pub gamma2: Vec<f64>,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// Long-run slope the damped trend reverts to.
    pub long_run_trend: f64,
    pub level0: f64,
    pub trend0: f64,
    /// Per period, `(S_j, S*_j)` for each harmonic.
    pub seasonal0: Vec<Vec<(f64, f64)>>,
}

impl TbatsParams {
    pub fn is_finite(&self) -> bool {
        [self.alpha, self.beta, self.long_run_trend, self.level0, self.trend0]
            .iter()
            .chain(&self.gamma1)
            .chain(&self.gamma2)
            .chain(&self.ar)
            .chain(&self.ma)
            .all(|v| v.is_finite())
            && self
                .seasonal0
                .iter()
                .flatten()
                .all(|(a, b)| a.is_finite() && b.is_finite())
    }

    /// True when the AR polynomial `1 − Σ φ_i zⁱ` has all roots outside
    /// the unit circle (checked for orders up to 2 exactly, otherwise by
    /// the sufficient condition `Σ|φ_i| < 1`).
    pub fn ar_is_stationary(&self) -> bool {
        match self.ar.as_slice() {
            [] => true,
            [a] => a.abs() < 1.0,
            [a, b] => b.abs() < 1.0 && a + b < 1.0 && b - a < 1.0,
            coeffs => coeffs.iter().map(|c| c.abs()).sum::<f64>() < 1.0,
        }
    }

    /// As [`Self::ar_is_stationary`], for the MA polynomial `1 + Σ θ_j zʲ`.
    pub fn ma_is_invertible(&self) -> bool {
        match self.ma.as_slice() {
            [] => true,
            [a] => a.abs() < 1.0,
            [a, b] => b.abs() < 1.0 && b - a > -1.0 && a + b > -1.0,
            coeffs => coeffs.iter().map(|c| c.abs()).sum::<f64>() < 1.0,
        }
    }

    pub fn initial_state(&self, config: &TbatsConfig) -> TbatsState {
        TbatsState {
            level: self.level0,
            trend: if config.use_trend { self.trend0 } else { 0.0 },
            seasonal: self.seasonal0.clone(),
            d_history: VecDeque::from(vec![0.0; config.ar_order]),
            eps_history: VecDeque::from(vec![0.0; config.ma_order]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbatsState {
    pub level: f64,
    pub trend: f64,
    pub seasonal: Vec<Vec<(f64, f64)>>,
    /// Most recent first.
    pub d_history: VecDeque<f64>,
    /// Most recent first.
    pub eps_history: VecDeque<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// One-step prediction on the transformed scale.
    pub fitted: f64,
    pub innovation: f64,
    pub next: TbatsState,
}

/// Advances one hour. `observed` is on the transformed scale; `None`
/// means a forecast step with zero innovation.
pub fn tbats_step(state: &TbatsState, params: &TbatsParams, config: &TbatsConfig, observed: Option<f64>) -> StepOutput {
    let freqs = config.frequencies();
    let mut next = state.clone();
    let (fitted, innovation) = step_in_place(&mut next, params, config, &freqs, observed);
    StepOutput {
        fitted,
        innovation,
        next,
    }
}

fn step_in_place(
    st: &mut TbatsState,
    params: &TbatsParams,
    config: &TbatsConfig,
    freqs: &[Vec<(f64, f64)>],
    observed: Option<f64>,
) -> (f64, f64) {
    let phi = if config.use_trend { config.phi } else { 0.0 };
    let seasonal_sum: f64 = st.seasonal.iter().flatten().map(|(s, _)| s).sum();
    let arma: f64 = params.ar.iter().zip(&st.d_history).map(|(a, d)| a * d).sum::<f64>()
        + params.ma.iter().zip(&st.eps_history).map(|(m, e)| m * e).sum::<f64>();
    let fitted = st.level + phi * st.trend + seasonal_sum + arma;
    let eps = observed.map_or(0.0, |y| y - fitted);
    let d = arma + eps;

    let level = st.level + phi * st.trend + params.alpha * d;
    let trend = if config.use_trend {
        (1.0 - phi) * params.long_run_trend + phi * st.trend + params.beta * d
    } else {
        0.0
    };
    st.level = level;
    st.trend = trend;
    for (i, comp) in st.seasonal.iter_mut().enumerate() {
        let (g1, g2) = (params.gamma1[i], params.gamma2[i]);
        for ((s, s_star), (c, sn)) in comp.iter_mut().zip(&freqs[i]) {
            let new_s = *s * c + *s_star * sn + g1 * d;
            let new_star = -*s * sn + *s_star * c + g2 * d;
            *s = new_s;
            *s_star = new_star;
        }
    }
    if config.ar_order > 0 {
        st.d_history.pop_back();
        st.d_history.push_front(d);
    }
    if config.ma_order > 0 {
        st.eps_history.pop_back();
        st.eps_history.push_front(eps);
    }
    (fitted, eps)
}

/// Runs the model over transformed observations (`None` = unobserved),
/// returning the innovation sum of squares, the one-step predictions and
/// the final state.
pub fn run_filter(
    params: &TbatsParams,
    config: &TbatsConfig,
    observations: &[Option<f64>],
) -> (f64, Vec<f64>, TbatsState) {
    let freqs = config.frequencies();
    let mut st = params.initial_state(config);
    let mut sse = 0.0;
    let mut fitted = Vec::with_capacity(observations.len());
    for obs in observations {
        let (f, e) = step_in_place(&mut st, params, config, &freqs, *obs);
        sse += e * e;
        fitted.push(f);
    }
    (sse, fitted, st)
}

fn logistic(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

const GAMMA_SCALE: f64 = 0.05;
const ARMA_BOUND: f64 = 0.98;
const START_ALPHA: f64 = 0.1;
const START_BETA_SHARE: f64 = 0.01;

/// Unconstrained optimizer coordinates ↔ smoothing/ARMA parameters.
struct Parameterization<'a> {
    config: &'a TbatsConfig,
    base: TbatsParams,
}

impl Parameterization<'_> {
    fn len(&self) -> usize {
        1 + usize::from(self.config.use_trend)
            + 2 * self.config.periods.len()
            + self.config.ar_order
            + self.config.ma_order
    }

    fn start(&self) -> Vec<f64> {
        let mut u = vec![logit(START_ALPHA)];
        if self.config.use_trend {
            u.push(logit(START_BETA_SHARE));
        }
        u.resize(self.len(), 0.0);
        u
    }

    fn decode(&self, u: &[f64]) -> TbatsParams {
        let mut it = u.iter().copied();
        let mut p = self.base.clone();
        p.alpha = logistic(it.next().expect("alpha coordinate"));
        p.beta = if self.config.use_trend {
            p.alpha * logistic(it.next().expect("beta coordinate"))
        } else {
            0.0
        };
        let n = self.config.periods.len();
        p.gamma1 = (0..n).map(|_| GAMMA_SCALE * it.next().unwrap().tanh()).collect();
        p.gamma2 = (0..n).map(|_| GAMMA_SCALE * it.next().unwrap().tanh()).collect();
        p.ar = (0..self.config.ar_order)
            .map(|_| ARMA_BOUND * it.next().unwrap().tanh())
            .collect();
        p.ma = (0..self.config.ma_order)
            .map(|_| ARMA_BOUND * it.next().unwrap().tanh())
            .collect();
        p
    }
}

/// Per seasonal period, `(S_j, S*_j)` for each harmonic.
type Harmonics = Vec<Vec<(f64, f64)>>;

/// Level, slope and harmonic coefficients from a least-squares fit of the
/// transformed series on `[1, t, cos λt, sin λt, …]`.
fn initial_states(config: &TbatsConfig, observations: &[Option<f64>]) -> Result<(f64, f64, Harmonics)> {
    let span = observations.len().min(10 * config.max_period().max(24));
    let points: Vec<(usize, f64)> = observations[..span]
        .iter()
        .enumerate()
        .filter_map(|(t, o)| o.map(|y| (t, y)))
        .collect();
    let n_harm: usize = config.harmonics.iter().sum();
    let cols = 1 + usize::from(config.use_trend) + 2 * n_harm;
    if points.len() < cols {
        return Err(Error::InsufficientData {
            required: cols,
            actual: points.len(),
        });
    }
    let x = DMatrix::from_fn(points.len(), cols, |r, c| {
        let t = points[r].0 as f64;
        if c == 0 {
            return 1.0;
        }
        let mut c = c - 1;
        if config.use_trend {
            if c == 0 {
                return t;
            }
            c -= 1;
        }
        let (mut pair, is_sin) = (c / 2, c % 2 == 1);
        for (&m, &k) in config.periods.iter().zip(&config.harmonics) {
            if pair < k {
                let lambda = 2.0 * PI * (pair + 1) as f64 / m as f64;
                return if is_sin { (lambda * t).sin() } else { (lambda * t).cos() };
            }
            pair -= k;
        }
        unreachable!("column index within harmonic count")
    });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let coef = x
        .svd(true, true)
        .solve(&y, 1e-10)
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let intercept = coef[0];
    let slope = if config.use_trend { coef[1] } else { 0.0 };
    let offset = 1 + usize::from(config.use_trend);
    let mut seasonal = Vec::new();
    let mut idx = offset;
    for &k in &config.harmonics {
        seasonal.push((0..k).map(|j| (coef[idx + 2 * j], coef[idx + 2 * j + 1])).collect());
        idx += 2 * k;
    }
    let phi = if config.use_trend { config.phi } else { 0.0 };
    Ok((intercept - phi * slope, slope, seasonal))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TbatsFit {
    pub config: TbatsConfig,
    pub params: TbatsParams,
    /// State after the last training hour.
    pub state: TbatsState,
    /// Innovation sum of squares at the returned parameters.
    pub objective: f64,
    /// Innovation sum of squares at the deterministic start.
    pub start_objective: f64,
    /// One-step squared error on the count scale, used to compare Box-Cox
    /// parameters.
    pub count_scale_sse: f64,
    pub converged: bool,
}

fn transform_series(counts: &[u32], valid: &[bool], omega: f64) -> Result<Vec<Option<f64>>> {
    counts
        .iter()
        .zip(valid)
        .map(|(&c, &ok)| {
            if ok {
                boxcox(f64::from(c) + COUNT_OFFSET, omega).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Parameters fitted on the transformed scale.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedFit {
    pub params: TbatsParams,
    pub state: TbatsState,
    pub objective: f64,
    pub start_objective: f64,
    /// One-step predictions at the returned parameters.
    pub fitted: Vec<f64>,
    pub converged: bool,
}

/// Fits smoothing and ARMA parameters to transformed observations
/// (`None` = unobserved) by minimizing the innovation sum of squares with
/// Nelder–Mead from a fixed start. Initial states come from a Fourier
/// regression and are held fixed.
pub fn fit_transformed(
    observations: &[Option<f64>],
    config: &TbatsConfig,
    max_opt_iters: usize,
) -> Result<TransformedFit> {
    config.validate()?;
    let need = 2 * config.max_period().max(1);
    if observations.len() < need {
        return Err(Error::InsufficientData {
            required: need,
            actual: observations.len(),
        });
    }
    let (level0, trend0, seasonal0) = initial_states(config, observations)?;
    let n = config.periods.len();
    let base = TbatsParams {
        alpha: START_ALPHA,
        beta: 0.0,
        gamma1: vec![0.0; n],
        gamma2: vec![0.0; n],
        ar: vec![0.0; config.ar_order],
        ma: vec![0.0; config.ma_order],
        long_run_trend: 0.0,
        level0,
        trend0,
        seasonal0,
    };
    let param = Parameterization { config, base };
    let objective = |u: &[f64]| {
        let p = param.decode(u);
        let (sse, _, st) = run_filter(&p, config, observations);
        if st.level.is_finite() {
            sse
        } else {
            f64::INFINITY
        }
    };
    let start = param.start();
    let start_objective = objective(&start);
    let opts = NelderMeadOptions {
        max_iters: max_opt_iters,
        f_tol: 1e-10,
        step: 0.5,
    };
    let min = nelder_mead(objective, &start, &opts);
    let (u, converged) = if min.value <= start_objective {
        (min.x, min.converged)
    } else {
        (start, false)
    };
    let params = param.decode(&u);
    let (objective, fitted, state) = run_filter(&params, config, observations);
    Ok(TransformedFit {
        params,
        state,
        objective,
        start_objective,
        fitted,
        converged,
    })
}

/// Fits on hourly counts: offset, Box-Cox transform, then
/// [`fit_transformed`].
pub fn tbats_fit(train: SeriesView<'_>, config: &TbatsConfig, max_opt_iters: usize) -> Result<TbatsFit> {
    config.validate()?;
    let observations = transform_series(train.counts, train.valid, config.omega)?;
    let fit = fit_transformed(&observations, config, max_opt_iters)?;
    let count_scale_sse = fit
        .fitted
        .iter()
        .zip(train.counts.iter().zip(train.valid))
        .filter(|(_, (_, ok))| **ok)
        .map(|(f, (c, _))| {
            let pred = inv_boxcox(*f, config.omega) - COUNT_OFFSET;
            (pred - f64::from(*c)).powi(2)
        })
        .sum();
    Ok(TbatsFit {
        config: config.clone(),
        params: fit.params,
        state: fit.state,
        objective: fit.objective,
        start_objective: fit.start_objective,
        count_scale_sse,
        converged: fit.converged,
    })
}

/// Iterates forecast steps from `state`, mapping each prediction back to
/// the count scale and clamping at zero.
pub fn tbats_forecast(
    params: &TbatsParams,
    state: &TbatsState,
    config: &TbatsConfig,
    origin: HourStamp,
    horizon_hours: usize,
) -> Result<ForecastResult> {
    let points = forecast_path(params, state, config, horizon_hours)
        .into_iter()
        .map(|z| (inv_boxcox(z, config.omega) - COUNT_OFFSET).max(0.0))
        .collect();
    ForecastResult::new(origin, points, None)
}

/// Transformed-scale predictions for the next `steps` hours.
pub fn forecast_path(params: &TbatsParams, state: &TbatsState, config: &TbatsConfig, steps: usize) -> Vec<f64> {
    let freqs = config.frequencies();
    let mut st = state.clone();
    (0..steps)
        .map(|_| step_in_place(&mut st, params, config, &freqs, None).0)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TbatsSettings {
    pub omega_grid: Vec<f64>,
    pub periods: Vec<usize>,
    pub harmonics: Vec<usize>,
    pub arma_p: usize,
    pub arma_q: usize,
    pub phi: f64,
    pub use_trend: bool,
    pub max_opt_iters: usize,
}

impl Default for TbatsSettings {
    fn default() -> Self {
        let c = TbatsConfig::default();
        Self {
            omega_grid: vec![0.0, 0.5, 1.0],
            periods: c.periods,
            harmonics: c.harmonics,
            arma_p: c.ar_order,
            arma_q: c.ma_order,
            phi: c.phi,
            use_trend: c.use_trend,
            max_opt_iters: 400,
        }
    }
}

impl TbatsSettings {
    pub fn config(&self, omega: f64) -> TbatsConfig {
        TbatsConfig {
            omega,
            periods: self.periods.clone(),
            harmonics: self.harmonics.clone(),
            ar_order: self.arma_p,
            ma_order: self.arma_q,
            phi: self.phi,
            use_trend: self.use_trend,
        }
    }
}

/// Fits each Box-Cox candidate and keeps the one with the smallest
/// count-scale one-step error (ties to the earlier candidate).
pub fn fit_over_omega_grid(train: SeriesView<'_>, settings: &TbatsSettings) -> Result<TbatsFit> {
    if settings.omega_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let fits: Vec<Result<TbatsFit>> = settings
        .omega_grid
        .par_iter()
        .map(|&w| tbats_fit(train, &settings.config(w), settings.max_opt_iters))
        .collect();
    let mut best: Option<TbatsFit> = None;
    let mut first_err = None;
    for fit in fits {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.count_scale_sse < b.count_scale_sse) {
                    best = Some(f);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one candidate"))
}

/// Fit once on the training span, then forecast any later span from the
/// end-of-training state.
#[derive(Debug, Clone)]
pub struct TbatsForecaster {
    pub settings: TbatsSettings,
    pub fit: Option<TbatsFit>,
    pub fitted_end: Option<HourStamp>,
}

impl TbatsForecaster {
    pub fn new(settings: TbatsSettings) -> Self {
        Self {
            settings,
            fit: None,
            fitted_end: None,
        }
    }
}

impl Forecaster for TbatsForecaster {
    fn context_hours(&self) -> usize {
        0
    }

    fn fit(&mut self, train: SeriesView<'_>) -> Result<()> {
        self.fit = Some(fit_over_omega_grid(train, &self.settings)?);
        self.fitted_end = Some(train.end());
        Ok(())
    }

    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult> {
        let (fit, end) = match (&self.fit, self.fitted_end) {
            (Some(f), Some(e)) => (f, e),
            _ => return Err(Error::NotFitted),
        };
        let lead = context.end().hours_since(end);
        if lead < 0 {
            return Err(Error::invalid("context", "ends before the training span"));
        }
        let lead = lead as usize;
        let path = forecast_path(&fit.params, &fit.state, &fit.config, lead + horizon);
        let point = path[lead..]
            .iter()
            .map(|z| (inv_boxcox(*z, fit.config.omega) - COUNT_OFFSET).max(0.0))
            .collect();
        ForecastResult::new(context.end().add_hours(-1), point, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_params(config: &TbatsConfig, level: f64, seasonal0: Vec<Vec<(f64, f64)>>) -> TbatsParams {
        let n = config.periods.len();
        TbatsParams {
            alpha: 0.0,
            beta: 0.0,
            gamma1: vec![0.0; n],
            gamma2: vec![0.0; n],
            ar: vec![0.0; config.ar_order],
            ma: vec![0.0; config.ma_order],
            long_run_trend: 0.0,
            level0: level,
            trend0: 0.0,
            seasonal0,
        }
    }

    fn no_arma(periods: Vec<usize>, harmonics: Vec<usize>) -> TbatsConfig {
        TbatsConfig {
            omega: 1.0,
            periods,
            harmonics,
            ar_order: 0,
            ma_order: 0,
            phi: 1.0,
            use_trend: false,
        }
    }

    #[test]
    fn boxcox_cases() {
        assert!((boxcox(std::f64::consts::E, 0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(boxcox(5.0, 1.0).unwrap(), 4.0);
        assert!(boxcox(0.0, 0.0).is_err());
        assert!(boxcox(-1.0, 0.5).is_err());
        assert_eq!(inv_boxcox(-10.0, 0.5), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(TbatsConfig::default().validate().is_ok());
        let bad = TbatsConfig {
            harmonics: vec![13, 5],
            ..TbatsConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TbatsConfig {
            periods: vec![168, 24],
            ..TbatsConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn zero_phi_trend_update() {
        let config = TbatsConfig {
            phi: 0.0,
            ar_order: 0,
            ma_order: 0,
            periods: vec![],
            harmonics: vec![],
            ..TbatsConfig::default()
        };
        let mut p = quiet_params(&config, 2.0, vec![]);
        p.beta = 0.3;
        p.alpha = 0.2;
        p.long_run_trend = 0.7;
        let mut st = p.initial_state(&config);
        st.trend = 5.0;
        let out = tbats_step(&st, &p, &config, Some(4.5));
        let d = out.innovation;
        assert_eq!(out.fitted, 2.0);
        assert_eq!(out.next.trend, 0.7 + 0.3 * d);
    }

    #[test]
    fn constant_series_level_only() {
        let config = no_arma(vec![], vec![]);
        let mut p = quiet_params(&config, 3.0, vec![]);
        p.alpha = 0.5;
        let obs = vec![Some(7.0); 10];
        let freqs = config.frequencies();
        let mut st = p.initial_state(&config);
        let mut innovations = Vec::new();
        for o in &obs {
            // alpha = 1 from the second step puts the level on the constant
            let (_, e) = step_in_place(&mut st, &p, &config, &freqs, *o);
            innovations.push(e);
            p.alpha = 1.0;
        }
        assert_eq!(innovations[0], 4.0);
        assert!(innovations[2..].iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn ar_ma_checks() {
        let config = TbatsConfig::default();
        let mut p = quiet_params(&config, 0.0, vec![vec![(0.0, 0.0); 3], vec![(0.0, 0.0); 5]]);
        p.ar = vec![0.5];
        p.ma = vec![-0.3];
        assert!(p.ar_is_stationary() && p.ma_is_invertible());
        p.ar = vec![1.2];
        assert!(!p.ar_is_stationary());
    }

    #[test]
    fn level_only_forecast_is_constant() {
        let config = no_arma(vec![], vec![]);
        let p = quiet_params(&config, 4.0, vec![]);
        let origin = HourStamp::new(2004, 1, 5, 0).unwrap();
        let f = tbats_forecast(&p, &p.initial_state(&config), &config, origin, 30).unwrap();
        assert!(f
            .point
            .iter()
            .all(|v| (v - (inv_boxcox(4.0, 1.0) - COUNT_OFFSET)).abs() < 1e-12));
        assert!(tbats_forecast(&p, &p.initial_state(&config), &config, origin, 0)
            .unwrap()
            .point
            .is_empty());
    }

    #[test]
    fn short_series_rejected() {
        let counts = vec![3u32; 100];
        let valid = vec![true; 100];
        let view = SeriesView {
            start: HourStamp::new(2004, 1, 5, 0).unwrap(),
            counts: &counts,
            valid: &valid,
            tmax: None,
        };
        assert!(matches!(
            tbats_fit(view, &TbatsConfig::default(), 10),
            Err(Error::InsufficientData { .. })
        ));
    }
}
