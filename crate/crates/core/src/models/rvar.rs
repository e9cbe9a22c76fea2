//! Reduced-rank vector autoregression on weekly vectors.
//!
//! Each week is a 168-vector. The target week is regressed on the `p`
//! preceding weeks through a coefficient matrix factored as `W·V` with
//! inner dimension `R`, fitted by alternating least squares on
//! `½‖X2 − W·V·X1‖²_F`. Each half-step is the exact least-squares
//! minimizer via a pseudoinverse, so the objective never increases.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::timeseries::{slice_weeks, ForecastResult, SeriesView, WeekBlock, HOURS_PER_WEEK};

/// Stacked predictor and target columns.
#[derive(Debug, Clone, PartialEq)]
pub struct LagMatrices {
    /// `p·N × n`; column k stacks weeks `k+p−1, …, k`, most recent first.
    pub predictors: DMatrix<f64>,
    /// `N × n`; column k is week `k+p`.
    pub targets: DMatrix<f64>,
    pub lag_order: usize,
    /// Per-position mean of the fully observed blocks, already subtracted.
    pub mean: DVector<f64>,
}

impl LagMatrices {
    pub fn block_len(&self) -> usize {
        self.targets.nrows()
    }

    pub fn columns(&self) -> usize {
        self.targets.ncols()
    }
}

/// Builds lag matrices from week blocks. Columns touching a week with any
/// masked hour are dropped.
pub fn build_lag_matrices(weeks: &[WeekBlock], lag_order: usize) -> Result<LagMatrices> {
    let blocks: Vec<(&[f64], bool)> = weeks.iter().map(|w| (w.values(), w.is_fully_observed())).collect();
    lag_matrices_from_blocks(&blocks, lag_order)
}

/// As [`build_lag_matrices`] for blocks of any common length `N`.
pub fn lag_matrices_from_blocks(blocks: &[(&[f64], bool)], lag_order: usize) -> Result<LagMatrices> {
    if lag_order == 0 {
        return Err(Error::invalid("lag_order", "must be at least 1"));
    }
    if blocks.len() < lag_order + 1 {
        return Err(Error::InsufficientData {
            required: lag_order + 1,
            actual: blocks.len(),
        });
    }
    let n = blocks[0].0.len();
    if let Some((b, _)) = blocks.iter().find(|(b, _)| b.len() != n) {
        return Err(Error::LengthMismatch {
            left: b.len(),
            right: n,
        });
    }

    let observed: Vec<&[f64]> = blocks.iter().filter(|(_, ok)| *ok).map(|(b, _)| *b).collect();
    if observed.is_empty() {
        return Err(Error::InsufficientData {
            required: lag_order + 1,
            actual: 0,
        });
    }
    let mut mean = DVector::zeros(n);
    for b in &observed {
        mean += DVector::from_column_slice(b);
    }
    mean /= observed.len() as f64;

    let cols: Vec<usize> = (0..blocks.len() - lag_order)
        .filter(|&k| blocks[k..=k + lag_order].iter().all(|(_, ok)| *ok))
        .collect();
    if cols.is_empty() {
        return Err(Error::InsufficientData {
            required: lag_order + 1,
            actual: 0,
        });
    }

    let mut predictors = DMatrix::zeros(lag_order * n, cols.len());
    let mut targets = DMatrix::zeros(n, cols.len());
    for (c, &k) in cols.iter().enumerate() {
        for (i, v) in blocks[k + lag_order].0.iter().enumerate() {
            targets[(i, c)] = v - mean[i];
        }
        for lag in 0..lag_order {
            let week = blocks[k + lag_order - 1 - lag].0;
            for (i, v) in week.iter().enumerate() {
                predictors[(lag * n + i, c)] = v - mean[i];
            }
        }
    }
    Ok(LagMatrices {
        predictors,
        targets,
        lag_order,
        mean,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RvarConfig {
    pub rank: usize,
    pub lag_order: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for RvarConfig {
    fn default() -> Self {
        Self {
            rank: 8,
            lag_order: 2,
            max_iters: 200,
            tol: 1e-9,
            seed: 7,
        }
    }
}

/// Fitted factors `W` (`N × R`) and `V` (`R × p·N`) plus the centering
/// vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RvarModel {
    pub w: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub rank: usize,
    pub lag_order: usize,
    pub mean: DVector<f64>,
    /// Objective after each full W/V iteration.
    pub objective_trace: Vec<f64>,
}

/// Moore–Penrose pseudoinverse with the usual relative cutoff.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.is_empty() {
        return m.transpose();
    }
    let svd = m.clone().svd(true, true);
    let max_sv = svd.singular_values.max();
    let cutoff = max_sv * (m.nrows().max(m.ncols()) as f64) * f64::EPSILON;
    svd.pseudo_inverse(cutoff)
        .unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}

/// `½‖X2 − W·V·X1‖²_F`.
pub fn als_objective(lm: &LagMatrices, w: &DMatrix<f64>, v: &DMatrix<f64>) -> f64 {
    0.5 * (&lm.targets - w * (v * &lm.predictors)).norm_squared()
}

pub fn als_fit(lm: &LagMatrices, cfg: &RvarConfig) -> Result<RvarModel> {
    let n = lm.block_len();
    let pn = lm.predictors.nrows();
    let rank = cfg.rank;
    if rank == 0 || rank > n.min(pn) {
        return Err(Error::invalid("rank", format!("{rank} outside 1..={}", n.min(pn))));
    }
    if lm.columns() < rank {
        return Err(Error::InsufficientData {
            required: rank,
            actual: lm.columns(),
        });
    }
    if lm.predictors.iter().all(|x| *x == 0.0) {
        return Err(Error::Degenerate("all-zero predictor matrix".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = DMatrix::from_fn(rank, pn, |_, _| StandardNormal.sample(&mut rng));
    let x1_pinv = pinv(&lm.predictors);
    let x2_x1_pinv = &lm.targets * &x1_pinv;
    let mut w = DMatrix::zeros(n, rank);
    let mut trace: Vec<f64> = Vec::new();

    for _ in 0..cfg.max_iters.max(1) {
        w = &lm.targets * pinv(&(&v * &lm.predictors));
        v = pinv(&w) * &x2_x1_pinv;
        let obj = als_objective(lm, &w, &v);
        let prev = trace.last().copied();
        trace.push(obj);
        if let Some(prev) = prev {
            let scale = prev.abs().max(f64::MIN_POSITIVE);
            if (prev - obj) / scale < cfg.tol {
                break;
            }
        }
        if obj == 0.0 {
            break;
        }
    }

    Ok(RvarModel {
        w,
        v,
        rank,
        lag_order: lm.lag_order,
        mean: lm.mean.clone(),
        objective_trace: trace,
    })
}

impl RvarModel {
    pub fn block_len(&self) -> usize {
        self.w.nrows()
    }

    /// The composite coefficient matrix `W·V`.
    pub fn coefficients(&self) -> DMatrix<f64> {
        &self.w * &self.v
    }

    /// Unclamped forecast from `lag_order` consecutive blocks given
    /// oldest first.
    pub fn forecast_raw(&self, recent: &[&[f64]]) -> Result<DVector<f64>> {
        let n = self.block_len();
        if recent.len() != self.lag_order {
            return Err(Error::InsufficientData {
                required: self.lag_order,
                actual: recent.len(),
            });
        }
        let mut stacked = DVector::zeros(self.lag_order * n);
        for (lag, block) in recent.iter().rev().enumerate() {
            if block.len() != n {
                return Err(Error::LengthMismatch {
                    left: block.len(),
                    right: n,
                });
            }
            for (i, v) in block.iter().enumerate() {
                stacked[lag * n + i] = v - self.mean[i];
            }
        }
        Ok(&self.mean + &self.w * (&self.v * stacked))
    }
}

/// 168-hour forecast following the most recent of `recent_weeks`
/// (chronological order). Reported values are clamped at zero.
pub fn rvar_forecast(model: &RvarModel, recent_weeks: &[WeekBlock]) -> Result<ForecastResult> {
    if recent_weeks.iter().any(|w| !w.is_fully_observed()) {
        return Err(Error::MaskedInput);
    }
    let blocks: Vec<&[f64]> = recent_weeks.iter().map(|w| w.values()).collect();
    let raw = model.forecast_raw(&blocks)?;
    let last = recent_weeks.last().expect("non-empty after length check");
    ForecastResult::new(
        last.week_start().add_hours(HOURS_PER_WEEK as i64 - 1),
        raw.iter().map(|v| v.max(0.0)).collect(),
        None,
    )
}

#[derive(Debug, Clone)]
pub struct RvarForecaster {
    pub config: RvarConfig,
    pub model: Option<RvarModel>,
}

impl RvarForecaster {
    pub fn new(config: RvarConfig) -> Self {
        Self { config, model: None }
    }
}

impl Forecaster for RvarForecaster {
    fn context_hours(&self) -> usize {
        self.config.lag_order * HOURS_PER_WEEK
    }

    fn fit(&mut self, train: SeriesView<'_>) -> Result<()> {
        let weeks = slice_weeks(&train.to_series())?;
        let lm = build_lag_matrices(&weeks, self.config.lag_order)?;
        self.model = Some(als_fit(&lm, &self.config)?);
        Ok(())
    }

    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult> {
        let model = self.model.as_ref().ok_or(Error::NotFitted)?;
        if horizon > HOURS_PER_WEEK {
            return Err(Error::invalid("horizon", format!("{horizon} exceeds one week")));
        }
        let need = self.context_hours();
        let tail = context.tail(need).ok_or(Error::InsufficientData {
            required: need,
            actual: context.len(),
        })?;
        if !tail.all_valid() {
            return Err(Error::MaskedInput);
        }
        let values: Vec<f64> = tail.counts.iter().map(|&c| f64::from(c)).collect();
        let blocks: Vec<&[f64]> = values.chunks(HOURS_PER_WEEK).collect();
        let raw = model.forecast_raw(&blocks)?;
        ForecastResult::new(
            context.end().add_hours(-1),
            raw.iter().take(horizon).map(|v| v.max(0.0)).collect(),
            None,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{HourStamp, HourlyCountSeries};

    fn weeks(n: usize) -> Vec<WeekBlock> {
        let counts: Vec<u32> = (0..n * 168).map(|i| (i * 7 % 23) as u32).collect();
        let s = HourlyCountSeries::fully_valid(HourStamp::new(2004, 1, 5, 0).unwrap(), counts);
        slice_weeks(&s).unwrap()
    }

    #[test]
    fn lag_shapes() {
        let lm = build_lag_matrices(&weeks(3), 2).unwrap();
        assert_eq!(lm.predictors.shape(), (336, 1));
        assert_eq!(lm.targets.shape(), (168, 1));
        assert_eq!(build_lag_matrices(&weeks(10), 2).unwrap().columns(), 8);
        assert!(matches!(
            build_lag_matrices(&weeks(2), 2),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn masked_week_drops_touching_columns() {
        let mut s = HourlyCountSeries::fully_valid(
            HourStamp::new(2004, 1, 5, 0).unwrap(),
            (0..10 * 168).map(|i| (i % 13) as u32).collect(),
        );
        s.set_valid(4 * 168 + 10, false);
        let blocks = slice_weeks(&s).unwrap();
        assert_eq!(build_lag_matrices(&blocks, 2).unwrap().columns(), 5);
    }

    #[test]
    fn lag_stacking_order_and_centering() {
        let a = [1.0, 2.0];
        let b = [3.0, 5.0];
        let c = [7.0, 11.0];
        let lm = lag_matrices_from_blocks(&[(&a, true), (&b, true), (&c, true)], 2).unwrap();
        let mean = [11.0 / 3.0, 6.0];
        assert_eq!(lm.targets.column(0).as_slice(), &[c[0] - mean[0], c[1] - mean[1]]);
        // most recent lag (b) first
        let p = lm.predictors.column(0);
        assert_eq!(
            p.as_slice(),
            &[b[0] - mean[0], b[1] - mean[1], a[0] - mean[0], a[1] - mean[1]]
        );
    }

    #[test]
    fn rank_bounds_and_degenerate_input() {
        let lm = build_lag_matrices(&weeks(12), 1).unwrap();
        let cfg = RvarConfig {
            rank: 0,
            ..RvarConfig::default()
        };
        assert!(als_fit(&lm, &cfg).is_err());
        let zero = [0.0; 3];
        let lm = lag_matrices_from_blocks(&[(&zero, true), (&zero, true), (&zero, true)], 1).unwrap();
        let cfg = RvarConfig {
            rank: 1,
            lag_order: 1,
            ..RvarConfig::default()
        };
        assert!(matches!(als_fit(&lm, &cfg), Err(Error::Degenerate(_))));
    }

    #[test]
    fn identity_coefficient_repeats_last_week() {
        let ws = weeks(2);
        let model = RvarModel {
            w: DMatrix::identity(168, 168),
            v: DMatrix::identity(168, 168),
            rank: 168,
            lag_order: 1,
            mean: DVector::from_element(168, 4.5),
            objective_trace: vec![],
        };
        let f = rvar_forecast(&model, &ws[1..]).unwrap();
        assert_eq!(f.point.len(), 168);
        for (p, v) in f.point.iter().zip(ws[1].values()) {
            assert!((p - v).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_w_forecasts_mean_and_clamps() {
        let ws = weeks(3);
        let mut mean = DVector::from_element(168, 3.0);
        mean[5] = -2.0;
        let model = RvarModel {
            w: DMatrix::zeros(168, 2),
            v: DMatrix::zeros(2, 336),
            rank: 2,
            lag_order: 2,
            mean,
            objective_trace: vec![],
        };
        let f = rvar_forecast(&model, &ws[1..]).unwrap();
        assert_eq!(f.point[0], 3.0);
        assert_eq!(f.point[5], 0.0);
        assert_eq!(model.forecast_raw(&[ws[1].values(), ws[2].values()]).unwrap()[5], -2.0);
    }

    #[test]
    fn fit_is_deterministic() {
        let lm = build_lag_matrices(&weeks(14), 2).unwrap();
        let cfg = RvarConfig {
            rank: 3,
            max_iters: 20,
            ..RvarConfig::default()
        };
        assert_eq!(als_fit(&lm, &cfg).unwrap(), als_fit(&lm, &cfg).unwrap());
    }
}
