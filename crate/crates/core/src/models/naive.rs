//! Weekly persistence: next week repeats last week.

use crate::error::{Error, Result};
use crate::models::Forecaster;
use crate::timeseries::{ForecastResult, SeriesView, WeekBlock, HOURS_PER_WEEK};

/// Forecast the first `horizon_hours` hours of the following week as the
/// observed values of `last_week`.
pub fn naive_forecast(last_week: &WeekBlock, horizon_hours: usize) -> Result<ForecastResult> {
    if !last_week.is_fully_observed() {
        return Err(Error::MaskedInput);
    }
    if horizon_hours > HOURS_PER_WEEK {
        return Err(Error::invalid(
            "horizon_hours",
            format!("{horizon_hours} exceeds one week"),
        ));
    }
    let origin = last_week.week_start().add_hours(HOURS_PER_WEEK as i64 - 1);
    ForecastResult::new(origin, last_week.values()[..horizon_hours].to_vec(), None)
}

#[derive(Debug, Clone, Default)]
pub struct NaiveModel;

impl Forecaster for NaiveModel {
    fn context_hours(&self) -> usize {
        HOURS_PER_WEEK
    }

    fn fit(&mut self, _train: SeriesView<'_>) -> Result<()> {
        Ok(())
    }

    fn forecast(&mut self, context: SeriesView<'_>, horizon: usize) -> Result<ForecastResult> {
        if horizon > HOURS_PER_WEEK {
            return Err(Error::invalid("horizon", format!("{horizon} exceeds one week")));
        }
        let week = context.tail(HOURS_PER_WEEK).ok_or(Error::InsufficientData {
            required: HOURS_PER_WEEK,
            actual: context.len(),
        })?;
        if !week.all_valid() {
            return Err(Error::MaskedInput);
        }
        let point = week.counts[..horizon].iter().map(|&c| f64::from(c)).collect();
        ForecastResult::new(context.end().add_hours(-1), point, None)
    }
}
