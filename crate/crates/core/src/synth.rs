//! Synthetic hourly arrivals from a weekly-periodic Poisson intensity.
//!
//! The default profile has a quiet night, a strong surge peaking at 08:00,
//! a smaller evening surge around 19:00–20:00, a Friday/Saturday weekend
//! dip and a deeper Shabbat trough from Friday to Saturday sundown.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::WeatherReading;
use crate::timeseries::{HourStamp, HourlyCountSeries, HOURS_PER_DAY, HOURS_PER_WEEK};

/// Mean arrivals per hour giving roughly 75,000 patients a year.
pub const DEFAULT_BASE_RATE: f64 = 8.6;

const MORNING_PEAK_HOUR: f64 = 8.0;
/// The morning surge rises sharply and tails off through the day.
const MORNING_RISE: f64 = 1.0;
const MORNING_DECAY: f64 = 5.0;
const EVENING_PEAK_HOUR: f64 = 19.5;
const EVENING_WIDTH: f64 = 1.0;
const FRIDAY: usize = 4;
const SATURDAY: usize = 5;
/// Hour of day taken as sundown.
const SUNDOWN: usize = 18;

/// Shape parameters for [`build_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProfileParams {
    pub base: f64,
    pub morning_amp: f64,
    pub evening_amp: f64,
    pub weekend_factor: f64,
    pub shabbat_factor: f64,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            base: DEFAULT_BASE_RATE,
            morning_amp: 2.0,
            evening_amp: 0.6,
            weekend_factor: 0.75,
            shabbat_factor: 0.6,
        }
    }
}

/// Expected arrivals for each hour of the week.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyIntensityProfile {
    rates: Vec<f64>,
    base_rate: f64,
}

impl WeeklyIntensityProfile {
    pub fn from_rates(rates: Vec<f64>) -> Result<Self> {
        if rates.len() != HOURS_PER_WEEK {
            return Err(Error::LengthMismatch {
                left: rates.len(),
                right: HOURS_PER_WEEK,
            });
        }
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid("rates", "rates must be finite and non-negative"));
        }
        let base_rate = rates.iter().sum::<f64>() / HOURS_PER_WEEK as f64;
        Ok(Self { rates, base_rate })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }
}

/// Gaussian-shaped bump with separate widths either side of its centre.
fn bump(hour: f64, center: f64, rise: f64, decay: f64) -> f64 {
    let z = (hour - center) / if hour < center { rise } else { decay };
    (-0.5 * z * z).exp()
}

/// Builds the weekly intensity. The result is rescaled so that its mean
/// over the week equals `base`; a base of zero yields an all-zero profile.
pub fn build_profile(params: &ProfileParams) -> Result<WeeklyIntensityProfile> {
    let ProfileParams {
        base,
        morning_amp,
        evening_amp,
        weekend_factor,
        shabbat_factor,
    } = *params;
    if !(base >= 0.0) || !base.is_finite() {
        return Err(Error::invalid("base", format!("{base} must be non-negative")));
    }
    if !(morning_amp >= 0.0) || !(evening_amp >= 0.0) {
        return Err(Error::invalid("amplitude", "surge amplitudes must be non-negative"));
    }
    for (name, f) in [("weekend_factor", weekend_factor), ("shabbat_factor", shabbat_factor)] {
        if !(0.0..=1.0).contains(&f) {
            return Err(Error::invalid(name, format!("{f} outside [0, 1]")));
        }
    }

    let shabbat = (FRIDAY * HOURS_PER_DAY + SUNDOWN)..(SATURDAY * HOURS_PER_DAY + SUNDOWN);
    let raw: Vec<f64> = (0..HOURS_PER_WEEK)
        .map(|how| {
            let day = how / HOURS_PER_DAY;
            let hour = (how % HOURS_PER_DAY) as f64;
            let mut r = 1.0
                + morning_amp * bump(hour, MORNING_PEAK_HOUR, MORNING_RISE, MORNING_DECAY)
                + evening_amp * bump(hour, EVENING_PEAK_HOUR, EVENING_WIDTH, EVENING_WIDTH);
            if day == FRIDAY || day == SATURDAY {
                r *= weekend_factor;
            }
            if shabbat.contains(&how) {
                r *= shabbat_factor;
            }
            r
        })
        .collect();
    let mean = raw.iter().sum::<f64>() / HOURS_PER_WEEK as f64;
    let scale = if mean > 0.0 { base / mean } else { 0.0 };
    WeeklyIntensityProfile::from_rates(raw.into_iter().map(|r| r * scale).collect())
}

/// First Monday of 2004; the default synthetic series start.
pub fn default_start() -> HourStamp {
    HourStamp::new(2004, 1, 5, 0).expect("valid date")
}

fn week_rng(seed: u64, week: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(week as u64);
    rng
}

/// Draws `n_weeks` of independent Poisson hourly counts starting at the
/// default Monday.
pub fn simulate(profile: &WeeklyIntensityProfile, n_weeks: usize, seed: u64) -> Result<HourlyCountSeries> {
    simulate_from(profile, n_weeks, seed, default_start())
}

/// As [`simulate`], from a caller-chosen Monday 00:00.
pub fn simulate_from(
    profile: &WeeklyIntensityProfile,
    n_weeks: usize,
    seed: u64,
    start: HourStamp,
) -> Result<HourlyCountSeries> {
    if n_weeks == 0 {
        return Err(Error::invalid("n_weeks", "must be at least 1"));
    }
    if !start.is_week_start() {
        return Err(Error::Unaligned(start.to_string()));
    }
    let samplers: Vec<Option<Poisson<f64>>> = profile
        .rates()
        .iter()
        .map(|&r| (r > 0.0).then(|| Poisson::new(r).expect("positive finite rate")))
        .collect();
    let counts: Vec<u32> = (0..n_weeks)
        .into_par_iter()
        .flat_map_iter(|w| {
            let mut rng = week_rng(seed, w);
            samplers
                .iter()
                .map(|s| s.as_ref().map_or(0, |p| p.sample(&mut rng) as u32))
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(HourlyCountSeries::fully_valid(start, counts))
}

/// Parameters of a synthetic hourly maximum-temperature series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeatherParams {
    pub annual_mean_c: f64,
    pub annual_amplitude_c: f64,
    pub daily_amplitude_c: f64,
    pub noise_sd_c: f64,
}

impl Default for WeatherParams {
    fn default() -> Self {
        Self {
            annual_mean_c: 21.0,
            annual_amplitude_c: 7.0,
            daily_amplitude_c: 4.0,
            noise_sd_c: 1.0,
        }
    }
}

/// Smooth annual plus daily temperature cycle with AR(1) noise, peaking
/// mid-afternoon and in early August.
pub fn simulate_weather(params: &WeatherParams, start: HourStamp, hours: usize, seed: u64) -> Vec<WeatherReading> {
    use std::f64::consts::PI;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5745_4154_4845_5221);
    let noise = Normal::new(0.0, params.noise_sd_c.max(0.0)).expect("finite sd");
    let mut ar = 0.0;
    (0..hours)
        .map(|h| {
            let at = start.add_hours(h as i64);
            let day_of_year = f64::from(chrono::Datelike::ordinal(&at.date()));
            let annual = (2.0 * PI * (day_of_year - 214.0) / 365.25).cos();
            let daily = (2.0 * PI * (f64::from(at.hour()) - 9.0) / 24.0).sin();
            ar = 0.95 * ar + noise.sample(&mut rng) * (1.0f64 - 0.95 * 0.95).sqrt();
            WeatherReading {
                at,
                tmax_c: params.annual_mean_c
                    + params.annual_amplitude_c * annual
                    + params.daily_amplitude_c * daily
                    + ar,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_profile_is_constant() {
        let p = build_profile(&ProfileParams {
            base: 5.0,
            morning_amp: 0.0,
            evening_amp: 0.0,
            weekend_factor: 1.0,
            shabbat_factor: 1.0,
        })
        .unwrap();
        assert!(p.rates().iter().all(|r| (r - 5.0).abs() < 1e-12));
    }

    #[test]
    fn default_monday_peaks_at_eight() {
        let p = build_profile(&ProfileParams::default()).unwrap();
        let monday = &p.rates()[..24];
        let argmax = (0..24).max_by(|a, b| monday[*a].total_cmp(&monday[*b])).unwrap();
        assert_eq!(argmax, 8);
        assert!((p.base_rate() - DEFAULT_BASE_RATE).abs() < 1e-9);
        // the evening surge is a local maximum
        assert!(monday[19] > monday[17] && monday[20] > monday[22]);
        // the first seven hours are the quietest of the day
        let quiet = monday[..7].iter().copied().fold(f64::MIN, f64::max);
        assert!(quiet < DEFAULT_BASE_RATE);
        assert!(monday[7..20].iter().all(|r| *r > quiet));
    }

    #[test]
    fn weekend_dip() {
        let p = build_profile(&ProfileParams {
            weekend_factor: 0.6,
            shabbat_factor: 1.0,
            ..ProfileParams::default()
        })
        .unwrap();
        let mean = |r: &[f64]| r.iter().sum::<f64>() / r.len() as f64;
        assert!(mean(&p.rates()[96..144]) < mean(&p.rates()[..96]));
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            ProfileParams {
                base: -1.0,
                ..Default::default()
            },
            ProfileParams {
                morning_amp: -0.1,
                ..Default::default()
            },
            ProfileParams {
                weekend_factor: 1.5,
                ..Default::default()
            },
            ProfileParams {
                shabbat_factor: -0.5,
                ..Default::default()
            },
        ];
        for p in bad {
            assert!(build_profile(&p).is_err(), "{p:?}");
        }
    }

    #[test]
    fn zero_rates_give_zero_counts() {
        let p = WeeklyIntensityProfile::from_rates(vec![0.0; 168]).unwrap();
        let s = simulate(&p, 3, 1).unwrap();
        assert_eq!(s.len(), 3 * 168);
        assert!(s.counts().iter().all(|c| *c == 0));
    }

    #[test]
    fn deterministic_given_seed() {
        let p = build_profile(&ProfileParams::default()).unwrap();
        assert_eq!(simulate(&p, 4, 9).unwrap(), simulate(&p, 4, 9).unwrap());
        assert_ne!(simulate(&p, 4, 9).unwrap(), simulate(&p, 4, 10).unwrap());
        assert!(simulate(&p, 0, 9).is_err());
        assert!(simulate_from(&p, 1, 9, default_start().add_hours(3)).is_err());
    }

    #[test]
    fn weather_is_plausible_and_deterministic() {
        let w = simulate_weather(&WeatherParams::default(), default_start(), 24 * 365, 3);
        assert_eq!(
            w,
            simulate_weather(&WeatherParams::default(), default_start(), 24 * 365, 3)
        );
        let max = w.iter().map(|r| r.tmax_c).fold(f64::MIN, f64::max);
        let min = w.iter().map(|r| r.tmax_c).fold(f64::MAX, f64::min);
        assert!(min > 0.0 && max < 45.0, "{min} {max}");
    }
}
