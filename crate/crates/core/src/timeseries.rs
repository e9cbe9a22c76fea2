//! Shared hourly time-series types, calendar arithmetic and error metrics.
//!
//! Everything here is timezone-naive wall-clock time. A week always starts
//! at Monday 00:00, so hour-of-week 0 is Monday midnight and 167 is
//! Sunday 23:00.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike, Weekday};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = 168;

const STAMP_FORMAT: &str = "%Y-%m-%dT%H:00";

/// A wall-clock hour boundary (minute and second are always zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HourStamp(NaiveDateTime);

impl HourStamp {
    pub fn new(year: i32, month: u32, day: u32, hour: u32) -> Result<Self> {
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| Error::Timestamp {
            value: format!("{year:04}-{month:02}-{day:02}"),
            reason: "no such calendar date".into(),
        })?;
        let dt = date.and_hms_opt(hour, 0, 0).ok_or_else(|| Error::Timestamp {
            value: format!("{year:04}-{month:02}-{day:02}T{hour:02}"),
            reason: "hour out of range".into(),
        })?;
        Ok(HourStamp(dt))
    }

    /// Midnight at the start of the given date.
    pub fn midnight(date: NaiveDate) -> Self {
        HourStamp(date.and_hms_opt(0, 0, 0).expect("midnight always exists"))
    }

    /// The hour bucket containing `dt` (minutes and seconds truncated).
    pub fn floor(dt: NaiveDateTime) -> Self {
        HourStamp(dt.date().and_hms_opt(dt.hour(), 0, 0).expect("truncated hour exists"))
    }

    pub fn year(&self) -> i32 {
        self.0.year()
    }

    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn day(&self) -> u32 {
        self.0.day()
    }

    pub fn hour(&self) -> u32 {
        self.0.hour()
    }

    pub fn date(&self) -> NaiveDate {
        self.0.date()
    }

    pub fn as_datetime(&self) -> NaiveDateTime {
        self.0
    }

    pub fn add_hours(&self, hours: i64) -> Self {
        HourStamp(self.0 + Duration::hours(hours))
    }

    /// Signed number of hours from `earlier` to `self`.
    pub fn hours_since(&self, earlier: HourStamp) -> i64 {
        (self.0 - earlier.0).num_hours()
    }

    pub fn hour_of_week(&self) -> usize {
        hour_of_week(*self)
    }

    pub fn is_week_start(&self) -> bool {
        self.hour_of_week() == 0
    }

    /// The first Monday 00:00 at or after `self`.
    pub fn next_week_start(&self) -> Self {
        let how = self.hour_of_week();
        if how == 0 {
            *self
        } else {
            self.add_hours((HOURS_PER_WEEK - how) as i64)
        }
    }
}

impl fmt::Display for HourStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format(STAMP_FORMAT))
    }
}

impl FromStr for HourStamp {
    type Err = Error;

    /// Accepts `YYYY-MM-DDTHH:00`, `YYYY-MM-DD HH:00`, or a bare date
    /// (interpreted as midnight).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = |reason: &str| Error::Timestamp {
            value: s.to_string(),
            reason: reason.to_string(),
        };
        if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
            return Ok(HourStamp::midnight(date));
        }
        let dt = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
            .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M"))
            .map_err(|e| bad(&e.to_string()))?;
        if dt.minute() != 0 {
            return Err(bad("not on an hour boundary"));
        }
        Ok(HourStamp(dt))
    }
}

impl Serialize for HourStamp {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for HourStamp {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Position of `ts` within its Monday-anchored week, in `0..168`.
pub fn hour_of_week(ts: HourStamp) -> usize {
    let day = match ts.0.weekday() {
        Weekday::Mon => 0,
        Weekday::Tue => 1,
        Weekday::Wed => 2,
        Weekday::Thu => 3,
        Weekday::Fri => 4,
        Weekday::Sat => 5,
        Weekday::Sun => 6,
    };
    day * HOURS_PER_DAY + ts.hour() as usize
}

/// Gap-free hourly arrival counts with a per-hour validity mask.
///
/// Entry `k` belongs to hour `start + k`. Masked hours keep their count
/// but must not contribute to fitting or scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HourlyCountSeries {
    start: HourStamp,
    counts: Vec<u32>,
    valid: Vec<bool>,
}

impl HourlyCountSeries {
    pub fn new(start: HourStamp, counts: Vec<u32>, valid: Vec<bool>) -> Result<Self> {
        if counts.len() != valid.len() {
            return Err(Error::LengthMismatch {
                left: counts.len(),
                right: valid.len(),
            });
        }
        Ok(Self { start, counts, valid })
    }

    /// A series with every hour valid.
    pub fn fully_valid(start: HourStamp, counts: Vec<u32>) -> Self {
        let valid = vec![true; counts.len()];
        Self { start, counts, valid }
    }

    pub fn start(&self) -> HourStamp {
        self.start
    }

    /// One past the last hour.
    pub fn end(&self) -> HourStamp {
        self.start.add_hours(self.counts.len() as i64)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn stamp_at(&self, index: usize) -> HourStamp {
        self.start.add_hours(index as i64)
    }

    /// Index of `ts`, if it falls inside the series.
    pub fn index_of(&self, ts: HourStamp) -> Option<usize> {
        let offset = ts.hours_since(self.start);
        (offset >= 0 && (offset as usize) < self.len()).then_some(offset as usize)
    }

    pub fn valid_hours(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    pub fn set_valid(&mut self, index: usize, valid: bool) {
        self.valid[index] = valid;
    }

    /// Sub-series over hour indices `range`.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            start: self.stamp_at(range.start),
            counts: self.counts[range.clone()].to_vec(),
            valid: self.valid[range].to_vec(),
        }
    }

    /// Sub-series over `[from, to)`, clipped to the series span.
    pub fn window(&self, from: HourStamp, to: HourStamp) -> Self {
        let lo = from.hours_since(self.start).clamp(0, self.len() as i64) as usize;
        let hi = to.hours_since(self.start).clamp(lo as i64, self.len() as i64) as usize;
        self.slice(lo..hi)
    }

    /// Drops leading hours up to the first Monday 00:00.
    pub fn align_to_week(&self) -> Self {
        let aligned = self.start.next_week_start();
        self.window(aligned, self.end())
    }

    pub fn view(&self) -> SeriesView<'_> {
        SeriesView {
            start: self.start,
            counts: &self.counts,
            valid: &self.valid,
            tmax: None,
        }
    }

    pub fn read_csv<R: Read>(reader: R, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = ["timestamp", "count", "valid"];
        if headers.iter().map(str::trim).ne(expected.iter().copied()) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: format!("expected header {:?}", expected.join(",")),
            });
        }
        let mut start = None;
        let mut counts = Vec::new();
        let mut valid = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let record = record?;
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            };
            if record.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", record.len())));
            }
            let ts: HourStamp = record[0].parse().map_err(|e: Error| parse_err(e.to_string()))?;
            let first = *start.get_or_insert(ts);
            if ts.hours_since(first) != counts.len() as i64 {
                return Err(parse_err(format!("gap or disorder at {ts}")));
            }
            let count: u32 = record[1]
                .trim()
                .parse()
                .map_err(|_| parse_err(format!("bad count {:?}", &record[1])))?;
            let flag = match record[2].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(format!("bad valid flag {other:?}"))),
            };
            counts.push(count);
            valid.push(flag);
        }
        let start = start.ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            message: "no data rows".into(),
        })?;
        Self::new(start, counts, valid)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["timestamp", "count", "valid"])?;
        for (i, (count, valid)) in self.counts.iter().zip(&self.valid).enumerate() {
            w.write_record([
                self.stamp_at(i).to_string(),
                count.to_string(),
                if *valid { "1".into() } else { "0".into() },
            ])?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Borrowed view of an hourly series, optionally carrying an aligned
/// hourly maximum-temperature feature.
#[derive(Debug, Clone, Copy)]
pub struct SeriesView<'a> {
    pub start: HourStamp,
    pub counts: &'a [u32],
    pub valid: &'a [bool],
    pub tmax: Option<&'a [f64]>,
}

impl<'a> SeriesView<'a> {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn end(&self) -> HourStamp {
        self.start.add_hours(self.counts.len() as i64)
    }

    /// The first `n` hours.
    pub fn prefix(&self, n: usize) -> SeriesView<'a> {
        SeriesView {
            start: self.start,
            counts: &self.counts[..n],
            valid: &self.valid[..n],
            tmax: self.tmax.map(|t| &t[..n]),
        }
    }

    /// The last `n` hours, or `None` when fewer are available.
    pub fn tail(&self, n: usize) -> Option<SeriesView<'a>> {
        let len = self.len();
        (n <= len).then(|| SeriesView {
            start: self.start.add_hours((len - n) as i64),
            counts: &self.counts[len - n..],
            valid: &self.valid[len - n..],
            tmax: self.tmax.map(|t| &t[len - n..]),
        })
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|v| *v)
    }

    pub fn to_series(&self) -> HourlyCountSeries {
        HourlyCountSeries {
            start: self.start,
            counts: self.counts.to_vec(),
            valid: self.valid.to_vec(),
        }
    }
}

/// One Monday-aligned week of hourly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekBlock {
    week_start: HourStamp,
    values: Vec<f64>,
    fully_observed: bool,
}

impl WeekBlock {
    pub fn new(week_start: HourStamp, values: Vec<f64>) -> Result<Self> {
        Self::with_mask_flag(week_start, values, true)
    }

    fn with_mask_flag(week_start: HourStamp, values: Vec<f64>, fully_observed: bool) -> Result<Self> {
        if !week_start.is_week_start() {
            return Err(Error::Unaligned(week_start.to_string()));
        }
        if values.len() != HOURS_PER_WEEK {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: HOURS_PER_WEEK,
            });
        }
        Ok(Self {
            week_start,
            values,
            fully_observed,
        })
    }

    pub fn week_start(&self) -> HourStamp {
        self.week_start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// False when any hour of the week is masked.
    pub fn is_fully_observed(&self) -> bool {
        self.fully_observed
    }
}

/// Cuts a Monday-aligned series into whole weeks; a trailing partial
/// week is dropped.
pub fn slice_weeks(series: &HourlyCountSeries) -> Result<Vec<WeekBlock>> {
    if !series.start().is_week_start() {
        return Err(Error::Unaligned(series.start().to_string()));
    }
    series
        .counts()
        .chunks_exact(HOURS_PER_WEEK)
        .zip(series.valid().chunks_exact(HOURS_PER_WEEK))
        .enumerate()
        .map(|(w, (counts, valid))| {
            WeekBlock::with_mask_flag(
                series.start().add_hours((w * HOURS_PER_WEEK) as i64),
                counts.iter().map(|&c| f64::from(c)).collect(),
                valid.iter().all(|v| *v),
            )
        })
        .collect()
}

/// A univariate Gaussian as a (mean, variance) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian1D {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) {
            return Err(Error::invalid("variance", format!("{variance} is negative")));
        }
        Ok(Self { mean, variance })
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let r = x - self.mean;
        -0.5 * ((2.0 * std::f64::consts::PI * self.variance).ln() + r * r / self.variance)
    }
}

/// Point forecasts for `horizon_hours` hours following `origin`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastResult {
    /// Last observed hour.
    pub origin: HourStamp,
    pub horizon_hours: usize,
    pub point: Vec<f64>,
    pub predictive_variance: Option<Vec<f64>>,
}

impl ForecastResult {
    pub fn new(origin: HourStamp, point: Vec<f64>, predictive_variance: Option<Vec<f64>>) -> Result<Self> {
        if let Some(var) = &predictive_variance {
            if var.len() != point.len() {
                return Err(Error::LengthMismatch {
                    left: point.len(),
                    right: var.len(),
                });
            }
            if var.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("predictive_variance", "negative entry"));
            }
        }
        Ok(Self {
            origin,
            horizon_hours: point.len(),
            point,
            predictive_variance,
        })
    }

    /// First forecast hour.
    pub fn first_hour(&self) -> HourStamp {
        self.origin.add_hours(1)
    }
}

fn scored_pairs<'a>(
    pred: &'a [f64],
    actual: &'a [f64],
    mask: Option<&'a [bool]>,
) -> Result<impl Iterator<Item = f64> + 'a> {
    if pred.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: actual.len(),
        });
    }
    if let Some(mask) = mask {
        if mask.len() != pred.len() {
            return Err(Error::LengthMismatch {
                left: pred.len(),
                right: mask.len(),
            });
        }
    }
    Ok(pred
        .iter()
        .zip(actual)
        .enumerate()
        .filter(move |(i, _)| mask.is_none_or(|m| m[*i]))
        .map(|(_, (p, a))| p - a))
}

fn mean_of(diffs: impl Iterator<Item = f64>) -> Result<f64> {
    let (sum, n) = diffs.fold((0.0, 0usize), |(s, n), d| (s + d, n + 1));
    if n == 0 {
        return Err(Error::NoScoredPositions);
    }
    Ok(sum / n as f64)
}

/// Mean absolute error.
pub fn mae(pred: &[f64], actual: &[f64]) -> Result<f64> {
    mean_of(scored_pairs(pred, actual, None)?.map(f64::abs))
}

/// Mean squared error.
pub fn mse(pred: &[f64], actual: &[f64]) -> Result<f64> {
    mean_of(scored_pairs(pred, actual, None)?.map(|d| d * d))
}

/// MAE over positions where `valid` is true.
pub fn masked_mae(pred: &[f64], actual: &[f64], valid: &[bool]) -> Result<f64> {
    mean_of(scored_pairs(pred, actual, Some(valid))?.map(f64::abs))
}

/// MSE over positions where `valid` is true.
pub fn masked_mse(pred: &[f64], actual: &[f64], valid: &[bool]) -> Result<f64> {
    mean_of(scored_pairs(pred, actual, Some(valid))?.map(|d| d * d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn monday() -> HourStamp {
        // 2004-01-05 was a Monday.
        HourStamp::new(2004, 1, 5, 0).unwrap()
    }

    #[test]
    fn hour_of_week_anchors() {
        assert_eq!(hour_of_week(monday()), 0);
        assert_eq!(hour_of_week(HourStamp::new(2004, 1, 5, 5).unwrap()), 5);
        assert_eq!(hour_of_week(HourStamp::new(2004, 1, 11, 23).unwrap()), 167);
    }

    #[test]
    fn stamp_parse_and_display() {
        let ts: HourStamp = "2007-01-01T09:00".parse().unwrap();
        assert_eq!(ts.to_string(), "2007-01-01T09:00");
        assert_eq!("2007-01-01 09:00".parse::<HourStamp>().unwrap(), ts);
        assert!("2007-01-01T09:30".parse::<HourStamp>().is_err());
        assert!("2004-13-01T09:00".parse::<HourStamp>().is_err());
        assert_eq!(ts.add_hours(1).hours_since(ts), 1);
    }

    #[test]
    fn next_week_start_trims_to_monday() {
        // 2004-01-01 was a Thursday.
        let thu = HourStamp::new(2004, 1, 1, 0).unwrap();
        assert_eq!(thu.next_week_start(), monday());
        assert_eq!(monday().next_week_start(), monday());
    }

    #[test]
    fn slice_weeks_counts() {
        let s = HourlyCountSeries::fully_valid(monday(), vec![1; 336]);
        assert_eq!(slice_weeks(&s).unwrap().len(), 2);
        let s = HourlyCountSeries::fully_valid(monday(), vec![1; 169]);
        assert_eq!(slice_weeks(&s).unwrap().len(), 1);
        let s = HourlyCountSeries::fully_valid(monday(), vec![1; 100]);
        assert!(slice_weeks(&s).unwrap().is_empty());
    }

    #[test]
    fn slice_weeks_flags_masked_and_rejects_unaligned() {
        let mut s = HourlyCountSeries::fully_valid(monday(), vec![2; 336]);
        s.set_valid(200, false);
        let weeks = slice_weeks(&s).unwrap();
        assert!(weeks[0].is_fully_observed());
        assert!(!weeks[1].is_fully_observed());

        let unaligned = HourlyCountSeries::fully_valid(monday().add_hours(1), vec![0; 400]);
        assert!(matches!(slice_weeks(&unaligned), Err(Error::Unaligned(_))));
    }

    #[test]
    fn metrics_by_hand() {
        assert_eq!(mae(&[1.0, 2.0], &[2.0, 4.0]).unwrap(), 1.5);
        assert_eq!(mse(&[0.0], &[2.0]).unwrap(), 4.0);
        assert_eq!(mae(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(mse(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert!(matches!(mae(&[1.0], &[1.0, 2.0]), Err(Error::LengthMismatch { .. })));
        assert!(matches!(mse(&[], &[]), Err(Error::NoScoredPositions)));
    }

    #[test]
    fn masked_metrics_skip_positions() {
        let pred = [1.0, 100.0, 3.0];
        let actual = [2.0, 0.0, 3.0];
        let valid = [true, false, true];
        assert_eq!(masked_mae(&pred, &actual, &valid).unwrap(), 0.5);
        assert_eq!(masked_mse(&pred, &actual, &valid).unwrap(), 0.5);
        assert!(masked_mae(&pred, &actual, &[false; 3]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let mut s = HourlyCountSeries::fully_valid(monday(), vec![3, 0, 7, 12]);
        s.set_valid(2, false);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("timestamp,count,valid\n2004-01-05T00:00,3,1\n"));
        let back = HourlyCountSeries::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn csv_rejects_gaps() {
        let text = "timestamp,count,valid\n2004-01-05T00:00,1,1\n2004-01-05T02:00,1,1\n";
        let err = HourlyCountSeries::read_csv(text.as_bytes(), Path::new("x.csv")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    proptest! {
        #[test]
        fn hour_of_week_is_weekly_periodic(offset in 0i64..200_000) {
            let ts = monday().add_hours(offset);
            prop_assert_eq!(hour_of_week(ts.add_hours(168)), hour_of_week(ts));
            prop_assert_eq!(hour_of_week(ts), (offset % 168) as usize);
        }

        #[test]
        fn weeks_plus_tail_reproduce_counts(counts in proptest::collection::vec(0u32..40, 0..800)) {
            let s = HourlyCountSeries::fully_valid(monday(), counts.clone());
            let weeks = slice_weeks(&s).unwrap();
            let mut rebuilt: Vec<u32> = weeks
                .iter()
                .flat_map(|w| w.values().iter().map(|v| *v as u32))
                .collect();
            rebuilt.extend_from_slice(&counts[weeks.len() * HOURS_PER_WEEK..]);
            prop_assert_eq!(rebuilt, counts);
        }

        #[test]
        fn mae_symmetric_and_mse_shift(
            xs in proptest::collection::vec(-50.0f64..50.0, 1..60),
            c in -10.0f64..10.0,
        ) {
            let ys: Vec<f64> = xs.iter().map(|x| x * 0.5 + 1.0).collect();
            let a = mae(&xs, &ys).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert_eq!(a, mae(&ys, &xs).unwrap());
            prop_assert_eq!(mse(&xs, &xs).unwrap(), 0.0);
            let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
            let m = mse(&shifted, &xs).unwrap();
            prop_assert!((m - c * c).abs() <= 1e-9 * (1.0 + c * c));
        }
    }
}
