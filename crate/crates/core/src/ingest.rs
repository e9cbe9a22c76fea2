//! Raw arrival-event and weather ingestion, hourly aggregation, exclusion
//! masking and the train/test split.
//!
//! All time ranges are half-open `[start, end)`.

use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{HourStamp, HourlyCountSeries, SeriesView};

/// One patient admission. Only the timestamp feeds the models; all
/// departments are pooled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArrivalEvent {
    pub arrival_time: NaiveDateTime,
    pub department: String,
}

const EVENT_FORMATS: [&str; 4] = [
    "%Y-%m-%d %H:%M",
    "%Y-%m-%dT%H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
];

fn parse_event_time(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    EVENT_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column {name:?}"),
        })
}

/// Reads a `patient_id,arrival_time,department` CSV, returning events
/// sorted by arrival time.
pub fn read_arrival_events<R: Read>(reader: R, path: &Path) -> Result<Vec<ArrivalEvent>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    column(&headers, "patient_id", path)?;
    let time_col = column(&headers, "arrival_time", path)?;
    let dept_col = column(&headers, "department", path)?;

    let mut events = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let raw_time = record
            .get(time_col)
            .ok_or_else(|| err("missing arrival_time field".into()))?;
        let arrival_time =
            parse_event_time(raw_time).ok_or_else(|| err(format!("malformed timestamp {raw_time:?}")))?;
        let department = record
            .get(dept_col)
            .ok_or_else(|| err("missing department field".into()))?
            .trim()
            .to_string();
        events.push(ArrivalEvent {
            arrival_time,
            department,
        });
    }
    events.sort_by(|a, b| {
        a.arrival_time
            .cmp(&b.arrival_time)
            .then_with(|| a.department.cmp(&b.department))
    });
    Ok(events)
}

pub fn parse_arrival_events(path: &Path) -> Result<Vec<ArrivalEvent>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_arrival_events(std::io::BufReader::new(file), path)
}

/// Buckets events into hours over `[from, to)`. Events outside the window
/// are dropped; empty hours get a zero count. Every hour is valid.
pub fn aggregate_hourly(events: &[ArrivalEvent], from: HourStamp, to: HourStamp) -> Result<HourlyCountSeries> {
    let hours = to.hours_since(from);
    if hours < 0 {
        return Err(Error::invalid("window", format!("{from} is after {to}")));
    }
    let mut counts = vec![0u32; hours as usize];
    for ev in events {
        let offset = HourStamp::floor(ev.arrival_time).hours_since(from);
        if ev.arrival_time >= from.as_datetime() && offset < hours {
            counts[offset as usize] += 1;
        }
    }
    Ok(HourlyCountSeries::fully_valid(from, counts))
}

/// Training and test ranges plus masked exclusion windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_start: HourStamp,
    pub train_end: HourStamp,
    #[serde(default)]
    pub test_start: Option<HourStamp>,
    #[serde(default)]
    pub test_end: Option<HourStamp>,
    #[serde(default)]
    pub exclusions: Vec<[HourStamp; 2]>,
}

impl SplitSpec {
    /// Train on 2004–2005, test on the first ten months of 2007, mask all
    /// of 2006.
    pub fn hospital() -> Self {
        let d = |y, m, day| HourStamp::new(y, m, day, 0).expect("valid date");
        Self {
            train_start: d(2004, 1, 1),
            train_end: d(2006, 1, 1),
            test_start: Some(d(2007, 1, 1)),
            test_end: Some(d(2007, 11, 1)),
            exclusions: vec![[d(2006, 1, 1), d(2007, 1, 1)]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_start >= self.train_end {
            return Err(Error::invalid("train", "train_start must precede train_end"));
        }
        match (self.test_start, self.test_end) {
            (None, None) => {}
            (Some(s), Some(e)) => {
                if s > e {
                    return Err(Error::invalid("test", "test_start is after test_end"));
                }
                if self.train_end > s {
                    return Err(Error::invalid("test", "test_start precedes train_end"));
                }
            }
            _ => return Err(Error::invalid("test", "test_start and test_end go together")),
        }
        for [s, e] in &self.exclusions {
            if s > e {
                return Err(Error::invalid("exclusions", format!("range {s}..{e} is reversed")));
            }
        }
        Ok(())
    }
}

/// Masks every hour that falls inside an exclusion range; counts are kept.
pub fn apply_exclusions(series: &HourlyCountSeries, spec: &SplitSpec) -> HourlyCountSeries {
    let mut out = series.clone();
    for [from, to] in &spec.exclusions {
        let lo = from.hours_since(series.start()).clamp(0, series.len() as i64) as usize;
        let hi = to.hours_since(series.start()).clamp(0, series.len() as i64) as usize;
        for i in lo..hi {
            out.set_valid(i, false);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub train: HourlyCountSeries,
    /// `None` when the spec defines no test range.
    pub test: Option<HourlyCountSeries>,
}

/// Masks exclusions, then cuts Monday-aligned train and test series.
pub fn split(series: &HourlyCountSeries, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let masked = apply_exclusions(series, spec);
    let train = masked.window(spec.train_start, spec.train_end).align_to_week();
    if train.valid_hours() == 0 {
        return Err(Error::EmptySplit("train"));
    }
    let test = match (spec.test_start, spec.test_end) {
        (Some(s), Some(e)) => {
            let test = masked.window(s, e).align_to_week();
            if test.valid_hours() == 0 {
                return Err(Error::EmptySplit("test"));
            }
            Some(test)
        }
        _ => None,
    };
    Ok(Split { train, test })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeatherReading {
    pub at: HourStamp,
    pub tmax_c: f64,
}

/// Gap-free hourly maximum temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherSeries {
    pub start: HourStamp,
    pub tmax: Vec<f64>,
}

impl WeatherSeries {
    /// Forward-fills sparse readings over `[from, to)`. Fails when no
    /// reading exists at or before `from`.
    pub fn forward_fill(readings: &[WeatherReading], from: HourStamp, to: HourStamp) -> Result<Self> {
        let mut sorted: Vec<WeatherReading> = readings.iter().copied().filter(|r| r.tmax_c.is_finite()).collect();
        sorted.sort_by_key(|r| r.at);
        let hours = to.hours_since(from).max(0) as usize;
        let mut idx = sorted.partition_point(|r| r.at <= from);
        let mut last = match idx.checked_sub(1) {
            Some(i) => sorted[i].tmax_c,
            None => return Err(Error::WeatherGap(format!("leading hours from {from}"))),
        };
        let mut tmax = Vec::with_capacity(hours);
        for h in 0..hours {
            let ts = from.add_hours(h as i64);
            while idx < sorted.len() && sorted[idx].at <= ts {
                last = sorted[idx].tmax_c;
                idx += 1;
            }
            tmax.push(last);
        }
        Ok(Self { start: from, tmax })
    }
}

/// Reads a `timestamp,tmax_c` CSV. Rows with an empty or non-finite
/// temperature are treated as missing.
pub fn read_weather<R: Read>(reader: R, path: &Path) -> Result<Vec<WeatherReading>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = column(&headers, "timestamp", path)?;
    let t_col = column(&headers, "tmax_c", path)?;
    let mut out = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let record = record?;
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let raw_ts = record.get(ts_col).ok_or_else(|| err("missing timestamp".into()))?;
        let at = parse_event_time(raw_ts)
            .map(HourStamp::floor)
            .or_else(|| raw_ts.parse().ok())
            .ok_or_else(|| err(format!("malformed timestamp {raw_ts:?}")))?;
        let raw_t = record.get(t_col).unwrap_or("").trim();
        if raw_t.is_empty() {
            continue;
        }
        let tmax_c: f64 = raw_t.parse().map_err(|_| err(format!("bad temperature {raw_t:?}")))?;
        if tmax_c.is_finite() {
            out.push(WeatherReading { at, tmax_c });
        }
    }
    Ok(out)
}

pub fn parse_weather(path: &Path) -> Result<Vec<WeatherReading>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_weather(std::io::BufReader::new(file), path)
}

/// Writes readings in the format [`read_weather`] accepts.
pub fn write_weather<W: Write>(readings: &[WeatherReading], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "tmax_c"])?;
    for r in readings {
        w.write_record([r.at.to_string(), r.tmax_c.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(Path::new("<weather>"), e))?;
    Ok(())
}

pub fn save_weather(readings: &[WeatherReading], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_weather(readings, std::io::BufWriter::new(file))
}

/// Hourly counts with an aligned hourly maximum temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries {
    pub series: HourlyCountSeries,
    pub tmax: Vec<f64>,
}

impl FeatureSeries {
    pub fn view(&self) -> SeriesView<'_> {
        SeriesView {
            tmax: Some(&self.tmax),
            ..self.series.view()
        }
    }
}

/// Attaches forward-filled temperature to every hour of `series`.
pub fn join_weather(series: &HourlyCountSeries, readings: &[WeatherReading]) -> Result<FeatureSeries> {
    let weather = WeatherSeries::forward_fill(readings, series.start(), series.end())?;
    Ok(FeatureSeries {
        series: series.clone(),
        tmax: weather.tmax,
    })
}
