//! Sensor log parsing, day-based splitting, feature normalization and
//! windowing.
//!
//! CSV layout: `timestamp,temp,hum,co2,noise,pressure,people`. Column names
//! are matched case-insensitively; the `people` column may be omitted or
//! left empty for unlabeled inference input. Timestamps are either integer
//! seconds since the Unix epoch or ISO-8601 date-times (read as UTC).

use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, NaiveDateTime};
use thiserror::Error;

/// Number of environmental features per reading.
pub const NUM_FEATURES: usize = 5;

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Feature names in model order.
pub const FEATURE_NAMES: [&str; NUM_FEATURES] = ["temp", "hum", "co2", "noise", "pressure"];

const CSV_HEADER: &str = "timestamp,temp,hum,co2,noise,pressure,people";

#[derive(Debug, Error, PartialEq)]
pub enum DataError {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("missing or invalid header: {0}")]
    BadHeader(String),
    #[error("line {line}: timestamp {timestamp} does not follow {previous}")]
    NonMonotonicTimestamp { line: usize, timestamp: i64, previous: i64 },
    #[error("line {line}: {reason}")]
    InvalidReading { line: usize, reason: String },
    #[error("line {line}: occupancy label missing")]
    MissingLabel { line: usize },
    #[error("need {required} distinct days, found {available}")]
    InsufficientDays { required: usize, available: usize },
    #[error("no readings to compute statistics from")]
    EmptyInput,
}

/// One timestamped row of sensor values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorReading {
    /// Seconds since the Unix epoch, UTC.
    pub timestamp: i64,
    /// °C
    pub temperature: f64,
    /// % relative humidity
    pub humidity: f64,
    /// ppm
    pub co2: f64,
    /// dB
    pub noise: f64,
    /// mbar
    pub pressure: f64,
    pub people: Option<u32>,
}

impl SensorReading {
    /// Features in model order: temp, hum, co2, noise, pressure.
    pub fn features(&self) -> [f64; NUM_FEATURES] {
        [self.temperature, self.humidity, self.co2, self.noise, self.pressure]
    }

    /// UTC calendar day index (days since 1970-01-01).
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECONDS_PER_DAY)
    }

    /// Checks the physical range constraints on a reading.
    pub fn validate(&self) -> Result<(), String> {
        let f = self.features();
        if f.iter().any(|v| !v.is_finite()) {
            return Err("non-finite sensor value".into());
        }
        if self.co2 <= 0.0 {
            return Err(format!("co2 must be positive, got {}", self.co2));
        }
        if !(0.0..=100.0).contains(&self.humidity) {
            return Err(format!("humidity must lie in [0, 100], got {}", self.humidity));
        }
        if self.pressure <= 0.0 {
            return Err(format!("pressure must be positive, got {}", self.pressure));
        }
        Ok(())
    }
}

fn parse_timestamp(field: &str) -> Option<i64> {
    if let Ok(v) = field.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Some(dt.timestamp());
    }
    ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"]
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(field, fmt).ok())
        .map(|dt| dt.and_utc().timestamp())
}

struct Columns {
    timestamp: usize,
    features: [usize; NUM_FEATURES],
    people: Option<usize>,
    width: usize,
}

fn parse_header(line: &str) -> Result<Columns, DataError> {
    let names: Vec<String> = line.split(',').map(|s| s.trim().to_ascii_lowercase()).collect();
    let find = |name: &str| {
        names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::BadHeader(format!("column `{name}` not found")))
    };
    let timestamp = find("timestamp")?;
    let mut features = [0; NUM_FEATURES];
    for (slot, name) in features.iter_mut().zip(FEATURE_NAMES) {
        *slot = find(name)?;
    }
    Ok(Columns { timestamp, features, people: find("people").ok(), width: names.len() })
}

/// Parses a sensor CSV. Rows are returned in file order; `people` is `None`
/// where the label column is absent or empty.
pub fn parse_sensor_csv(text: &str) -> Result<Vec<SensorReading>, DataError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| DataError::BadHeader("empty input".into()))?;
    let cols = parse_header(header.trim_start_matches('\u{feff}'))?;

    let mut out: Vec<SensorReading> = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let fields: Vec<&str> = raw.split(',').map(str::trim).collect();
        if fields.len() != cols.width {
            return Err(DataError::MalformedRow {
                line,
                reason: format!("expected {} columns, found {}", cols.width, fields.len()),
            });
        }
        let timestamp = parse_timestamp(fields[cols.timestamp]).ok_or_else(|| DataError::MalformedRow {
            line,
            reason: format!("unparsable timestamp `{}`", fields[cols.timestamp]),
        })?;
        let mut values = [0.0; NUM_FEATURES];
        for (k, &col) in cols.features.iter().enumerate() {
            values[k] = fields[col].parse::<f64>().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("unparsable {} value `{}`", FEATURE_NAMES[k], fields[col]),
            })?;
        }
        let people = match cols.people.map(|c| fields[c]) {
            None | Some("") => None,
            Some(s) => Some(s.parse::<u32>().map_err(|_| DataError::MalformedRow {
                line,
                reason: format!("unparsable people count `{s}`"),
            })?),
        };
        let reading = SensorReading {
            timestamp,
            temperature: values[0],
            humidity: values[1],
            co2: values[2],
            noise: values[3],
            pressure: values[4],
            people,
        };
        reading.validate().map_err(|reason| DataError::InvalidReading { line, reason })?;
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(DataError::NonMonotonicTimestamp { line, timestamp, previous: prev.timestamp });
            }
        }
        out.push(reading);
    }
    Ok(out)
}

/// Fails with `MissingLabel` if any reading lacks an occupancy count.
/// Line numbers assume the readings came from a file with one header row.
pub fn require_labels(readings: &[SensorReading]) -> Result<(), DataError> {
    match readings.iter().position(|r| r.people.is_none()) {
        Some(i) => Err(DataError::MissingLabel { line: i + 2 }),
        None => Ok(()),
    }
}

/// Serializes readings to CSV with integer-epoch timestamps. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_sensor_csv(readings: &[SensorReading]) -> String {
    let mut out = String::with_capacity(64 * (readings.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in readings {
        let _ = write!(
            out,
            "{},{},{},{},{},{},",
            r.timestamp, r.temperature, r.humidity, r.co2, r.noise, r.pressure
        );
        if let Some(p) = r.people {
            let _ = write!(out, "{p}");
        }
        out.push('\n');
    }
    out
}

/// All readings falling on one UTC calendar day, in time order.
#[derive(Debug, Clone, PartialEq)]
pub struct DayGroup {
    pub day: i64,
    pub readings: Vec<SensorReading>,
}

/// Groups readings by UTC calendar day, ordered chronologically.
pub fn group_by_day(readings: &[SensorReading]) -> Vec<DayGroup> {
    let mut days: BTreeMap<i64, Vec<SensorReading>> = BTreeMap::new();
    for r in readings {
        days.entry(r.day()).or_default().push(*r);
    }
    days.into_iter()
        .map(|(day, mut readings)| {
            readings.sort_by_key(|r| r.timestamp);
            DayGroup { day, readings }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<DayGroup>,
    pub val: Vec<DayGroup>,
    pub test: Vec<DayGroup>,
}

/// Assigns whole days chronologically: the earliest `n_train` days to
/// train, the following `n_val` to validation and the next `n_test` to
/// test. Days beyond the requested total are left out.
pub fn split_by_days(
    readings: &[SensorReading],
    n_train: usize,
    n_val: usize,
    n_test: usize,
) -> Result<DatasetSplit, DataError> {
    let mut days = group_by_day(readings).into_iter();
    let required = n_train + n_val + n_test;
    if days.len() < required {
        return Err(DataError::InsufficientDays { required, available: days.len() });
    }
    let train = days.by_ref().take(n_train).collect();
    let val = days.by_ref().take(n_val).collect();
    let test = days.by_ref().take(n_test).collect();
    Ok(DatasetSplit { train, val, test })
}

/// Per-feature z-score statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: [f64; NUM_FEATURES],
    pub std: [f64; NUM_FEATURES],
}

impl NormStats {
    /// Identity transform.
    pub fn identity() -> Self {
        NormStats { mean: [0.0; NUM_FEATURES], std: [1.0; NUM_FEATURES] }
    }

    pub fn normalize(&self, x: &[f64; NUM_FEATURES]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|k| (x[k] - self.mean[k]) / self.std[k])
    }

    pub fn denormalize(&self, z: &[f64]) -> [f64; NUM_FEATURES] {
        std::array::from_fn(|k| z[k] * self.std[k] + self.mean[k])
    }
}

/// Mean and population standard deviation of every feature over all rows
/// of the given days. Zero deviations are replaced by 1.
pub fn compute_norm_stats(day_groups: &[DayGroup]) -> Result<NormStats, DataError> {
    let rows: Vec<[f64; NUM_FEATURES]> =
        day_groups.iter().flat_map(|d| d.readings.iter().map(SensorReading::features)).collect();
    if rows.is_empty() {
        return Err(DataError::EmptyInput);
    }
    let n = rows.len() as f64;
    let mut mean = [0.0; NUM_FEATURES];
    for row in &rows {
        for k in 0..NUM_FEATURES {
            mean[k] += row[k];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; NUM_FEATURES];
    for row in &rows {
        for k in 0..NUM_FEATURES {
            let d = row[k] - mean[k];
            var[k] += d * d;
        }
    }
    let std = var.map(|v| {
        let s = (v / n).sqrt();
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    Ok(NormStats { mean, std })
}

/// Normalized windows laid out as `[window][step][feature]` in one flat
/// buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    pub window_len: usize,
    pub stride: usize,
    pub windows: Vec<f64>,
    /// Occupancy of each window's final reading.
    pub labels: Vec<Option<u32>>,
    /// Timestamp of each window's final reading.
    pub timestamps: Vec<i64>,
    /// Days too short to produce a single window.
    pub short_days: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The `window_len × NUM_FEATURES` row-major matrix of window `i`.
    pub fn window(&self, i: usize) -> &[f64] {
        let size = self.window_len * NUM_FEATURES;
        &self.windows[i * size..(i + 1) * size]
    }

    /// All labels, or `MissingLabel` naming the first unlabeled window.
    pub fn labels(&self) -> Result<Vec<u32>, DataError> {
        self.labels
            .iter()
            .enumerate()
            .map(|(i, l)| l.ok_or(DataError::MissingLabel { line: i }))
            .collect()
    }

    /// Keeps only the windows whose indices are listed.
    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        let mut windows = Vec::with_capacity(indices.len() * self.window_len * NUM_FEATURES);
        for &i in indices {
            windows.extend_from_slice(self.window(i));
        }
        WindowedDataset {
            window_len: self.window_len,
            stride: self.stride,
            windows,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            short_days: self.short_days,
        }
    }
}

/// Number of windows a day of `rows` readings produces.
pub fn window_count(rows: usize, window_len: usize, stride: usize) -> usize {
    if rows < window_len {
        0
    } else {
        (rows - window_len) / stride + 1
    }
}

/// Slices each day into normalized windows; windows never cross days.
///
/// Panics if `window_len` or `stride` is zero.
pub fn make_windows(
    day_groups: &[DayGroup],
    stats: &NormStats,
    window_len: usize,
    stride: usize,
) -> WindowedDataset {
    assert!(window_len >= 1 && stride >= 1, "window_len and stride must be positive");
    let mut ds = WindowedDataset {
        window_len,
        stride,
        windows: Vec::new(),
        labels: Vec::new(),
        timestamps: Vec::new(),
        short_days: 0,
    };
    for day in day_groups {
        let rows = &day.readings;
        let count = window_count(rows.len(), window_len, stride);
        if count == 0 {
            ds.short_days += 1;
            continue;
        }
        let normalized: Vec<[f64; NUM_FEATURES]> =
            rows.iter().map(|r| stats.normalize(&r.features())).collect();
        for w in 0..count {
            let start = w * stride;
            for row in &normalized[start..start + window_len] {
                ds.windows.extend_from_slice(row);
            }
            let last = &rows[start + window_len - 1];
            ds.labels.push(last.people);
            ds.timestamps.push(last.timestamp);
        }
    }
    ds
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(ts: i64, co2: f64, people: Option<u32>) -> SensorReading {
        SensorReading {
            timestamp: ts,
            temperature: 21.5,
            humidity: 43.0,
            co2,
            noise: 53.0,
            pressure: 1020.8,
            people,
        }
    }

    fn day(day: i64, rows: usize) -> DayGroup {
        DayGroup {
            day,
            readings: (0..rows)
                .map(|i| reading(day * SECONDS_PER_DAY + 300 * i as i64, 400.0 + i as f64, Some(i as u32)))
                .collect(),
        }
    }

    #[test]
    fn parses_table_rows() {
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n\
                    1646640000,21.5,43,482,53,1020.8,0\n\
                    1646640300,21.6,43,504,56,1020.6,13\n";
        let rows = parse_sensor_csv(text).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].temperature, 21.5);
        assert_eq!(rows[0].humidity, 43.0);
        assert_eq!(rows[0].co2, 482.0);
        assert_eq!(rows[0].noise, 53.0);
        assert_eq!(rows[0].pressure, 1020.8);
        assert_eq!(rows[0].people, Some(0));
        assert_eq!(rows[1].people, Some(13));
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_sensor_csv("timestamp,temp,hum,co2,noise,pressure,people\n").unwrap().is_empty());
    }

    #[test]
    fn header_is_case_insensitive_and_people_optional() {
        let text = "Timestamp,TEMP,Hum,CO2,Noise,Pressure\n2022-03-07T09:00:00Z,21.5,43,482,53,1020.8\n";
        let rows = parse_sensor_csv(text).unwrap();
        assert_eq!(rows[0].timestamp, 1_646_643_600);
        assert_eq!(rows[0].people, None);
    }

    #[test]
    fn empty_label_is_none() {
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n10,21.5,43,482,53,1020.8,\n";
        let rows = parse_sensor_csv(text).unwrap();
        assert_eq!(rows[0].people, None);
        assert_eq!(require_labels(&rows), Err(DataError::MissingLabel { line: 2 }));
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n10,21.5,43,482,53,1020.8,0\n20,21.5,43,abc,53,1020.8,0\n";
        assert!(matches!(parse_sensor_csv(text), Err(DataError::MalformedRow { line: 3, .. })));
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n10,21.5,43,482\n";
        assert!(matches!(parse_sensor_csv(text), Err(DataError::MalformedRow { line: 2, .. })));
    }

    #[test]
    fn rejects_bad_header_and_time_order() {
        assert!(matches!(parse_sensor_csv("a,b,c\n"), Err(DataError::BadHeader(_))));
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n20,21.5,43,482,53,1020.8,0\n20,21.5,43,482,53,1020.8,0\n";
        assert!(matches!(
            parse_sensor_csv(text),
            Err(DataError::NonMonotonicTimestamp { line: 3, timestamp: 20, previous: 20 })
        ));
    }

    #[test]
    fn rejects_out_of_range_values() {
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n10,21.5,143,482,53,1020.8,0\n";
        assert!(matches!(parse_sensor_csv(text), Err(DataError::InvalidReading { line: 2, .. })));
        let text = "timestamp,temp,hum,co2,noise,pressure,people\n10,21.5,43,0,53,1020.8,0\n";
        assert!(matches!(parse_sensor_csv(text), Err(DataError::InvalidReading { .. })));
    }

    #[test]
    fn split_eleven_days() {
        let readings: Vec<_> = (0..11).flat_map(|d| day(19000 + d, 3).readings).collect();
        let split = split_by_days(&readings, 7, 2, 2).unwrap();
        let days = |g: &[DayGroup]| g.iter().map(|d| d.day - 19000).collect::<Vec<_>>();
        assert_eq!(days(&split.train), vec![0, 1, 2, 3, 4, 5, 6]);
        assert_eq!(days(&split.val), vec![7, 8]);
        assert_eq!(days(&split.test), vec![9, 10]);
    }

    #[test]
    fn split_one_each_and_insufficient() {
        let readings: Vec<_> = (0..3).flat_map(|d| day(d, 2).readings).collect();
        let split = split_by_days(&readings, 1, 1, 1).unwrap();
        assert_eq!((split.train.len(), split.val.len(), split.test.len()), (1, 1, 1));
        let two: Vec<_> = (0..2).flat_map(|d| day(d, 2).readings).collect();
        assert_eq!(
            split_by_days(&two, 7, 2, 2),
            Err(DataError::InsufficientDays { required: 11, available: 2 })
        );
    }

    #[test]
    fn norm_stats_cases() {
        let single = DayGroup { day: 0, readings: vec![reading(0, 482.0, Some(0))] };
        let s = compute_norm_stats(&[single]).unwrap();
        assert_eq!(s.mean, [21.5, 43.0, 482.0, 53.0, 1020.8]);
        assert_eq!(s.std, [1.0; 5]);

        let two = DayGroup { day: 0, readings: vec![reading(0, 400.0, None), reading(1, 600.0, None)] };
        let s = compute_norm_stats(std::slice::from_ref(&two)).unwrap();
        assert_eq!(s.mean[2], 500.0);
        assert_eq!(s.std[2], 100.0);
        assert_eq!(s.std[0], 1.0);
        let ds = make_windows(&[two], &s, 1, 1);
        assert_eq!(ds.window(0)[0], 0.0);
        assert_eq!(ds.window(1)[0], 0.0);

        assert_eq!(compute_norm_stats(&[]), Err(DataError::EmptyInput));
    }

    #[test]
    fn window_counts() {
        let stats = NormStats::identity();
        assert_eq!(make_windows(&[day(0, 10)], &stats, 4, 1).len(), 7);
        let short = make_windows(&[day(0, 3)], &stats, 4, 1);
        assert_eq!(short.len(), 0);
        assert_eq!(short.short_days, 1);
    }

    #[test]
    fn windows_stay_within_days() {
        // Start indices per day of 10 rows, window 4, stride 2: 0, 2, 4, 6.
        let ds = make_windows(&[day(0, 10), day(1, 10)], &NormStats::identity(), 4, 2);
        assert_eq!(ds.len(), 8);
        let co2_first: Vec<f64> = (0..8).map(|i| ds.window(i)[2]).collect();
        assert_eq!(co2_first, vec![400.0, 402.0, 404.0, 406.0, 400.0, 402.0, 404.0, 406.0]);
        let labels: Vec<u32> = ds.labels().unwrap();
        assert_eq!(labels, vec![3, 5, 7, 9, 3, 5, 7, 9]);
        assert_eq!(ds.timestamps[4], SECONDS_PER_DAY + 900);
    }
}
