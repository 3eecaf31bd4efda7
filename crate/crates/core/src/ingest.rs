//! Station observation parsing and construction of the lagged supervised frame.
//!
//! Observation files carry one row per timestamp. Only the 02:00 and 14:00
//! solar-time rows are kept. The frame pairs each analysis day with the
//! 14:00 predictors observed `lag_days` earlier plus a day counter.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of columns in a lagged predictor vector (7 weather fields + day counter).
pub const N_PREDICTORS: usize = 8;

/// Solar hour of the diurnal observation.
pub const PM_HOUR: u8 = 14;
/// Solar hour of the nocturnal observation.
pub const AM_HOUR: u8 = 2;

/// Fraction of data rows allowed to fail parsing before the whole file is rejected.
const MAX_ROW_ERROR_FRACTION: f64 = 0.10;

/// One station observation at one solar timestamp. Absent measurements are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub date: NaiveDate,
    pub hour: u8,
    pub wind_dir: Option<f64>,
    pub wind_speed: Option<f64>,
    pub air_temp: Option<f64>,
    pub pressure: Option<f64>,
    pub visibility: Option<f64>,
    pub dew_point: Option<f64>,
    pub rel_humidity: Option<f64>,
}

impl WeatherRecord {
    /// The seven weather predictors in column order, if all are present.
    pub fn predictors(&self) -> Option<[f64; 7]> {
        Some([
            self.wind_dir?,
            self.wind_speed?,
            self.air_temp?,
            self.pressure?,
            self.visibility?,
            self.dew_point?,
            self.rel_humidity?,
        ])
    }

    /// Checks the physical range invariants. Returns the first violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.hour != PM_HOUR && self.hour != AM_HOUR {
            return Err(format!("hour {} is not 2 or 14", self.hour));
        }
        let checks: [(&str, Option<f64>, fn(f64) -> bool, &str); 6] = [
            ("wind_dir", self.wind_dir, |v| (0.0..360.0).contains(&v), "[0, 360)"),
            ("wind_speed", self.wind_speed, |v| v >= 0.0, ">= 0"),
            ("pressure", self.pressure, |v| v > 0.0, "> 0"),
            ("visibility", self.visibility, |v| v >= 0.0, ">= 0"),
            ("rel_humidity", self.rel_humidity, |v| (0.0..=100.0).contains(&v), "[0, 100]"),
            ("air_temp", self.air_temp, |_| true, ""),
        ];
        for (name, value, ok, range) in checks {
            if let Some(v) = value {
                if !v.is_finite() {
                    return Err(format!("{name} is not finite"));
                }
                if !ok(v) {
                    return Err(format!("{name} = {v} outside {range}"));
                }
            }
        }
        if let Some(v) = self.dew_point {
            if !v.is_finite() {
                return Err("dew_point is not finite".into());
            }
        }
        Ok(())
    }
}

/// Names the source column for every record field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub timestamp: String,
    /// chrono format string for the timestamp column.
    pub timestamp_format: String,
    pub wind_dir: String,
    pub wind_speed: String,
    pub air_temp: String,
    pub pressure: String,
    pub visibility: String,
    pub dew_point: String,
    pub rel_humidity: String,
    pub delimiter: u8,
    /// Field values treated as missing (compared after trimming).
    pub missing_sentinels: Vec<String>,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            timestamp_format: "%Y-%m-%dT%H:%M".into(),
            wind_dir: "wind_dir".into(),
            wind_speed: "wind_speed".into(),
            air_temp: "air_temp".into(),
            pressure: "pressure".into(),
            visibility: "visibility".into(),
            dew_point: "dew_point".into(),
            rel_humidity: "rel_humidity".into(),
            delimiter: b',',
            missing_sentinels: default_sentinels(),
        }
    }
}

pub fn default_sentinels() -> Vec<String> {
    ["", "NA", "9999", "99999", "9999.9", "99999.9", "-9999"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

/// A rejected or failed row. `row` is the 1-based data row number (header excluded).
#[derive(Debug, Clone, PartialEq)]
pub struct RowDiagnostic {
    pub row: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutput {
    pub records: Vec<WeatherRecord>,
    /// Rows that failed parsing (bad timestamp or unparseable number).
    pub row_errors: Vec<RowDiagnostic>,
    /// Rows that parsed but violated a range invariant or duplicated a timestamp.
    pub rejected: Vec<RowDiagnostic>,
    /// Rows at solar hours other than 02:00 and 14:00.
    pub skipped_other_hours: usize,
    pub data_rows: usize,
}

/// Parses a delimited observation file into records sorted by (date, hour).
pub fn parse_station_csv<R: Read>(source: R, schema: &ColumnMap) -> Result<ParseOutput> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader
        .headers()
        .map_err(|e| Error::Schema(format!("unreadable header: {e}")))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("header has no column named '{name}'")))
    };
    let ts_col = column(&schema.timestamp)?;
    let field_cols = [
        column(&schema.wind_dir)?,
        column(&schema.wind_speed)?,
        column(&schema.air_temp)?,
        column(&schema.pressure)?,
        column(&schema.visibility)?,
        column(&schema.dew_point)?,
        column(&schema.rel_humidity)?,
    ];
    let field_names = [
        "wind_dir",
        "wind_speed",
        "air_temp",
        "pressure",
        "visibility",
        "dew_point",
        "rel_humidity",
    ];

    let mut out = ParseOutput::default();
    let mut by_key: BTreeMap<(NaiveDate, u8), WeatherRecord> = BTreeMap::new();
    for (i, row) in reader.records().enumerate() {
        let row_no = i + 1;
        out.data_rows += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(RowDiagnostic { row: row_no, message: e.to_string() });
                continue;
            }
        };
        let ts_raw = row.get(ts_col).unwrap_or("").trim();
        let ts = match NaiveDateTime::parse_from_str(ts_raw, &schema.timestamp_format) {
            Ok(ts) => ts,
            Err(e) => {
                out.row_errors.push(RowDiagnostic {
                    row: row_no,
                    message: format!("unparseable timestamp '{ts_raw}': {e}"),
                });
                continue;
            }
        };
        if ts.minute() != 0 || (ts.hour() != u32::from(PM_HOUR) && ts.hour() != u32::from(AM_HOUR)) {
            out.skipped_other_hours += 1;
            continue;
        }
        let mut values = [None; 7];
        let mut bad = None;
        for (k, &col) in field_cols.iter().enumerate() {
            let raw = row.get(col).unwrap_or("").trim();
            if schema.missing_sentinels.iter().any(|s| s == raw) {
                continue;
            }
            match raw.parse::<f64>() {
                Ok(v) => values[k] = Some(v),
                Err(_) => {
                    bad = Some(format!("unparseable {} value '{raw}'", field_names[k]));
                    break;
                }
            }
        }
        if let Some(message) = bad {
            out.row_errors.push(RowDiagnostic { row: row_no, message });
            continue;
        }
        let record = WeatherRecord {
            date: ts.date(),
            hour: ts.hour() as u8,
            wind_dir: values[0],
            wind_speed: values[1],
            air_temp: values[2],
            pressure: values[3],
            visibility: values[4],
            dew_point: values[5],
            rel_humidity: values[6],
        };
        if let Err(message) = record.validate() {
            out.rejected.push(RowDiagnostic { row: row_no, message });
            continue;
        }
        let key = (record.date, record.hour);
        if by_key.contains_key(&key) {
            out.rejected.push(RowDiagnostic {
                row: row_no,
                message: format!("duplicate observation for {} {:02}:00", key.0, key.1),
            });
            continue;
        }
        by_key.insert(key, record);
    }
    if out.data_rows > 0
        && out.row_errors.len() as f64 > MAX_ROW_ERROR_FRACTION * out.data_rows as f64
    {
        let first = &out.row_errors[0];
        return Err(Error::Data(format!(
            "{} of {} rows failed to parse (first: row {}: {})",
            out.row_errors.len(),
            out.data_rows,
            first.row,
            first.message
        )));
    }
    out.records = by_key.into_values().collect();
    Ok(out)
}

/// Writes records in the default column layout understood by [`ColumnMap::default`].
pub fn write_station_csv<W: Write>(records: &[WeatherRecord], sink: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
    w.write_record([
        "timestamp",
        "wind_dir",
        "wind_speed",
        "air_temp",
        "pressure",
        "visibility",
        "dew_point",
        "rel_humidity",
    ])?;
    for r in records {
        let ts = r.date.and_hms_opt(u32::from(r.hour), 0, 0).expect("valid hour");
        let mut row = vec![ts.format("%Y-%m-%dT%H:%M").to_string()];
        for v in [
            r.wind_dir,
            r.wind_speed,
            r.air_temp,
            r.pressure,
            r.visibility,
            r.dew_point,
            r.rel_humidity,
        ] {
            row.push(fmt_opt(v));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Why a frame row cannot serve the diurnal channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowStatus {
    Complete,
    MissingPredictor,
    MissingResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedRow {
    /// 1-based day index within the analysis window.
    pub t: usize,
    pub date: NaiveDate,
    /// Equals `t`.
    pub day_counter: usize,
    /// Date the lagged predictors were observed (`date - lag_days`).
    pub lag_date: NaiveDate,
    pub x_lagged: Option<[f64; N_PREDICTORS]>,
    pub y_pm: Option<f64>,
    pub y_am: Option<f64>,
}

impl SupervisedRow {
    pub fn status(&self) -> RowStatus {
        match (self.x_lagged.is_some(), self.y_pm.is_some()) {
            (false, _) => RowStatus::MissingPredictor,
            (true, false) => RowStatus::MissingResponse,
            (true, true) => RowStatus::Complete,
        }
    }

    pub fn is_complete(&self) -> bool {
        self.status() == RowStatus::Complete
    }
}

/// Day-ordered rows covering the whole analysis window; gaps stay as incomplete rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupervisedFrame {
    pub rows: Vec<SupervisedRow>,
    pub lag_days: u32,
    pub start_date: NaiveDate,
    pub end_date: NaiveDate,
}

impl SupervisedFrame {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Indices of rows with both predictors and a 14:00 response.
    pub fn complete_indices(&self) -> Vec<usize> {
        (0..self.rows.len()).filter(|&i| self.rows[i].is_complete()).collect()
    }

    /// Row-major predictor matrix and 14:00 responses for the given rows.
    pub fn design(&self, idx: &[usize]) -> (Vec<[f64; N_PREDICTORS]>, Vec<f64>) {
        idx.iter()
            .map(|&i| {
                let r = &self.rows[i];
                (r.x_lagged.expect("complete row"), r.y_pm.expect("complete row"))
            })
            .unzip()
    }

    /// Serializes to the canonical CSV: t, date, day_counter, x1..x8, y_pm, y_am.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(sink);
        let mut header = vec!["t".to_string(), "date".into(), "day_counter".into()];
        header.extend((1..=N_PREDICTORS).map(|k| format!("x{k}")));
        header.push("y_pm".into());
        header.push("y_am".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut row = vec![r.t.to_string(), r.date.to_string(), r.day_counter.to_string()];
            match r.x_lagged {
                Some(x) => row.extend(x.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), N_PREDICTORS)),
            }
            row.push(fmt_opt(r.y_pm));
            row.push(fmt_opt(r.y_am));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the canonical CSV back. `lag_days` is not stored in the file.
    pub fn read_csv<R: Read>(source: R, lag_days: u32) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(source);
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.len() != 3 + N_PREDICTORS + 2 {
                return Err(Error::Schema(format!(
                    "frame row {} has {} columns, expected {}",
                    i + 1,
                    rec.len(),
                    3 + N_PREDICTORS + 2
                )));
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|_| Error::Data(format!("frame row {}: bad number '{s}'", i + 1)))
                }
            };
            let t: usize = rec[0]
                .parse()
                .map_err(|_| Error::Data(format!("frame row {}: bad t", i + 1)))?;
            let date = NaiveDate::parse_from_str(&rec[1], "%Y-%m-%d")
                .map_err(|e| Error::Data(format!("frame row {}: {e}", i + 1)))?;
            let day_counter: usize = rec[2]
                .parse()
                .map_err(|_| Error::Data(format!("frame row {}: bad day_counter", i + 1)))?;
            let mut x = [0.0; N_PREDICTORS];
            let mut complete = true;
            for k in 0..N_PREDICTORS {
                match num(&rec[3 + k])? {
                    Some(v) => x[k] = v,
                    None => complete = false,
                }
            }
            rows.push(SupervisedRow {
                t,
                date,
                day_counter,
                lag_date: date - Duration::days(i64::from(lag_days)),
                x_lagged: complete.then_some(x),
                y_pm: num(&rec[3 + N_PREDICTORS])?,
                y_am: num(&rec[4 + N_PREDICTORS])?,
            });
        }
        let (start_date, end_date) = match (rows.first(), rows.last()) {
            (Some(a), Some(b)) => (a.date, b.date),
            _ => return Err(Error::Data("frame file has no rows".into())),
        };
        Ok(Self { rows, lag_days, start_date, end_date })
    }
}

/// Builds one row per day of `[analysis_start, analysis_end]`.
pub fn build_frame(
    records: &[WeatherRecord],
    lag_days: u32,
    analysis_start: NaiveDate,
    analysis_end: NaiveDate,
) -> Result<SupervisedFrame> {
    if analysis_end < analysis_start {
        return Err(Error::Data(format!(
            "empty analysis window {analysis_start} .. {analysis_end}"
        )));
    }
    let index: BTreeMap<(NaiveDate, u8), &WeatherRecord> =
        records.iter().map(|r| ((r.date, r.hour), r)).collect();
    let lag = Duration::days(i64::from(lag_days));
    let mut rows = Vec::new();
    for (k, date) in analysis_start.iter_days().take_while(|d| *d <= analysis_end).enumerate() {
        let t = k + 1;
        let lag_date = date - lag;
        let x_lagged = index.get(&(lag_date, PM_HOUR)).and_then(|r| r.predictors()).map(|p| {
            let mut x = [0.0; N_PREDICTORS];
            x[..7].copy_from_slice(&p);
            x[7] = t as f64;
            x
        });
        rows.push(SupervisedRow {
            t,
            date,
            day_counter: t,
            lag_date,
            x_lagged,
            y_pm: index.get(&(date, PM_HOUR)).and_then(|r| r.air_temp),
            y_am: index.get(&(date, AM_HOUR)).and_then(|r| r.air_temp),
        });
    }
    if rows.iter().all(|r| !r.is_complete()) {
        return Err(Error::Data(format!(
            "no day in {analysis_start} .. {analysis_end} has both a 14:00 response and lagged predictors"
        )));
    }
    Ok(SupervisedFrame { rows, lag_days, start_date: analysis_start, end_date: analysis_end })
}

/// Sample quantile by linear interpolation at 1-based position `1 + q(n-1)`.
pub fn empirical_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("empirical_quantile of an empty list".into()));
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {q} outside (0, 1)")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    Ok(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub(crate) fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "timestamp,wind_dir,wind_speed,air_temp,pressure,visibility,dew_point,rel_humidity\n";

    fn day(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn record(date: NaiveDate, hour: u8, temp: f64) -> WeatherRecord {
        WeatherRecord {
            date,
            hour,
            wind_dir: Some(180.0),
            wind_speed: Some(3.0),
            air_temp: Some(temp),
            pressure: Some(1015.0),
            visibility: Some(10000.0),
            dew_point: Some(10.0),
            rel_humidity: Some(55.0),
        }
    }

    #[test]
    fn header_only_file_is_empty() {
        let out = parse_station_csv(HEADER.as_bytes(), &ColumnMap::default()).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.data_rows, 0);
    }

    #[test]
    fn one_valid_pm_row() {
        let text = format!("{HEADER}2020-06-01T14:00,90,2.5,25.1,1012.3,9000,12.0,45\n");
        let out = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].hour, 14);
        assert_eq!(out.records[0].air_temp, Some(25.1));
    }

    #[test]
    fn humidity_out_of_range_is_rejected() {
        let text = format!(
            "{HEADER}2020-06-01T14:00,90,2.5,25.1,1012.3,9000,12.0,150\n2020-06-02T14:00,90,2.5,25.1,1012.3,9000,12.0,50\n"
        );
        let out = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.rejected.len(), 1);
        assert_eq!(out.rejected[0].row, 1);
        assert!(out.rejected[0].message.contains("rel_humidity"));
    }

    #[test]
    fn sentinels_become_missing_and_other_hours_are_skipped() {
        let text = format!(
            "{HEADER}2020-06-01T14:00,9999,,25.1,1012.3,9000,12.0,50\n2020-06-01T08:00,1,1,1,1000,1,1,1\n"
        );
        let out = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(out.records[0].wind_dir, None);
        assert_eq!(out.records[0].wind_speed, None);
        assert_eq!(out.skipped_other_hours, 1);
    }

    #[test]
    fn missing_column_is_schema_error() {
        let text = "timestamp,wind_dir\n";
        let err = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn too_many_bad_timestamps_is_fatal_but_few_are_collected() {
        let mut text = HEADER.to_string();
        for d in 1..=20 {
            text.push_str(&format!("2020-06-{d:02}T14:00,90,2,20,1010,9000,10,50\n"));
        }
        text.push_str("yesterday,90,2,20,1010,9000,10,50\n");
        let out = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        assert_eq!(out.row_errors.len(), 1);
        assert_eq!(out.row_errors[0].row, 21);
        for _ in 0..3 {
            text.push_str("garbage,90,2,20,1010,9000,10,50\n");
        }
        let err = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn duplicates_are_rejected_and_output_is_sorted() {
        let text = format!(
            "{HEADER}2020-06-02T14:00,90,2,21,1010,9000,10,50\n2020-06-01T14:00,90,2,20,1010,9000,10,50\n2020-06-01T14:00,90,2,22,1010,9000,10,50\n2020-06-01T02:00,90,2,15,1010,9000,10,50\n"
        );
        let out = parse_station_csv(text.as_bytes(), &ColumnMap::default()).unwrap();
        let keys: Vec<_> = out.records.iter().map(|r| (r.date, r.hour)).collect();
        assert_eq!(keys, vec![(day(2020, 6, 1), 2), (day(2020, 6, 1), 14), (day(2020, 6, 2), 14)]);
        assert_eq!(out.records[1].air_temp, Some(20.0));
        assert_eq!(out.rejected.len(), 1);
    }

    #[test]
    fn semicolon_delimiter() {
        let schema = ColumnMap { delimiter: b';', ..ColumnMap::default() };
        let text = HEADER.replace(',', ";") + "2020-06-01T02:00;90;2;15.5;1010;9000;10;50\n";
        let out = parse_station_csv(text.as_bytes(), &schema).unwrap();
        assert_eq!(out.records[0].hour, 2);
    }

    #[test]
    fn paris_window_has_183_rows() {
        let start = day(2020, 3, 18);
        let records: Vec<_> = start
            .iter_days()
            .take_while(|d| *d <= day(2020, 9, 30))
            .flat_map(|d| [record(d, 2, 15.0), record(d, 14, 25.0)])
            .collect();
        let frame = build_frame(&records, 14, day(2020, 4, 1), day(2020, 9, 30)).unwrap();
        assert_eq!(frame.len(), 183);
        assert_eq!(frame.complete_indices().len(), 183);
        assert_eq!(frame.rows[182].day_counter, 183);
    }

    #[test]
    fn zero_lag_uses_same_day() {
        let d = day(2020, 7, 1);
        let records = vec![record(d, 14, 28.0)];
        let frame = build_frame(&records, 0, d, d).unwrap();
        assert_eq!(frame.len(), 1);
        let x = frame.rows[0].x_lagged.unwrap();
        assert_eq!(x[2], 28.0);
        assert_eq!(x[7], 1.0);
        assert_eq!(frame.rows[0].y_am, None);
    }

    #[test]
    fn thirty_days_lag_fourteen_gives_sixteen_complete_rows() {
        let start = day(2020, 6, 1);
        let records: Vec<_> = (0..30).map(|k| record(start + Duration::days(k), 14, 20.0)).collect();
        let frame = build_frame(&records, 14, start, start + Duration::days(29)).unwrap();
        assert_eq!(frame.len(), 30);
        assert_eq!(frame.complete_indices().len(), 16);
        assert_eq!(frame.rows[13].status(), RowStatus::MissingPredictor);
        assert_eq!(frame.rows[14].status(), RowStatus::Complete);
    }

    #[test]
    fn build_frame_errors() {
        let d = day(2020, 7, 1);
        assert!(build_frame(&[], 14, d, d - Duration::days(1)).is_err());
        assert!(build_frame(&[record(d, 14, 20.0)], 14, d, d).is_err());
    }

    #[test]
    fn quantile_examples() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(empirical_quantile(&v, 0.5).unwrap(), 5.5);
        assert_eq!(empirical_quantile(&[4.2; 7], 0.37).unwrap(), 4.2);
        assert!(empirical_quantile(&[], 0.5).is_err());
        assert!(empirical_quantile(&v, 1.0).is_err());
    }
}
