use std::path::Path;

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COLUMNS: [&str; 9] = [
    "holiday",
    "temp",
    "rain_1h",
    "snow_1h",
    "clouds_all",
    "weather_main",
    "weather_description",
    "date_time",
    "traffic_volume",
];

pub const DATE_FORMAT: &str = "%Y-%m-%d %H:%M:%S";

/// One row of the Metro Interstate Traffic Volume file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub holiday: String,
    /// Kelvin.
    pub temp: f64,
    /// Millimetres in the hour.
    pub rain_1h: f64,
    pub snow_1h: f64,
    /// Cloud cover, percent.
    pub clouds_all: f64,
    pub weather_main: String,
    pub weather_description: String,
    pub date_time: NaiveDateTime,
    /// Vehicles per hour.
    pub traffic_volume: f64,
}

#[derive(Clone, Debug)]
pub struct ParsedCsv {
    /// Sorted by timestamp, one record per timestamp.
    pub records: Vec<RawRecord>,
    /// Data rows in the file before deduplication.
    pub raw_rows: usize,
    pub duplicates_removed: usize,
}

pub fn parse_csv(path: &Path) -> Result<ParsedCsv> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_reader(file, path)
}

/// Parses CSV text from any reader; `path` is used only in error messages.
pub fn parse_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<ParsedCsv> {
    let csv_err = |msg: String| Error::Csv {
        path: path.to_path_buf(),
        msg,
    };
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| csv_err(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].trim().is_empty()) {
        return Err(csv_err("empty file".into()));
    }
    let names: Vec<&str> = headers.iter().map(|h| h.trim().trim_start_matches('\u{feff}')).collect();
    let mut index = [0usize; 9];
    for (slot, col) in index.iter_mut().zip(COLUMNS) {
        *slot = names
            .iter()
            .position(|n| *n == col)
            .ok_or_else(|| csv_err(format!("missing column `{col}`")))?;
    }

    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: e.to_string(),
            }
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let parse_err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let field = |k: usize| row.get(index[k]).unwrap_or("").trim();
        let number = |k: usize| -> Result<f64> {
            let raw = field(k);
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(format!("{}: `{raw}` is not a finite number", COLUMNS[k]))),
            }
        };
        let date_raw = field(7);
        let date_time = NaiveDateTime::parse_from_str(date_raw, DATE_FORMAT)
            .map_err(|e| parse_err(format!("date_time `{date_raw}`: {e}")))?;
        if date_time.minute() != 0 || date_time.second() != 0 {
            return Err(parse_err(format!("date_time `{date_raw}` is not on the hour")));
        }
        let traffic_volume = number(8)?;
        if traffic_volume < 0.0 {
            return Err(parse_err(format!("traffic_volume {traffic_volume} is negative")));
        }
        records.push(RawRecord {
            holiday: field(0).to_string(),
            temp: number(1)?,
            rain_1h: number(2)?,
            snow_1h: number(3)?,
            clouds_all: number(4)?,
            weather_main: field(5).to_string(),
            weather_description: field(6).to_string(),
            date_time,
            traffic_volume,
        });
    }
    if records.is_empty() {
        return Err(csv_err("no data rows".into()));
    }

    let raw_rows = records.len();
    // Stable sort keeps file order among equal timestamps, so dedup keeps the first.
    records.sort_by_key(|r| r.date_time);
    records.dedup_by_key(|r| r.date_time);
    Ok(ParsedCsv {
        duplicates_removed: raw_rows - records.len(),
        raw_rows,
        records,
    })
}
