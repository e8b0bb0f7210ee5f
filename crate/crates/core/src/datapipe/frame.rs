use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::ingest::RawRecord;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const TARGET: &str = "traffic_volume";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    /// Every usable signal: weather, holiday flag, weather one-hot, cyclical time.
    All,
    /// temp, rain_1h, clouds_all, traffic_volume.
    Reduced,
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::All => "all",
            FeatureSet::Reduced => "reduced",
        })
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(FeatureSet::All),
            "reduced" => Ok(FeatureSet::Reduced),
            other => Err(Error::invalid(format!("unknown feature set `{other}` (expected all or reduced)"))),
        }
    }
}

/// Numeric feature table, one row per hourly timestamp.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub column_names: Vec<String>,
    pub timestamps: Vec<NaiveDateTime>,
    pub values: Matrix,
    pub target_col: usize,
}

impl FeatureFrame {
    pub fn new(column_names: Vec<String>, timestamps: Vec<NaiveDateTime>, values: Matrix) -> Result<Self> {
        if values.rows() != timestamps.len() || values.cols() != column_names.len() {
            return Err(Error::invalid(format!(
                "frame values {:?} do not match {} timestamps x {} columns",
                values.shape(),
                timestamps.len(),
                column_names.len()
            )));
        }
        let target_col = column_names
            .iter()
            .position(|c| c == TARGET)
            .ok_or_else(|| Error::invalid(format!("frame has no `{TARGET}` column")))?;
        Ok(FeatureFrame {
            column_names,
            timestamps,
            values,
            target_col,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.column_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| Error::invalid(format!("unknown column `{name}`")))
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.values.get(r, j)).collect()
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> FeatureFrame {
        let cols = self.n_features();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.values.row(i));
        }
        FeatureFrame {
            column_names: self.column_names.clone(),
            timestamps: indices.iter().map(|&i| self.timestamps[i]).collect(),
            values: Matrix::from_vec(indices.len(), cols, data).expect("row-major copy"),
            target_col: self.target_col,
        }
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> FeatureFrame {
        let idx: Vec<usize> = range.collect();
        self.select_rows(&idx)
    }
}

/// Turns raw records into numeric columns. The target is always the last column.
pub fn encode(records: &[RawRecord], feature_set: FeatureSet) -> Result<FeatureFrame> {
    let mut names: Vec<String> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(records.len());
    match feature_set {
        FeatureSet::Reduced => {
            names.extend(["temp", "rain_1h", "clouds_all", TARGET].map(String::from));
            for r in records {
                rows.push(vec![r.temp, r.rain_1h, r.clouds_all, r.traffic_volume]);
            }
        }
        FeatureSet::All => {
            let categories: BTreeSet<&str> = records.iter().map(|r| r.weather_main.as_str()).collect();
            names.extend(["temp", "rain_1h", "snow_1h", "clouds_all", "holiday_flag"].map(String::from));
            names.extend(categories.iter().map(|c| format!("weather_{c}")));
            names.extend(["hour_sin", "hour_cos", "dow_sin", "dow_cos", TARGET].map(String::from));
            for r in records {
                let mut row = vec![r.temp, r.rain_1h, r.snow_1h, r.clouds_all, holiday_flag(&r.holiday)];
                row.extend(categories.iter().map(|c| f64::from(u8::from(*c == r.weather_main))));
                let (hs, hc) = cyclical(r.date_time.hour() as f64, 24.0);
                let (ds, dc) = cyclical(r.date_time.weekday().num_days_from_monday() as f64, 7.0);
                row.extend([hs, hc, ds, dc, r.traffic_volume]);
                rows.push(row);
            }
        }
    }
    let values = if rows.is_empty() {
        Matrix::zeros(0, names.len())
    } else {
        Matrix::from_rows(&rows)?
    };
    FeatureFrame::new(names, records.iter().map(|r| r.date_time).collect(), values)
}

pub fn holiday_flag(holiday: &str) -> f64 {
    let h = holiday.trim();
    if h.is_empty() || h == "None" {
        0.0
    } else {
        1.0
    }
}

fn cyclical(value: f64, period: f64) -> (f64, f64) {
    let angle = 2.0 * PI * value / period;
    (angle.sin(), angle.cos())
}
