use chrono::Datelike;

use super::frame::FeatureFrame;
use crate::error::{Error, Result};

/// Rows up to and including `train_end_year`, and rows after it.
pub fn split_by_year(frame: &FeatureFrame, train_end_year: i32) -> (FeatureFrame, FeatureFrame) {
    let cut = frame.timestamps.partition_point(|t| t.year() <= train_end_year);
    (frame.slice(0..cut), frame.slice(cut..frame.len()))
}

/// Chronological head and tail; the tail holds `round(n * tail_fraction)` rows.
pub fn split_tail(frame: &FeatureFrame, tail_fraction: f64) -> Result<(FeatureFrame, FeatureFrame)> {
    if !(0.0..=1.0).contains(&tail_fraction) {
        return Err(Error::invalid(format!("fraction {tail_fraction} outside [0, 1]")));
    }
    let n = frame.len();
    let tail = ((n as f64) * tail_fraction).round() as usize;
    let cut = n - tail.min(n);
    Ok((frame.slice(0..cut), frame.slice(cut..n)))
}

/// Year-based train / validation / test split with no shuffling: years up to
/// `train_end_year` feed train and validation (validation is their latest
/// `val_fraction`), later years form the test set.
pub fn split(frame: &FeatureFrame, train_end_year: i32, val_fraction: f64) -> Result<(FeatureFrame, FeatureFrame, FeatureFrame)> {
    let (pre, test) = split_by_year(frame, train_end_year);
    let (train, val) = split_tail(&pre, val_fraction)?;
    ensure_non_empty(&[("train", &train), ("validation", &val), ("test", &test)])?;
    Ok((train, val, test))
}

pub(crate) fn ensure_non_empty(parts: &[(&str, &FeatureFrame)]) -> Result<()> {
    for (name, f) in parts {
        if f.is_empty() {
            return Err(Error::EmptyDataset(format!("{name} split has no rows")));
        }
    }
    Ok(())
}
