use serde::Serialize;

use super::frame::FeatureFrame;
use crate::error::{Error, Result};

/// Linear interpolation between order statistics at position `q (n - 1)`.
pub fn quantile(sorted: &[f64], q: f64) -> Result<f64> {
    if sorted.is_empty() {
        return Err(Error::invalid("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid(format!("quantile level {q} outside [0, 1]")));
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= sorted.len() {
        return Ok(sorted[sorted.len() - 1]);
    }
    Ok(sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]))
}

fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ColumnStats {
    pub column: String,
    pub count: usize,
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub max: f64,
}

pub fn describe_column(name: &str, values: &[f64]) -> Result<ColumnStats> {
    let sorted = sorted_copy(values);
    let n = values.len();
    let q = |p| quantile(&sorted, p);
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Ok(ColumnStats {
        column: name.to_string(),
        count: n,
        mean,
        std: var.sqrt(),
        min: q(0.0)?,
        q25: q(0.25)?,
        q50: q(0.5)?,
        q75: q(0.75)?,
        max: q(1.0)?,
    })
}

pub fn describe(frame: &FeatureFrame) -> Result<Vec<ColumnStats>> {
    if frame.is_empty() {
        return Err(Error::EmptyDataset("describe needs at least one row".into()));
    }
    frame
        .column_names
        .iter()
        .enumerate()
        .map(|(j, name)| describe_column(name, &frame.column(j)))
        .collect()
}

/// `column,count,mean,std,min,q25,q50,q75,max`, one line per column.
pub fn describe_csv(stats: &[ColumnStats]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for s in stats {
        w.serialize(s).map_err(|e| Error::invalid(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

/// Tukey fences `[Q1 - 1.5 IQR, Q3 + 1.5 IQR]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IqrBounds {
    pub column: String,
    pub q1: f64,
    pub q3: f64,
    pub lower: f64,
    pub upper: f64,
    /// Rows outside the fences for this column.
    pub removed: usize,
}

pub fn iqr_bounds(values: &[f64]) -> Result<(f64, f64, f64, f64)> {
    let sorted = sorted_copy(values);
    let q1 = quantile(&sorted, 0.25)?;
    let q3 = quantile(&sorted, 0.75)?;
    let iqr = q3 - q1;
    Ok((q1, q3, q1 - 1.5 * iqr, q3 + 1.5 * iqr))
}

/// Drops every row whose value in any of `columns` lies outside that
/// column's fences. Fences come from the unfiltered frame in a single pass.
pub fn iqr_filter(frame: &FeatureFrame, columns: &[String]) -> Result<(FeatureFrame, Vec<IqrBounds>)> {
    let mut keep = vec![true; frame.len()];
    let mut report = Vec::with_capacity(columns.len());
    for name in columns {
        let j = frame.column_index(name)?;
        let values = frame.column(j);
        if values.is_empty() {
            report.push(IqrBounds {
                column: name.clone(),
                q1: f64::NAN,
                q3: f64::NAN,
                lower: f64::NEG_INFINITY,
                upper: f64::INFINITY,
                removed: 0,
            });
            continue;
        }
        let (q1, q3, lower, upper) = iqr_bounds(&values)?;
        let mut removed = 0;
        for (k, v) in keep.iter_mut().zip(&values) {
            if *v < lower || *v > upper {
                removed += 1;
                *k = false;
            }
        }
        report.push(IqrBounds {
            column: name.clone(),
            q1,
            q3,
            lower,
            upper,
            removed,
        });
    }
    let kept: Vec<usize> = keep
        .iter()
        .enumerate()
        .filter_map(|(i, &k)| k.then_some(i))
        .collect();
    Ok((frame.select_rows(&kept), report))
}
