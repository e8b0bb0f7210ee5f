//! Data preparation for the Metro Interstate Traffic Volume file: parse,
//! encode, split, drop outliers, scale, window.
//!
//! The composed pipeline ([`prepare`]) runs in this order:
//!
//! 1. encode the deduplicated records into a [`FeatureFrame`];
//! 2. split chronologically into train+validation rows and test rows;
//! 3. drop IQR outliers from train+validation only (test rows are untouched);
//! 4. take the latest `val_fraction` of the remaining rows as validation;
//! 5. fit min-max on train, apply to all three splits;
//! 6. cut gap-aware windows from each split separately.

mod frame;
mod ingest;
mod scale;
mod split;
mod stats;
mod window;

pub use frame::{encode, holiday_flag, FeatureFrame, FeatureSet, TARGET};
pub use ingest::{parse_csv, parse_reader, ParsedCsv, RawRecord, COLUMNS, DATE_FORMAT};
pub use scale::ScalerParams;
pub use split::{split, split_by_year, split_tail};
pub use stats::{describe, describe_column, describe_csv, iqr_bounds, iqr_filter, quantile, ColumnStats, IqrBounds};
pub use window::{contiguous_runs, make_windows, WindowConfig, WindowedDataset};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitPlan {
    /// Years up to `train_end_year` for train+validation, later years for test.
    Year { train_end_year: i32 },
    /// The chronologically last `test_fraction` of rows for test.
    TailFraction { test_fraction: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub window: WindowConfig,
    pub split: SplitPlan,
    pub val_fraction: f64,
    pub outlier_columns: Vec<String>,
    /// Keep only a fraction of the data: the latest rows of train+validation
    /// and the earliest rows of test, so the two stay adjacent in time.
    pub scale: Option<f64>,
}

impl PipelineConfig {
    pub fn new(lookback: usize, feature_set: FeatureSet) -> Self {
        PipelineConfig {
            window: WindowConfig::new(lookback, feature_set),
            split: SplitPlan::Year { train_end_year: 2017 },
            val_fraction: 0.2,
            outlier_columns: vec!["temp".into(), "rain_1h".into()],
            scale: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::invalid(format!("val_fraction {} outside [0, 1)", self.val_fraction)));
        }
        if let Some(s) = self.scale {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::invalid(format!("scale {s} outside (0, 1]")));
            }
        }
        if let SplitPlan::TailFraction { test_fraction } = self.split {
            if !(test_fraction > 0.0 && test_fraction < 1.0) {
                return Err(Error::invalid(format!("test_fraction {test_fraction} outside (0, 1)")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_rows: usize,
    pub val_rows: usize,
    pub test_rows: usize,
    pub outlier_rows_removed: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub test_windows: usize,
}

#[derive(Clone, Debug)]
pub struct Prepared {
    pub columns: Vec<String>,
    pub scaler: ScalerParams,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    pub outliers: Vec<IqrBounds>,
    pub sizes: SplitSizes,
}

/// Encoded frame split into (train+validation, test) with `scale` applied.
fn pre_and_test(records: &[RawRecord], cfg: &PipelineConfig) -> Result<(FeatureFrame, FeatureFrame)> {
    cfg.validate()?;
    let frame = encode(records, cfg.window.feature_set)?;
    match cfg.split {
        SplitPlan::Year { train_end_year } => {
            let (mut pre, mut test) = split_by_year(&frame, train_end_year);
            if let Some(s) = cfg.scale {
                pre = split_tail(&pre, s)?.1;
                let keep = ((test.len() as f64) * s).round() as usize;
                test = test.slice(0..keep.min(test.len()));
            }
            Ok((pre, test))
        }
        SplitPlan::TailFraction { test_fraction } => {
            let frame = match cfg.scale {
                Some(s) => split_tail(&frame, s)?.1,
                None => frame,
            };
            split_tail(&frame, test_fraction)
        }
    }
}

pub fn prepare(records: &[RawRecord], cfg: &PipelineConfig) -> Result<Prepared> {
    let (pre, test) = pre_and_test(records, cfg)?;
    split::ensure_non_empty(&[("train+validation", &pre), ("test", &test)])?;
    let (filtered, outliers) = iqr_filter(&pre, &cfg.outlier_columns)?;
    let (train, val) = split_tail(&filtered, cfg.val_fraction)?;
    split::ensure_non_empty(&[("train", &train), ("validation", &val)])?;

    let scaler = ScalerParams::fit(&train)?;
    let window = |f: &FeatureFrame, what: &str| {
        make_windows(&scaler.transform(f)?, &cfg.window).map_err(|e| match e {
            Error::EmptyDataset(msg) => Error::EmptyDataset(format!("{what}: {msg}")),
            other => other,
        })
    };
    let train_ds = window(&train, "train")?;
    let val_ds = window(&val, "validation")?;
    let test_ds = window(&test, "test")?;

    Ok(Prepared {
        columns: train.column_names.clone(),
        sizes: SplitSizes {
            train_rows: train.len(),
            val_rows: val.len(),
            test_rows: test.len(),
            outlier_rows_removed: pre.len() - filtered.len(),
            train_windows: train_ds.len(),
            val_windows: val_ds.len(),
            test_windows: test_ds.len(),
        },
        scaler,
        train: train_ds,
        val: val_ds,
        test: test_ds,
        outliers,
    })
}

/// Test windows for an already-fitted scaler, following the same split and
/// scale rules as [`prepare`].
pub fn prepare_test(records: &[RawRecord], cfg: &PipelineConfig, scaler: &ScalerParams) -> Result<WindowedDataset> {
    let (_, test) = pre_and_test(records, cfg)?;
    split::ensure_non_empty(&[("test", &test)])?;
    make_windows(&scaler.transform(&test)?, &cfg.window)
}
