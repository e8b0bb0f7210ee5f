use serde::{Deserialize, Serialize};

use super::frame::FeatureFrame;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-column min/max fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub target_col: usize,
}

impl ScalerParams {
    pub fn fit(train: &FeatureFrame) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptyDataset("cannot fit a scaler on zero rows".into()));
        }
        let cols = train.n_features();
        let mut min = vec![f64::INFINITY; cols];
        let mut max = vec![f64::NEG_INFINITY; cols];
        for r in 0..train.len() {
            for (j, &v) in train.values.row(r).iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(ScalerParams {
            columns: train.column_names.clone(),
            min,
            max,
            target_col: train.target_col,
        })
    }

    #[inline]
    fn forward(&self, j: usize, v: f64) -> f64 {
        let range = self.max[j] - self.min[j];
        if range == 0.0 {
            0.0
        } else {
            (v - self.min[j]) / range
        }
    }

    /// `(x - min) / (max - min)` per column; constant columns map to 0.
    pub fn transform(&self, frame: &FeatureFrame) -> Result<FeatureFrame> {
        if frame.column_names != self.columns {
            return Err(Error::FeatureMismatch {
                model: self.columns.clone(),
                data: frame.column_names.clone(),
            });
        }
        let cols = frame.n_features();
        let mut data = frame.values.as_slice().to_vec();
        for (k, v) in data.iter_mut().enumerate() {
            *v = self.forward(k % cols, *v);
        }
        Ok(FeatureFrame {
            column_names: frame.column_names.clone(),
            timestamps: frame.timestamps.clone(),
            values: Matrix::from_vec(frame.len(), cols, data)?,
            target_col: frame.target_col,
        })
    }

    pub fn transform_target(&self, value: f64) -> f64 {
        self.forward(self.target_col, value)
    }

    /// Maps scaled target values back to vehicles per hour.
    pub fn inverse_target(&self, values: &[f64]) -> Vec<f64> {
        let (lo, hi) = (self.min[self.target_col], self.max[self.target_col]);
        values.iter().map(|v| v * (hi - lo) + lo).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.columns.len();
        if self.min.len() != n || self.max.len() != n || self.target_col >= n {
            return Err(Error::invalid(format!(
                "scaler has {n} columns but {} mins, {} maxs, target {}",
                self.min.len(),
                self.max.len(),
                self.target_col
            )));
        }
        if self.min.iter().zip(&self.max).any(|(a, b)| a > b) {
            return Err(Error::invalid("scaler min exceeds max"));
        }
        Ok(())
    }
}
