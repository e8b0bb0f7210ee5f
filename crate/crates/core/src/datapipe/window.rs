use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use super::frame::{FeatureFrame, FeatureSet};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowConfig {
    /// Past hours fed to the model.
    pub lookback: usize,
    /// Future hours predicted per window.
    pub horizon: usize,
    pub feature_set: FeatureSet,
    /// Largest timestamp step, in hours, still treated as contiguous.
    pub max_gap: i64,
}

impl WindowConfig {
    pub fn new(lookback: usize, feature_set: FeatureSet) -> Self {
        WindowConfig {
            lookback,
            horizon: 1,
            feature_set,
            max_gap: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lookback == 0 || self.horizon == 0 {
            return Err(Error::invalid(format!(
                "lookback ({}) and horizon ({}) must be >= 1",
                self.lookback, self.horizon
            )));
        }
        if self.max_gap < 1 {
            return Err(Error::invalid("max_gap must be >= 1 hour"));
        }
        Ok(())
    }
}

/// Sliding-window samples. Sample `k` is `inputs[k]` (`lookback x features`,
/// oldest row first) with targets in row `k` of `targets` (`samples x horizon`).
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    pub inputs: Vec<Matrix>,
    pub targets: Matrix,
    /// Timestamp of each window's first target hour.
    pub target_timestamps: Vec<NaiveDateTime>,
    pub lookback: usize,
    pub horizon: usize,
    pub n_features: usize,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// Batch-as-columns view of the samples at `indices`: `lookback` matrices
    /// of `features x batch`, and a `horizon x batch` target.
    pub fn batch(&self, indices: &[usize]) -> Result<(Vec<Matrix>, Matrix)> {
        let b = indices.len();
        if b == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::invalid(format!("sample {bad} out of range ({})", self.len())));
        }
        let mut steps = Vec::with_capacity(self.lookback);
        for t in 0..self.lookback {
            let mut m = Matrix::zeros(self.n_features, b);
            for (col, &i) in indices.iter().enumerate() {
                for (f, &v) in self.inputs[i].row(t).iter().enumerate() {
                    m.set(f, col, v);
                }
            }
            steps.push(m);
        }
        let mut y = Matrix::zeros(self.horizon, b);
        for (col, &i) in indices.iter().enumerate() {
            for (k, &v) in self.targets.row(i).iter().enumerate() {
                y.set(k, col, v);
            }
        }
        Ok((steps, y))
    }

    pub fn subset(&self, indices: &[usize]) -> WindowedDataset {
        let mut targets = Vec::with_capacity(indices.len() * self.horizon);
        for &i in indices {
            targets.extend_from_slice(self.targets.row(i));
        }
        WindowedDataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: Matrix::from_vec(indices.len(), self.horizon, targets).expect("row copy"),
            target_timestamps: indices.iter().map(|&i| self.target_timestamps[i]).collect(),
            lookback: self.lookback,
            horizon: self.horizon,
            n_features: self.n_features,
        }
    }
}

/// Maximal runs `[start, end)` whose consecutive timestamps differ by at most
/// `max_gap` hours.
pub fn contiguous_runs(timestamps: &[NaiveDateTime], max_gap: i64) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    if timestamps.is_empty() {
        return runs;
    }
    let mut start = 0;
    for i in 1..timestamps.len() {
        let step = (timestamps[i] - timestamps[i - 1]).num_hours();
        if step < 1 || step > max_gap {
            runs.push((start, i));
            start = i;
        }
    }
    runs.push((start, timestamps.len()));
    runs
}

/// Slides a `lookback + horizon` window over every contiguous run; a run of
/// `m` rows yields `max(0, m - lookback - horizon + 1)` windows.
pub fn make_windows(frame: &FeatureFrame, cfg: &WindowConfig) -> Result<WindowedDataset> {
    cfg.validate()?;
    let span = cfg.lookback + cfg.horizon;
    let cols = frame.n_features();
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut target_timestamps = Vec::new();
    for (start, end) in contiguous_runs(&frame.timestamps, cfg.max_gap) {
        if end - start < span {
            continue;
        }
        for s in start..=end - span {
            let mut block = Vec::with_capacity(cfg.lookback * cols);
            for r in s..s + cfg.lookback {
                block.extend_from_slice(frame.values.row(r));
            }
            inputs.push(Matrix::from_vec(cfg.lookback, cols, block)?);
            for r in s + cfg.lookback..s + span {
                targets.push(frame.values.get(r, frame.target_col));
            }
            target_timestamps.push(frame.timestamps[s + cfg.lookback]);
        }
    }
    if inputs.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no contiguous run of {span} hours among {} rows",
            frame.len()
        )));
    }
    let n = inputs.len();
    Ok(WindowedDataset {
        inputs,
        targets: Matrix::from_vec(n, cfg.horizon, targets)?,
        target_timestamps,
        lookback: cfg.lookback,
        horizon: cfg.horizon,
        n_features: cols,
    })
}
