//! Error metrics on original-scale traffic volumes.

use serde::{Deserialize, Serialize};

use crate::datapipe::ScalerParams;
use crate::error::{Error, Result};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Vehicles squared.
    pub mse: f64,
    /// Vehicles.
    pub mae: f64,
    /// Ratio, not percent.
    pub mape: f64,
    pub n: usize,
    pub epsilon: f64,
}

fn check(y: &[f64], y_hat: &[f64]) -> Result<()> {
    if y.len() != y_hat.len() {
        return Err(Error::invalid(format!(
            "metric inputs differ in length: {} actual vs {} predicted",
            y.len(),
            y_hat.len()
        )));
    }
    if y.is_empty() {
        return Err(Error::invalid("metric over zero samples"));
    }
    Ok(())
}

pub fn mse(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64)
}

pub fn mae(y: &[f64], y_hat: &[f64]) -> Result<f64> {
    check(y, y_hat)?;
    Ok(y.iter().zip(y_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / y.len() as f64)
}

/// Mean of `|y - y_hat| / max(eps, |y|)`. Zero actuals are allowed.
pub fn mape(y: &[f64], y_hat: &[f64], eps: f64) -> Result<f64> {
    check(y, y_hat)?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::invalid(format!("mape epsilon must be > 0, got {eps}")));
    }
    Ok(y
        .iter()
        .zip(y_hat)
        .map(|(a, b)| (a - b).abs() / eps.max(a.abs()))
        .sum::<f64>()
        / y.len() as f64)
}

/// Inverse-scales predictions and targets with the target column's min/max,
/// then computes all three metrics.
pub fn evaluate(pred_scaled: &[f64], target_scaled: &[f64], scaler: &ScalerParams, eps: f64) -> Result<EvalReport> {
    scaler.validate()?;
    check(target_scaled, pred_scaled)?;
    let y = scaler.inverse_target(target_scaled);
    let y_hat = scaler.inverse_target(pred_scaled);
    Ok(EvalReport {
        mse: mse(&y, &y_hat)?,
        mae: mae(&y, &y_hat)?,
        mape: mape(&y, &y_hat, eps)?,
        n: y.len(),
        epsilon: eps,
    })
}
