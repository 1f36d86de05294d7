//! Recovery scoring.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PSNR substituted for exact recoveries when averaging.
pub const PSNR_CLAMP_DB: f64 = 150.0;

/// `(1/d)‖a − b‖²`.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dims("mse", a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(Error::Empty("mse input"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64)
}

/// `10·log10(1/mse)` for data in `[0, 1]`; `+∞` when `mse == 0`.
pub fn psnr(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalThresholds {
    pub accurate: f64,
    pub approximate: f64,
}

impl Default for EvalThresholds {
    fn default() -> Self {
        EvalThresholds {
            accurate: 1e-7,
            approximate: 5e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub n: usize,
    pub n_accurate: usize,
    pub n_approximate: usize,
    pub accurate_rate: f64,
    pub approximate_rate: f64,
    /// Mean PSNR with exact recoveries counted as [`PSNR_CLAMP_DB`].
    pub avg_psnr_db: f64,
    pub mean_mse: f64,
}

/// Counts recoveries with `mse < accurate` and `mse < approximate` (strict).
pub fn summarize(mses: &[f64], thresholds: EvalThresholds) -> Result<EvalSummary> {
    if mses.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if let Some(bad) = mses.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
        return Err(Error::InvalidArgument(format!("invalid mse value {bad}")));
    }
    let n = mses.len();
    let n_accurate = mses.iter().filter(|&&m| m < thresholds.accurate).count();
    let n_approximate = mses.iter().filter(|&&m| m < thresholds.approximate).count();
    let avg_psnr_db = mses
        .iter()
        .map(|&m| psnr(m).min(PSNR_CLAMP_DB))
        .sum::<f64>()
        / n as f64;
    Ok(EvalSummary {
        n,
        n_accurate,
        n_approximate,
        accurate_rate: n_accurate as f64 / n as f64,
        approximate_rate: n_approximate as f64 / n as f64,
        avg_psnr_db,
        mean_mse: mses.iter().sum::<f64>() / n as f64,
    })
}
