//! Reconstruction quality measures.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `||w_hat - w|| / ||w||`.
pub fn nmse(w_hat: &DVector<f64>, w_true: &DVector<f64>) -> Result<f64> {
    if w_hat.len() != w_true.len() {
        return Err(Error::DimensionMismatch {
            field: "w_hat",
            expected: w_true.len(),
            found: w_hat.len(),
        });
    }
    let denom = w_true.norm();
    if denom == 0.0 {
        return Err(Error::UndefinedMetric("nmse of a zero true vector"));
    }
    Ok((w_hat - w_true).norm() / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    pub db: f64,
    /// Set when the noise is zero and `db` is `+inf`.
    pub noiseless: bool,
}

/// `20 log10(||A w|| / ||xi||)`.
pub fn snr_db(a: &DMatrix<f64>, w_true: &DVector<f64>, xi: &DVector<f64>) -> Result<Snr> {
    if a.ncols() != w_true.len() || a.nrows() != xi.len() {
        return Err(Error::DimensionMismatch {
            field: "snr operands",
            expected: a.nrows(),
            found: xi.len(),
        });
    }
    let signal = (a * w_true).norm();
    let noise = xi.norm();
    if noise == 0.0 {
        return Ok(Snr {
            db: f64::INFINITY,
            noiseless: true,
        });
    }
    if signal == 0.0 {
        return Err(Error::UndefinedSnr);
    }
    Ok(Snr {
        db: 20.0 * (signal / noise).log10(),
        noiseless: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportMetrics {
    pub precision: f64,
    pub recall: f64,
    /// No coordinate passed the threshold; precision is then reported as 1.
    pub empty_prediction: bool,
}

/// Predicted support is `{ j : |w_hat_j| >= rel_tol ||w_hat|| }`; the true
/// support is the nonzero pattern of `w_true`. With an empty true support the
/// recall is 1.
pub fn support_metrics(w_hat: &DVector<f64>, w_true: &DVector<f64>, rel_tol: f64) -> Result<SupportMetrics> {
    if w_hat.len() != w_true.len() {
        return Err(Error::DimensionMismatch {
            field: "w_hat",
            expected: w_true.len(),
            found: w_hat.len(),
        });
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("rel_tol must be nonnegative, got {rel_tol}")));
    }
    let norm = w_hat.norm();
    let cut = rel_tol * norm;
    let predicted: Vec<bool> = w_hat.iter().map(|v| norm > 0.0 && v.abs() >= cut && *v != 0.0).collect();
    let truth: Vec<bool> = w_true.iter().map(|v| *v != 0.0).collect();
    let tp = predicted.iter().zip(&truth).filter(|(p, t)| **p && **t).count();
    let n_pred = predicted.iter().filter(|p| **p).count();
    let n_true = truth.iter().filter(|t| **t).count();
    Ok(SupportMetrics {
        precision: if n_pred == 0 { 1.0 } else { tp as f64 / n_pred as f64 },
        recall: if n_true == 0 { 1.0 } else { tp as f64 / n_true as f64 },
        empty_prediction: n_pred == 0,
    })
}
