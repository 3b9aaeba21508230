//! Mean absolute error and cumulative score.

use std::fmt;

use crate::error::{check_len, Error, Result};

/// Cumulative-score threshold in years.
pub const DEFAULT_CS_THRESHOLD: u32 = 5;

fn check_pairs(preds: &[f64], truths: &[f64]) -> Result<()> {
    if truths.is_empty() {
        return Err(Error::domain("metrics need at least one sample"));
    }
    check_len(truths.len(), preds.len())
}

/// Mean of `|pred - truth|`, in years.
pub fn mae(preds: &[f64], truths: &[f64]) -> Result<f64> {
    check_pairs(preds, truths)?;
    let total: f64 = preds.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / truths.len() as f64)
}

/// Percentage of samples with `|pred - truth| < threshold`.
///
/// The inequality is strict, so an error of exactly `threshold` years is a
/// miss. Some age-estimation literature uses `<=`; results differ at integer
/// error boundaries.
pub fn cs(preds: &[f64], truths: &[f64], threshold: f64) -> Result<f64> {
    check_pairs(preds, truths)?;
    if !(threshold >= 1.0) {
        return Err(Error::domain(format!(
            "CS threshold must be at least 1, got {threshold}"
        )));
    }
    let hits = preds
        .iter()
        .zip(truths)
        .filter(|(p, t)| (*p - *t).abs() < threshold)
        .count();
    Ok(100.0 * hits as f64 / truths.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub cs: f64,
    pub threshold: u32,
    pub n: usize,
}

impl MetricsReport {
    pub fn compute(preds: &[f64], truths: &[f64], threshold: u32) -> Result<Self> {
        Ok(MetricsReport {
            mae: mae(preds, truths)?,
            cs: cs(preds, truths, f64::from(threshold))?,
            threshold,
            n: truths.len(),
        })
    }

    /// Flat `key=value` lines.
    pub fn to_record(&self) -> String {
        format!(
            "mae={}\ncs={}\ncs_threshold={}\nn={}\n",
            self.mae, self.cs, self.threshold, self.n
        )
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "MAE {:.3} years, CS(<{}) {:.2}% over {} samples",
            self.mae, self.threshold, self.cs, self.n
        )
    }
}
