//! Scalar age labels and their vector encodings.
//!
//! Ages live on a 1-based grid of `bins` integer positions. Real-world ages
//! that start at 0 are mapped onto the grid with [`AgeLabel::from_years`],
//! which adds one; the default grid of [`DEFAULT_BINS`] therefore covers
//! ages 0 through 100.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Default number of age bins (ages 0..=100).
pub const DEFAULT_BINS: usize = 101;
/// Default width of the Gaussian label distribution, in years.
pub const DEFAULT_SIGMA: f64 = 2.0;

const SUM_TOLERANCE: f64 = 1e-12;

/// An integer age on the 1-based bin grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AgeLabel(usize);

impl AgeLabel {
    pub fn new(value: usize, bins: usize) -> Result<Self> {
        if value == 0 || value > bins {
            return Err(Error::domain(format!(
                "age label {value} outside [1, {bins}]"
            )));
        }
        Ok(AgeLabel(value))
    }

    /// Maps an age in years (starting at 0) onto the bin grid.
    pub fn from_years(years: usize, bins: usize) -> Result<Self> {
        Self::new(years + 1, bins)
    }

    pub fn get(self) -> usize {
        self.0
    }

    /// Zero-based position in a length-`bins` vector.
    pub fn index(self) -> usize {
        self.0 - 1
    }

    pub fn years(self) -> usize {
        self.0 - 1
    }
}

/// A probability vector over the age bins.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution(Vec<f64>);

impl LabelDistribution {
    /// Validates that every entry lies in `[0, 1]` and the entries sum to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("empty distribution"));
        }
        if let Some(i) = probs.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::domain(format!(
                "probability {} at bin {} outside [0, 1]",
                probs[i],
                i + 1
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::domain(format!("probabilities sum to {sum}")));
        }
        Ok(LabelDistribution(probs))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for LabelDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A binary vector with a single hot entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneHotLabel {
    hot: usize,
    len: usize,
}

impl OneHotLabel {
    pub fn label(&self) -> AgeLabel {
        AgeLabel(self.hot + 1)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bits(&self) -> Vec<u8> {
        (0..self.len).map(|i| u8::from(i == self.hot)).collect()
    }

    pub fn to_probs(&self) -> Vec<f64> {
        (0..self.len)
            .map(|i| if i == self.hot { 1.0 } else { 0.0 })
            .collect()
    }
}

/// Discrete Gaussian centred on `label` with standard deviation `sigma`,
/// evaluated at bins `1..=bins` and renormalised to unit mass.
pub fn encode_gaussian(label: AgeLabel, bins: usize, sigma: f64) -> Result<LabelDistribution> {
    if bins < 2 {
        return Err(Error::domain(format!("need at least 2 bins, got {bins}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::domain(format!("sigma must be positive, got {sigma}")));
    }
    let label = AgeLabel::new(label.get(), bins)?;
    let centre = label.get() as f64;
    let two_var = 2.0 * sigma * sigma;
    let mut probs: Vec<f64> = (1..=bins)
        .map(|i| {
            let d = i as f64 - centre;
            (-d * d / two_var).exp()
        })
        .collect();
    // The centre bin contributes exp(0) = 1, so the sum never underflows.
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(LabelDistribution(probs))
}

pub fn encode_onehot(label: AgeLabel, bins: usize) -> Result<OneHotLabel> {
    let label = AgeLabel::new(label.get(), bins)?;
    Ok(OneHotLabel {
        hot: label.index(),
        len: bins,
    })
}

/// Most probable bin of `probs`; ties resolve to the smallest index.
pub fn decode_argmax(probs: &[f64]) -> Result<AgeLabel> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in probs.iter().enumerate() {
        if v.is_nan() {
            return Err(Error::NonFinite {
                what: "distribution",
                index: i,
            });
        }
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| AgeLabel(i + 1))
        .ok_or_else(|| Error::domain("cannot decode an empty vector"))
}
