//! Softmax-composed losses for label-distribution learning.
//!
//! Every loss returns its value together with the gradient with respect to
//! the logits `z` that produced the predicted distribution `p = softmax(z)`.
//! All logarithms are natural. The DC loss is a ratio of logarithms, so its
//! value does not depend on the base; its gradient constant is
//! `alpha / (2 ln(1 - alpha))`, which equals the base-10 expression
//! `alpha log(e) / (2 log(1 - alpha))`. The constant is negative: raising the
//! Bhattacharyya coefficient lowers the loss.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use crate::error::{check_len, Error, Result};
use crate::label_codec::{encode_gaussian, AgeLabel, LabelDistribution};

/// Default mean-penalty weight for CE-MV.
pub const DEFAULT_LAMBDA1: f64 = 0.2;
/// Default variance-penalty weight for CE-MV.
pub const DEFAULT_LAMBDA2: f64 = 0.05;
/// Default DC loss parameter.
pub const DEFAULT_ALPHA: f64 = 0.01;

/// Softmax output; strictly positive entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedDistribution(Vec<f64>);

impl PredictedDistribution {
    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for PredictedDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Max-subtracted softmax. Finite logits never overflow.
pub fn softmax(z: &[f64]) -> Result<PredictedDistribution> {
    let log_p = log_softmax(z)?;
    Ok(PredictedDistribution(log_p.iter().map(|v| v.exp()).collect()))
}

/// `ln softmax(z)`, computed without forming `p`.
pub fn log_softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::domain("empty logit vector"));
    }
    if let Some(i) = z.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "logits",
            index: i,
        });
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = z.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
    Ok(z.iter().map(|v| v - lse).collect())
}

/// Vector-Jacobian product through softmax: maps `dL/dp` to `dL/dz`.
///
/// `dL/dz_i = p_i (g_i - sum_k p_k g_k)`.
pub fn softmax_vjp(p: &[f64], grad_p: &[f64]) -> Result<Vec<f64>> {
    check_len(p.len(), grad_p.len())?;
    let inner: f64 = p.iter().zip(grad_p).map(|(a, b)| a * b).sum();
    Ok(p.iter().zip(grad_p).map(|(a, g)| a * (g - inner)).collect())
}

/// Bhattacharyya coefficient `sum_k sqrt(p_k q_k)`.
pub fn bhattacharyya(p: &[f64], q: &[f64]) -> Result<f64> {
    check_len(p.len(), q.len())?;
    Ok(p.iter().zip(q).map(|(a, b)| (a * b).sqrt()).sum())
}

/// Loss value with its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct LossResult {
    pub value: f64,
    pub grad_z: Vec<f64>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

fn check_lambda(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be non-negative, got {v}")))
    }
}

/// Distribution-cognisant loss
/// `ln(1 - alpha (1 - B)) / ln(1 - alpha)` with `B` the Bhattacharyya
/// coefficient of `p` and `q`.
///
/// Bounded in `[0, 1]`, symmetric in its arguments, and finite for any pair
/// of distributions including disjoint supports.
pub fn dc_loss(p: &[f64], q: &[f64], alpha: f64) -> Result<LossResult> {
    check_alpha(alpha)?;
    let b = bhattacharyya(p, q)?;
    let log_base = (-alpha).ln_1p();
    let deficit = 1.0 - b;
    let inner = 1.0 - alpha * deficit;
    let value = ((-alpha * deficit).ln_1p() / log_base).clamp(0.0, 1.0);
    let scale = alpha / (2.0 * log_base * inner);
    let grad_z = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| scale * ((pi * qi).sqrt() - pi * b))
        .collect();
    Ok(LossResult { value, grad_z })
}

/// `sum_k q_k ln(q_k / p_k)`, gradient `p - q`.
///
/// Bins with `q_k = 0` contribute nothing. A bin with `q_k > 0` and
/// `p_k = 0` makes the value infinite.
pub fn kl_loss(p: &[f64], q: &[f64]) -> Result<LossResult> {
    check_len(p.len(), q.len())?;
    let value = p
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(&pi, &qi)| qi * (qi / pi).ln())
        .sum::<f64>()
        .max(0.0);
    Ok(LossResult {
        value,
        grad_z: kl_grad(p, q),
    })
}

fn kl_grad(p: &[f64], q: &[f64]) -> Vec<f64> {
    p.iter().zip(q).map(|(a, b)| a - b).collect()
}

/// KL value computed from log-probabilities. Stays finite far beyond the
/// point where `p` itself underflows.
fn kl_from_log_p(log_p: &[f64], q: &[f64]) -> f64 {
    log_p
        .iter()
        .zip(q)
        .filter(|(_, &qi)| qi > 0.0)
        .map(|(&lp, &qi)| qi * (qi.ln() - lp))
        .sum::<f64>()
        .max(0.0)
}

/// Cross-entropy `-ln p_y` against a one-hot label.
pub fn ce_loss(p: &[f64], label: AgeLabel) -> Result<LossResult> {
    let y = AgeLabel::new(label.get(), p.len())?.index();
    let value = -p[y].ln();
    let mut grad_z = p.to_vec();
    grad_z[y] -= 1.0;
    Ok(LossResult { value, grad_z })
}

/// Mean and variance of `p` over bin positions `1..=L`.
pub fn moments(p: &[f64]) -> (f64, f64) {
    let mean: f64 = p.iter().enumerate().map(|(i, v)| (i + 1) as f64 * v).sum();
    let var: f64 = p
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let d = (i + 1) as f64 - mean;
            d * d * v
        })
        .sum();
    (mean, var)
}

/// Cross-entropy regularised by the squared error of the predicted mean and
/// by the predicted variance:
/// `-ln p_y + lambda1 (mu - y)^2 + lambda2 var`.
pub fn cemv_loss(p: &[f64], label: AgeLabel, lambda1: f64, lambda2: f64) -> Result<LossResult> {
    check_lambda("lambda1", lambda1)?;
    check_lambda("lambda2", lambda2)?;
    let ce = ce_loss(p, label)?;
    let (mean, var) = moments(p);
    let y = label.get() as f64;
    let value = ce.value + lambda1 * (mean - y).powi(2) + lambda2 * var;
    // d mean / dz_j = p_j (j - mean); d var / dz_j = p_j ((j - mean)^2 - var)
    let grad_z = ce
        .grad_z
        .iter()
        .zip(p)
        .enumerate()
        .map(|(i, (&g, &pj))| {
            let d = (i + 1) as f64 - mean;
            g + 2.0 * lambda1 * (mean - y) * pj * d + lambda2 * pj * (d * d - var)
        })
        .collect();
    Ok(LossResult { value, grad_z })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    Ce,
    Kl,
    CeMv,
    Dc,
}

impl LossKind {
    pub const ALL: [LossKind; 4] = [LossKind::Ce, LossKind::Kl, LossKind::CeMv, LossKind::Dc];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Kl => "kl",
            LossKind::CeMv => "ce-mv",
            LossKind::Dc => "dc",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ce" => Ok(LossKind::Ce),
            "kl" => Ok(LossKind::Kl),
            "ce-mv" | "cemv" | "ce_mv" => Ok(LossKind::CeMv),
            "dc" => Ok(LossKind::Dc),
            other => Err(Error::domain(format!("unknown loss '{other}'"))),
        }
    }
}

/// A loss together with its parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    kind: LossKind,
    alpha: f64,
    lambda1: f64,
    lambda2: f64,
}

impl LossSpec {
    /// Builds a spec, validating only the parameters the kind uses.
    pub fn new(kind: LossKind, alpha: f64, lambda1: f64, lambda2: f64) -> Result<Self> {
        match kind {
            LossKind::Dc => check_alpha(alpha)?,
            LossKind::CeMv => {
                check_lambda("lambda1", lambda1)?;
                check_lambda("lambda2", lambda2)?;
            }
            LossKind::Ce | LossKind::Kl => {}
        }
        Ok(LossSpec {
            kind,
            alpha,
            lambda1,
            lambda2,
        })
    }

    pub fn ce() -> Self {
        Self::of_kind(LossKind::Ce)
    }

    pub fn kl() -> Self {
        Self::of_kind(LossKind::Kl)
    }

    pub fn ce_mv(lambda1: f64, lambda2: f64) -> Result<Self> {
        Self::new(LossKind::CeMv, DEFAULT_ALPHA, lambda1, lambda2)
    }

    pub fn dc(alpha: f64) -> Result<Self> {
        Self::new(LossKind::Dc, alpha, DEFAULT_LAMBDA1, DEFAULT_LAMBDA2)
    }

    /// The kind with default parameters.
    pub fn of_kind(kind: LossKind) -> Self {
        LossSpec {
            kind,
            alpha: DEFAULT_ALPHA,
            lambda1: DEFAULT_LAMBDA1,
            lambda2: DEFAULT_LAMBDA2,
        }
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn lambda1(&self) -> f64 {
        self.lambda1
    }

    pub fn lambda2(&self) -> f64 {
        self.lambda2
    }

    /// Whether the loss compares against a label distribution rather than a
    /// scalar label.
    pub fn uses_distribution(&self) -> bool {
        matches!(self.kind, LossKind::Kl | LossKind::Dc)
    }

    /// Evaluates the loss on a predicted distribution.
    pub fn evaluate(&self, p: &[f64], target: &Target) -> Result<LossResult> {
        check_len(p.len(), target.distribution.len())?;
        match self.kind {
            LossKind::Ce => ce_loss(p, target.label),
            LossKind::Kl => kl_loss(p, &target.distribution),
            LossKind::CeMv => cemv_loss(p, target.label, self.lambda1, self.lambda2),
            LossKind::Dc => dc_loss(p, &target.distribution, self.alpha),
        }
    }

    /// Evaluates the loss on logits. Logarithms of `p` come from
    /// [`log_softmax`], so CE and KL values stay finite where `p` underflows.
    pub fn evaluate_logits(&self, z: &[f64], target: &Target) -> Result<LossResult> {
        check_len(z.len(), target.distribution.len())?;
        let log_p = log_softmax(z)?;
        let p: Vec<f64> = log_p.iter().map(|v| v.exp()).collect();
        let mut res = self.evaluate(&p, target)?;
        match self.kind {
            LossKind::Kl => res.value = kl_from_log_p(&log_p, &target.distribution),
            LossKind::Ce => res.value = -log_p[target.label.index()],
            LossKind::CeMv => {
                let (mean, var) = moments(&p);
                let y = target.label.get() as f64;
                res.value = -log_p[target.label.index()]
                    + self.lambda1 * (mean - y).powi(2)
                    + self.lambda2 * var;
            }
            LossKind::Dc => {}
        }
        Ok(res)
    }

    /// Per-bin contributions of the loss between two distributions.
    ///
    /// KL yields `r_i = q_i ln(q_i / p_i)`, which is negative wherever
    /// `p_i > q_i`. DC yields the Bhattacharyya deficit
    /// `d_i = (p_i + q_i) / 2 - sqrt(p_i q_i)`, non-negative, symmetric in
    /// `p` and `q`, and summing to `1 - B`. The DC profile is a diagnostic
    /// decomposition, not the loss value itself.
    pub fn profile(&self, p: &[f64], q: &[f64]) -> Result<Vec<f64>> {
        check_len(p.len(), q.len())?;
        match self.kind {
            LossKind::Kl => Ok(p
                .iter()
                .zip(q)
                .map(|(&pi, &qi)| if qi > 0.0 { qi * (qi / pi).ln() } else { 0.0 })
                .collect()),
            LossKind::Dc => Ok(p
                .iter()
                .zip(q)
                .map(|(&pi, &qi)| ((pi + qi) / 2.0 - (pi * qi).sqrt()).max(0.0))
                .collect()),
            LossKind::Ce | LossKind::CeMv => Err(Error::domain(format!(
                "loss '{}' has no distribution-pair profile",
                self.kind
            ))),
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            LossKind::Dc => write!(f, "dc(alpha={})", self.alpha),
            LossKind::CeMv => write!(
                f,
                "ce-mv(lambda1={}, lambda2={})",
                self.lambda1, self.lambda2
            ),
            k => write!(f, "{k}"),
        }
    }
}

/// Training target for one sample: the scalar label and its Gaussian
/// label distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Target {
    pub label: AgeLabel,
    pub distribution: LabelDistribution,
}

impl Target {
    pub fn gaussian(label: AgeLabel, bins: usize, sigma: f64) -> Result<Self> {
        Ok(Target {
            label,
            distribution: encode_gaussian(label, bins, sigma)?,
        })
    }
}
