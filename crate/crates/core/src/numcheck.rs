//! Central finite differences as an independent oracle for the analytic
//! logit-gradients in [`crate::losses`].

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::label_codec::{AgeLabel, DEFAULT_BINS, DEFAULT_SIGMA};
use crate::losses::{LossSpec, Target};
use crate::rng::seeded;

pub const DEFAULT_STEP: f64 = 1e-5;
/// Floor for the relative-error denominator.
pub const REL_FLOOR: f64 = 1e-8;
/// Logits for random trials are drawn from `[-LOGIT_RANGE, LOGIT_RANGE]`.
pub const LOGIT_RANGE: f64 = 4.0;

/// `(f(z + h e_i) - f(z - h e_i)) / 2h` for every coordinate `i`.
pub fn finite_diff_grad<F>(mut f: F, z: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(h > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    let mut probe = z.to_vec();
    let mut grad = Vec::with_capacity(z.len());
    for i in 0..z.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe)?;
        probe[i] = orig - h;
        let minus = f(&probe)?;
        probe[i] = orig;
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite {
                what: "loss evaluation",
                index: i,
            });
        }
        grad.push((plus - minus) / (2.0 * h));
    }
    Ok(grad)
}

/// Discrepancy between two gradient vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discrepancy {
    pub max_abs_err: f64,
    /// `max_i |a_i - n_i| / max(max_i |a_i|, max_i |n_i|, REL_FLOOR)`.
    pub max_rel_err: f64,
    /// `max_i |a_i - n_i| / max(|a_i|, |n_i|, REL_FLOOR)`. Dominated by
    /// finite-difference round-off on coordinates whose gradient is near
    /// zero, so it is reported but not used for pass/fail.
    pub max_elementwise_rel_err: f64,
    pub worst_index: usize,
}

/// Compares gradients. The relative error is taken against the scale of the
/// gradient vector, which keeps it meaningful when some coordinates are
/// close to zero.
pub fn compare(analytic: &[f64], numeric: &[f64]) -> Result<Discrepancy> {
    check_len(analytic.len(), numeric.len())?;
    let mut scale = REL_FLOOR;
    let mut out = Discrepancy {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        max_elementwise_rel_err: 0.0,
        worst_index: 0,
    };
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let abs = (a - n).abs();
        scale = scale.max(a.abs()).max(n.abs());
        let rel = abs / a.abs().max(n.abs()).max(REL_FLOOR);
        out.max_elementwise_rel_err = out.max_elementwise_rel_err.max(rel);
        if abs > out.max_abs_err {
            out.max_abs_err = abs;
            out.worst_index = i;
        }
    }
    out.max_rel_err = out.max_abs_err / scale;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub trials: usize,
    pub tolerance: f64,
    pub seed: u64,
    pub bins: usize,
    pub sigma: f64,
    pub step: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            trials: 100,
            tolerance: 1e-5,
            seed: 7,
            bins: DEFAULT_BINS,
            sigma: DEFAULT_SIGMA,
            step: DEFAULT_STEP,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_abs_err: f64,
    pub max_rel_err: f64,
    /// Trial holding the worst relative error.
    pub worst_trial: usize,
    /// Logit coordinate of the worst relative error within that trial.
    pub worst_index: usize,
    pub trials: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the analytic gradient of `spec` against finite differences on
/// seeded random logits and Gaussian targets.
pub fn check(spec: &LossSpec, cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    if cfg.trials == 0 {
        return Err(Error::domain("at least one trial is required"));
    }
    let mut rng = seeded(cfg.seed);
    let mut report = GradCheckReport {
        max_abs_err: 0.0,
        max_rel_err: 0.0,
        worst_trial: 0,
        worst_index: 0,
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        passed: false,
    };
    for trial in 0..cfg.trials {
        let z: Vec<f64> = (0..cfg.bins)
            .map(|_| rng.random_range(-LOGIT_RANGE..=LOGIT_RANGE))
            .collect();
        let y = AgeLabel::new(rng.random_range(1..=cfg.bins), cfg.bins)?;
        let target = Target::gaussian(y, cfg.bins, cfg.sigma)?;
        let analytic = spec.evaluate_logits(&z, &target)?.grad_z;
        let numeric = finite_diff_grad(
            |probe| Ok(spec.evaluate_logits(probe, &target)?.value),
            &z,
            cfg.step,
        )?;
        let d = compare(&analytic, &numeric)?;
        report.max_abs_err = report.max_abs_err.max(d.max_abs_err);
        if d.max_rel_err > report.max_rel_err {
            report.max_rel_err = d.max_rel_err;
            report.worst_trial = trial;
            report.worst_index = d.worst_index;
        }
    }
    report.passed = report.max_rel_err < cfg.tolerance;
    Ok(report)
}
