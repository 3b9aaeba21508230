//! Gradient magnitudes of KL and DC on perturbed copies of a ground-truth
//! label distribution.
//!
//! The ground truth is a Gaussian label distribution. Each perturbed copy is
//! the ground truth shifted by a random whole number of bins, plus uniform
//! noise on every bin, renormalised. The copy plays the role of a softmax
//! output `p`, with logits `z = ln p` up to a constant; both losses'
//! gradients are functions of `p` alone, so `z` is never formed.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::label_codec::{encode_gaussian, AgeLabel, DEFAULT_SIGMA};
use crate::losses::{dc_loss, kl_loss, DEFAULT_ALPHA};
use crate::rng::{seeded, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCompareConfig {
    pub age: usize,
    pub bins: usize,
    pub sigma: f64,
    pub alpha: f64,
    pub samples: usize,
    pub max_shift: usize,
    /// Upper bound of the per-bin uniform noise added before renormalising.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for GradCompareConfig {
    fn default() -> Self {
        GradCompareConfig {
            age: 50,
            bins: 100,
            sigma: DEFAULT_SIGMA,
            alpha: DEFAULT_ALPHA,
            samples: 100,
            max_shift: 10,
            noise_level: 0.005,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCompareRow {
    pub shift: i64,
    pub kl_grad: Vec<f64>,
    pub dc_grad: Vec<f64>,
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

impl GradCompareRow {
    pub fn kl_max(&self) -> f64 {
        max_abs(&self.kl_grad)
    }

    pub fn dc_max(&self) -> f64 {
        max_abs(&self.dc_grad)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCompareResult {
    pub truth: Vec<f64>,
    pub rows: Vec<GradCompareRow>,
}

impl GradCompareResult {
    /// Share of samples whose largest DC gradient entry is strictly below the
    /// largest KL gradient entry.
    pub fn fraction_dc_below_kl(&self) -> f64 {
        let below = self.rows.iter().filter(|r| r.dc_max() < r.kl_max()).count();
        below as f64 / self.rows.len() as f64
    }

    /// Comma-separated table, one row per sample, preceded by `header` and a
    /// summary comment.
    pub fn to_table(&self, header: &str) -> String {
        let bins = self.truth.len();
        let mut out = String::from(header);
        let _ = writeln!(out, "# fraction_dc_below_kl={}", self.fraction_dc_below_kl());
        out.push_str("sample,shift,kl_max_abs,dc_max_abs");
        for i in 1..=bins {
            let _ = write!(out, ",kl_{i}");
        }
        for i in 1..=bins {
            let _ = write!(out, ",dc_{i}");
        }
        out.push('\n');
        for (n, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "{},{},{},{}", n, r.shift, r.kl_max(), r.dc_max());
            for g in r.kl_grad.iter().chain(&r.dc_grad) {
                let _ = write!(out, ",{}", g.abs());
            }
            out.push('\n');
        }
        out
    }
}

/// Shifts `q` by `shift` bins, dropping mass pushed past either end, adds
/// `U(0, noise_level)` to every bin and renormalises.
pub fn perturb(q: &[f64], shift: i64, noise_level: f64, rng: &mut Rng) -> Vec<f64> {
    let n = q.len() as i64;
    let mut p: Vec<f64> = (0..n)
        .map(|i| {
            let src = i - shift;
            let base = if (0..n).contains(&src) { q[src as usize] } else { 0.0 };
            let noise = if noise_level > 0.0 {
                rng.random_range(0.0..noise_level)
            } else {
                0.0
            };
            base + noise
        })
        .collect();
    let total: f64 = p.iter().sum();
    for v in &mut p {
        *v /= total;
    }
    p
}

pub fn run(cfg: &GradCompareConfig) -> Result<GradCompareResult> {
    if cfg.samples == 0 {
        return Err(Error::domain("need at least one sample"));
    }
    if !(cfg.noise_level >= 0.0) {
        return Err(Error::domain(format!("noise level must be >= 0, got {}", cfg.noise_level)));
    }
    let label = AgeLabel::new(cfg.age, cfg.bins)?;
    let truth = encode_gaussian(label, cfg.bins, cfg.sigma)?;
    let max_shift = cfg.max_shift as i64;
    let mut rng = seeded(cfg.seed);
    let mut rows = Vec::with_capacity(cfg.samples);
    for _ in 0..cfg.samples {
        let shift = rng.random_range(-max_shift..=max_shift);
        let p = perturb(&truth, shift, cfg.noise_level, &mut rng);
        rows.push(GradCompareRow {
            shift,
            kl_grad: kl_loss(&p, &truth)?.grad_z,
            dc_grad: dc_loss(&p, &truth, cfg.alpha)?.grad_z,
        });
    }
    Ok(GradCompareResult {
        truth: truth.into_inner(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unperturbed_copy_has_zero_gradients() {
        let cfg = GradCompareConfig {
            max_shift: 0,
            noise_level: 0.0,
            samples: 3,
            ..GradCompareConfig::default()
        };
        let res = run(&cfg).unwrap();
        for r in &res.rows {
            assert_eq!(r.shift, 0);
            assert!(r.kl_max() < 1e-15);
            assert!(r.dc_max() < 1e-15);
        }
    }

    #[test]
    fn table_has_one_row_per_sample() {
        let cfg = GradCompareConfig {
            samples: 7,
            bins: 20,
            age: 10,
            ..GradCompareConfig::default()
        };
        let res = run(&cfg).unwrap();
        let table = res.to_table("# seed=0\n");
        let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), 7 + 1);
        assert_eq!(rows[1].split(',').count(), 4 + 2 * 20);
    }

    #[test]
    fn shift_clips_and_renormalises() {
        let mut rng = seeded(0);
        let p = perturb(&[0.5, 0.3, 0.2], 2, 0.0, &mut rng);
        assert_eq!(p, vec![0.0, 0.0, 1.0]);
        let p = perturb(&[0.5, 0.3, 0.2], -1, 0.0, &mut rng);
        assert!((p[0] - 0.6).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(run(&GradCompareConfig { samples: 0, ..Default::default() }).is_err());
        assert!(run(&GradCompareConfig { age: 0, ..Default::default() }).is_err());
        assert!(run(&GradCompareConfig { alpha: 1.0, ..Default::default() }).is_err());
    }
}
