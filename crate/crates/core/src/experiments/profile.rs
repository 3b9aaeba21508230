//! Per-bin loss contributions between two Gaussian label distributions.

use std::fmt::Write as _;

use crate::error::Result;
use crate::label_codec::{encode_gaussian, AgeLabel};
use crate::losses::LossSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTable {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub values: Vec<f64>,
}

/// `p` is centred on `y1`, `q` on `y2`.
pub fn run(y1: usize, y2: usize, bins: usize, sigma: f64, loss: &LossSpec) -> Result<ProfileTable> {
    let p = encode_gaussian(AgeLabel::new(y1, bins)?, bins, sigma)?.into_inner();
    let q = encode_gaussian(AgeLabel::new(y2, bins)?, bins, sigma)?.into_inner();
    let values = loss.profile(&p, &q)?;
    Ok(ProfileTable { p, q, values })
}

impl ProfileTable {
    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn to_table(&self, header: &str) -> String {
        let mut out = String::from(header);
        let _ = writeln!(out, "# total={}", self.total());
        out.push_str("bin,p,q,value\n");
        for (i, ((p, q), v)) in self.p.iter().zip(&self.q).zip(&self.values).enumerate() {
            let _ = writeln!(out, "{},{},{},{}", i + 1, p, q, v);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_ages_give_zero_profile() {
        for loss in [LossSpec::kl(), LossSpec::dc(0.01).unwrap()] {
            let t = run(30, 30, 101, 2.0, &loss).unwrap();
            assert!(t.values.iter().all(|v| v.abs() < 1e-15));
        }
    }

    #[test]
    fn kl_profile_changes_sign_and_dc_is_symmetric() {
        let kl = run(40, 44, 101, 2.0, &LossSpec::kl()).unwrap();
        assert!(kl.values.iter().any(|&v| v > 1e-6));
        assert!(kl.values.iter().any(|&v| v < -1e-6));
        let dc = LossSpec::dc(0.01).unwrap();
        let a = run(40, 44, 101, 2.0, &dc).unwrap();
        let b = run(44, 40, 101, 2.0, &dc).unwrap();
        assert_eq!(a.values, b.values);
        assert!(a.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn invalid_age_and_ce() {
        assert!(run(0, 4, 101, 2.0, &LossSpec::kl()).is_err());
        assert!(run(3, 102, 101, 2.0, &LossSpec::kl()).is_err());
        assert!(run(3, 4, 101, 2.0, &LossSpec::ce()).is_err());
    }

    #[test]
    fn table_layout() {
        let t = run(3, 5, 10, 1.0, &LossSpec::kl()).unwrap();
        let text = t.to_table("");
        assert_eq!(text.lines().count(), 2 + 10);
        assert!(text.lines().nth(2).unwrap().starts_with("1,"));
    }
}
