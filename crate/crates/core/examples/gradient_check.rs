//! Analytic logit gradients of all four losses against central differences.

use dcloss::losses::{LossKind, LossSpec};
use dcloss::numcheck::{check, GradCheckConfig};

fn main() -> dcloss::Result<()> {
    let cfg = GradCheckConfig::default();
    for kind in LossKind::ALL {
        let spec = LossSpec::of_kind(kind);
        let r = check(&spec, &cfg)?;
        println!(
            "{:<34} max rel err {:.2e}  max abs err {:.2e}  (trial {}, bin {})  {}",
            spec.to_string(),
            r.max_rel_err,
            r.max_abs_err,
            r.worst_trial,
            r.worst_index,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(())
}
