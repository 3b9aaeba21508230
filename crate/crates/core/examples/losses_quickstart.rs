//! Value and logit gradient of each loss for one prediction.

use dcloss::label_codec::AgeLabel;
use dcloss::losses::{softmax, LossSpec, Target};

fn main() -> dcloss::Result<()> {
    let bins = 11;
    let target = Target::gaussian(AgeLabel::new(6, bins)?, bins, 1.0)?;
    // A prediction peaked two bins too high.
    let z: Vec<f64> = (1..=bins).map(|i| -0.5 * (i as f64 - 8.0).powi(2) / 2.0).collect();
    let p = softmax(&z)?;

    let specs = [
        LossSpec::ce(),
        LossSpec::kl(),
        LossSpec::ce_mv(0.2, 0.05)?,
        LossSpec::dc(0.01)?,
        LossSpec::dc(0.5)?,
    ];
    println!("{:<34} {:>10} {:>12}", "loss", "value", "max |dL/dz|");
    for spec in specs {
        let r = spec.evaluate(&p, &target)?;
        let g = r.grad_z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        println!("{:<34} {:>10.5} {:>12.5}", spec.to_string(), r.value, g);
    }
    Ok(())
}
