//! How often the DC gradient is smaller than the KL gradient on shifted,
//! noisy copies of a label distribution.

use dcloss::experiments::gradcompare::{run, GradCompareConfig};

fn main() -> dcloss::Result<()> {
    let res = run(&GradCompareConfig::default())?;
    println!("DC < KL in {:.0}% of samples", 100.0 * res.fraction_dc_below_kl());
    println!("{:>6} {:>10} {:>10}", "shift", "KL max", "DC max");
    for r in res.rows.iter().take(10) {
        println!("{:>6} {:>10.5} {:>10.6}", r.shift, r.kl_max(), r.dc_max());
    }

    for alpha in [0.01, 0.2, 0.9] {
        let r = run(&GradCompareConfig {
            alpha,
            ..GradCompareConfig::default()
        })?;
        let mean_dc: f64 = r.rows.iter().map(|x| x.dc_max()).sum::<f64>() / r.rows.len() as f64;
        println!("alpha {alpha}: mean DC max gradient {mean_dc:.5}");
    }
    Ok(())
}
