//! Per-bin KL and DC contributions between two Gaussian label distributions.
//! KL terms change sign around the crossing points; DC terms do not, and
//! swapping the two ages leaves DC unchanged.

use dcloss::experiments::profile::run;
use dcloss::losses::LossSpec;

fn main() -> dcloss::Result<()> {
    let (y1, y2, bins) = (40, 45, 101);
    let kl = run(y1, y2, bins, 2.0, &LossSpec::kl())?;
    let dc = run(y1, y2, bins, 2.0, &LossSpec::dc(0.01)?)?;
    let dc_swapped = run(y2, y1, bins, 2.0, &LossSpec::dc(0.01)?)?;

    println!("{:>4} {:>9} {:>9} {:>10} {:>10}", "bin", "p", "q", "KL term", "DC term");
    for i in 34..52 {
        println!(
            "{:>4} {:>9.5} {:>9.5} {:>10.5} {:>10.5}",
            i + 1,
            kl.p[i],
            kl.q[i],
            kl.values[i],
            dc.values[i]
        );
    }
    println!("KL total {:.4}, DC term total {:.4}", kl.total(), dc.total());
    println!("DC profile symmetric: {}", dc.values == dc_swapped.values);
    Ok(())
}
