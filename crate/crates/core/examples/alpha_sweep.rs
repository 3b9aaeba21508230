//! Cross-domain error of the DC loss as alpha grows, on two threads.

use dcloss::experiments::sweep::{sweep_alpha, sweep_table};
use dcloss::experiments::task::TaskConfig;
use dcloss::model::TrainConfig;

fn main() -> dcloss::Result<()> {
    let data = TaskConfig::default().build(0)?;
    let alphas = [0.01, 0.05, 0.1, 0.2, 0.5, 0.8];
    let rows = sweep_alpha(&alphas, &TrainConfig::desk_scale(), &data.train, &data.cross_test, 2)?;
    print!("{}", sweep_table(&rows, "# seed=0\n"));
    Ok(())
}
