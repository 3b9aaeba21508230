//! Train one model per loss on the synthetic cross-domain task and compare
//! intra- and cross-domain error.

use dcloss::experiments::task::{run, TaskConfig};
use dcloss::losses::LossSpec;
use dcloss::model::TrainConfig;

fn main() -> dcloss::Result<()> {
    let seed = 0;
    let data = TaskConfig::default().build(seed)?;
    println!(
        "train {} / intra {} / cross {} samples",
        data.train.len(),
        data.intra_test.len(),
        data.cross_test.len()
    );
    for loss in [LossSpec::ce(), LossSpec::kl(), LossSpec::ce_mv(0.2, 0.05)?, LossSpec::dc(0.01)?] {
        let cfg = TrainConfig {
            seed,
            ..TrainConfig::desk_scale_for(loss)
        };
        let out = run(&data, &cfg)?;
        println!(
            "{:<34} final loss {:8.4}  intra MAE {:.3} CS {:5.1}  cross MAE {:.3} CS {:5.1}",
            loss.to_string(),
            out.trace.epoch_loss.last().unwrap(),
            out.intra.mae,
            out.intra.cs,
            out.cross.mae,
            out.cross.cs
        );
    }
    Ok(())
}
