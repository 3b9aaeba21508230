//! MAE and cumulative score; an error equal to the threshold is a miss.

use dcloss::metrics::{cs, mae, MetricsReport};

fn main() -> dcloss::Result<()> {
    let truths = [30.0, 30.0, 30.0, 30.0];
    let preds = [32.0, 27.0, 36.0, 25.0];
    println!("MAE {}", mae(&preds, &truths)?);
    for threshold in [3.0, 5.0, 6.0, 7.0] {
        println!("CS(<{threshold}) {}", cs(&preds, &truths, threshold)?);
    }
    print!("{}", MetricsReport::compute(&preds, &truths, 5)?.to_record());
    Ok(())
}
