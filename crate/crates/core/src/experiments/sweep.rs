//! Cross-domain error as a function of the DC loss's `alpha`.

use std::fmt::Write as _;
use std::thread;

use crate::datagen::SampleSet;
use crate::error::{Error, Result};
use crate::losses::LossSpec;
use crate::metrics::MetricsReport;
use crate::model::{train, TrainConfig, TrainTrace};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub report: MetricsReport,
}

fn one(alpha: f64, base: &TrainConfig, train_set: &SampleSet, test: &SampleSet) -> Result<SweepRow> {
    let cfg = TrainConfig {
        loss: LossSpec::dc(alpha)?,
        ..base.clone()
    };
    let (model, _) = train(train_set, &cfg)?;
    Ok(SweepRow {
        alpha,
        report: model.evaluate(test)?,
    })
}

/// Trains one DC model per `alpha` with everything else taken from `base`,
/// and scores each on `test`. With `jobs > 1` the runs are spread over that
/// many threads; rows come back in the order of `alphas` either way, and
/// each run is bit-identical to its sequential counterpart.
pub fn sweep_alpha(
    alphas: &[f64],
    base: &TrainConfig,
    train_set: &SampleSet,
    test: &SampleSet,
    jobs: usize,
) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::domain("alpha list is empty"));
    }
    for &a in alphas {
        LossSpec::dc(a)?;
    }
    if jobs <= 1 {
        return alphas.iter().map(|&a| one(a, base, train_set, test)).collect();
    }
    let chunk = alphas.len().div_ceil(jobs);
    thread::scope(|s| {
        let handles: Vec<_> = alphas
            .chunks(chunk)
            .map(|part| {
                s.spawn(move || {
                    part.iter()
                        .map(|&a| one(a, base, train_set, test))
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        let mut rows = Vec::with_capacity(alphas.len());
        for h in handles {
            rows.extend(h.join().expect("sweep worker panicked")?);
        }
        Ok(rows)
    })
}

pub fn sweep_table(rows: &[SweepRow], header: &str) -> String {
    let mut out = String::from(header);
    out.push_str("alpha,mae,cs\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.alpha, r.report.mae, r.report.cs);
    }
    out
}

pub fn trace_table(trace: &TrainTrace, header: &str) -> String {
    let mut out = String::from(header);
    out.push_str("epoch,lr,loss\n");
    for (e, (lr, loss)) in trace.epoch_lr.iter().zip(&trace.epoch_loss).enumerate() {
        let _ = writeln!(out, "{},{},{}", e + 1, lr, loss);
    }
    out
}
