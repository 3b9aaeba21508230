//! The synthetic subject-exclusive cross-domain task used by the training
//! experiments.

use crate::datagen::{generate, split_sc, DomainSpec, SampleSet, ScSplit};
use crate::error::Result;
use crate::metrics::MetricsReport;
use crate::model::{train, MlpModel, TrainConfig, TrainTrace};

/// Shape of the synthetic task. Domain 0 trains, domain 1 tests.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskConfig {
    pub dim: usize,
    pub bins: usize,
    pub subjects_per_domain: usize,
    pub images_per_subject: usize,
    /// Distance between the two domains' feature maps.
    pub domain_shift: f64,
    pub noise_std: f64,
    /// Share of training-domain subjects held out for intra-domain scoring.
    pub holdout_fraction: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        TaskConfig {
            dim: 32,
            bins: crate::label_codec::DEFAULT_BINS,
            subjects_per_domain: 200,
            images_per_subject: 5,
            domain_shift: 0.3,
            noise_std: 0.8,
            holdout_fraction: 0.2,
        }
    }
}

/// Train, intra-domain held-out and cross-domain test sets for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskData {
    pub train: SampleSet,
    pub intra_test: SampleSet,
    pub cross_test: SampleSet,
    /// Test-domain images dropped because their subject also trains.
    pub dropped: usize,
}

impl TaskConfig {
    /// Full two-domain sample set for `seed`.
    pub fn generate(&self, seed: u64) -> Result<SampleSet> {
        let domains = DomainSpec::family(2, self.dim, self.domain_shift, self.noise_std, seed)?;
        generate(
            &domains,
            self.subjects_per_domain,
            self.images_per_subject,
            self.bins,
            self.dim,
            seed.wrapping_add(1),
        )
    }

    pub fn build(&self, seed: u64) -> Result<TaskData> {
        let all = self.generate(seed)?;
        let ScSplit {
            train,
            test,
            dropped,
        } = split_sc(&all, &[0].into(), &[1].into())?;
        let (train, intra_test) = train.split_subjects(self.holdout_fraction, seed.wrapping_add(2))?;
        Ok(TaskData {
            train,
            intra_test,
            cross_test: test,
            dropped,
        })
    }
}

/// Trained model and its scores on both test sets.
#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub model: MlpModel,
    pub trace: TrainTrace,
    pub intra: MetricsReport,
    pub cross: MetricsReport,
}

pub fn run(data: &TaskData, cfg: &TrainConfig) -> Result<TaskOutcome> {
    let (model, trace) = train(&data.train, cfg)?;
    let intra = model.evaluate(&data.intra_test)?;
    let cross = model.evaluate(&data.cross_test)?;
    Ok(TaskOutcome {
        model,
        trace,
        intra,
        cross,
    })
}
