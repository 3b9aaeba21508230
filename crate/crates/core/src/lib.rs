//! Label-distribution losses for age estimation.
//!
//! The distribution-cognisant (DC) loss, a bounded log transform of the
//! Bhattacharyya deficit between predicted and target distributions, sits in
//! [`losses`] next to cross-entropy, KL and mean-variance regularised
//! cross-entropy. All four return exact logit gradients, checked against
//! finite differences by [`numcheck`]. [`model`], [`datagen`] and
//! [`experiments`] train a small network on a synthetic multi-domain task
//! with a subject-exclusive cross-domain split.

// NaN inputs are rejected with `!(x >= bound)` checks throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod model;
pub mod label_codec;
pub mod losses;
pub mod numcheck;
pub mod rng;

pub use error::{Error, Result};
