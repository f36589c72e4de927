//! Experiment harness: scoring, dataset splits, projections, synthetic data,
//! baselines, file formats, and the study drivers used by the command-line
//! front end.

pub mod baseline;
pub mod io;
pub mod metrics;
pub mod pca;
pub mod split;
pub mod studies;
pub mod synthetic;
