//! Collective-decision open set recognition.
//!
//! Labeled training classes and an unlabeled test batch are co-clustered as
//! the groups of a hierarchical Dirichlet process mixture of Gaussians. Each
//! test instance lands on a shared mixture component; components that also
//! serve a known class transfer that class's label, while components private
//! to the test batch mark their instances as unknown, split by newly
//! discovered subclass. Deciding known versus unknown this way needs no
//! rejection threshold, and the batch is labeled collectively instead of one
//! instance at a time.
//!
//! Module map:
//!
//! - [`bayes`]: conjugate Normal-Wishart components and Student-t predictives
//! - [`dataset`]: grouped and labeled point sets
//! - [`crf`]: the collapsed table/dish Gibbs sampler over groups
//! - [`osr`]: group assembly, pooled priors, pruning, and open-set labeling
//! - [`eval`]: openness protocol, micro-F scoring, studies, and file I/O

pub mod bayes;
pub mod crf;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod numeric;
pub mod osr;

pub use error::{Error, Result};
