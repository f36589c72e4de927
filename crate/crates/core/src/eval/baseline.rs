//! Reference predictors that recognition runs are compared against.

use nalgebra::DVector;

use crate::bayes::GaussianSuffStats;
use crate::dataset::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};
use crate::osr::Prediction;

/// Closed-set nearest-centroid classifier: every test instance is assigned
/// to the known class with the nearest training mean. It can never say
/// "unknown", which is exactly the failure mode open set methods address.
pub fn nearest_centroid(train: &LabeledDataset, test: &[DVector<f64>]) -> Result<Vec<Prediction>> {
    let mut centroids: Vec<(ClassLabel, DVector<f64>)> = Vec::new();
    for &label in train.class_counts().keys() {
        let members = train.indices_of(label);
        let stats =
            GaussianSuffStats::from_points(train.dim(), members.iter().map(|&i| train.instance(i)));
        centroids.push((label, stats.mean().expect("classes are nonempty")));
    }
    test.iter()
        .map(|x| {
            if x.len() != train.dim() {
                return Err(Error::DimensionMismatch {
                    expected: train.dim(),
                    got: x.len(),
                });
            }
            let (label, _) = centroids
                .iter()
                .map(|(label, c)| (*label, (x - c).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("training data has at least one class");
            Ok(Prediction::Known(label))
        })
        .collect()
}
