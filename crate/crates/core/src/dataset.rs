//! Point-set containers: labeled training data and the grouped layout the
//! sampler operates on.

use nalgebra::{DMatrix, DVector};
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Integer class label as read from dataset files.
pub type ClassLabel = i64;

/// A flat labeled dataset: one feature vector and one class label per
/// instance.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    instances: Vec<DVector<f64>>,
    labels: Vec<ClassLabel>,
    dim: usize,
}

impl LabeledDataset {
    /// Validates and builds a dataset. Requires at least one instance,
    /// equal-length feature and label lists, a single consistent dimension,
    /// and finite coordinates.
    pub fn new(instances: Vec<DVector<f64>>, labels: Vec<ClassLabel>) -> Result<Self> {
        if instances.is_empty() {
            return Err(Error::empty("dataset has no instances"));
        }
        if instances.len() != labels.len() {
            return Err(Error::invalid(format!(
                "{} instances but {} labels",
                instances.len(),
                labels.len()
            )));
        }
        let dim = instances[0].len();
        if dim == 0 {
            return Err(Error::empty("instances have no features"));
        }
        for (i, x) in instances.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("instance {i}")));
            }
        }
        Ok(LabeledDataset {
            instances,
            labels,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn instances(&self) -> &[DVector<f64>] {
        &self.instances
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn instance(&self, i: usize) -> &DVector<f64> {
        &self.instances[i]
    }

    pub fn label(&self, i: usize) -> ClassLabel {
        self.labels[i]
    }

    /// Distinct labels in ascending order.
    pub fn label_set(&self) -> BTreeSet<ClassLabel> {
        self.labels.iter().copied().collect()
    }

    /// Instance count per label, keyed in ascending label order.
    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Indices of all instances carrying `label`, in dataset order.
    pub fn indices_of(&self, label: ClassLabel) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.labels[i] == label)
            .collect()
    }

    /// The sub-dataset at the given instance indices, in the given order.
    ///
    /// # Panics
    ///
    /// Panics on an out-of-range index; callers pass indices they derived
    /// from this dataset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::empty("subset selects no instances"));
        }
        let instances = indices.iter().map(|&i| self.instances[i].clone()).collect();
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(instances, labels)
    }

    /// Instances as the rows of a matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.len(), self.dim, |r, c| self.instances[r][c])
    }

    /// Same labels over replacement feature rows (used after projection).
    pub fn with_features(&self, features: &DMatrix<f64>) -> Result<Self> {
        if features.nrows() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: features.nrows(),
            });
        }
        let instances = (0..features.nrows())
            .map(|r| features.row(r).transpose())
            .collect();
        LabeledDataset::new(instances, self.labels.clone())
    }
}

/// Data arranged for co-clustering: one group per known class, in ascending
/// label order, plus a trailing unlabeled test batch.
///
/// The test batch may be empty (training-phase co-clustering only); known
/// class groups may not.
#[derive(Clone, Debug)]
pub struct GroupedDataset {
    groups: Vec<Vec<DVector<f64>>>,
    class_labels: Vec<ClassLabel>,
    dim: usize,
}

impl GroupedDataset {
    /// Builds the grouped layout from per-class point lists and a test
    /// batch. Class labels must be distinct; instance order within each
    /// group is preserved.
    pub fn new(
        classes: Vec<(ClassLabel, Vec<DVector<f64>>)>,
        test_batch: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if classes.is_empty() {
            return Err(Error::empty("no known classes"));
        }
        let mut seen = BTreeSet::new();
        for (label, points) in &classes {
            if !seen.insert(*label) {
                return Err(Error::invalid(format!("duplicate class label {label}")));
            }
            if points.is_empty() {
                return Err(Error::empty(format!("class {label} has no instances")));
            }
        }
        let class_labels: Vec<ClassLabel> = classes.iter().map(|(l, _)| *l).collect();
        let mut groups: Vec<Vec<DVector<f64>>> =
            classes.into_iter().map(|(_, points)| points).collect();
        groups.push(test_batch);
        let dim = groups[0][0].len();
        if dim == 0 {
            return Err(Error::empty("instances have no features"));
        }
        for group in &groups {
            for x in group {
                if x.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: x.len(),
                    });
                }
                if x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("grouped instance".into()));
                }
            }
        }
        Ok(GroupedDataset {
            groups,
            class_labels,
            dim,
        })
    }

    /// Bare groups without class semantics: the last group plays the test
    /// batch role, the rest receive synthetic ascending labels. Intended for
    /// driving the sampler directly.
    pub fn from_groups(groups: Vec<Vec<DVector<f64>>>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::empty("no groups"));
        }
        let mut groups = groups;
        let test = groups.pop().expect("nonempty checked above");
        let classes = groups
            .into_iter()
            .enumerate()
            .map(|(i, g)| (i as ClassLabel, g))
            .collect::<Vec<_>>();
        if classes.is_empty() {
            // A single group is treated as one known class with an empty
            // test batch so that the invariant "known groups are nonempty"
            // still holds.
            return GroupedDataset::new(vec![(0, test)], Vec::new());
        }
        GroupedDataset::new(classes, test)
    }

    /// Total number of groups, test batch included.
    pub fn num_groups(&self) -> usize {
        self.groups.len()
    }

    /// Number of known-class groups.
    pub fn num_known(&self) -> usize {
        self.class_labels.len()
    }

    /// Index of the test-batch group.
    pub fn test_group(&self) -> usize {
        self.groups.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn group(&self, j: usize) -> &[DVector<f64>] {
        &self.groups[j]
    }

    pub fn group_len(&self, j: usize) -> usize {
        self.groups[j].len()
    }

    pub fn point(&self, j: usize, i: usize) -> &DVector<f64> {
        &self.groups[j][i]
    }

    pub fn total_len(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Class label of known-class group `j`.
    ///
    /// # Panics
    ///
    /// Panics when `j` is the test group.
    pub fn class_label(&self, j: usize) -> ClassLabel {
        assert!(
            j < self.class_labels.len(),
            "group {j} is not a known class"
        );
        self.class_labels[j]
    }

    pub fn class_labels(&self) -> &[ClassLabel] {
        &self.class_labels
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn grouping_two_classes_and_a_batch_yields_three_groups() {
        let data = GroupedDataset::new(
            vec![(3, vec![v(0.0, 0.0)]), (7, vec![v(1.0, 1.0), v(2.0, 2.0)])],
            vec![v(5.0, 5.0)],
        )
        .unwrap();
        assert_eq!(data.num_groups(), 3);
        assert_eq!(data.num_known(), 2);
        assert_eq!(data.test_group(), 2);
        assert_eq!(data.class_label(0), 3);
        assert_eq!(data.class_label(1), 7);
        assert_eq!(data.group_len(2), 1);
    }

    #[test]
    fn empty_test_batch_is_accepted() {
        let data = GroupedDataset::new(vec![(0, vec![v(0.0, 0.0)])], Vec::new()).unwrap();
        assert_eq!(data.num_groups(), 2);
        assert_eq!(data.group_len(1), 0);
    }

    #[test]
    fn empty_known_class_is_rejected() {
        let err = GroupedDataset::new(vec![(0, vec![v(0.0, 0.0)]), (1, Vec::new())], Vec::new());
        assert!(err.is_err());
    }

    #[test]
    fn instance_order_is_preserved_within_groups() {
        let points = vec![v(0.0, 0.0), v(1.0, 0.0), v(2.0, 0.0)];
        let data = GroupedDataset::new(vec![(0, points.clone())], Vec::new()).unwrap();
        assert_eq!(data.group(0), points.as_slice());
    }

    #[test]
    fn labeled_dataset_round_trips_through_subset_and_matrix() {
        let ds = LabeledDataset::new(vec![v(1.0, 2.0), v(3.0, 4.0), v(5.0, 6.0)], vec![1, 2, 1])
            .unwrap();
        let sub = ds.subset(&[2, 0]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.label(0), 1);
        assert_eq!(sub.instance(0), &v(5.0, 6.0));
        let m = ds.to_matrix();
        assert_eq!(m.nrows(), 3);
        assert_eq!(m[(1, 1)], 4.0);
        let back = ds.with_features(&m).unwrap();
        assert_eq!(back.instance(2), ds.instance(2));
    }

    #[test]
    fn labeled_dataset_rejects_bad_shapes() {
        assert!(LabeledDataset::new(vec![], vec![]).is_err());
        assert!(LabeledDataset::new(vec![v(1.0, 2.0)], vec![1, 2]).is_err());
        assert!(
            LabeledDataset::new(vec![v(1.0, 2.0), DVector::from_vec(vec![1.0])], vec![1, 2])
                .is_err()
        );
        assert!(LabeledDataset::new(vec![v(f64::NAN, 0.0)], vec![1]).is_err());
    }
}
