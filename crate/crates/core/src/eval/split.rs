//! Open set experiment protocol: which classes are known, which instances
//! are trained on, and how hyperparameter fitting carves up the training
//! side without touching the test batch.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};

/// Classes with fewer instances than this cannot give a meaningful 60/40
/// split and are dropped from the class pool with a warning.
pub const MIN_CLASS_SIZE: usize = 5;

/// One sampled open set problem drawn from a labeled source dataset.
#[derive(Debug, Clone)]
pub struct SplitPlan {
    /// Labels selected as known, in ascending order.
    pub known_labels: Vec<ClassLabel>,
    /// Labels acting as unknown (test-only), in ascending order.
    pub unknown_labels: Vec<ClassLabel>,
    /// 60% of each known class.
    pub train: LabeledDataset,
    /// The remaining 40% of each known class plus every instance of the
    /// unknown classes, in shuffled order.
    pub test: Vec<DVector<f64>>,
    /// Ground truth aligned with `test`; `None` for unknown-class instances.
    pub truth: Vec<Option<ClassLabel>>,
}

/// Training-side split used to fit hyperparameters: a fraction of the known
/// classes plays "known", the rest simulate unknowns, and the validation
/// batch comes in a closed and an open variant.
#[derive(Debug, Clone)]
pub struct FitPlan {
    /// Labels retained as known during fitting.
    pub fitting_labels: Vec<ClassLabel>,
    /// Labels simulating unknown classes.
    pub simulated_unknown_labels: Vec<ClassLabel>,
    /// 60% of each fitting class.
    pub train: LabeledDataset,
    /// The held-out 40% of the fitting classes.
    pub closed_test: Vec<DVector<f64>>,
    pub closed_truth: Vec<Option<ClassLabel>>,
    /// `closed_test` plus every instance of the simulated-unknown classes.
    pub open_test: Vec<DVector<f64>>,
    pub open_truth: Vec<Option<ClassLabel>>,
}

/// Labels with at least [`MIN_CLASS_SIZE`] instances, ascending.
fn eligible_labels(data: &LabeledDataset) -> Vec<ClassLabel> {
    let mut eligible = Vec::new();
    for (&label, &count) in &data.class_counts() {
        if count >= MIN_CLASS_SIZE {
            eligible.push(label);
        } else {
            log::warn!(
                "dropping class {label}: {count} instances is below the minimum of \
                 {MIN_CLASS_SIZE}"
            );
        }
    }
    eligible
}

/// Shuffles a class's instance indices and splits off the first 60%
/// (rounded down) as the training share.
fn train_share(
    data: &LabeledDataset,
    label: ClassLabel,
    rng: &mut impl Rng,
) -> (Vec<usize>, Vec<usize>) {
    let mut indices = data.indices_of(label);
    indices.shuffle(rng);
    let cut = indices.len() * 6 / 10;
    let rest = indices.split_off(cut);
    (indices, rest)
}

fn shuffle_batch(
    test: Vec<DVector<f64>>,
    truth: Vec<Option<ClassLabel>>,
    rng: &mut impl Rng,
) -> (Vec<DVector<f64>>, Vec<Option<ClassLabel>>) {
    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(rng);
    let test_out = order.iter().map(|&i| test[i].clone()).collect();
    let truth_out = order.iter().map(|&i| truth[i]).collect();
    (test_out, truth_out)
}

/// Draws one open set problem: `num_known` random eligible classes keep 60%
/// of their instances for training and send 40% to the test batch; up to
/// `num_unknown` further random classes contribute every instance to the
/// batch as unknowns. `num_unknown = None` takes all remaining classes.
pub fn split_protocol(
    data: &LabeledDataset,
    num_known: usize,
    num_unknown: Option<usize>,
    rng: &mut impl Rng,
) -> Result<SplitPlan> {
    if num_known == 0 {
        return Err(Error::invalid("need at least one known class"));
    }
    let mut pool = eligible_labels(data);
    let wanted_unknown = num_unknown.unwrap_or(pool.len().saturating_sub(num_known));
    if pool.len() < num_known + wanted_unknown {
        return Err(Error::invalid(format!(
            "{} eligible classes cannot supply {num_known} known plus {wanted_unknown} unknown",
            pool.len()
        )));
    }
    pool.shuffle(rng);
    let mut known_labels: Vec<ClassLabel> = pool[..num_known].to_vec();
    let mut unknown_labels: Vec<ClassLabel> = pool[num_known..num_known + wanted_unknown].to_vec();
    known_labels.sort_unstable();
    unknown_labels.sort_unstable();

    let mut train_instances = Vec::new();
    let mut train_labels = Vec::new();
    let mut test = Vec::new();
    let mut truth = Vec::new();
    for &label in &known_labels {
        let (train_idx, test_idx) = train_share(data, label, rng);
        for i in train_idx {
            train_instances.push(data.instance(i).clone());
            train_labels.push(label);
        }
        for i in test_idx {
            test.push(data.instance(i).clone());
            truth.push(Some(label));
        }
    }
    for &label in &unknown_labels {
        for i in data.indices_of(label) {
            test.push(data.instance(i).clone());
            truth.push(None);
        }
    }
    let (test, truth) = shuffle_batch(test, truth, rng);

    Ok(SplitPlan {
        known_labels,
        unknown_labels,
        train: LabeledDataset::new(train_instances, train_labels)?,
        test,
        truth,
    })
}

/// Splits a training set for hyperparameter fitting: half of the classes
/// (rounded up) stay known and are themselves split 60/40 into fitting and
/// validation shares; the other half simulate unknowns in the open batch.
pub fn fit_split(train: &LabeledDataset, rng: &mut impl Rng) -> Result<FitPlan> {
    let mut pool: Vec<ClassLabel> = train.class_counts().keys().copied().collect();
    if pool.is_empty() {
        return Err(Error::empty("training data has no classes"));
    }
    let num_fitting = pool.len().div_ceil(2);
    pool.shuffle(rng);
    let mut fitting_labels: Vec<ClassLabel> = pool[..num_fitting].to_vec();
    let mut simulated: Vec<ClassLabel> = pool[num_fitting..].to_vec();
    fitting_labels.sort_unstable();
    simulated.sort_unstable();

    let mut fit_instances = Vec::new();
    let mut fit_labels = Vec::new();
    let mut closed_test = Vec::new();
    let mut closed_truth = Vec::new();
    for &label in &fitting_labels {
        let (train_idx, val_idx) = train_share(train, label, rng);
        if train_idx.is_empty() || val_idx.is_empty() {
            return Err(Error::invalid(format!(
                "class {label} is too small to split for fitting"
            )));
        }
        for i in train_idx {
            fit_instances.push(train.instance(i).clone());
            fit_labels.push(label);
        }
        for i in val_idx {
            closed_test.push(train.instance(i).clone());
            closed_truth.push(Some(label));
        }
    }

    let mut open_test = closed_test.clone();
    let mut open_truth = closed_truth.clone();
    for &label in &simulated {
        for i in train.indices_of(label) {
            open_test.push(train.instance(i).clone());
            open_truth.push(None);
        }
    }
    let (closed_test, closed_truth) = shuffle_batch(closed_test, closed_truth, rng);
    let (open_test, open_truth) = shuffle_batch(open_test, open_truth, rng);

    Ok(FitPlan {
        fitting_labels,
        simulated_unknown_labels: simulated,
        train: LabeledDataset::new(fit_instances, fit_labels)?,
        closed_test,
        closed_truth,
        open_test,
        open_truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn source(class_sizes: &[usize]) -> LabeledDataset {
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for (class, &size) in class_sizes.iter().enumerate() {
            for i in 0..size {
                instances.push(DVector::from_vec(vec![class as f64 * 10.0 + i as f64]));
                labels.push(class as ClassLabel);
            }
        }
        LabeledDataset::new(instances, labels).unwrap()
    }

    #[test]
    fn known_classes_split_sixty_forty_with_floor() {
        let data = source(&[10, 7, 9]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plan = split_protocol(&data, 2, Some(1), &mut rng).unwrap();
        assert_eq!(plan.known_labels.len(), 2);
        assert_eq!(plan.unknown_labels.len(), 1);
        // floor(0.6 * 10) = 6, floor(0.6 * 7) = 4, floor(0.6 * 9) = 5.
        let expected_train: usize = plan
            .known_labels
            .iter()
            .map(|&l| data.indices_of(l).len() * 6 / 10)
            .sum();
        assert_eq!(plan.train.len(), expected_train);
        let unknown_total: usize = plan
            .unknown_labels
            .iter()
            .map(|&l| data.indices_of(l).len())
            .sum();
        // Every selected instance is either trained on or tested on.
        assert_eq!(plan.train.len() + plan.test.len(), data.len());
        let unknowns_in_truth = plan.truth.iter().filter(|t| t.is_none()).count();
        assert_eq!(unknowns_in_truth, unknown_total);
    }

    #[test]
    fn small_classes_are_dropped_from_the_pool() {
        let data = source(&[10, 4, 10, 3, 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let plan = split_protocol(&data, 2, None, &mut rng).unwrap();
        let used: BTreeSet<ClassLabel> = plan
            .known_labels
            .iter()
            .chain(&plan.unknown_labels)
            .copied()
            .collect();
        assert!(!used.contains(&1));
        assert!(!used.contains(&3));
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn asking_for_more_classes_than_eligible_fails() {
        let data = source(&[10, 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!(split_protocol(&data, 3, None, &mut rng).is_err());
        assert!(split_protocol(&data, 2, Some(1), &mut rng).is_err());
        assert!(split_protocol(&data, 0, None, &mut rng).is_err());
    }

    #[test]
    fn fit_split_keeps_half_the_classes_rounded_up() {
        let data = source(&[10, 10, 10, 10, 10]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let plan = split_protocol(&data, 5, Some(0), &mut rng).unwrap();
        let fit = fit_split(&plan.train, &mut rng).unwrap();
        assert_eq!(fit.fitting_labels.len(), 3);
        assert_eq!(fit.simulated_unknown_labels.len(), 2);
        // Closed batch holds only fitting-class instances with labels.
        assert!(fit.closed_truth.iter().all(|t| t.is_some()));
        // Open batch adds exactly the simulated classes' training instances.
        let sim_total: usize = fit
            .simulated_unknown_labels
            .iter()
            .map(|&l| plan.train.indices_of(l).len())
            .sum();
        assert_eq!(fit.open_test.len(), fit.closed_test.len() + sim_total);
        assert_eq!(
            fit.open_truth.iter().filter(|t| t.is_none()).count(),
            sim_total
        );
    }

    #[test]
    fn single_class_training_fits_against_itself() {
        let data = source(&[12]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let plan = split_protocol(&data, 1, Some(0), &mut rng).unwrap();
        let fit = fit_split(&plan.train, &mut rng).unwrap();
        assert_eq!(fit.fitting_labels.len(), 1);
        assert!(fit.simulated_unknown_labels.is_empty());
        assert_eq!(fit.open_test.len(), fit.closed_test.len());
    }

    #[test]
    fn splits_are_deterministic_for_a_fixed_seed() {
        let data = source(&[10, 10, 10, 10]);
        let draw = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plan = split_protocol(&data, 2, None, &mut rng).unwrap();
            (
                plan.known_labels.clone(),
                plan.train.labels().to_vec(),
                plan.truth.clone(),
            )
        };
        assert_eq!(draw(9), draw(9));
    }
}
