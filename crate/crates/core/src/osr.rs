//! Open set recognition by collective assignment.
//!
//! Known classes and the unlabeled test batch enter the seating sampler as
//! separate groups sharing one global menu of Gaussian components. After the
//! chain runs, each group keeps the components that hold at least a fraction
//! `epsilon` of its instances; a test instance is labeled with a known class
//! when its component survives pruning in that class's group, and is flagged
//! as a new subclass otherwise. Membership does all the work: no score
//! threshold is ever applied.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bayes::{GaussianSuffStats, NormalWishartParams};
use crate::crf::{
    run_chain, ChainOptions, CrfState, DishId, GaussianComponentModel, HdpConcentrations,
};
use crate::dataset::{ClassLabel, GroupedDataset, LabeledDataset};
use crate::error::{Error, Result};

/// Relative jitter added to a singular pooled covariance, scaled by its mean
/// diagonal entry (or used absolutely when that mean is not positive).
const POOLED_JITTER: f64 = 1e-8;

/// Tunable knobs for one recognition run.
#[derive(Debug, Clone)]
pub struct HyperConfig {
    /// Concentration parameters of the shared-menu process.
    pub concentrations: HdpConcentrations,
    /// Pseudo-count of the component mean prior.
    pub beta: f64,
    /// Degrees of freedom above the feature dimension; the component prior
    /// uses `dim + nu_offset`.
    pub nu_offset: f64,
    /// Scale applied to the pooled within-class covariance when building the
    /// component prior.
    pub varsigma: f64,
    /// Minimum fraction of a group's instances a component must hold to
    /// survive pruning.
    pub epsilon: f64,
    /// Number of full sampling sweeps.
    pub sweeps: usize,
    /// Number of components each group is spread over at initialization.
    pub init_components: usize,
    /// Redraw the concentration parameters from their priors each sweep
    /// instead of holding them at the prior means.
    pub resample_concentrations: bool,
    /// Seed for the sampler's random stream.
    pub seed: u64,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            concentrations: HdpConcentrations::default(),
            beta: 1.0,
            nu_offset: 2.0,
            varsigma: 0.1,
            epsilon: 0.01,
            sweeps: 30,
            init_components: 30,
            resample_concentrations: false,
            seed: 0,
        }
    }
}

impl HyperConfig {
    /// Checks every field for a usable value.
    pub fn validate(&self) -> Result<()> {
        self.concentrations.validate()?;
        if !self.beta.is_finite() || self.beta <= 0.0 {
            return Err(Error::invalid(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !self.nu_offset.is_finite() || self.nu_offset < 0.0 {
            return Err(Error::invalid(format!(
                "nu_offset must be non-negative, got {}",
                self.nu_offset
            )));
        }
        if !self.varsigma.is_finite() || self.varsigma <= 0.0 {
            return Err(Error::invalid(format!(
                "varsigma must be positive, got {}",
                self.varsigma
            )));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::invalid(format!(
                "epsilon must lie in [0, 1), got {}",
                self.epsilon
            )));
        }
        if self.init_components == 0 {
            return Err(Error::invalid("init_components must be at least 1"));
        }
        Ok(())
    }

    /// One-line echo of every knob, for run logs and report headers.
    pub fn summary(&self) -> String {
        format!(
            "gamma={} alpha0={} beta={} nu_offset={} varsigma={} epsilon={} sweeps={} \
             init_components={} resample_concentrations={} seed={}",
            self.concentrations.gamma,
            self.concentrations.alpha0,
            self.beta,
            self.nu_offset,
            self.varsigma,
            self.epsilon,
            self.sweeps,
            self.init_components,
            self.resample_concentrations,
            self.seed
        )
    }
}

/// Verdict for one test instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prediction {
    /// The instance sits in a component that survives pruning in exactly one
    /// known class (or was awarded to one by the shared-component vote).
    Known(ClassLabel),
    /// The instance's component survives in no known class; the id ties
    /// together instances of the same new subclass.
    Unknown(DishId),
}

/// A component kept by more than one known class, with the classes that
/// claimed it; resolved by the training-instance vote.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedDish {
    pub dish: DishId,
    pub classes: Vec<ClassLabel>,
    pub awarded_to: ClassLabel,
}

/// Component census for one group: every component holding at least one of
/// the group's instances, with the fraction it holds, plus the subset that
/// survives pruning.
#[derive(Debug, Clone)]
pub struct GroupSubclasses {
    /// Group position: known classes in label order, then the test batch.
    pub group: usize,
    /// Label for known-class groups, `None` for the test batch.
    pub class_label: Option<ClassLabel>,
    /// `(component, fraction of the group's instances)` in component order.
    pub raw: Vec<(DishId, f64)>,
    /// Components whose fraction is at least the pruning threshold.
    pub kept: Vec<DishId>,
}

/// Census of every group after one labeling pass.
#[derive(Debug, Clone)]
pub struct SubclassReport {
    pub epsilon: f64,
    pub groups: Vec<GroupSubclasses>,
}

impl SubclassReport {
    /// Kept components of the test batch.
    pub fn test_kept(&self) -> &[DishId] {
        &self
            .groups
            .last()
            .expect("report always has a test group")
            .kept
    }

    /// Kept components per known class, in group order.
    pub fn known_kept(&self) -> impl Iterator<Item = &GroupSubclasses> {
        self.groups.iter().take(self.groups.len() - 1)
    }
}

/// Everything the labeling pass produces for one chain state.
#[derive(Debug, Clone)]
pub struct Recognition {
    /// One verdict per test instance, in input order.
    pub predictions: Vec<Prediction>,
    /// Estimated number of distinct unknown subclasses in the batch.
    pub unknown_estimate: usize,
    /// Component census behind the verdicts.
    pub report: SubclassReport,
    /// Components claimed by several known classes.
    pub shared: Vec<SharedDish>,
    /// Total number of live components in the final state.
    pub num_components: usize,
}

/// Arranges labeled training data and an unlabeled batch into sampler groups:
/// one group per class in ascending label order, the batch last.
pub fn build_groups(train: &LabeledDataset, test: &[DVector<f64>]) -> Result<GroupedDataset> {
    let mut by_class: BTreeMap<ClassLabel, Vec<DVector<f64>>> = BTreeMap::new();
    for (x, &label) in train.instances().iter().zip(train.labels()) {
        by_class.entry(label).or_default().push(x.clone());
    }
    GroupedDataset::new(by_class.into_iter().collect(), test.to_vec())
}

/// Builds the shared component prior from the training data: the mean prior
/// centers on the global training mean, and the covariance prior is the
/// pooled within-class covariance shrunk by `varsigma`.
pub fn pooled_prior(train: &LabeledDataset, cfg: &HyperConfig) -> Result<NormalWishartParams> {
    cfg.validate()?;
    let dim = train.dim();
    let counts = train.class_counts();
    let n = train.len();
    let num_classes = counts.len();
    if n <= num_classes {
        return Err(Error::invalid(
            "pooled covariance needs at least one class with two instances",
        ));
    }

    let global = GaussianSuffStats::from_points(dim, train.instances());
    let mu0 = global.mean().expect("training data is nonempty");

    let mut pooled = DMatrix::<f64>::zeros(dim, dim);
    for &label in counts.keys() {
        let members = train.indices_of(label);
        let stats = GaussianSuffStats::from_points(dim, members.iter().map(|&i| train.instance(i)));
        pooled += stats.centered_scatter().expect("classes are nonempty");
    }
    pooled /= (n - num_classes) as f64;
    let mut sigma0 = pooled * cfg.varsigma;

    if sigma0.clone().cholesky().is_none() {
        let mean_diag = sigma0.diagonal().mean();
        let bump = if mean_diag > 0.0 {
            POOLED_JITTER * mean_diag
        } else {
            POOLED_JITTER
        };
        log::warn!("pooled covariance is singular; adding {bump:.3e} to its diagonal");
        for i in 0..dim {
            sigma0[(i, i)] += bump;
        }
    }

    NormalWishartParams::new(mu0, cfg.beta, sigma0, dim as f64 + cfg.nu_offset)
}

/// Runs the sampler over the grouped data and returns its final state.
///
/// Kept separate from [`label_state`] so one chain can be re-labeled under
/// several pruning thresholds.
pub fn co_cluster(
    train: &LabeledDataset,
    test: &[DVector<f64>],
    cfg: &HyperConfig,
) -> Result<CrfState> {
    cfg.validate()?;
    let prior = pooled_prior(train, cfg)?;
    let data = Arc::new(build_groups(train, test)?);
    let model = GaussianComponentModel::new(prior);
    let opts = ChainOptions {
        sweeps: cfg.sweeps,
        init_components: cfg.init_components,
        resample_concentrations: cfg.resample_concentrations,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    run_chain(data, &model, &cfg.concentrations, &opts, &mut rng)
}

/// Prunes each group's components at threshold `epsilon` and reports both the
/// raw census and the survivors. A fraction exactly equal to the threshold
/// survives.
pub fn subclass_report(state: &CrfState, epsilon: f64) -> SubclassReport {
    let data = state.data();
    let groups = (0..data.num_groups())
        .map(|j| {
            let len = data.group_len(j);
            let counts = state.group_dish_counts(j);
            let raw: Vec<(DishId, f64)> = counts
                .iter()
                .map(|(&k, &c)| (k, c as f64 / len as f64))
                .collect();
            let kept = raw
                .iter()
                .filter(|&&(_, share)| share >= epsilon)
                .map(|&(k, _)| k)
                .collect();
            GroupSubclasses {
                group: j,
                class_label: (j < data.num_known()).then(|| data.class_label(j)),
                raw,
                kept,
            }
        })
        .collect();
    SubclassReport { epsilon, groups }
}

/// Estimates how many distinct unknown subclasses the batch contains by
/// comparing the count of novel test components against the average number
/// of surviving components per known class. Exact integer arithmetic keeps
/// the half-up rounding free of float error.
pub fn estimate_unknown_count(novel: usize, known_total: usize, num_classes: usize) -> usize {
    if novel == 0 {
        return 0;
    }
    if known_total == 0 || num_classes == 0 {
        log::warn!(
            "no known components survived pruning; taking each of the {novel} novel \
             components as its own subclass"
        );
        return novel;
    }
    // floor(novel / (known_total / num_classes) + 1/2) without going through
    // floating point: floor((2*novel*num_classes + known_total) / (2*known_total)).
    let novel = novel as u64;
    let known_total = known_total as u64;
    let num_classes = num_classes as u64;
    ((2 * novel * num_classes + known_total) / (2 * known_total)) as usize
}

/// Decides each test instance from the pruned menus. Pure so the vote logic
/// is testable without building a chain state.
///
/// `kept`: surviving components per known class. `class_counts`: per class,
/// how many of its training instances each component holds. `labels`: class
/// labels in the same order.
fn classify(
    test_components: &[DishId],
    kept: &[BTreeSet<DishId>],
    class_counts: &[BTreeMap<DishId, usize>],
    labels: &[ClassLabel],
) -> (Vec<Prediction>, Vec<SharedDish>) {
    let mut shared: BTreeMap<DishId, SharedDish> = BTreeMap::new();
    let predictions = test_components
        .iter()
        .map(|&k| {
            let claimants: Vec<usize> = (0..kept.len()).filter(|&j| kept[j].contains(&k)).collect();
            match claimants.as_slice() {
                [] => Prediction::Unknown(k),
                [j] => Prediction::Known(labels[*j]),
                _ => {
                    let winner = claimants
                        .iter()
                        .copied()
                        .max_by_key(|&j| {
                            let members = class_counts[j].get(&k).copied().unwrap_or(0);
                            // Prefer more members; break ties toward the
                            // lowest label (max_by_key keeps the later
                            // element on ties, so negate the label order).
                            (members, std::cmp::Reverse(labels[j]))
                        })
                        .expect("claimants is nonempty");
                    shared.entry(k).or_insert_with(|| {
                        let entry = SharedDish {
                            dish: k,
                            classes: claimants.iter().map(|&j| labels[j]).collect(),
                            awarded_to: labels[winner],
                        };
                        log::warn!(
                            "component {k} survives pruning in classes {:?}; awarding it to \
                             class {} by training-instance vote",
                            entry.classes,
                            entry.awarded_to
                        );
                        entry
                    });
                    Prediction::Known(labels[winner])
                }
            }
        })
        .collect();
    (predictions, shared.into_values().collect())
}

/// Labels every test instance from a finished chain state.
pub fn label_state(state: &CrfState, epsilon: f64) -> Recognition {
    let data = state.data();
    let report = subclass_report(state, epsilon);
    let test_group = data.test_group();

    let test_components: Vec<DishId> = (0..data.group_len(test_group))
        .map(|i| state.dish_of_instance(test_group, i))
        .collect();
    let kept: Vec<BTreeSet<DishId>> = report
        .known_kept()
        .map(|g| g.kept.iter().copied().collect())
        .collect();
    let class_counts: Vec<BTreeMap<DishId, usize>> = (0..data.num_known())
        .map(|j| state.group_dish_counts(j))
        .collect();
    let labels: Vec<ClassLabel> = data.class_labels().to_vec();

    let (predictions, shared) = classify(&test_components, &kept, &class_counts, &labels);

    let known_survivors: BTreeSet<DishId> = kept.iter().flatten().copied().collect();
    let novel = report
        .test_kept()
        .iter()
        .filter(|k| !known_survivors.contains(k))
        .count();
    let known_total: usize = kept.iter().map(|s| s.len()).sum();
    let unknown_estimate = estimate_unknown_count(novel, known_total, data.num_known());

    Recognition {
        predictions,
        unknown_estimate,
        report,
        shared,
        num_components: state.num_dishes(),
    }
}

/// Full pipeline: co-cluster the training classes with the batch, prune, and
/// label every batch instance.
pub fn recognize(
    train: &LabeledDataset,
    test: &[DVector<f64>],
    cfg: &HyperConfig,
) -> Result<Recognition> {
    let state = co_cluster(train, test, cfg)?;
    Ok(label_state(&state, cfg.epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crf::CrfState;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;

    fn small_training(rng: &mut impl Rng) -> LabeledDataset {
        let mut instances = Vec::new();
        let mut labels = Vec::new();
        for class in 0..2i64 {
            let center = if class == 0 { -4.0 } else { 4.0 };
            for _ in 0..6 {
                instances.push(DVector::from_vec(vec![
                    center + rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                ]));
                labels.push(class);
            }
        }
        LabeledDataset::new(instances, labels).unwrap()
    }

    #[test]
    fn unknown_count_rounds_half_up_on_exact_integers() {
        assert_eq!(estimate_unknown_count(14, 19, 5), 4);
        assert_eq!(estimate_unknown_count(32, 43, 5), 4);
        assert_eq!(estimate_unknown_count(0, 7, 3), 0);
        assert_eq!(estimate_unknown_count(3, 0, 3), 3);
        // 2 / (4/4) + 1/2 rounds down to 2; 3 / (2/4) = 6 exactly.
        assert_eq!(estimate_unknown_count(2, 4, 4), 2);
        assert_eq!(estimate_unknown_count(3, 2, 4), 6);
        // Half-way case: 1 / (2/1) + 1/2 = 1.0 exactly, floor keeps 1.
        assert_eq!(estimate_unknown_count(1, 2, 1), 1);
    }

    #[test]
    fn config_validation_catches_bad_knobs() {
        let good = HyperConfig::default();
        good.validate().unwrap();
        let mut bad = good.clone();
        bad.epsilon = 1.0;
        assert!(bad.validate().is_err());
        bad = good.clone();
        bad.varsigma = 0.0;
        assert!(bad.validate().is_err());
        bad = good.clone();
        bad.nu_offset = -0.5;
        assert!(bad.validate().is_err());
        bad = good.clone();
        bad.init_components = 0;
        assert!(bad.validate().is_err());
        assert!(good.summary().contains("epsilon=0.01"));
    }

    #[test]
    fn groups_are_ordered_by_class_label_with_the_batch_last() {
        let train = LabeledDataset::new(
            vec![
                DVector::from_vec(vec![1.0]),
                DVector::from_vec(vec![2.0]),
                DVector::from_vec(vec![3.0]),
            ],
            vec![7, -1, 7],
        )
        .unwrap();
        let test = vec![DVector::from_vec(vec![9.0])];
        let data = build_groups(&train, &test).unwrap();
        assert_eq!(data.num_known(), 2);
        assert_eq!(data.class_label(0), -1);
        assert_eq!(data.class_label(1), 7);
        assert_eq!(data.group_len(0), 1);
        assert_eq!(data.group_len(1), 2);
        assert_eq!(data.point(2, 0)[0], 9.0);
        assert_eq!(data.point(1, 0)[0], 1.0);
        assert_eq!(data.point(1, 1)[0], 3.0);
    }

    #[test]
    fn pooled_prior_matches_hand_computed_scatter() {
        // Class 0: (0,0), (2,0)  -> scatter [[2,0],[0,0]]
        // Class 1: (0,1), (0,3)  -> scatter [[0,0],[0,2]]
        // Pooled over n - J = 4 - 2 = 2, then scaled by varsigma.
        let train = LabeledDataset::new(
            vec![
                DVector::from_vec(vec![0.0, 0.0]),
                DVector::from_vec(vec![2.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0]),
                DVector::from_vec(vec![0.0, 3.0]),
            ],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let cfg = HyperConfig {
            varsigma: 0.5,
            ..HyperConfig::default()
        };
        let prior = pooled_prior(&train, &cfg).unwrap();
        assert_abs_diff_eq!(prior.sigma0()[(0, 0)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(prior.sigma0()[(1, 1)], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(prior.sigma0()[(0, 1)], 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(prior.mu0()[0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(prior.mu0()[1], 1.0, epsilon = 1e-12);
        assert_eq!(prior.beta(), 1.0);
        assert_eq!(prior.nu(), 4.0);
    }

    #[test]
    fn singular_pooled_covariance_gets_a_diagonal_bump() {
        // Both classes vary only along the first axis, so the pooled
        // covariance is rank one and needs the jitter path.
        let train = LabeledDataset::new(
            vec![
                DVector::from_vec(vec![0.0, 5.0]),
                DVector::from_vec(vec![2.0, 5.0]),
                DVector::from_vec(vec![10.0, -5.0]),
                DVector::from_vec(vec![12.0, -5.0]),
            ],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let prior = pooled_prior(&train, &HyperConfig::default()).unwrap();
        assert!(prior.sigma0()[(1, 1)] > 0.0);
        assert!(prior.sigma0().clone().cholesky().is_some());
    }

    #[test]
    fn pooled_prior_rejects_all_singleton_classes() {
        let train = LabeledDataset::new(
            vec![DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])],
            vec![0, 1],
        )
        .unwrap();
        assert!(pooled_prior(&train, &HyperConfig::default()).is_err());
    }

    #[test]
    fn pruning_keeps_a_share_exactly_at_the_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let points: Vec<DVector<f64>> = (0..4)
            .map(|_| DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let data = Arc::new(GroupedDataset::from_groups(vec![points, vec![]]).unwrap());
        // Two components, two instances each: both shares are exactly 0.5.
        let state = CrfState::init(data, 2).unwrap();
        let at_threshold = subclass_report(&state, 0.5);
        assert_eq!(at_threshold.groups[0].kept.len(), 2);
        let above = subclass_report(&state, 0.51);
        assert_eq!(above.groups[0].kept.len(), 0);
        assert_eq!(at_threshold.groups[1].raw.len(), 0);
    }

    #[test]
    fn vote_labels_unique_shared_and_novel_components() {
        let labels = vec![3, 8];
        let kept = vec![BTreeSet::from([0usize, 2]), BTreeSet::from([1usize, 2])];
        let counts = vec![
            BTreeMap::from([(0usize, 5usize), (2, 2)]),
            BTreeMap::from([(1usize, 4usize), (2, 6)]),
        ];
        let (predictions, shared) = classify(&[0, 1, 2, 9], &kept, &counts, &labels);
        assert_eq!(
            predictions,
            vec![
                Prediction::Known(3),
                Prediction::Known(8),
                Prediction::Known(8),
                Prediction::Unknown(9),
            ]
        );
        assert_eq!(shared.len(), 1);
        assert_eq!(shared[0].dish, 2);
        assert_eq!(shared[0].classes, vec![3, 8]);
        assert_eq!(shared[0].awarded_to, 8);
    }

    #[test]
    fn vote_breaks_exact_ties_toward_the_lowest_label() {
        let labels = vec![4, 9];
        let kept = vec![BTreeSet::from([5usize]), BTreeSet::from([5usize])];
        let counts = vec![
            BTreeMap::from([(5usize, 3usize)]),
            BTreeMap::from([(5usize, 3usize)]),
        ];
        let (predictions, shared) = classify(&[5], &kept, &counts, &labels);
        assert_eq!(predictions, vec![Prediction::Known(4)]);
        assert_eq!(shared[0].awarded_to, 4);
    }

    #[test]
    fn component_pruned_from_every_group_reads_as_unknown() {
        // The component is in no kept set, not even the test batch's; the
        // instance still gets an unknown verdict keyed by the component id.
        let labels = vec![1];
        let kept = vec![BTreeSet::new()];
        let counts = vec![BTreeMap::new()];
        let (predictions, _) = classify(&[7], &kept, &counts, &labels);
        assert_eq!(predictions, vec![Prediction::Unknown(7)]);
    }

    #[test]
    fn empty_batch_yields_no_predictions_and_zero_estimate() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let train = small_training(&mut rng);
        let cfg = HyperConfig {
            sweeps: 5,
            ..HyperConfig::default()
        };
        let result = recognize(&train, &[], &cfg).unwrap();
        assert!(result.predictions.is_empty());
        assert_eq!(result.unknown_estimate, 0);
        assert_eq!(result.report.test_kept().len(), 0);
    }

    #[test]
    fn recognize_is_deterministic_for_a_fixed_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let train = small_training(&mut rng);
        let test: Vec<DVector<f64>> = (0..5)
            .map(|_| {
                DVector::from_vec(vec![
                    rng.random_range(-5.0..5.0),
                    rng.random_range(-1.0..1.0),
                ])
            })
            .collect();
        let cfg = HyperConfig {
            sweeps: 10,
            seed: 17,
            ..HyperConfig::default()
        };
        let a = recognize(&train, &test, &cfg).unwrap();
        let b = recognize(&train, &test, &cfg).unwrap();
        assert_eq!(a.predictions, b.predictions);
        assert_eq!(a.unknown_estimate, b.unknown_estimate);
    }
}
