//! Synthetic benchmarks with controllable class separation and openness.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::dataset::{ClassLabel, LabeledDataset};
use crate::error::{Error, Result};

/// Layout of a Gaussian-blob open set problem. Classes sit on a square grid
/// `spacing` apart, so `spacing / sigma` controls how separable they are.
#[derive(Debug, Clone)]
pub struct BlobSpec {
    pub num_known: usize,
    pub num_unknown: usize,
    pub train_per_class: usize,
    pub test_per_known: usize,
    pub test_per_unknown: usize,
    pub sigma: f64,
    pub spacing: f64,
}

/// A generated problem: labeled training data, an unlabeled batch, and the
/// batch's ground truth (`None` marks instances from untrained classes).
#[derive(Debug, Clone)]
pub struct OpenSetProblem {
    pub train: LabeledDataset,
    pub test: Vec<DVector<f64>>,
    pub truth: Vec<Option<ClassLabel>>,
}

/// Hexagonal packing: odd rows shift half a step so no center falls on the
/// mean of the others, which would otherwise pin the component prior to one
/// class. Nearest neighbors stay exactly `spacing` apart.
fn grid_center(index: usize, side: usize, spacing: f64) -> DVector<f64> {
    let row = index / side;
    let col = index % side;
    let x = col as f64 * spacing + if row % 2 == 1 { spacing / 2.0 } else { 0.0 };
    let y = row as f64 * spacing * (3.0f64.sqrt() / 2.0);
    DVector::from_vec(vec![x, y])
}

fn blob_point(center: &DVector<f64>, sigma: f64, rng: &mut impl Rng) -> DVector<f64> {
    DVector::from_fn(center.len(), |r, _| {
        center[r] + sigma * rng.sample::<f64, _>(StandardNormal)
    })
}

/// Draws a two-dimensional blob problem with the given layout. Known classes
/// are
/// labeled `0..num_known`; unknown clusters contribute only test instances.
pub fn gaussian_blobs(spec: &BlobSpec, rng: &mut impl Rng) -> Result<OpenSetProblem> {
    if spec.num_known == 0 || spec.train_per_class < 2 {
        return Err(Error::invalid(
            "blob problems need at least one known class with two training instances",
        ));
    }
    if !spec.sigma.is_finite()
        || spec.sigma <= 0.0
        || !spec.spacing.is_finite()
        || spec.spacing <= 0.0
    {
        return Err(Error::invalid("sigma and spacing must be positive"));
    }
    let total = spec.num_known + spec.num_unknown;
    let side = (total as f64).sqrt().ceil() as usize;
    // Alternate known and unknown classes over the grid slots. Consecutive
    // slots would line the known classes up along one row, putting the
    // training mean exactly on a class center.
    let slots: Vec<usize> = (0..total).step_by(2).chain((1..total).step_by(2)).collect();

    let mut instances = Vec::new();
    let mut labels = Vec::new();
    let mut test = Vec::new();
    let mut truth: Vec<Option<ClassLabel>> = Vec::new();

    for (class, &slot) in slots[..spec.num_known].iter().enumerate() {
        let center = grid_center(slot, side, spec.spacing);
        for _ in 0..spec.train_per_class {
            instances.push(blob_point(&center, spec.sigma, rng));
            labels.push(class as ClassLabel);
        }
        for _ in 0..spec.test_per_known {
            test.push(blob_point(&center, spec.sigma, rng));
            truth.push(Some(class as ClassLabel));
        }
    }
    for &slot in &slots[spec.num_known..] {
        let center = grid_center(slot, side, spec.spacing);
        for _ in 0..spec.test_per_unknown {
            test.push(blob_point(&center, spec.sigma, rng));
            truth.push(None);
        }
    }

    let mut order: Vec<usize> = (0..test.len()).collect();
    order.shuffle(rng);
    let test = order.iter().map(|&i| test[i].clone()).collect();
    let truth = order.iter().map(|&i| truth[i]).collect();

    Ok(OpenSetProblem {
        train: LabeledDataset::new(instances, labels)?,
        test,
        truth,
    })
}

/// Character-recognition-style data: 16 integer features in `0..=15`, one
/// noisy prototype per class, quantized back to the integer grid. Classes
/// are labeled `0..classes` and hold `per_class` instances each.
pub fn letter_like(classes: usize, per_class: usize, rng: &mut impl Rng) -> Result<LabeledDataset> {
    const DIM: usize = 16;
    if classes == 0 || per_class == 0 {
        return Err(Error::invalid("letter_like needs classes and instances"));
    }
    let mut instances = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let prototype: Vec<f64> = (0..DIM).map(|_| rng.random_range(3.0..13.0)).collect();
        let noise: Vec<f64> = (0..DIM).map(|_| rng.random_range(0.8..2.2)).collect();
        for _ in 0..per_class {
            let features = DVector::from_fn(DIM, |f, _| {
                let raw = prototype[f] + noise[f] * rng.sample::<f64, _>(StandardNormal);
                raw.round().clamp(0.0, 15.0)
            });
            instances.push(features);
            labels.push(class as ClassLabel);
        }
    }
    LabeledDataset::new(instances, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn blob_problem_has_the_requested_shape() {
        let spec = BlobSpec {
            num_known: 3,
            num_unknown: 2,
            train_per_class: 20,
            test_per_known: 10,
            test_per_unknown: 15,
            sigma: 0.5,
            spacing: 5.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let problem = gaussian_blobs(&spec, &mut rng).unwrap();
        assert_eq!(problem.train.len(), 60);
        assert_eq!(problem.test.len(), 3 * 10 + 2 * 15);
        assert_eq!(problem.truth.len(), problem.test.len());
        assert_eq!(problem.train.class_counts().len(), 3);
        let unknowns = problem.truth.iter().filter(|t| t.is_none()).count();
        assert_eq!(unknowns, 30);
    }

    #[test]
    fn blob_clusters_sit_near_their_grid_centers() {
        let spec = BlobSpec {
            num_known: 2,
            num_unknown: 0,
            train_per_class: 200,
            test_per_known: 0,
            test_per_unknown: 0,
            sigma: 0.25,
            spacing: 10.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let problem = gaussian_blobs(&spec, &mut rng).unwrap();
        for (x, &label) in problem.train.instances().iter().zip(problem.train.labels()) {
            let expected_x = label as f64 * 10.0;
            assert!(
                (x[0] - expected_x).abs() < 2.0,
                "point {x} far from class {label}"
            );
            assert!(x[1].abs() < 2.0);
        }
    }

    #[test]
    fn letter_like_features_stay_on_the_integer_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = letter_like(26, 30, &mut rng).unwrap();
        assert_eq!(data.len(), 26 * 30);
        assert_eq!(data.dim(), 16);
        assert_eq!(data.class_counts().len(), 26);
        for x in data.instances() {
            for &v in x.iter() {
                assert!((0.0..=15.0).contains(&v));
                assert_eq!(v, v.round());
            }
        }
    }
}
