//! Feature standardization and principal-component projection, fitted on
//! training data only and applied unchanged to test batches.

use nalgebra::{DMatrix, DVector};

use crate::bayes::GaussianSuffStats;
use crate::error::{Error, Result};

/// Per-feature affine map to zero mean and unit variance. Constant features
/// keep scale one so they map to exactly zero instead of NaN.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: DVector<f64>,
    scale: DVector<f64>,
}

impl Standardizer {
    pub fn fit(points: &[DVector<f64>]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::empty("cannot standardize zero points"));
        }
        let dim = points[0].len();
        let stats = GaussianSuffStats::from_points(dim, points);
        let mean = stats.mean().expect("points are nonempty");
        let centered = stats.centered_scatter().expect("points are nonempty");
        let scale = DVector::from_fn(dim, |f, _| {
            let variance = centered[(f, f)] / points.len() as f64;
            if variance > 0.0 {
                variance.sqrt()
            } else {
                1.0
            }
        });
        Ok(Standardizer { mean, scale })
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(x.len(), |f, _| (x[f] - self.mean[f]) / self.scale[f])
    }
}

/// Orthogonal projection onto the leading principal components of the
/// training covariance, keeping the smallest count whose eigenvalues cover
/// the requested variance fraction.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    basis: DMatrix<f64>,
    explained: f64,
}

impl PcaProjection {
    pub fn fit(points: &[DVector<f64>], retain: f64) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::empty("need at least two points to fit a projection"));
        }
        if !(0.0 < retain && retain <= 1.0) {
            return Err(Error::invalid(format!(
                "variance fraction must lie in (0, 1], got {retain}"
            )));
        }
        let dim = points[0].len();
        let stats = GaussianSuffStats::from_points(dim, points);
        let covariance =
            stats.centered_scatter().expect("points are nonempty") / (points.len() - 1) as f64;
        let eigen = covariance.symmetric_eigen();

        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
        let total: f64 = eigen.eigenvalues.iter().map(|&v| v.max(0.0)).sum();
        if total <= 0.0 {
            log::warn!("all features have zero variance; keeping one component");
            let basis = DMatrix::from_fn(dim, 1, |r, _| eigen.eigenvectors[(r, order[0])]);
            return Ok(PcaProjection {
                basis,
                explained: 1.0,
            });
        }

        let mut kept = 0usize;
        let mut covered = 0.0;
        for &idx in &order {
            kept += 1;
            covered += eigen.eigenvalues[idx].max(0.0);
            if covered / total >= retain {
                break;
            }
        }
        let basis = DMatrix::from_fn(dim, kept, |r, c| eigen.eigenvectors[(r, order[c])]);
        Ok(PcaProjection {
            basis,
            explained: covered / total,
        })
    }

    /// Number of components kept.
    pub fn components(&self) -> usize {
        self.basis.ncols()
    }

    /// Fraction of training variance the kept components cover.
    pub fn explained(&self) -> f64 {
        self.explained
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.tr_mul(x)
    }
}

/// Standardize-then-project pipeline fitted in one call.
#[derive(Debug, Clone)]
pub struct ReductionPipeline {
    standardizer: Standardizer,
    projection: PcaProjection,
}

impl ReductionPipeline {
    pub fn fit(points: &[DVector<f64>], retain: f64) -> Result<Self> {
        let standardizer = Standardizer::fit(points)?;
        let standardized: Vec<DVector<f64>> =
            points.iter().map(|x| standardizer.apply(x)).collect();
        let projection = PcaProjection::fit(&standardized, retain)?;
        Ok(ReductionPipeline {
            standardizer,
            projection,
        })
    }

    pub fn components(&self) -> usize {
        self.projection.components()
    }

    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        self.projection.apply(&self.standardizer.apply(x))
    }

    pub fn apply_all(&self, points: &[DVector<f64>]) -> Vec<DVector<f64>> {
        points.iter().map(|x| self.apply(x)).collect()
    }
}
