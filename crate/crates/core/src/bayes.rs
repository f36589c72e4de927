//! Conjugate Normal-Wishart machinery for Gaussian mixture components.
//!
//! Each mixture component is a Gaussian with unknown mean and unknown
//! precision matrix. The conjugate prior places a Wishart on the precision
//! and a Gaussian on the mean conditional on it:
//!
//! ```text
//! precision          ~ Wishart(sigma0^-1, nu)
//! mean | precision   ~ Normal(mu0, (beta * precision)^-1)
//! ```
//!
//! `sigma0` is stored in inverse-scale form because that is the matrix the
//! posterior updates additively: conditioning on points adds their centered
//! scatter to it, so a component whose prior scale is a small multiple of the
//! pooled within-class covariance tightens around the data it absorbs.
//!
//! Predictive densities marginalize the component parameters in closed form,
//! giving a multivariate Student-t. All of them are evaluated in log space
//! through Cholesky factors and log-gamma; no determinant or matrix inverse
//! is ever formed explicitly, which keeps the densities finite for condition
//! numbers up to about 1e8 at dimensions up to 64.

use nalgebra::{Cholesky, DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const LN_PI: f64 = 1.144_729_885_849_400_2;

/// Running sufficient statistics of a set of points: the count, the
/// coordinate sum, and the uncentered scatter `sum(x * x^T)`.
///
/// `add`/`remove` are exact inverses up to floating-point rounding; removing
/// the last point resets the accumulators to exact zeros so that an emptied
/// block carries no residue. Long add/remove chains drift on the order of
/// 1e-12 relative, which callers bound by periodically rebuilding from raw
/// points (see the sampler's refresh cadence).
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSuffStats {
    count: usize,
    sum: DVector<f64>,
    scatter: DMatrix<f64>,
}

impl GaussianSuffStats {
    /// Empty statistics for `dim`-dimensional points.
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        GaussianSuffStats {
            count: 0,
            sum: DVector::zeros(dim),
            scatter: DMatrix::zeros(dim, dim),
        }
    }

    /// Statistics of an explicit point set.
    pub fn from_points<'a, I>(dim: usize, points: I) -> Self
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let mut stats = GaussianSuffStats::new(dim);
        for x in points {
            stats.add(x);
        }
        stats
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn sum(&self) -> &DVector<f64> {
        &self.sum
    }

    pub fn scatter(&self) -> &DMatrix<f64> {
        &self.scatter
    }

    /// Mean of the accumulated points, or `None` when empty.
    pub fn mean(&self) -> Option<DVector<f64>> {
        (self.count > 0).then(|| &self.sum / self.count as f64)
    }

    /// Sum of squared deviations from the mean, `sum (x - mean)(x - mean)^T`,
    /// or `None` when empty.
    pub fn centered_scatter(&self) -> Option<DMatrix<f64>> {
        self.mean().map(|mean| {
            let mut centered = self.scatter.clone();
            centered.ger(-(self.count as f64), &mean, &mean, 1.0);
            centered
        })
    }

    /// Folds one point into the statistics.
    ///
    /// # Panics
    ///
    /// Panics when the point dimension disagrees with the accumulator.
    pub fn add(&mut self, x: &DVector<f64>) {
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        self.count += 1;
        self.sum += x;
        self.scatter.ger(1.0, x, x, 1.0);
    }

    /// Removes one previously added point.
    ///
    /// # Panics
    ///
    /// Panics when the accumulator is empty or the dimension disagrees.
    pub fn remove(&mut self, x: &DVector<f64>) {
        assert!(self.count > 0, "remove from empty statistics");
        assert_eq!(x.len(), self.dim(), "point dimension mismatch");
        self.count -= 1;
        if self.count == 0 {
            self.sum.fill(0.0);
            self.scatter.fill(0.0);
        } else {
            self.sum -= x;
            self.scatter.ger(-1.0, x, x, 1.0);
        }
    }

    /// Folds a whole block of statistics into this one.
    pub fn add_stats(&mut self, other: &GaussianSuffStats) {
        assert_eq!(other.dim(), self.dim(), "block dimension mismatch");
        self.count += other.count;
        self.sum += &other.sum;
        self.scatter += &other.scatter;
    }

    /// Removes a previously folded block.
    ///
    /// # Panics
    ///
    /// Panics when the block count exceeds the accumulated count.
    pub fn remove_stats(&mut self, other: &GaussianSuffStats) {
        assert_eq!(other.dim(), self.dim(), "block dimension mismatch");
        assert!(
            self.count >= other.count,
            "removing more points than stored"
        );
        self.count -= other.count;
        if self.count == 0 {
            self.sum.fill(0.0);
            self.scatter.fill(0.0);
        } else {
            self.sum -= &other.sum;
            self.scatter -= &other.scatter;
        }
    }
}

/// Hyperparameters of the Normal-Wishart prior, with `sigma0` in
/// inverse-scale form (see the module docs).
#[derive(Clone, Debug)]
pub struct NormalWishartParams {
    mu0: DVector<f64>,
    beta: f64,
    sigma0: DMatrix<f64>,
    nu: f64,
}

impl NormalWishartParams {
    /// Validates and builds a prior.
    ///
    /// Requires `beta > 0`, `nu > d - 1` (otherwise the Wishart is improper),
    /// and a symmetric positive-definite `sigma0`.
    pub fn new(mu0: DVector<f64>, beta: f64, sigma0: DMatrix<f64>, nu: f64) -> Result<Self> {
        let d = mu0.len();
        if d == 0 {
            return Err(Error::empty("prior mean has dimension zero"));
        }
        if mu0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior mean".into()));
        }
        if !beta.is_finite() || beta <= 0.0 {
            return Err(Error::invalid(format!("beta must be positive, got {beta}")));
        }
        if !nu.is_finite() || nu <= d as f64 - 1.0 {
            return Err(Error::invalid(format!(
                "nu must exceed d - 1 = {}, got {nu}",
                d - 1
            )));
        }
        if sigma0.nrows() != d || sigma0.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: sigma0.nrows(),
            });
        }
        if sigma0.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("prior scale matrix".into()));
        }
        let scale = sigma0.amax().max(1.0);
        let asymmetry = (&sigma0 - sigma0.transpose()).amax();
        if asymmetry > 1e-8 * scale {
            return Err(Error::invalid(format!(
                "prior scale matrix is asymmetric by {asymmetry:e}"
            )));
        }
        if Cholesky::new(sigma0.clone()).is_none() {
            return Err(Error::NotPositiveDefinite(
                "prior scale matrix has a non-positive pivot".into(),
            ));
        }
        Ok(NormalWishartParams {
            mu0,
            beta,
            sigma0,
            nu,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn mu0(&self) -> &DVector<f64> {
        &self.mu0
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn sigma0(&self) -> &DMatrix<f64> {
        &self.sigma0
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    /// Posterior hyperparameters after conditioning on `stats`.
    ///
    /// With `n` points of mean `xbar` the update is
    ///
    /// ```text
    /// beta'   = beta + n
    /// mu'     = (beta * mu0 + n * xbar) / beta'
    /// nu'     = nu + n
    /// sigma0' = sigma0 + scatter + beta * mu0 mu0^T - beta' * mu' mu'^T
    /// ```
    ///
    /// where the last line equals the prior scale plus the centered data
    /// scatter plus the mean-shift term. Empty statistics return the prior
    /// unchanged.
    pub fn posterior(&self, stats: &GaussianSuffStats) -> NormalWishartParams {
        assert_eq!(stats.dim(), self.dim(), "stats dimension mismatch");
        if stats.is_empty() {
            return self.clone();
        }
        let n = stats.count() as f64;
        let beta_n = self.beta + n;
        let mu_n = (&self.mu0 * self.beta + stats.sum()) / beta_n;
        let nu_n = self.nu + n;
        let mut sigma_n = &self.sigma0 + stats.scatter();
        sigma_n.ger(self.beta, &self.mu0, &self.mu0, 1.0);
        sigma_n.ger(-beta_n, &mu_n, &mu_n, 1.0);
        // Symmetrize to stop rounding from accumulating across long chains of
        // updates.
        sigma_n = (&sigma_n + sigma_n.transpose()) * 0.5;
        NormalWishartParams {
            mu0: mu_n,
            beta: beta_n,
            sigma0: sigma_n,
            nu: nu_n,
        }
    }

    /// Log predictive density of a single point given the prior and the
    /// statistics of previously seen points.
    ///
    /// The marginal of the component parameters is a multivariate Student-t:
    /// with posterior hyperparameters `(mu', beta', sigma0', nu')` and
    /// `a = nu' - d + 1`,
    ///
    /// ```text
    /// x ~ St(mu', sigma0' * (beta' + 1) / (beta' * a), a)
    /// ```
    pub fn log_predictive(&self, x: &DVector<f64>, context: &GaussianSuffStats) -> Result<f64> {
        let d = self.dim();
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("predictive point".into()));
        }
        let post = self.posterior(context);
        let dof = post.nu - d as f64 + 1.0;
        let spread = (post.beta + 1.0) / (post.beta * dof);
        let chol = Cholesky::new(post.sigma0).ok_or_else(|| {
            Error::NotPositiveDefinite("posterior scale lost positive-definiteness".into())
        })?;
        // Scale matrix is spread * sigma0', so one factorization serves both
        // the determinant and the quadratic form.
        let ln_det_scale =
            d as f64 * spread.ln() + 2.0 * chol.l_dirty().diagonal().map(f64::ln).sum();
        let centered = x - &post.mu0;
        let solved = chol
            .l_dirty()
            .solve_lower_triangular(&centered)
            .expect("Cholesky factor has positive diagonal");
        let quad = solved.norm_squared() / spread;
        Ok(ln_gamma((dof + d as f64) / 2.0)
            - ln_gamma(dof / 2.0)
            - 0.5 * d as f64 * (dof.ln() + LN_PI)
            - 0.5 * ln_det_scale
            - 0.5 * (dof + d as f64) * (quad / dof).ln_1p())
    }

    /// Joint log marginal of a point set given the prior and a context of
    /// previously seen points.
    ///
    /// Computed as a difference of closed-form evidence terms,
    /// `ln p(context + points) - ln p(context)`, rather than by chaining
    /// single-point predictives; the two routes agree to about 1e-9 and the
    /// difference form needs only two Cholesky factorizations regardless of
    /// the set size. An empty set yields exactly zero.
    pub fn log_marginal_set(
        &self,
        points: &[DVector<f64>],
        context: &GaussianSuffStats,
    ) -> Result<f64> {
        if points.is_empty() {
            return Ok(0.0);
        }
        let d = self.dim();
        for x in points {
            if x.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: x.len(),
                });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("marginal point".into()));
            }
        }
        let mut combined = context.clone();
        for x in points {
            combined.add(x);
        }
        Ok(self.log_marginal_stats(&combined)? - self.log_marginal_stats(context)?)
    }

    /// Log evidence `ln p(points summarized by stats)` under this prior.
    ///
    /// For `n` points this is
    ///
    /// ```text
    /// -(n d / 2) ln pi + (d / 2) (ln beta - ln beta')
    ///   + ln G_d(nu'/2) - ln G_d(nu/2)
    ///   + (nu / 2) ln |sigma0| - (nu' / 2) ln |sigma0'|
    /// ```
    ///
    /// with `G_d` the multivariate gamma function.
    pub fn log_marginal_stats(&self, stats: &GaussianSuffStats) -> Result<f64> {
        if stats.is_empty() {
            return Ok(0.0);
        }
        let d = self.dim();
        let n = stats.count() as f64;
        let post = self.posterior(stats);
        let ln_det_prior = cholesky_ln_det(&self.sigma0)
            .ok_or_else(|| Error::NotPositiveDefinite("prior scale".into()))?;
        let ln_det_post = cholesky_ln_det(&post.sigma0)
            .ok_or_else(|| Error::NotPositiveDefinite("posterior scale".into()))?;
        Ok(-0.5 * n * d as f64 * LN_PI
            + 0.5 * d as f64 * (self.beta.ln() - post.beta.ln())
            + ln_multivariate_gamma(d, post.nu / 2.0)
            - ln_multivariate_gamma(d, self.nu / 2.0)
            + 0.5 * self.nu * ln_det_prior
            - 0.5 * post.nu * ln_det_post)
    }
}

/// `ln |m|` through a Cholesky factorization, or `None` when `m` is not
/// positive-definite.
fn cholesky_ln_det(m: &DMatrix<f64>) -> Option<f64> {
    Cholesky::new(m.clone()).map(|c| 2.0 * c.l_dirty().diagonal().map(f64::ln).sum())
}

/// Multivariate log-gamma `ln G_d(a)`.
fn ln_multivariate_gamma(d: usize, a: f64) -> f64 {
    let base = d as f64 * (d as f64 - 1.0) / 4.0 * LN_PI;
    base + (0..d).map(|i| ln_gamma(a - i as f64 / 2.0)).sum::<f64>()
}
