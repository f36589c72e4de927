//! Log-space numeric helpers shared by the samplers.
//!
//! Every categorical draw in this crate goes through [`sample_log_weights`],
//! which normalizes unnormalized log weights with a log-sum-exp reduction
//! before inverting the CDF. Working in log space keeps weights usable even
//! when individual densities underflow `f64`.

use rand::Rng;

/// Computes `ln(sum(exp(x)))` without overflow by factoring out the maximum.
///
/// Returns negative infinity for an empty slice or when every entry is
/// negative infinity.
pub fn log_sum_exp(log_weights: &[f64]) -> f64 {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = log_weights.iter().map(|&w| (w - max).exp()).sum();
    max + sum.ln()
}

/// Draws an index proportional to `exp(log_weights[i])`.
///
/// Weights are normalized with [`log_sum_exp`] first, so only relative
/// magnitudes matter. Entries equal to negative infinity have zero
/// probability.
///
/// # Panics
///
/// Panics if the slice is empty or no entry has positive probability; the
/// samplers never produce such weight vectors for finite data.
pub fn sample_log_weights<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    assert!(!log_weights.is_empty(), "no candidates to sample from");
    let norm = log_sum_exp(log_weights);
    assert!(
        norm.is_finite(),
        "all candidate log weights are degenerate: {norm}"
    );
    let u: f64 = rng.random::<f64>();
    let mut cumulative = 0.0;
    let mut last_positive = 0;
    for (i, &w) in log_weights.iter().enumerate() {
        let p = (w - norm).exp();
        if p > 0.0 {
            last_positive = i;
        }
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    // Rounding can leave `cumulative` a hair below 1; fall back to the last
    // candidate with positive probability.
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn log_sum_exp_matches_direct_sum_for_small_values() {
        let xs = [-1.0f64, -2.0, -3.0];
        let direct: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_abs_diff_eq!(log_sum_exp(&xs), direct, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_large_offsets() {
        let xs = [-1000.0, -1001.0];
        let expected = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert_abs_diff_eq!(log_sum_exp(&xs), expected, epsilon = 1e-12);
    }

    #[test]
    fn log_sum_exp_of_empty_is_neg_infinity() {
        assert_eq!(log_sum_exp(&[]), f64::NEG_INFINITY);
    }

    #[test]
    fn sampler_respects_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let log_w = [0.0f64.ln(), 1.0f64.ln(), 3.0f64.ln()];
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_log_weights(&log_w, &mut rng)] += 1;
        }
        assert_eq!(counts[0], 0);
        let p1 = counts[1] as f64 / draws as f64;
        assert_abs_diff_eq!(p1, 0.25, epsilon = 0.01);
    }

    #[test]
    fn sampler_is_deterministic_for_a_fixed_seed() {
        let log_w = [-0.3, -1.7, -0.9, -2.4];
        let a: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..64)
                .map(|_| sample_log_weights(&log_w, &mut rng))
                .collect()
        };
        let b: Vec<usize> = {
            let mut rng = ChaCha8Rng::seed_from_u64(42);
            (0..64)
                .map(|_| sample_log_weights(&log_w, &mut rng))
                .collect()
        };
        assert_eq!(a, b);
    }
}
