//! Statistical oracles for the seating sampler.
//!
//! Under a flat likelihood the table and dish conditionals reduce to pure
//! Chinese-restaurant weights, so their exact probabilities are known in
//! closed form and can be chi-square tested. The remaining tests check that
//! the likelihood term drives the expected merging and sharing behavior on
//! data where the right answer is unambiguous.

use std::collections::BTreeSet;
use std::sync::Arc;

use cdosr_core::bayes::NormalWishartParams;
use cdosr_core::crf::{
    run_chain, ChainOptions, CrfState, FlatLikelihood, GaussianComponentModel, HdpConcentrations,
};
use cdosr_core::dataset::GroupedDataset;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn unit_prior(dim: usize) -> NormalWishartParams {
    NormalWishartParams::new(
        DVector::zeros(dim),
        1.0,
        DMatrix::identity(dim, dim),
        dim as f64 + 2.0,
    )
    .unwrap()
}

fn chi_square_p_value(observed: &[usize], expected: &[f64]) -> f64 {
    let statistic: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| {
            let diff = o as f64 - e;
            diff * diff / e
        })
        .sum();
    let dof = (observed.len() - 1) as f64;
    1.0 - ChiSquared::new(dof).unwrap().cdf(statistic)
}

fn noise_points(count: usize, dim: usize, rng: &mut impl Rng) -> Vec<DVector<f64>> {
    (0..count)
        .map(|_| DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)))
        .collect()
}

#[test]
fn table_choice_matches_crp_weights_under_flat_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let data =
        Arc::new(GroupedDataset::from_groups(vec![noise_points(8, 1, &mut rng), vec![]]).unwrap());
    // Round-robin over three tables seats instances 0,3,6 / 1,4,7 / 2,5.
    let base = CrfState::init(Arc::clone(&data), 3).unwrap();
    let table_ids = base.group_table_ids(0);
    assert_eq!(table_ids.len(), 3);
    let target = (0usize, 7usize);
    let current = base.table_of_instance(target.0, target.1);
    let alpha0 = 2.0;

    let remaining = (data.group_len(0) - 1) as f64;
    let mut probs: Vec<f64> = table_ids
        .iter()
        .map(|&t| {
            let members = base.table_members(0, t) - usize::from(t == current);
            members as f64 / (remaining + alpha0)
        })
        .collect();
    probs.push(alpha0 / (remaining + alpha0));

    let draws = 20_000usize;
    let mut observed = vec![0usize; probs.len()];
    for _ in 0..draws {
        let mut state = base.clone();
        state.sample_table(&FlatLikelihood, 5.0, alpha0, target.0, target.1, &mut rng);
        let seat = state.table_of_instance(target.0, target.1);
        let bin = table_ids
            .iter()
            .position(|&t| t == seat)
            .unwrap_or(table_ids.len());
        observed[bin] += 1;
    }

    let expected: Vec<f64> = probs.iter().map(|p| p * draws as f64).collect();
    let p = chi_square_p_value(&observed, &expected);
    assert!(
        p > 1e-3,
        "chi-square p-value {p:.2e} for observed {observed:?} vs expected {expected:?}"
    );
}

#[test]
fn new_table_dish_choice_matches_table_count_mixture() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let groups = vec![
        noise_points(10, 1, &mut rng),
        noise_points(10, 1, &mut rng),
        noise_points(10, 1, &mut rng),
    ];
    let data = Arc::new(GroupedDataset::from_groups(groups).unwrap());
    // Four dishes, each served by one table per group: every dish backs
    // three of the twelve tables.
    let base = CrfState::init(Arc::clone(&data), 4).unwrap();
    let dish_ids = base.dish_ids();
    assert_eq!(dish_ids.len(), 4);
    assert_eq!(base.total_tables(), 12);

    let gamma = 6.0;
    let m_total = base.total_tables() as f64;
    let mut probs: Vec<f64> = dish_ids
        .iter()
        .map(|&k| base.dish_table_count(k) as f64 / (m_total + gamma))
        .collect();
    probs.push(gamma / (m_total + gamma));

    // An overwhelming concentration forces a fresh table on every draw, so
    // each draw exercises the dish-selection mixture exactly once.
    let draws = 20_000usize;
    let mut observed = vec![0usize; probs.len()];
    for _ in 0..draws {
        let mut state = base.clone();
        state.sample_table(&FlatLikelihood, gamma, 1e300, 0, 0, &mut rng);
        let dish = state.dish_of_instance(0, 0);
        let bin = dish_ids
            .iter()
            .position(|&k| k == dish)
            .unwrap_or(dish_ids.len());
        observed[bin] += 1;
    }

    let expected: Vec<f64> = probs.iter().map(|p| p * draws as f64).collect();
    let p = chi_square_p_value(&observed, &expected);
    assert!(
        p > 1e-3,
        "chi-square p-value {p:.2e} for observed {observed:?} vs expected {expected:?}"
    );
}

#[test]
fn identical_points_collapse_to_a_single_dish() {
    let point = DVector::from_vec(vec![1.5, -0.5]);
    let groups = vec![vec![point.clone(); 15], vec![point.clone(); 15], vec![]];
    let data = Arc::new(GroupedDataset::from_groups(groups).unwrap());
    let model = GaussianComponentModel::new(unit_prior(2));
    let conc = HdpConcentrations {
        gamma: 1.0,
        alpha0: 1.0,
        ..HdpConcentrations::default()
    };
    let opts = ChainOptions {
        sweeps: 30,
        init_components: 30,
        resample_concentrations: false,
    };

    let mut collapsed = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = run_chain(Arc::clone(&data), &model, &conc, &opts, &mut rng).unwrap();
        if state.num_dishes() == 1 {
            collapsed += 1;
        }
    }
    assert!(
        collapsed >= 95,
        "only {collapsed}/100 chains collapsed to one dish"
    );
}

#[test]
fn well_separated_clusters_are_shared_across_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let centers = [
        DVector::from_vec(vec![-6.0, 0.0]),
        DVector::from_vec(vec![6.0, 0.0]),
    ];
    let make_group = |rng: &mut ChaCha8Rng| -> Vec<DVector<f64>> {
        let mut points = Vec::new();
        for center in &centers {
            for _ in 0..10 {
                points.push(DVector::from_fn(2, |r, _| {
                    center[r] + 0.5 * rng.random_range(-1.0..1.0)
                }));
            }
        }
        points
    };
    let groups = vec![make_group(&mut rng), make_group(&mut rng)];
    let data = Arc::new(GroupedDataset::from_groups(groups).unwrap());
    let model = GaussianComponentModel::new(unit_prior(2));
    let conc = HdpConcentrations {
        gamma: 1.0,
        alpha0: 1.0,
        ..HdpConcentrations::default()
    };
    let opts = ChainOptions {
        sweeps: 40,
        init_components: 10,
        resample_concentrations: false,
    };

    let mut shared = 0;
    for seed in 100..150u64 {
        let mut chain_rng = ChaCha8Rng::seed_from_u64(seed);
        let state = run_chain(Arc::clone(&data), &model, &conc, &opts, &mut chain_rng).unwrap();
        let menu_a: BTreeSet<_> = state.group_dish_counts(0).into_keys().collect();
        let menu_b: BTreeSet<_> = state.group_dish_counts(1).into_keys().collect();
        if state.num_dishes() == 2 && menu_a == menu_b {
            shared += 1;
        }
    }
    assert!(
        shared >= 45,
        "only {shared}/50 chains recovered the two shared clusters"
    );
}

#[test]
fn random_operations_preserve_bookkeeping_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let model = GaussianComponentModel::new(unit_prior(2));
    for _round in 0..10 {
        let groups: Vec<Vec<DVector<f64>>> = (0..3)
            .map(|_| noise_points(rng.random_range(1..=8), 2, &mut rng))
            .collect();
        let data = Arc::new(GroupedDataset::from_groups(groups).unwrap());
        let gamma = rng.random_range(0.5..50.0);
        let alpha0 = rng.random_range(0.5..20.0);
        let mut state = CrfState::init(Arc::clone(&data), rng.random_range(1..6)).unwrap();

        for op in 0..200 {
            let roll: f64 = rng.random();
            if roll < 0.70 {
                let j = rng.random_range(0..data.num_groups());
                if data.group_len(j) > 0 {
                    let i = rng.random_range(0..data.group_len(j));
                    state.sample_table(&model, gamma, alpha0, j, i, &mut rng);
                }
            } else if roll < 0.95 {
                let j = rng.random_range(0..data.num_groups());
                let tables = state.group_table_ids(j);
                if !tables.is_empty() {
                    let t = tables[rng.random_range(0..tables.len())];
                    state.sample_dish(&model, gamma, j, t, &mut rng);
                }
            } else {
                state.refresh_stats();
            }
            if op % 50 == 49 {
                state.check_consistency(1e-9).unwrap();
            }
        }
        state.check_consistency(1e-9).unwrap();
    }
}
