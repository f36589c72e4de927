//! Repeated-run studies over openness, batch size, pruning threshold, and
//! the prior's fit knobs. Every repeat is an independent job seeded as
//! `root_seed + job index`, so results are reproducible under any thread
//! scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::eval::metrics::{micro_f, openness, Scores};
use crate::eval::split::{fit_split, split_protocol};
use crate::osr::{co_cluster, label_state, recognize, HyperConfig};

/// Shared settings for a repeated study.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    /// Template for every run; its `seed` field is replaced per job.
    pub base: HyperConfig,
    /// Independent repetitions per study point.
    pub repeats: usize,
    /// Seed origin; job `i` runs with `root_seed + i`.
    pub root_seed: u64,
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.repeats == 0 {
            return Err(Error::invalid("a study needs at least one repeat"));
        }
        Ok(())
    }
}

/// Aggregated scores at one study point.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesPoint {
    /// The varied quantity: openness, batch fraction, or pruning threshold.
    pub x: f64,
    pub mean_f: f64,
    /// Sample standard deviation (n - 1 denominator), zero for one repeat.
    pub std_f: f64,
    pub mean_precision: f64,
    pub mean_recall: f64,
    pub repeats: usize,
}

fn aggregate(x: f64, scores: &[Scores]) -> SeriesPoint {
    let n = scores.len() as f64;
    let mean_f = scores.iter().map(|s| s.f_measure).sum::<f64>() / n;
    let std_f = if scores.len() > 1 {
        let ss = scores
            .iter()
            .map(|s| (s.f_measure - mean_f).powi(2))
            .sum::<f64>();
        (ss / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    SeriesPoint {
        x,
        mean_f,
        std_f,
        mean_precision: scores.iter().map(|s| s.precision).sum::<f64>() / n,
        mean_recall: scores.iter().map(|s| s.recall).sum::<f64>() / n,
        repeats: scores.len(),
    }
}

/// Default degrees-of-freedom offsets searched by the fit study.
pub fn nu_offset_grid() -> Vec<f64> {
    (0..=20).map(f64::from).collect()
}

/// Default pooled-covariance scales searched by the fit study.
pub fn varsigma_grid() -> Vec<f64> {
    [1e-5, 1e-4, 1e-3, 0.01]
        .into_iter()
        .chain((1..=10).map(|i| i as f64 / 10.0))
        .collect()
}

/// Default pruning thresholds for the threshold study.
pub fn epsilon_grid() -> Vec<f64> {
    vec![0.001, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2]
}

/// Measures recognition quality as the batch mixes in more unknown classes.
/// Returns one point per entry of `unknown_counts`, with `x` set to the
/// resulting openness.
pub fn run_openness_sweep(
    source: &LabeledDataset,
    num_known: usize,
    unknown_counts: &[usize],
    study: &StudyConfig,
) -> Result<Vec<SeriesPoint>> {
    study.validate()?;
    unknown_counts
        .iter()
        .enumerate()
        .map(|(point_idx, &num_unknown)| {
            let x = openness(num_known, num_known + num_unknown, num_known)?;
            let scores = (0..study.repeats)
                .into_par_iter()
                .map(|rep| {
                    let job_seed = study.root_seed + (point_idx * study.repeats + rep) as u64;
                    let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
                    let plan = split_protocol(source, num_known, Some(num_unknown), &mut rng)?;
                    let cfg = HyperConfig {
                        seed: job_seed,
                        ..study.base.clone()
                    };
                    let result = recognize(&plan.train, &plan.test, &cfg)?;
                    micro_f(&result.predictions, &plan.truth)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate(x, &scores))
        })
        .collect()
}

/// Measures how stable the verdicts are as the batch shrinks. Each repeat
/// draws one split and evaluates nested prefixes of its shuffled batch, so
/// smaller fractions are strict subsets of larger ones.
pub fn run_batch_size_study(
    source: &LabeledDataset,
    num_known: usize,
    fractions: &[f64],
    study: &StudyConfig,
) -> Result<Vec<SeriesPoint>> {
    study.validate()?;
    if fractions.iter().any(|&f| !(0.0 < f && f <= 1.0)) {
        return Err(Error::invalid("batch fractions must lie in (0, 1]"));
    }
    let per_rep: Vec<Vec<Scores>> = (0..study.repeats)
        .into_par_iter()
        .map(|rep| {
            let job_seed = study.root_seed + rep as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
            let plan = split_protocol(source, num_known, None, &mut rng)?;
            let cfg = HyperConfig {
                seed: job_seed,
                ..study.base.clone()
            };
            fractions
                .iter()
                .map(|&fraction| {
                    let take = ((plan.test.len() as f64 * fraction).round() as usize)
                        .clamp(1, plan.test.len());
                    let result = recognize(&plan.train, &plan.test[..take], &cfg)?;
                    micro_f(&result.predictions, &plan.truth[..take])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(fractions
        .iter()
        .enumerate()
        .map(|(i, &fraction)| {
            let column: Vec<Scores> = per_rep.iter().map(|row| row[i]).collect();
            aggregate(fraction, &column)
        })
        .collect())
}

/// Measures sensitivity to the pruning threshold. Each repeat runs one chain
/// and relabels its final state under every threshold, isolating the
/// threshold's effect from sampling noise.
pub fn run_epsilon_study(
    source: &LabeledDataset,
    num_known: usize,
    epsilons: &[f64],
    study: &StudyConfig,
) -> Result<Vec<SeriesPoint>> {
    study.validate()?;
    if epsilons.iter().any(|&e| !(0.0..1.0).contains(&e)) {
        return Err(Error::invalid("pruning thresholds must lie in [0, 1)"));
    }
    let per_rep: Vec<Vec<Scores>> = (0..study.repeats)
        .into_par_iter()
        .map(|rep| {
            let job_seed = study.root_seed + rep as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
            let plan = split_protocol(source, num_known, None, &mut rng)?;
            let cfg = HyperConfig {
                seed: job_seed,
                ..study.base.clone()
            };
            let state = co_cluster(&plan.train, &plan.test, &cfg)?;
            epsilons
                .iter()
                .map(|&epsilon| {
                    let result = label_state(&state, epsilon);
                    micro_f(&result.predictions, &plan.truth)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(epsilons
        .iter()
        .enumerate()
        .map(|(i, &epsilon)| {
            let column: Vec<Scores> = per_rep.iter().map(|row| row[i]).collect();
            aggregate(epsilon, &column)
        })
        .collect())
}

/// One evaluated cell of the fit search grid.
#[derive(Debug, Clone)]
pub struct FitCell {
    pub nu_offset: f64,
    pub varsigma: f64,
    pub closed_f: f64,
    pub open_f: f64,
    /// Mean of the closed and open F measures; the selection criterion.
    pub score: f64,
}

/// Outcome of the fit search: the winning configuration and the full grid.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub best: HyperConfig,
    pub table: Vec<FitCell>,
}

/// Grid-searches the prior knobs on validation splits carved from the
/// training data alone. Half of the classes simulate unknowns, and each
/// cell is scored by the mean of its closed-batch and open-batch F. Ties
/// keep the earliest grid cell.
pub fn run_fit_search(
    train: &LabeledDataset,
    nu_offsets: &[f64],
    varsigmas: &[f64],
    study: &StudyConfig,
) -> Result<FitOutcome> {
    study.validate()?;
    if nu_offsets.is_empty() || varsigmas.is_empty() {
        return Err(Error::empty("fit search needs nonempty grids"));
    }
    let cells: Vec<(f64, f64)> = nu_offsets
        .iter()
        .flat_map(|&nu| varsigmas.iter().map(move |&vs| (nu, vs)))
        .collect();

    let table: Vec<FitCell> = cells
        .par_iter()
        .map(|&(nu_offset, varsigma)| {
            let mut closed_sum = 0.0;
            let mut open_sum = 0.0;
            for rep in 0..study.repeats {
                // The split depends only on the repeat, so every grid cell
                // sees identical validation data.
                let job_seed = study.root_seed + rep as u64;
                let mut rng = ChaCha8Rng::seed_from_u64(job_seed);
                let plan = fit_split(train, &mut rng)?;
                let cfg = HyperConfig {
                    nu_offset,
                    varsigma,
                    seed: job_seed,
                    ..study.base.clone()
                };
                let closed = recognize(&plan.train, &plan.closed_test, &cfg)?;
                closed_sum += micro_f(&closed.predictions, &plan.closed_truth)?.f_measure;
                let open = recognize(&plan.train, &plan.open_test, &cfg)?;
                open_sum += micro_f(&open.predictions, &plan.open_truth)?.f_measure;
            }
            let closed_f = closed_sum / study.repeats as f64;
            let open_f = open_sum / study.repeats as f64;
            Ok(FitCell {
                nu_offset,
                varsigma,
                closed_f,
                open_f,
                score: (closed_f + open_f) / 2.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let winner = table
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.score.total_cmp(&b.score).then(ib.cmp(ia)))
        .map(|(_, cell)| cell)
        .expect("grids are nonempty");
    let best = HyperConfig {
        nu_offset: winner.nu_offset,
        varsigma: winner.varsigma,
        ..study.base.clone()
    };
    Ok(FitOutcome { best, table })
}
