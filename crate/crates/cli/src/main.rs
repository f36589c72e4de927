//! Command-line driver: runs recognition studies over delimited datasets and
//! writes CSV artifacts.
//!
//! Settings resolve in precedence order: command-line flag, then the
//! `CDOSR_SEED` environment variable (seed only), then the TOML config file,
//! then built-in defaults. Exit codes distinguish failure phases: 2 for
//! configuration problems, 3 for dataset problems, 4 for output problems,
//! and 5 for a failed run.

use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Deserialize;

use cdosr_core::dataset::LabeledDataset;
use cdosr_core::eval::io::{
    load_labeled_dataset, load_unlabeled_batch, read_metrics_csv, write_metrics_csv,
    write_recognition_report,
};
use cdosr_core::eval::metrics::micro_f;
use cdosr_core::eval::pca::ReductionPipeline;
use cdosr_core::eval::split::split_protocol;
use cdosr_core::eval::studies::{
    epsilon_grid, nu_offset_grid, run_batch_size_study, run_epsilon_study, run_fit_search,
    run_openness_sweep, varsigma_grid, FitOutcome, StudyConfig,
};
use cdosr_core::osr::{recognize, HyperConfig, Prediction};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(
    name = "cdosr",
    version,
    about = "Open set recognition by co-clustering known classes with the test batch"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Labeled dataset (dense `label,f1,...` or sparse `label i:v ...` rows).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,

    /// Directory for CSV artifacts.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Root seed for all randomness.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Independent repetitions per study point.
    #[arg(long, global = true)]
    repeats: Option<usize>,

    /// Sampling sweeps per run.
    #[arg(long, global = true)]
    sweeps: Option<usize>,

    /// Components each group starts spread over.
    #[arg(long, global = true)]
    init_components: Option<usize>,

    /// Number of classes treated as known.
    #[arg(long, global = true)]
    known_classes: Option<usize>,

    /// Pruning threshold.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Grid-search the prior knobs on validation splits of the training data.
    Fit {
        /// Degrees-of-freedom offsets to try, comma separated.
        #[arg(long, value_delimiter = ',')]
        nu_offsets: Option<Vec<f64>>,
        /// Pooled-covariance scales to try, comma separated.
        #[arg(long, value_delimiter = ',')]
        varsigmas: Option<Vec<f64>>,
    },
    /// Measure F as the batch mixes in more unknown classes.
    Sweep {
        /// Unknown-class counts to include, comma separated.
        #[arg(long, value_delimiter = ',')]
        unknown_counts: Option<Vec<usize>>,
    },
    /// Measure F as the batch shrinks to prefixes of itself.
    Batch {
        /// Batch fractions in (0, 1], comma separated.
        #[arg(long, value_delimiter = ',')]
        fractions: Option<Vec<f64>>,
    },
    /// Measure F across pruning thresholds, reusing one chain per repeat.
    Epsilon {
        /// Thresholds in [0, 1), comma separated.
        #[arg(long, value_delimiter = ',')]
        eps_grid: Option<Vec<f64>>,
    },
    /// Run recognition once and write the full verdict report.
    Discover {
        /// Unlabeled batch file; without it, a protocol split of the dataset
        /// supplies the batch and scores are printed.
        #[arg(long)]
        batch: Option<PathBuf>,
        /// Unknown classes to mix into the protocol split.
        #[arg(long)]
        unknown_classes: Option<usize>,
    },
    /// Pretty-print a metrics CSV written by sweep, batch, or epsilon.
    Report {
        /// Metrics file to read.
        path: PathBuf,
    },
}

#[derive(Debug)]
enum AppError {
    Config(String),
    Dataset(String),
    Output(String),
    Run(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Dataset(_) => 3,
            AppError::Output(_) => 4,
            AppError::Run(_) => 5,
        }
    }
}

impl fmt::Display for AppError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AppError::Config(m) => write!(f, "configuration: {m}"),
            AppError::Dataset(m) => write!(f, "dataset: {m}"),
            AppError::Output(m) => write!(f, "output: {m}"),
            AppError::Run(m) => write!(f, "run: {m}"),
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    #[serde(default)]
    data: DataSection,
    #[serde(default)]
    model: ModelSection,
    #[serde(default)]
    study: StudySection,
    #[serde(default)]
    fit: FitSection,
    #[serde(default)]
    output: OutputSection,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct DataSection {
    path: Option<PathBuf>,
    known_classes: Option<usize>,
    unknown_classes: Option<usize>,
    /// Standardize features and project onto principal components before use.
    #[serde(default)]
    reduce: bool,
    /// Variance fraction the projection must cover.
    retain: Option<f64>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    gamma: Option<f64>,
    alpha0: Option<f64>,
    beta: Option<f64>,
    nu_offset: Option<f64>,
    varsigma: Option<f64>,
    epsilon: Option<f64>,
    sweeps: Option<usize>,
    init_components: Option<usize>,
    resample_concentrations: Option<bool>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct StudySection {
    repeats: Option<usize>,
    seed: Option<u64>,
    unknown_counts: Option<Vec<usize>>,
    fractions: Option<Vec<f64>>,
    epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FitSection {
    nu_offsets: Option<Vec<f64>>,
    varsigmas: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct OutputSection {
    dir: Option<PathBuf>,
}

/// Fully resolved settings for one invocation.
struct Settings {
    dataset: Option<PathBuf>,
    known_classes: usize,
    unknown_classes: Option<usize>,
    reduce: bool,
    retain: f64,
    hyper: HyperConfig,
    repeats: usize,
    root_seed: u64,
    unknown_counts: Vec<usize>,
    fractions: Vec<f64>,
    epsilons: Vec<f64>,
    fit_nu_offsets: Vec<f64>,
    fit_varsigmas: Vec<f64>,
    out_dir: PathBuf,
}

fn resolve_settings(cli: &Cli) -> Result<Settings, AppError> {
    let file: FileConfig = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::Config(format!("cannot read {}: {e}", path.display())))?;
            toml::from_str(&text)
                .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))?
        }
        None => FileConfig::default(),
    };

    let mut hyper = HyperConfig::default();
    if let Some(v) = file.model.gamma {
        hyper.concentrations.gamma = v;
    }
    if let Some(v) = file.model.alpha0 {
        hyper.concentrations.alpha0 = v;
    }
    if let Some(v) = file.model.beta {
        hyper.beta = v;
    }
    if let Some(v) = file.model.nu_offset {
        hyper.nu_offset = v;
    }
    if let Some(v) = file.model.varsigma {
        hyper.varsigma = v;
    }
    if let Some(v) = file.model.epsilon {
        hyper.epsilon = v;
    }
    if let Some(v) = file.model.sweeps {
        hyper.sweeps = v;
    }
    if let Some(v) = file.model.init_components {
        hyper.init_components = v;
    }
    if let Some(v) = file.model.resample_concentrations {
        hyper.resample_concentrations = v;
    }
    if let Some(v) = cli.sweeps {
        hyper.sweeps = v;
    }
    if let Some(v) = cli.init_components {
        hyper.init_components = v;
    }
    if let Some(v) = cli.epsilon {
        hyper.epsilon = v;
    }

    let env_seed = match std::env::var("CDOSR_SEED") {
        Ok(text) => Some(text.parse::<u64>().map_err(|_| {
            AppError::Config(format!(
                "CDOSR_SEED must be an unsigned integer, got {text:?}"
            ))
        })?),
        Err(_) => None,
    };
    let root_seed = cli.seed.or(env_seed).or(file.study.seed).unwrap_or(0);
    hyper.seed = root_seed;
    hyper
        .validate()
        .map_err(|e| AppError::Config(e.to_string()))?;

    let retain = file.data.retain.unwrap_or(0.95);
    if file.data.reduce && !(0.0 < retain && retain <= 1.0) {
        return Err(AppError::Config(format!(
            "retain must lie in (0, 1], got {retain}"
        )));
    }

    Ok(Settings {
        dataset: cli.dataset.clone().or(file.data.path),
        known_classes: cli.known_classes.or(file.data.known_classes).unwrap_or(3),
        unknown_classes: file.data.unknown_classes,
        reduce: file.data.reduce,
        retain,
        hyper,
        repeats: cli.repeats.or(file.study.repeats).unwrap_or(5),
        root_seed,
        unknown_counts: file
            .study
            .unknown_counts
            .unwrap_or_else(|| vec![0, 1, 2, 3]),
        fractions: file
            .study
            .fractions
            .unwrap_or_else(|| vec![0.2, 0.4, 0.6, 0.8, 1.0]),
        epsilons: file.study.epsilons.unwrap_or_else(epsilon_grid),
        fit_nu_offsets: file.fit.nu_offsets.unwrap_or_else(nu_offset_grid),
        fit_varsigmas: file.fit.varsigmas.unwrap_or_else(varsigma_grid),
        out_dir: cli
            .out
            .clone()
            .or(file.output.dir)
            .unwrap_or_else(|| PathBuf::from(".")),
    })
}

fn load_dataset(settings: &Settings) -> Result<LabeledDataset, AppError> {
    let path = settings
        .dataset
        .as_ref()
        .ok_or_else(|| AppError::Config("no dataset given (--dataset or [data] path)".into()))?;
    let data = load_labeled_dataset(path).map_err(|e| AppError::Dataset(e.to_string()))?;
    if !settings.reduce {
        return Ok(data);
    }
    let pipeline = ReductionPipeline::fit(data.instances(), settings.retain)
        .map_err(|e| AppError::Dataset(e.to_string()))?;
    log::info!(
        "reduced {} features to {} components",
        data.dim(),
        pipeline.components()
    );
    let reduced = pipeline.apply_all(data.instances());
    LabeledDataset::new(reduced, data.labels().to_vec())
        .map_err(|e| AppError::Dataset(e.to_string()))
}

fn study_config(settings: &Settings) -> StudyConfig {
    StudyConfig {
        base: settings.hyper.clone(),
        repeats: settings.repeats,
        root_seed: settings.root_seed,
    }
}

fn config_echo(settings: &Settings, extra: &[(&str, String)]) -> Vec<(String, String)> {
    let mut echo = vec![
        (
            "dataset".to_string(),
            settings
                .dataset
                .as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string()),
        ),
        (
            "known_classes".to_string(),
            settings.known_classes.to_string(),
        ),
        ("repeats".to_string(), settings.repeats.to_string()),
        ("root_seed".to_string(), settings.root_seed.to_string()),
    ];
    for part in settings.hyper.summary().split_whitespace() {
        if let Some((key, value)) = part.split_once('=') {
            echo.push((key.to_string(), value.to_string()));
        }
    }
    echo.extend(extra.iter().map(|(k, v)| (k.to_string(), v.clone())));
    echo
}

fn ensure_out_dir(settings: &Settings) -> Result<(), AppError> {
    fs::create_dir_all(&settings.out_dir)
        .map_err(|e| AppError::Output(format!("{}: {e}", settings.out_dir.display())))
}

fn write_series(
    settings: &Settings,
    file_name: &str,
    x_name: &str,
    points: &[cdosr_core::eval::studies::SeriesPoint],
    extra_echo: &[(&str, String)],
) -> Result<PathBuf, AppError> {
    ensure_out_dir(settings)?;
    let path = settings.out_dir.join(file_name);
    let echo = config_echo(settings, extra_echo);
    write_metrics_csv(&path, x_name, points, &echo, settings.root_seed)
        .map_err(|e| AppError::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn write_fit_table(settings: &Settings, outcome: &FitOutcome) -> Result<PathBuf, AppError> {
    ensure_out_dir(settings)?;
    let path = settings.out_dir.join("fit_grid.csv");
    let mut out = String::new();
    for (key, value) in config_echo(settings, &[]) {
        out.push_str(&format!("# {key} = {value}\n"));
    }
    out.push_str("nu_offset,varsigma,closed_f,open_f,score\n");
    for cell in &outcome.table {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            cell.nu_offset, cell.varsigma, cell.closed_f, cell.open_f, cell.score
        ));
    }
    fs::write(&path, out).map_err(|e| AppError::Output(format!("{}: {e}", path.display())))?;
    Ok(path)
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let settings = resolve_settings(cli)?;
    match &cli.command {
        Command::Sweep { unknown_counts } => {
            let data = load_dataset(&settings)?;
            let counts = unknown_counts
                .clone()
                .unwrap_or_else(|| settings.unknown_counts.clone());
            let points = run_openness_sweep(
                &data,
                settings.known_classes,
                &counts,
                &study_config(&settings),
            )
            .map_err(|e| AppError::Run(e.to_string()))?;
            let path = write_series(
                &settings,
                "openness.csv",
                "openness",
                &points,
                &[("unknown_counts", format!("{counts:?}"))],
            )?;
            println!("wrote {}", path.display());
            for p in &points {
                println!(
                    "openness {:.4}: F = {:.4} +/- {:.4}",
                    p.x, p.mean_f, p.std_f
                );
            }
            Ok(())
        }
        Command::Batch { fractions } => {
            let data = load_dataset(&settings)?;
            let fractions = fractions
                .clone()
                .unwrap_or_else(|| settings.fractions.clone());
            let points = run_batch_size_study(
                &data,
                settings.known_classes,
                &fractions,
                &study_config(&settings),
            )
            .map_err(|e| AppError::Run(e.to_string()))?;
            let path = write_series(&settings, "batch_size.csv", "fraction", &points, &[])?;
            println!("wrote {}", path.display());
            for p in &points {
                println!(
                    "fraction {:.2}: F = {:.4} +/- {:.4}",
                    p.x, p.mean_f, p.std_f
                );
            }
            Ok(())
        }
        Command::Epsilon { eps_grid } => {
            let data = load_dataset(&settings)?;
            let epsilons = eps_grid
                .clone()
                .unwrap_or_else(|| settings.epsilons.clone());
            let points = run_epsilon_study(
                &data,
                settings.known_classes,
                &epsilons,
                &study_config(&settings),
            )
            .map_err(|e| AppError::Run(e.to_string()))?;
            let path = write_series(&settings, "epsilon.csv", "epsilon", &points, &[])?;
            println!("wrote {}", path.display());
            for p in &points {
                println!("epsilon {:.3}: F = {:.4} +/- {:.4}", p.x, p.mean_f, p.std_f);
            }
            Ok(())
        }
        Command::Fit {
            nu_offsets,
            varsigmas,
        } => {
            let data = load_dataset(&settings)?;
            let mut rng = ChaCha8Rng::seed_from_u64(settings.root_seed);
            let plan = split_protocol(
                &data,
                settings.known_classes,
                settings.unknown_classes,
                &mut rng,
            )
            .map_err(|e| AppError::Run(e.to_string()))?;
            let nu_offsets = nu_offsets
                .clone()
                .unwrap_or_else(|| settings.fit_nu_offsets.clone());
            let varsigmas = varsigmas
                .clone()
                .unwrap_or_else(|| settings.fit_varsigmas.clone());
            let outcome = run_fit_search(
                &plan.train,
                &nu_offsets,
                &varsigmas,
                &study_config(&settings),
            )
            .map_err(|e| AppError::Run(e.to_string()))?;
            let path = write_fit_table(&settings, &outcome)?;
            println!("wrote {}", path.display());
            println!(
                "best: nu_offset = {}, varsigma = {}",
                outcome.best.nu_offset, outcome.best.varsigma
            );
            Ok(())
        }
        Command::Discover {
            batch,
            unknown_classes,
        } => {
            let data = load_dataset(&settings)?;
            ensure_out_dir(&settings)?;
            let path = settings.out_dir.join("recognition.csv");
            let result = match batch {
                Some(batch_path) => {
                    let batch = load_unlabeled_batch(batch_path)
                        .map_err(|e| AppError::Dataset(e.to_string()))?;
                    recognize(&data, &batch, &settings.hyper)
                        .map_err(|e| AppError::Run(e.to_string()))?
                }
                None => {
                    let mut rng = ChaCha8Rng::seed_from_u64(settings.root_seed);
                    let plan = split_protocol(
                        &data,
                        settings.known_classes,
                        unknown_classes.or(settings.unknown_classes),
                        &mut rng,
                    )
                    .map_err(|e| AppError::Run(e.to_string()))?;
                    let result = recognize(&plan.train, &plan.test, &settings.hyper)
                        .map_err(|e| AppError::Run(e.to_string()))?;
                    let scores = micro_f(&result.predictions, &plan.truth)
                        .map_err(|e| AppError::Run(e.to_string()))?;
                    println!(
                        "micro F = {:.4} (precision {:.4}, recall {:.4})",
                        scores.f_measure, scores.precision, scores.recall
                    );
                    result
                }
            };
            let known = result
                .predictions
                .iter()
                .filter(|p| matches!(p, Prediction::Known(_)))
                .count();
            let unknown = result.predictions.len() - known;
            println!(
                "{} batch instances: {known} known, {unknown} unknown, \
                 {} estimated new subclasses",
                result.predictions.len(),
                result.unknown_estimate
            );
            write_recognition_report(&path, &result)
                .map_err(|e| AppError::Output(format!("{}: {e}", path.display())))?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Report { path } => {
            let series = read_metrics_csv(path).map_err(|e| AppError::Dataset(e.to_string()))?;
            for (key, value) in &series.echo {
                println!("{key:>24} = {value}");
            }
            println!();
            println!(
                "{:>12} {:>9} {:>9} {:>10} {:>9} {:>8}",
                series.x_name, "mean_f", "std_f", "precision", "recall", "repeats"
            );
            for p in &series.points {
                println!(
                    "{:>12.4} {:>9.4} {:>9.4} {:>10.4} {:>9.4} {:>8}",
                    p.x, p.mean_f, p.std_f, p.mean_precision, p.mean_recall, p.repeats
                );
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
