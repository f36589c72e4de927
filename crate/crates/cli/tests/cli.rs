//! End-to-end checks of the binary: artifact determinism, exit codes, and
//! setting precedence.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::tempdir;

fn binary() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cdosr"));
    // Keep the ambient environment from influencing precedence tests.
    cmd.env_remove("CDOSR_SEED");
    cmd
}

fn demo_dataset() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/demo.csv")
        .canonicalize()
        .expect("demo dataset is committed")
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output()
        .expect("binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn epsilon_artifacts_are_byte_identical_across_runs() {
    let dataset = demo_dataset();
    let run = |dir: &Path| {
        run_ok(
            binary()
                .args(["epsilon", "--dataset"])
                .arg(&dataset)
                .args([
                    "--known-classes",
                    "3",
                    "--seed",
                    "9",
                    "--repeats",
                    "2",
                    "--sweeps",
                    "10",
                    "--init-components",
                    "10",
                    "--eps-grid",
                    "0.005,0.05",
                    "--out",
                ])
                .arg(dir),
        );
        fs::read(dir.join("epsilon.csv")).unwrap()
    };
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    assert_eq!(run(a.path()), run(b.path()));
}

#[test]
fn discover_writes_a_report_and_prints_scores() {
    let dataset = demo_dataset();
    let dir = tempdir().unwrap();
    let output = run_ok(
        binary()
            .args(["discover", "--dataset"])
            .arg(&dataset)
            .args([
                "--known-classes",
                "3",
                "--seed",
                "4",
                "--sweeps",
                "15",
                "--out",
            ])
            .arg(dir.path()),
    );
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("micro F"), "missing score line: {stdout}");
    assert!(stdout.contains("estimated new subclasses"), "{stdout}");
    let report = fs::read_to_string(dir.path().join("recognition.csv")).unwrap();
    assert!(report.contains("section,group,class,component,share"));
    assert!(report.contains("index,verdict,assignment"));
}

#[test]
fn report_round_trips_a_metrics_file() {
    let dataset = demo_dataset();
    let dir = tempdir().unwrap();
    run_ok(
        binary()
            .args(["epsilon", "--dataset"])
            .arg(&dataset)
            .args([
                "--known-classes",
                "3",
                "--seed",
                "9",
                "--repeats",
                "1",
                "--sweeps",
                "10",
                "--init-components",
                "10",
                "--eps-grid",
                "0.01",
                "--out",
            ])
            .arg(dir.path()),
    );
    let output = run_ok(binary().arg("report").arg(dir.path().join("epsilon.csv")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("epsilon"), "{stdout}");
    assert!(stdout.contains("mean_f"), "{stdout}");
    assert!(stdout.contains("root_seed = 9"), "{stdout}");
}

#[test]
fn seed_precedence_is_flag_then_env_then_default() {
    let dataset = demo_dataset();
    let seed_column = |dir: &Path| {
        let text = fs::read_to_string(dir.join("epsilon.csv")).unwrap();
        let row = text
            .lines()
            .find(|l| !l.starts_with('#') && !l.starts_with("epsilon"))
            .expect("one data row")
            .to_string();
        row.rsplit(',').next().unwrap().to_string()
    };
    let base = |dir: &Path| {
        let mut cmd = binary();
        cmd.args(["epsilon", "--dataset"])
            .arg(&dataset)
            .args([
                "--known-classes",
                "3",
                "--repeats",
                "1",
                "--sweeps",
                "5",
                "--init-components",
                "5",
                "--eps-grid",
                "0.01",
                "--out",
            ])
            .arg(dir);
        cmd
    };

    let env_dir = tempdir().unwrap();
    run_ok(base(env_dir.path()).env("CDOSR_SEED", "123"));
    assert_eq!(seed_column(env_dir.path()), "123");

    let flag_dir = tempdir().unwrap();
    run_ok(
        base(flag_dir.path())
            .env("CDOSR_SEED", "123")
            .args(["--seed", "5"]),
    );
    assert_eq!(seed_column(flag_dir.path()), "5");

    let default_dir = tempdir().unwrap();
    run_ok(&mut base(default_dir.path()));
    assert_eq!(seed_column(default_dir.path()), "0");
}

#[test]
fn config_file_supplies_settings_and_flags_override() {
    let dataset = demo_dataset();
    let dir = tempdir().unwrap();
    let config_path = dir.path().join("run.toml");
    fs::write(
        &config_path,
        format!(
            "[data]\npath = {:?}\nknown_classes = 3\n\n\
             [model]\nsweeps = 10\ninit_components = 10\n\n\
             [study]\nrepeats = 1\nseed = 77\nepsilons = [0.01]\n\n\
             [output]\ndir = {:?}\n",
            dataset.display().to_string(),
            dir.path().join("artifacts").display().to_string(),
        ),
    )
    .unwrap();
    run_ok(binary().args(["epsilon", "--config"]).arg(&config_path));
    let text = fs::read_to_string(dir.path().join("artifacts/epsilon.csv")).unwrap();
    assert!(text.contains("# root_seed = 77"), "{text}");

    // A flag beats the file.
    run_ok(
        binary()
            .args(["epsilon", "--config"])
            .arg(&config_path)
            .args(["--seed", "78"]),
    );
    let text = fs::read_to_string(dir.path().join("artifacts/epsilon.csv")).unwrap();
    assert!(text.contains("# root_seed = 78"), "{text}");
}

#[test]
fn failure_phases_map_to_distinct_exit_codes() {
    let dataset = demo_dataset();

    // Unknown config key.
    let dir = tempdir().unwrap();
    let bad_config = dir.path().join("bad.toml");
    fs::write(&bad_config, "[model]\nnot_a_knob = 1\n").unwrap();
    assert_eq!(
        exit_code(
            binary()
                .args(["epsilon", "--config"])
                .arg(&bad_config)
                .args(["--dataset"])
                .arg(&dataset)
        ),
        2
    );

    // Bad seed in the environment.
    assert_eq!(
        exit_code(
            binary()
                .args(["epsilon", "--dataset"])
                .arg(&dataset)
                .env("CDOSR_SEED", "not-a-number")
        ),
        2
    );

    // Missing dataset file.
    assert_eq!(
        exit_code(binary().args(["epsilon", "--dataset", "/nonexistent/data.csv"])),
        3
    );

    // No dataset given at all is a configuration problem.
    assert_eq!(exit_code(binary().arg("epsilon")), 2);

    // More known classes than the dataset can supply fails at run time.
    assert_eq!(
        exit_code(binary().args(["epsilon", "--dataset"]).arg(&dataset).args([
            "--known-classes",
            "50",
            "--repeats",
            "1"
        ])),
        5
    );

    // Unreadable metrics file for report.
    assert_eq!(
        exit_code(binary().args(["report", "/nonexistent/metrics.csv"])),
        3
    );
}
