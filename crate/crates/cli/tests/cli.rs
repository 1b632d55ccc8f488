use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bernflow_cli::commands::{self, DensityRow, TrainSummary};
use bernflow_cli::config::DatasetSpec;
use bernflow_cli::experiments::{ConditionRow, ErrorBoundRow, RobustnessRow, SweepRow};
use bernflow_cli::output::{read_rows, Manifest, MANIFEST_FILE, RESULTS_FILE};
use bernflow_cli::{exit, ExperimentConfig};

fn bernflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bernflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn quick(seed: u64, out: &Path) -> ExperimentConfig {
    ExperimentConfig {
        seed: Some(seed),
        iterations: 40,
        batch_size: 64,
        train_samples: 400,
        test_samples: 200,
        degree: 8,
        degrees: vec![5, 12],
        runs: 3,
        perturbations: 5,
        polynomials: 40,
        perturbed_polynomials: 5,
        grid_points: 20,
        output: out.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn train_checkpoint(dir: &Path) -> TrainSummary {
    let o = bernflow(&[
        "train",
        "--seed",
        "4",
        "--degree",
        "10",
        "--iterations",
        "60",
        "--train-samples",
        "500",
        "--batch-size",
        "64",
        "--output",
        p(dir),
    ]);
    assert_eq!(code(&o), exit::SUCCESS, "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn density_on_training_points_matches_final_nll() {
    let dir = tempfile::tempdir().unwrap();
    let summary = train_checkpoint(dir.path());
    let out = dir.path().join("ll.csv");
    let o = bernflow(&[
        "density",
        "--checkpoint",
        p(&dir.path().join("checkpoint.json")),
        "--points",
        p(&dir.path().join("data.csv")),
        "--output",
        p(&out),
    ]);
    assert_eq!(code(&o), exit::SUCCESS);
    let rows: Vec<DensityRow> = read_rows(&out).unwrap();
    assert_eq!(rows.len(), summary.samples);
    assert!(rows.iter().all(|r| r.log_density.is_finite()));
    let mean = rows.iter().map(|r| r.log_density).sum::<f64>() / rows.len() as f64;
    assert!(
        (mean + summary.final_nll).abs() <= 1e-6,
        "{mean} vs {}",
        summary.final_nll
    );
    let m = Manifest::read(&dir.path().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.command, "train");
    assert_eq!(m.config.seed, Some(4));
}

#[test]
fn sampling_is_seeded_and_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    train_checkpoint(dir.path());
    let ck = dir.path().join("checkpoint.json");
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = bernflow(&[
            "sample",
            "--checkpoint",
            p(&ck),
            "--count",
            "50",
            "--seed",
            "9",
            "--output",
            p(out),
        ]);
        assert_eq!(code(&o), exit::SUCCESS);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let o = bernflow(&["invert-check", "--checkpoint", p(&ck), "--points", p(&a)]);
    assert_eq!(code(&o), exit::SUCCESS);
    let s: commands::InvertSummary = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s.points, 50);
    assert!(s.max_error <= 1e-8, "{s:?}");
    let o = bernflow(&["invert-check", "--checkpoint", p(&ck), "--seed", "2", "--count", "100"]);
    let s: commands::InvertSummary = serde_json::from_slice(&o.stdout).unwrap();
    assert!(s.max_error <= 1e-8, "{s:?}");
}

#[test]
fn exit_codes_follow_the_contract() {
    assert_eq!(code(&bernflow(&["--help"])), exit::SUCCESS);
    assert_eq!(code(&bernflow(&["--version"])), exit::SUCCESS);
    assert_eq!(code(&bernflow(&["frobnicate"])), exit::USAGE);
    let dir = tempfile::tempdir().unwrap();
    // experiment commands need an explicit seed
    assert_eq!(
        code(&bernflow(&["condition-bench", "--output", p(dir.path())])),
        exit::USAGE
    );
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"degre\": 3 }").unwrap();
    let o = bernflow(&["condition-bench", "--seed", "1", "--config", p(&bad)]);
    assert_eq!(code(&o), exit::USAGE);
    let o = bernflow(&[
        "density",
        "--checkpoint",
        p(&dir.path().join("none.json")),
        "--points",
        p(&bad),
        "--output",
        p(&bad),
    ]);
    assert_eq!(code(&o), exit::USAGE);
    // Adam steps of size lr0 overflow the conditioner weights
    let o = bernflow(&[
        "train",
        "--seed",
        "1",
        "--degree",
        "10",
        "--iterations",
        "30",
        "--train-samples",
        "200",
        "--dataset",
        "moons",
        "--layers",
        "2",
        "--lr0",
        "1e308",
        "--output",
        p(&dir.path().join("diverge")),
    ]);
    assert_eq!(code(&o), exit::NUMERIC, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn dimension_mismatch_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    train_checkpoint(dir.path());
    let pts = dir.path().join("pts.csv");
    fs::write(&pts, "0.1,0.2\n0.3,0.4\n").unwrap();
    let o = bernflow(&[
        "density",
        "--checkpoint",
        p(&dir.path().join("checkpoint.json")),
        "--points",
        p(&pts),
        "--output",
        p(&dir.path().join("x.csv")),
    ]);
    assert_eq!(code(&o), exit::USAGE);
    assert!(String::from_utf8_lossy(&o.stderr).contains("columns"));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = quick(1, &dir.path().join("from_file"));
    let path = dir.path().join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = dir.path().join("flags");
    let o = bernflow(&[
        "condition-bench",
        "--seed",
        "2",
        "--config",
        p(&path),
        "--polynomials",
        "7",
        "--output",
        p(&out),
    ]);
    assert_eq!(code(&o), exit::SUCCESS);
    let m = Manifest::read(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config.polynomials, 7);
    assert_eq!(m.config.seed, Some(2));
    assert_eq!(m.config.grid_points, 20);
    let rows: Vec<ConditionRow> = read_rows(&out.join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 7);
}

#[test]
fn condition_bench_is_seed_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = quick(5, &dir.path().join("a"));
    let b = quick(5, &dir.path().join("b"));
    commands::cmd_condition_bench(&a).unwrap();
    let (_, s) = commands::cmd_condition_bench(&b).unwrap();
    assert_eq!(
        fs::read(a.output.join(RESULTS_FILE)).unwrap(),
        fs::read(b.output.join(RESULTS_FILE)).unwrap()
    );
    assert_eq!(s.value_dominance_rate, 1.0);
    assert_eq!(s.root_dominance_rate, 1.0);
    assert!(s.reference.pass);
}

#[test]
fn degree_sweep_writes_one_row_per_degree() {
    let dir = tempfile::tempdir().unwrap();
    let a = quick(3, &dir.path().join("a"));
    let b = quick(3, &dir.path().join("b"));
    let (_, out) = commands::cmd_degree_sweep(&a).unwrap();
    commands::cmd_degree_sweep(&b).unwrap();
    let rows: Vec<SweepRow> = read_rows(&a.output.join(RESULTS_FILE)).unwrap();
    assert_eq!(rows, out.rows);
    assert_eq!(rows.iter().map(|r| r.degree).collect::<Vec<_>>(), vec![5, 12]);
    assert!(rows.iter().all(|r| !r.nonfinite && r.final_nll < r.initial_nll));
    assert_eq!(
        fs::read(a.output.join(RESULTS_FILE)).unwrap(),
        fs::read(b.output.join(RESULTS_FILE)).unwrap()
    );
    assert!(a.output.join("checkpoint_n12.json").exists());
}

#[test]
fn higher_degree_fits_the_mixture_at_least_as_well() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        degrees: vec![5, 50],
        iterations: 400,
        train_samples: 2000,
        ..quick(8, dir.path())
    };
    let out = bernflow_cli::experiments::degree_sweep(&cfg).unwrap();
    assert!(out.rows[1].final_nll <= out.rows[0].final_nll, "{:?}", out.rows);
}

#[test]
fn error_bound_rows_parse_and_bracket_columns_are_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        degrees: vec![10, 20],
        iterations: 200,
        ..quick(2, dir.path())
    };
    commands::cmd_error_bound(&cfg).unwrap();
    let rows: Vec<ErrorBoundRow> = read_rows(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 2);
    for r in &rows {
        assert!((r.bound_hi - (1.25 / r.n as f64 + 5.5 / (r.n as f64).powf(1.5))).abs() < 1e-15);
        assert!(r.oracle_pass);
        assert!(r.refinement_ok);
        assert_eq!(r.e_n_in_bracket, r.bound_lo < r.e_n && r.e_n < r.bound_hi);
    }
    assert!((rows[0].bound_hi - 0.2989).abs() < 1e-4);
    let bad = ExperimentConfig {
        degrees: vec![3],
        ..cfg
    };
    assert!(commands::cmd_error_bound(&bad).is_err());
}

#[test]
fn robustness_with_zero_noise_reproduces_the_first_clean_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig {
        noise: 0.0,
        ..quick(6, dir.path())
    };
    let (_, rep) = commands::cmd_robustness(&cfg).unwrap();
    assert_eq!(rep.clean_log_likelihoods.len(), 3);
    assert_eq!(rep.noisy_log_likelihood, rep.clean_log_likelihoods[0]);
    assert!(rep.metric.is_some() || rep.degenerate);
    assert!(rep.stability.holds(), "{:?}", rep.stability);
    let rows: Vec<RobustnessRow> = read_rows(&dir.path().join(RESULTS_FILE)).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3].run, "noisy");
}

#[test]
fn robustness_accepts_a_user_csv_in_two_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let table = bernflow::datasets::toy2d_points(bernflow::datasets::Toy2D::Moons, 300, 1);
    let path = dir.path().join("moons.csv");
    bernflow::datasets::write_csv(&path, table.view(), Some(&["x", "y"])).unwrap();
    let cfg = ExperimentConfig {
        dataset: DatasetSpec::Csv {
            path,
            has_header: true,
            delimiter: ',',
        },
        layers: 2,
        hidden: vec![8],
        train_samples: 240,
        test_samples: 60,
        ..quick(7, &dir.path().join("out"))
    };
    let (_, rep) = commands::cmd_robustness(&cfg).unwrap();
    assert!(rep.clean_log_likelihoods.iter().all(|v| v.is_finite()));
    assert!(rep.stability.polynomials > 3);
    assert!(rep.stability.holds(), "{:?}", rep.stability);
}
