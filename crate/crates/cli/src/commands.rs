//! Command bodies: run an experiment, write its files, return a summary.

use std::path::Path;
use std::time::Instant;

use bernflow::datasets::{load_csv, write_csv};
use bernflow::FlowModel;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiments::{self, RobustnessReport};
use crate::output::{prepare_dir, write_json, write_rows, Manifest, RESULTS_FILE};
use crate::{CliError, CliResult};

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const DATA_FILE: &str = "data.csv";
pub const SUMMARY_FILE: &str = "summary.json";

fn timed<T>(m: &mut Manifest, label: &str, f: impl FnOnce() -> CliResult<T>) -> CliResult<T> {
    let start = Instant::now();
    let out = f()?;
    m.timings_seconds.insert(label.into(), start.elapsed().as_secs_f64());
    Ok(out)
}

fn finish(mut m: Manifest, dir: &Path, outputs: &[&str], summary: impl Serialize) -> CliResult<Manifest> {
    m.outputs = outputs.iter().map(|s| s.to_string()).collect();
    m.summary = serde_json::to_value(summary)?;
    m.write(dir)?;
    Ok(m)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub dataset: String,
    pub samples: usize,
    pub parameters: usize,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub nonfinite_events: usize,
}

/// Trains one model; writes the checkpoint, its history, the training points
/// in data units and the manifest.
pub fn cmd_train(cfg: &ExperimentConfig) -> CliResult<Manifest> {
    prepare_dir(&cfg.output)?;
    let mut m = Manifest::new("train", cfg);
    let (data, run) = timed(&mut m, "train", || experiments::run_train(cfg))?;
    let model = match (run.model, run.error) {
        (Some(model), _) => model,
        (None, err) => {
            run.history.save(cfg.output.join(HISTORY_FILE))?;
            return Err(CliError::Numeric(err.unwrap_or_else(|| "training failed".into())));
        }
    };
    model.save(cfg.output.join(CHECKPOINT_FILE))?;
    run.history.save(cfg.output.join(HISTORY_FILE))?;
    data.write_csv(cfg.output.join(DATA_FILE))?;
    let summary = TrainSummary {
        dataset: data.provenance.clone(),
        samples: data.len(),
        parameters: model.param_count(),
        initial_nll: run.initial_nll,
        final_nll: run.final_nll,
        nonfinite_events: run.history.nonfinite_count(),
    };
    finish(m, &cfg.output, &[CHECKPOINT_FILE, HISTORY_FILE, DATA_FILE], summary)
}

pub fn load_checkpoint(path: &Path) -> CliResult<FlowModel> {
    if !path.exists() {
        return Err(CliError::usage(format!("checkpoint {} does not exist", path.display())));
    }
    FlowModel::load(path).map_err(|e| match e {
        bernflow::Error::Json(j) => CliError::usage(format!("malformed checkpoint {}: {j}", path.display())),
        other => other.into(),
    })
}

/// Points table whose width must match the model.
pub fn load_points(path: &Path, has_header: bool, delimiter: char, dimension: usize) -> CliResult<Array2<f64>> {
    if !delimiter.is_ascii() {
        return Err(CliError::usage(format!("delimiter must be ASCII, got {delimiter:?}")));
    }
    let pts = load_csv(path, has_header, delimiter as u8)?;
    if pts.ncols() != dimension {
        return Err(CliError::usage(format!(
            "points have {} columns but the checkpoint models dimension {dimension}",
            pts.ncols()
        )));
    }
    Ok(pts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityRow {
    pub log_density: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    pub points: usize,
    pub outside_support: usize,
    /// Mean over the points inside the support.
    pub mean_log_density: f64,
}

/// Log-density of every row of a points CSV, one output row per input row.
pub fn cmd_density(
    checkpoint: &Path,
    points: &Path,
    has_header: bool,
    delimiter: char,
    out: &Path,
) -> CliResult<DensitySummary> {
    let model = load_checkpoint(checkpoint)?;
    let pts = load_points(points, has_header, delimiter, model.dimension())?;
    let ll = model.log_density_batch(pts.view())?;
    let rows: Vec<DensityRow> = ll.iter().map(|v| DensityRow { log_density: *v }).collect();
    write_rows(out, &rows)?;
    let finite: Vec<f64> = ll.iter().copied().filter(|v| v.is_finite()).collect();
    Ok(DensitySummary {
        points: ll.len(),
        outside_support: ll.len() - finite.len(),
        mean_log_density: finite.iter().sum::<f64>() / finite.len().max(1) as f64,
    })
}

/// `count` seeded draws from a checkpoint.
pub fn cmd_sample(checkpoint: &Path, count: usize, seed: u64, out: &Path) -> CliResult<usize> {
    if count == 0 {
        return Err(CliError::usage("count must be positive"));
    }
    let model = load_checkpoint(checkpoint)?;
    let xs = model.sample(count, seed)?;
    write_csv(out, xs.view(), None)?;
    Ok(count)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvertSummary {
    pub points: usize,
    pub outside_support: usize,
    /// `max |forward(inverse(x)) - x|` over the points inside the support.
    pub max_error: f64,
}

/// Round trip through the inverse and forward maps over `points`.
pub fn invert_check(model: &FlowModel, points: &Array2<f64>) -> CliResult<InvertSummary> {
    let mut max_error: f64 = 0.0;
    let mut outside = 0;
    for row in points.rows() {
        let x = row.to_vec();
        let z = match model.inverse(&x) {
            Ok((z, _)) => z,
            Err(e) if is_support_error(&e) => {
                outside += 1;
                continue;
            }
            Err(e) => return Err(CliError::Core(e)),
        };
        let (back, _) = model.forward(&z)?;
        for (a, b) in back.iter().zip(&x) {
            max_error = max_error.max((a - b).abs());
        }
    }
    Ok(InvertSummary {
        points: points.nrows(),
        outside_support: outside,
        max_error,
    })
}

fn is_support_error(e: &bernflow::Error) -> bool {
    use bernflow::Error as E;
    match e {
        E::OutsideDomain { .. } | E::OutOfRange { .. } => true,
        E::InDimension { source, .. } | E::InSample { source, .. } => is_support_error(source),
        _ => false,
    }
}

/// Round trip over a points CSV, or over seeded model samples when no CSV is
/// given.
pub fn cmd_invert_check(
    checkpoint: &Path,
    points: Option<(&Path, bool, char)>,
    count: usize,
    seed: Option<u64>,
) -> CliResult<InvertSummary> {
    let model = load_checkpoint(checkpoint)?;
    let pts = match points {
        Some((p, header, delim)) => load_points(p, header, delim, model.dimension())?,
        None => {
            let seed = seed.ok_or_else(|| CliError::usage("invert-check needs --points or --seed"))?;
            model.sample(count, seed)?
        }
    };
    invert_check(&model, &pts)
}

pub fn cmd_error_bound(cfg: &ExperimentConfig) -> CliResult<Manifest> {
    prepare_dir(&cfg.output)?;
    let mut m = Manifest::new("error-bound", cfg);
    let rep = timed(&mut m, "total", || experiments::error_bound(cfg))?;
    write_rows(&cfg.output.join(RESULTS_FILE), &rep.rows)?;
    let summary = serde_json::json!({
        "norm_rho2_f2": rep.norm_rho2_f2,
        "norm_rho3_f3": rep.norm_rho3_f3,
        "all_pass": rep.all_pass(),
        "e_n_all_in_bracket": rep.all_in_bracket(),
    });
    finish(m, &cfg.output, &[RESULTS_FILE], summary)
}

pub fn cmd_degree_sweep(cfg: &ExperimentConfig) -> CliResult<(Manifest, experiments::SweepOutcome)> {
    prepare_dir(&cfg.output)?;
    let mut m = Manifest::new("degree-sweep", cfg);
    let out = timed(&mut m, "total", || experiments::degree_sweep(cfg))?;
    write_rows(&cfg.output.join(RESULTS_FILE), &out.rows)?;
    let mut files = vec![RESULTS_FILE.to_string()];
    for (row, model) in out.rows.iter().zip(&out.models) {
        if let Some(model) = model {
            let name = format!("checkpoint_n{}.json", row.degree);
            model.save(cfg.output.join(&name))?;
            files.push(name);
        }
    }
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    let summary = serde_json::json!({
        "dataset": out.data.provenance,
        "any_nonfinite": out.rows.iter().any(|r| r.nonfinite),
    });
    let m = finish(m, &cfg.output, &refs, summary)?;
    Ok((m, out))
}

pub fn cmd_robustness(cfg: &ExperimentConfig) -> CliResult<(Manifest, RobustnessReport)> {
    prepare_dir(&cfg.output)?;
    let mut m = Manifest::new("robustness", cfg);
    let rep = timed(&mut m, "total", || experiments::robustness(cfg))?;
    write_rows(&cfg.output.join(RESULTS_FILE), &rep.rows)?;
    write_json(&cfg.output.join(SUMMARY_FILE), &rep)?;
    let m = finish(m, &cfg.output, &[RESULTS_FILE, SUMMARY_FILE], &rep)?;
    Ok((m, rep))
}

pub fn cmd_condition_bench(cfg: &ExperimentConfig) -> CliResult<(Manifest, experiments::ConditionSummary)> {
    prepare_dir(&cfg.output)?;
    let mut m = Manifest::new("condition-bench", cfg);
    let bench = timed(&mut m, "total", || experiments::condition_bench(cfg))?;
    write_rows(&cfg.output.join(RESULTS_FILE), &bench.rows)?;
    write_json(&cfg.output.join(SUMMARY_FILE), &bench.summary)?;
    let m = finish(m, &cfg.output, &[RESULTS_FILE, SUMMARY_FILE], &bench.summary)?;
    Ok((m, bench.summary))
}
