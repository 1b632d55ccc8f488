use std::path::PathBuf;
use std::process::ExitCode;

use bernflow::{PriorKind, Scheme};
use bernflow_cli::commands;
use bernflow_cli::config::{DatasetSpec, ExperimentConfig};
use bernflow_cli::{exit, CliResult};
use clap::{Args, Parser, Subcommand};

/// Bernstein-type normalizing flows: training, evaluation and experiments.
#[derive(Parser, Debug)]
#[command(name = "bernflow", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model and write checkpoint.json, history.csv and data.csv.
    Train(ExperimentArgs),
    /// Log-density of every row of a points CSV.
    Density {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        points: PathBuf,
        #[command(flatten)]
        table: TableArgs,
        /// Output CSV with one log_density row per input row.
        #[arg(long)]
        output: PathBuf,
    },
    /// Seeded draws from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Largest forward(inverse(x)) - x over a points CSV or seeded samples.
    InvertCheck {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        points: Option<PathBuf>,
        #[command(flatten)]
        table: TableArgs,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Trained approximation error against the weighted-modulus bound.
    ErrorBound(ExperimentArgs),
    /// Clean-versus-noisy retraining metric and coefficient stability.
    Robustness(ExperimentArgs),
    /// Single-layer training across degrees, flagging non-finite events.
    DegreeSweep(ExperimentArgs),
    /// Bernstein-versus-power condition numbers on random polynomials.
    ConditionBench(ExperimentArgs),
}

#[derive(Args, Debug)]
struct TableArgs {
    /// The first CSV line is a header.
    #[arg(long)]
    has_header: bool,
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Base seed of every random choice in the run.
    #[arg(long)]
    seed: u64,
    /// JSON configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug, Default)]
struct Overrides {
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    degrees: Option<Vec<usize>>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    /// `cumulative` or `reciprocal`.
    #[arg(long, value_parser = parse_scheme)]
    scheme: Option<Scheme>,
    /// `kumaraswamy:A,B`, `uniform` or `squashed_normal`.
    #[arg(long, value_parser = parse_prior)]
    prior: Option<PriorKind>,
    #[arg(long)]
    alternate_order: Option<bool>,
    #[arg(long)]
    random_init: Option<bool>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    test_samples: Option<usize>,
    /// `five_gaussians`, `seven_gaussians`, `uniform`, a toy name
    /// (`moons`, `rings`, `checkerboard`, `pinwheel`) or `csv:PATH`.
    #[arg(long)]
    dataset: Option<String>,
    /// Shorthand for `--dataset csv:PATH`.
    #[arg(long, conflicts_with = "dataset")]
    data: Option<PathBuf>,
    /// Header flag for `--data`.
    #[arg(long)]
    data_has_header: bool,
    #[arg(long)]
    data_delimiter: Option<char>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    perturbations: Option<usize>,
    #[arg(long)]
    polynomials: Option<usize>,
    #[arg(long)]
    perturbed_polynomials: Option<usize>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    grid_points: Option<usize>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    match s {
        "cumulative" | "cumulative_positive" => Ok(Scheme::CumulativePositive),
        "reciprocal" | "reciprocal_square" => Ok(Scheme::ReciprocalSquare),
        _ => Err(format!("unknown scheme {s:?}")),
    }
}

fn parse_prior(s: &str) -> Result<PriorKind, String> {
    match s {
        "uniform" => Ok(PriorKind::UniformUnit),
        "squashed_normal" => Ok(PriorKind::SquashedNormal),
        _ => {
            let ab = s
                .strip_prefix("kumaraswamy:")
                .ok_or_else(|| format!("unknown prior {s:?}"))?;
            let (a, b) = ab.split_once(',').ok_or("expected kumaraswamy:A,B")?;
            let a = a.trim().parse().map_err(|e| format!("{e}"))?;
            let b = b.trim().parse().map_err(|e| format!("{e}"))?;
            Ok(PriorKind::Kumaraswamy { a, b })
        }
    }
}

macro_rules! apply {
    ($cfg:ident, $o:ident; $($field:ident),* $(,)?) => {
        $( if let Some(v) = $o.$field { $cfg.$field = v; } )*
    };
}

impl ExperimentArgs {
    fn resolve(self) -> CliResult<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_json_file(p)?,
            None => ExperimentConfig::default(),
        };
        let o = self.overrides;
        cfg.seed = Some(self.seed);
        if let Some(d) = &o.dataset {
            cfg.dataset = DatasetSpec::parse_flag(d)?;
        }
        if let Some(path) = o.data {
            cfg.dataset = DatasetSpec::Csv {
                path,
                has_header: o.data_has_header,
                delimiter: o.data_delimiter.unwrap_or(','),
            };
        }
        if o.grad_clip.is_some() {
            cfg.grad_clip = o.grad_clip;
        }
        apply!(cfg, o; output, name, degree, degrees, layers, hidden, scheme, prior,
            alternate_order, random_init, seeds, runs, iterations, batch_size, lr0,
            train_samples, test_samples, noise, epsilon, perturbations, polynomials,
            perturbed_polynomials, max_degree, grid_points);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_json(value: &impl serde::Serialize) -> CliResult<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => print_json(&commands::cmd_train(&a.resolve()?)?.summary),
        Command::Density {
            checkpoint,
            points,
            table,
            output,
        } => print_json(&commands::cmd_density(
            &checkpoint,
            &points,
            table.has_header,
            table.delimiter,
            &output,
        )?),
        Command::Sample {
            checkpoint,
            count,
            seed,
            output,
        } => {
            let n = commands::cmd_sample(&checkpoint, count, seed, &output)?;
            print_json(&serde_json::json!({ "samples": n, "output": output }))
        }
        Command::InvertCheck {
            checkpoint,
            points,
            table,
            count,
            seed,
        } => {
            let pts = points.as_deref().map(|p| (p, table.has_header, table.delimiter));
            print_json(&commands::cmd_invert_check(&checkpoint, pts, count, seed)?)
        }
        Command::ErrorBound(a) => print_json(&commands::cmd_error_bound(&a.resolve()?)?.summary),
        Command::Robustness(a) => print_json(&commands::cmd_robustness(&a.resolve()?)?.0.summary),
        Command::DegreeSweep(a) => print_json(&commands::cmd_degree_sweep(&a.resolve()?)?.0.summary),
        Command::ConditionBench(a) => print_json(&commands::cmd_condition_bench(&a.resolve()?)?.0.summary),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
