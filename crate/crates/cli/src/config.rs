//! Experiment configuration: a JSON file whose fields can all be overridden
//! from the command line.

use std::path::{Path, PathBuf};

use bernflow::datasets::{self, Dataset, Toy2D};
use bernflow::flow::Init;
use bernflow::{FlowConfig, MixtureSpec1D, PriorKind, Scheme, TrainConfig};
use ndarray::{s, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// Where the samples come from.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    #[default]
    FiveGaussians,
    SevenGaussians,
    Mixture {
        spec: MixtureSpec1D,
    },
    Toy {
        name: Toy2D,
    },
    /// Uniform on the open unit cube.
    Uniform {
        dimension: usize,
    },
    /// A numeric table; rows are shuffled with the run seed before the
    /// train/test split.
    Csv {
        path: PathBuf,
        #[serde(default)]
        has_header: bool,
        #[serde(default = "default_delimiter")]
        delimiter: char,
    },
}

fn default_delimiter() -> char {
    ','
}

impl DatasetSpec {
    /// Parses the short command-line form: `five_gaussians`, `seven_gaussians`,
    /// `uniform`, a toy name, or `csv:<path>`.
    pub fn parse_flag(s: &str) -> CliResult<Self> {
        Ok(match s {
            "five_gaussians" | "mixture5" => DatasetSpec::FiveGaussians,
            "seven_gaussians" | "mixture7" => DatasetSpec::SevenGaussians,
            "uniform" => DatasetSpec::Uniform { dimension: 1 },
            _ => {
                if let Some(path) = s.strip_prefix("csv:") {
                    DatasetSpec::Csv {
                        path: path.into(),
                        has_header: false,
                        delimiter: ',',
                    }
                } else {
                    DatasetSpec::Toy {
                        name: s.parse().map_err(CliError::from)?,
                    }
                }
            }
        })
    }

    /// Raw rows in their natural units.
    pub fn raw_points(&self, count: usize, seed: u64) -> CliResult<Array2<f64>> {
        if count == 0 {
            return Err(CliError::usage("sample count must be positive"));
        }
        let column = |v: Vec<f64>| Array2::from_shape_vec((v.len(), 1), v).expect("column shape");
        Ok(match self {
            DatasetSpec::FiveGaussians => column(MixtureSpec1D::five_gaussians().sample(count, seed)?),
            DatasetSpec::SevenGaussians => column(MixtureSpec1D::seven_gaussians().sample(count, seed)?),
            DatasetSpec::Mixture { spec } => column(spec.sample(count, seed)?),
            DatasetSpec::Toy { name } => datasets::toy2d_points(*name, count, seed),
            DatasetSpec::Uniform { dimension } => {
                if *dimension == 0 {
                    return Err(CliError::usage("uniform dataset needs a positive dimension"));
                }
                bernflow::PriorSpec::new(PriorKind::UniformUnit, *dimension)?.sample(count, seed)
            }
            DatasetSpec::Csv {
                path,
                has_header,
                delimiter,
            } => {
                let table = load_table(path, *has_header, *delimiter)?;
                shuffled_rows(&table, seed)
            }
        })
    }

    pub fn is_uniform(&self) -> bool {
        matches!(self, DatasetSpec::Uniform { .. })
    }
}

fn load_table(path: &Path, has_header: bool, delimiter: char) -> CliResult<Array2<f64>> {
    if !delimiter.is_ascii() {
        return Err(CliError::usage(format!(
            "delimiter must be a single ASCII character, got {delimiter:?}"
        )));
    }
    Ok(datasets::load_csv(path, has_header, delimiter as u8)?)
}

fn shuffled_rows(table: &Array2<f64>, seed: u64) -> Array2<f64> {
    let mut order: Vec<usize> = (0..table.nrows()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    table.select(Axis(0), &order)
}

/// Train and test sets rescaled with one shared box.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    /// Test rows in the original units.
    pub test: Array2<f64>,
}

/// Draws `train + test` rows (or splits a CSV 80/20 when `test` is zero) and
/// fits the box to their union so test points stay inside the support.
pub fn split(spec: &DatasetSpec, train: usize, test: usize, seed: u64) -> CliResult<Split> {
    let raw = match spec {
        DatasetSpec::Csv { .. } => spec.raw_points(1, seed)?,
        _ => spec.raw_points(train + test, seed)?,
    };
    let n_train = match spec {
        DatasetSpec::Csv { .. } if test == 0 || train + test > raw.nrows() => raw.nrows() * 4 / 5,
        DatasetSpec::Csv { .. } => train,
        _ => train,
    };
    if n_train == 0 || n_train >= raw.nrows() {
        return Err(CliError::usage(format!(
            "cannot split {} rows into a non-empty train and test set",
            raw.nrows()
        )));
    }
    if spec.is_uniform() {
        let train_rows = raw.slice(s![..n_train, ..]).to_owned();
        return Ok(Split {
            train: unit_dataset(train_rows, "uniform on the unit cube"),
            test: raw.slice(s![n_train.., ..]).to_owned(),
        });
    }
    let all = datasets::rescale_to_box(raw.view(), datasets::DEFAULT_MARGIN, describe(spec, seed))?;
    let test_rows = raw.slice(s![n_train.., ..]).to_owned();
    let mut train = all;
    train.points = train.points.slice(s![..n_train, ..]).to_owned();
    Ok(Split { train, test: test_rows })
}

/// A training set drawn from `spec`; uniform data keeps the unit cube as is.
pub fn training_set(spec: &DatasetSpec, count: usize, seed: u64) -> CliResult<Dataset> {
    let raw = spec.raw_points(count, seed)?;
    if spec.is_uniform() {
        return Ok(unit_dataset(raw, "uniform on the unit cube"));
    }
    Ok(datasets::rescale_to_box(
        raw.view(),
        datasets::DEFAULT_MARGIN,
        describe(spec, seed),
    )?)
}

fn unit_dataset(points: Array2<f64>, provenance: &str) -> Dataset {
    let d = points.ncols();
    Dataset {
        points,
        support_box: vec![bernflow::Interval::unit(); d],
        provenance: provenance.into(),
        rescale: bernflow::TargetDiffeo::identity(d),
    }
}

fn describe(spec: &DatasetSpec, seed: u64) -> String {
    match spec {
        DatasetSpec::FiveGaussians => format!("five-component gaussian mixture, seed {seed}"),
        DatasetSpec::SevenGaussians => format!("seven-component gaussian mixture, seed {seed}"),
        DatasetSpec::Mixture { spec } => format!("{}-component gaussian mixture, seed {seed}", spec.means.len()),
        DatasetSpec::Toy { name } => format!("{name:?} stand-in, seed {seed}").to_lowercase(),
        DatasetSpec::Uniform { .. } => "uniform on the unit cube".into(),
        DatasetSpec::Csv { path, .. } => format!("{}, shuffled with seed {seed}", path.display()),
    }
}

/// Every knob of every command. Commands ignore fields they do not use.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Degree of single-model commands (`train`, `robustness`).
    pub degree: usize,
    /// Degrees swept by `error-bound` and `degree-sweep`.
    pub degrees: Vec<usize>,
    pub layers: usize,
    pub hidden: Vec<usize>,
    pub scheme: Scheme,
    pub prior: PriorKind,
    pub alternate_order: bool,
    /// Random initialization from the run seed instead of the identity.
    pub random_init: bool,
    /// Base seed; mandatory for experiment commands.
    pub seed: Option<u64>,
    /// Explicit run seeds; when empty, `seed, seed + 1, ...` for `runs` runs.
    pub seeds: Vec<u64>,
    pub runs: usize,
    pub iterations: usize,
    pub batch_size: usize,
    pub lr0: f64,
    pub grad_clip: Option<f64>,
    pub train_samples: usize,
    pub test_samples: usize,
    pub dataset: DatasetSpec,
    /// Upper end of the uniform training noise in `robustness`.
    pub noise: f64,
    /// Relative coefficient perturbation size.
    pub epsilon: f64,
    pub perturbations: usize,
    /// Random polynomials in `condition-bench`.
    pub polynomials: usize,
    /// How many of them also get the perturbation check.
    pub perturbed_polynomials: usize,
    pub max_degree: usize,
    pub grid_points: usize,
    pub output: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "bernflow".into(),
            degree: 20,
            degrees: (1..=10).map(|k| 10 * k).collect(),
            layers: 1,
            hidden: bernflow::flow::DEFAULT_HIDDEN.to_vec(),
            scheme: Scheme::CumulativePositive,
            prior: PriorKind::default(),
            alternate_order: true,
            random_init: false,
            seed: None,
            seeds: Vec::new(),
            runs: 5,
            iterations: 2000,
            batch_size: 512,
            lr0: 0.01,
            grad_clip: None,
            train_samples: 10_000,
            test_samples: 2_000,
            dataset: DatasetSpec::default(),
            noise: 1e-2,
            epsilon: 1e-2,
            perturbations: 100,
            polynomials: 1000,
            perturbed_polynomials: 100,
            max_degree: 10,
            grid_points: 100,
            output: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("malformed config {}: {e}", path.display())))
    }

    /// The base seed, required by every experiment command.
    pub fn require_seed(&self) -> CliResult<u64> {
        self.seed
            .ok_or_else(|| CliError::usage("--seed is required (or set \"seed\" in the config)"))
    }

    pub fn run_seeds(&self) -> CliResult<Vec<u64>> {
        if !self.seeds.is_empty() {
            return Ok(self.seeds.clone());
        }
        let base = self.require_seed()?;
        if self.runs == 0 {
            return Err(CliError::usage("runs must be positive"));
        }
        Ok((0..self.runs as u64).map(|k| base.wrapping_add(k)).collect())
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: &str| Err(CliError::usage(m));
        if self.degrees.is_empty() {
            return bad("degrees must not be empty");
        }
        if self.degree == 0 || self.degrees.contains(&0) {
            return bad("degrees must be positive");
        }
        if self.layers == 0 {
            return bad("layers must be positive");
        }
        if self.iterations == 0 || self.batch_size == 0 {
            return bad("iterations and batch_size must be positive");
        }
        if self.train_samples == 0 {
            return bad("train_samples must be positive");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be non-negative");
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad("epsilon must be non-negative");
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2");
        }
        if self.output.as_os_str().is_empty() {
            return bad("output path must not be empty");
        }
        self.train_config(0).validate()?;
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            lr0: self.lr0,
            batch_size: self.batch_size,
            max_iters: self.iterations,
            seed,
            grad_clip: self.grad_clip,
            ..TrainConfig::default()
        }
    }

    pub fn flow_config(&self, dimension: usize, degree: usize, seed: u64) -> FlowConfig {
        FlowConfig {
            dimension,
            degree,
            layers: self.layers,
            scheme: self.scheme,
            hidden: self.hidden.clone(),
            prior: self.prior,
            alternate_order: self.alternate_order,
            init: if self.random_init {
                Init::Random { seed }
            } else {
                Init::Identity
            },
            ..FlowConfig::default()
        }
    }
}
