//! The experiments behind each command, as functions from a configuration to
//! a typed report. Nothing here touches the file system.

use bernflow::bernstein::{
    bernstein_approximation, perturb_coefficients, root_condition_number, value_condition_number,
    value_condition_number_floored,
};
use bernflow::flow::FlowModel;
use bernflow::train::{nll, train};
use bernflow::{BernsteinPoly, Dataset, Error, Interval, PowerPoly, PriorKind, TrainHistory};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{self, DatasetSpec, ExperimentConfig};
use crate::{CliError, CliResult};

/// Absolute slack allowed in the Bernstein-versus-power comparisons.
pub const DOMINANCE_SLACK: f64 = 1e-12;

/// Outcome of one training run, kept even when training aborted.
#[derive(Clone, Debug)]
pub struct TrainRun {
    pub model: Option<FlowModel>,
    pub history: TrainHistory,
    pub initial_nll: f64,
    /// Mean NLL over the full training set after the last iteration.
    pub final_nll: f64,
    pub aborted: bool,
    pub error: Option<String>,
}

impl TrainRun {
    pub fn nonfinite_events(&self) -> usize {
        self.history.nonfinite_count()
    }
}

/// Builds and trains a model on `data`; numeric aborts are returned as a run
/// without a model instead of an error.
pub fn train_on(cfg: &ExperimentConfig, data: &Dataset, degree: usize, seed: u64) -> CliResult<TrainRun> {
    let model = cfg
        .flow_config(data.dimension(), degree, seed)
        .build(data.rescale.clone())?;
    let points = data.original_points()?;
    let initial_nll = nll(&model, points.view())?;
    match train(model, points.view(), &cfg.train_config(seed)) {
        Ok((model, history)) => {
            let final_nll = nll(&model, points.view()).unwrap_or(f64::NAN);
            Ok(TrainRun {
                model: Some(model),
                history,
                initial_nll,
                final_nll,
                aborted: false,
                error: None,
            })
        }
        Err(Error::TrainingAborted { history, .. }) => Ok(TrainRun {
            model: None,
            history: *history,
            initial_nll,
            final_nll: f64::NAN,
            aborted: true,
            error: Some("training aborted after consecutive non-finite iterations".into()),
        }),
        Err(e) if e.is_numeric() => Ok(TrainRun {
            model: None,
            history: TrainHistory::default(),
            initial_nll,
            final_nll: f64::NAN,
            aborted: true,
            error: Some(e.to_string()),
        }),
        Err(e) => Err(e.into()),
    }
}

/// `train`: one model on the configured dataset with the base seed.
pub fn run_train(cfg: &ExperimentConfig) -> CliResult<(Dataset, TrainRun)> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let data = config::training_set(&cfg.dataset, cfg.train_samples, seed)?;
    let run = train_on(cfg, &data, cfg.degree, seed)?;
    Ok((data, run))
}

// ---------------------------------------------------------------------------
// Error bound

/// Target map of the error-bound experiment, `f(x) = 1 - (1 - x^2)^5`: the
/// increasing rearrangement from Kumaraswamy(2, 5) onto Uniform(0, 1).
pub fn target_map(x: f64) -> f64 {
    1.0 - (1.0 - x * x).powi(5)
}

fn target_second(x: f64) -> f64 {
    let q = 1.0 - x * x;
    10.0 * q.powi(4) - 80.0 * x * x * q.powi(3)
}

fn target_third(x: f64) -> f64 {
    let q = 1.0 - x * x;
    -240.0 * x * q.powi(3) + 480.0 * x.powi(3) * q * q
}

/// Nodes of the integration grid for the average error.
pub const AVG_ERROR_POINTS: usize = 10_000;
/// Nodes of the refinement used as a self-check.
pub const AVG_ERROR_FINE_POINTS: usize = 100_000;
/// Largest change allowed between the two integration grids.
pub const REFINEMENT_TOL: f64 = 1e-5;
/// Nodes of the grid on which the weighted sup norms are maximized.
pub const SUP_NORM_POINTS: usize = 100_000;

/// `||rho^2 f''||` and `||rho^3 f'''||` with `rho = sqrt(x (1 - x))`, maxima
/// over an equispaced grid.
pub fn weighted_sup_norms(points: usize) -> (f64, f64) {
    let mut s2: f64 = 0.0;
    let mut s3: f64 = 0.0;
    for i in 0..points {
        let x = i as f64 / (points - 1) as f64;
        let r2 = x * (1.0 - x);
        s2 = s2.max(r2 * target_second(x).abs());
        s3 = s3.max(r2 * r2.sqrt() * target_third(x).abs());
    }
    (s2, s3)
}

/// Composite trapezoid of `|f - g|` over `[0, 1]` on `points` nodes.
pub fn average_error(g: impl Fn(f64) -> f64, points: usize) -> f64 {
    let h = 1.0 / (points - 1) as f64;
    let mut sum = 0.0;
    for i in 0..points {
        let x = i as f64 * h;
        let w = if i == 0 || i + 1 == points { 0.5 } else { 1.0 };
        sum += w * (target_map(x) - g(x)).abs();
    }
    sum * h
}

/// Lower end of the bracket stated for `E_n`.
pub fn bound_lo(n: usize) -> f64 {
    let n = n as f64;
    1.25 / n + 5.0 / n.powf(1.5)
}

/// Upper end of the bracket, also the pass threshold for the trained error.
pub fn bound_hi(n: usize) -> f64 {
    let n = n as f64;
    1.25 / n + 5.5 / n.powf(1.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundRow {
    pub n: usize,
    pub seed: u64,
    pub avg_error: f64,
    pub avg_error_fine: f64,
    pub refinement_ok: bool,
    pub bound_lo: f64,
    pub bound_hi: f64,
    pub e_n: f64,
    pub e_n_in_bracket: bool,
    pub oracle_avg_error: f64,
    pub oracle_pass: bool,
    pub pass: bool,
    pub final_nll: f64,
    pub nonfinite_events: usize,
    pub aborted: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBoundReport {
    pub norm_rho2_f2: f64,
    pub norm_rho3_f3: f64,
    pub rows: Vec<ErrorBoundRow>,
}

impl ErrorBoundReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass && r.refinement_ok)
    }

    pub fn all_in_bracket(&self) -> bool {
        self.rows.iter().all(|r| r.e_n_in_bracket)
    }
}

/// Prior of the error-bound experiment; `target_map` is tied to it.
pub const ERROR_BOUND_PRIOR: PriorKind = PriorKind::Kumaraswamy { a: 2.0, b: 5.0 };

/// Trains one single-layer 1-D model per degree from [`ERROR_BOUND_PRIOR`]
/// onto Uniform(0, 1) and measures `int |f - B_n|` for the learned `B_n`.
pub fn error_bound(cfg: &ExperimentConfig) -> CliResult<ErrorBoundReport> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    if let Some(n) = cfg.degrees.iter().find(|n| !(5..=200).contains(*n)) {
        return Err(CliError::usage(format!(
            "error-bound degrees must lie in [5, 200], got {n}"
        )));
    }
    let mut run_cfg = cfg.clone();
    run_cfg.layers = 1;
    run_cfg.prior = ERROR_BOUND_PRIOR;
    let data = config::training_set(&DatasetSpec::Uniform { dimension: 1 }, cfg.train_samples, seed)?;
    let (k2, k3) = weighted_sup_norms(SUP_NORM_POINTS);
    let mut rows = Vec::with_capacity(cfg.degrees.len());
    for &n in &cfg.degrees {
        let nf = n as f64;
        let e_n = k2 / nf + k3 / nf.powf(1.5);
        let (lo, hi) = (bound_lo(n), bound_hi(n));
        let oracle = bernstein_approximation(target_map, n, Interval::unit())?;
        let oracle_err = average_error(|x| oracle.eval_unit(x), AVG_ERROR_POINTS);
        let run = train_on(&run_cfg, &data, n, seed)?;
        let (avg, fine) = match &run.model {
            Some(m) => {
                let b = m.layers()[0].coupling(0, &[])?;
                (
                    average_error(|x| b.eval_unit(x), AVG_ERROR_POINTS),
                    average_error(|x| b.eval_unit(x), AVG_ERROR_FINE_POINTS),
                )
            }
            None => (f64::NAN, f64::NAN),
        };
        rows.push(ErrorBoundRow {
            n,
            seed,
            avg_error: avg,
            avg_error_fine: fine,
            refinement_ok: (avg - fine).abs() < REFINEMENT_TOL,
            bound_lo: lo,
            bound_hi: hi,
            e_n,
            e_n_in_bracket: lo < e_n && e_n < hi,
            oracle_avg_error: oracle_err,
            oracle_pass: oracle_err <= hi,
            pass: avg <= hi,
            final_nll: run.final_nll,
            nonfinite_events: run.nonfinite_events(),
            aborted: run.aborted,
        });
    }
    Ok(ErrorBoundReport {
        norm_rho2_f2: k2,
        norm_rho3_f3: k3,
        rows,
    })
}

// ---------------------------------------------------------------------------
// Degree sweep

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub degree: usize,
    pub seed: u64,
    pub initial_nll: f64,
    pub final_nll: f64,
    pub nonfinite: bool,
    pub nonfinite_events: usize,
    pub aborted: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SweepOutcome {
    pub data: Dataset,
    pub rows: Vec<SweepRow>,
    /// Trained models in row order; `None` where training aborted.
    pub models: Vec<Option<FlowModel>>,
}

/// Trains a single-layer model per degree on one seeded dataset.
pub fn degree_sweep(cfg: &ExperimentConfig) -> CliResult<SweepOutcome> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let mut run_cfg = cfg.clone();
    run_cfg.layers = 1;
    let data = config::training_set(&cfg.dataset, cfg.train_samples, seed)?;
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for &degree in &cfg.degrees {
        let run = train_on(&run_cfg, &data, degree, seed)?;
        let events = run.nonfinite_events();
        rows.push(SweepRow {
            degree,
            seed,
            initial_nll: run.initial_nll,
            final_nll: run.final_nll,
            nonfinite: events > 0 || run.aborted || !run.final_nll.is_finite(),
            nonfinite_events: events,
            aborted: run.aborted,
            error: run.error.clone(),
        });
        models.push(run.model);
    }
    Ok(SweepOutcome { data, rows, models })
}

/// Log-density of a 1-D model on `points` equispaced nodes spanning its
/// support, in the model's data units.
pub fn density_on_grid(model: &FlowModel, points: usize) -> CliResult<(Vec<f64>, Vec<f64>)> {
    if model.dimension() != 1 {
        return Err(CliError::usage("density grids need a one-dimensional model"));
    }
    let unit = model.diffeo().domain_box()[0];
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        // open grid so every node is strictly inside the support
        let t = (i as f64 + 0.5) / points as f64;
        let x = model.diffeo().apply(&[unit.from_unit(t)])?[0];
        xs.push(x);
        ys.push(model.log_density(&[x])?.exp());
    }
    Ok((xs, ys))
}

// ---------------------------------------------------------------------------
// Robustness

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub run: String,
    pub seed: u64,
    pub noise: f64,
    pub test_log_likelihood: f64,
    pub final_train_nll: f64,
    pub nonfinite_events: usize,
    pub aborted: bool,
}

/// Worst observed output change under relative coefficient noise, as a
/// fraction of the `epsilon * C` bound, in both representations.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub polynomials: usize,
    pub perturbations: usize,
    pub grid_points: usize,
    pub epsilon: f64,
    pub checks: usize,
    pub max_ratio_bernstein: f64,
    pub max_ratio_power: f64,
    pub violations_bernstein: usize,
    pub violations_power: usize,
    /// Grid points where `C_Bernstein > C_power + DOMINANCE_SLACK`.
    pub dominance_violations: usize,
}

impl StabilityReport {
    pub fn holds(&self) -> bool {
        self.violations_bernstein == 0 && self.violations_power == 0 && self.dominance_violations == 0
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub rows: Vec<RobustnessRow>,
    pub clean_log_likelihoods: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
    pub noisy_log_likelihood: f64,
    /// `|y - mu| / sigma`; absent when `sigma` is zero.
    pub metric: Option<f64>,
    pub degenerate: bool,
    pub stability: StabilityReport,
}

fn mean_log_likelihood(model: &FlowModel, test: &Array2<f64>) -> CliResult<f64> {
    let ll = model.log_density_batch(test.view())?;
    Ok(ll.iter().sum::<f64>() / ll.len() as f64)
}

/// Clean runs over the run seeds give `(mu, sigma)` of the test
/// log-likelihood; one run on noisy training data (seeded like the first
/// clean run) gives `y`.
pub fn robustness(cfg: &ExperimentConfig) -> CliResult<RobustnessReport> {
    cfg.validate()?;
    let base = cfg.require_seed()?;
    let seeds = cfg.run_seeds()?;
    if seeds.len() < 2 {
        return Err(CliError::usage("robustness needs at least two clean runs"));
    }
    let split = config::split(&cfg.dataset, cfg.train_samples, cfg.test_samples, base)?;
    let mut rows = Vec::new();
    let mut clean = Vec::new();
    let mut finals = Vec::new();
    for &s in &seeds {
        let run = train_on(cfg, &split.train, cfg.degree, s)?;
        let ll = match &run.model {
            Some(m) => mean_log_likelihood(m, &split.test)?,
            None => f64::NAN,
        };
        rows.push(RobustnessRow {
            run: "clean".into(),
            seed: s,
            noise: 0.0,
            test_log_likelihood: ll,
            final_train_nll: run.final_nll,
            nonfinite_events: run.nonfinite_events(),
            aborted: run.aborted,
        });
        clean.push(ll);
        if let Some(m) = run.model {
            finals.push(m);
        }
    }
    let noisy_data = bernflow::datasets::add_uniform_noise(&split.train, cfg.noise, base ^ 0x006e_6f69_7365)?;
    let noisy = train_on(cfg, &noisy_data, cfg.degree, seeds[0])?;
    let y = match &noisy.model {
        Some(m) => mean_log_likelihood(m, &split.test)?,
        None => f64::NAN,
    };
    rows.push(RobustnessRow {
        run: "noisy".into(),
        seed: seeds[0],
        noise: cfg.noise,
        test_log_likelihood: y,
        final_train_nll: noisy.final_nll,
        nonfinite_events: noisy.nonfinite_events(),
        aborted: noisy.aborted,
    });
    let k = clean.len() as f64;
    let mu = clean.iter().sum::<f64>() / k;
    let sigma = (clean.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
    let degenerate = sigma.is_nan() || sigma <= 0.0;
    let metric = if degenerate { None } else { Some((y - mu).abs() / sigma) };
    let mut polys = Vec::new();
    for m in &finals {
        polys.extend(final_layer_polynomials(m, &split.test)?);
    }
    let stability = perturbation_stability(&polys, cfg.epsilon, cfg.perturbations, cfg.grid_points, base)?;
    Ok(RobustnessReport {
        rows,
        clean_log_likelihoods: clean,
        mu,
        sigma,
        noisy_log_likelihood: y,
        metric,
        degenerate,
        stability,
    })
}

/// Test points whose latent prefixes condition the couplings in the
/// stability check.
const STABILITY_PREFIXES: usize = 3;

/// The couplings of the last layer: the unconditioned one, and the
/// conditioned ones at the latent prefixes of the first few test points.
pub fn final_layer_polynomials(model: &FlowModel, test: &Array2<f64>) -> CliResult<Vec<BernsteinPoly>> {
    let last = model.layers().last().expect("models have at least one layer");
    let mut out = vec![last.coupling(0, &[])?];
    if model.dimension() == 1 {
        return Ok(out);
    }
    for row in test.rows().into_iter().take(STABILITY_PREFIXES) {
        let y = model.diffeo().inverse(&row.to_vec())?;
        let (z, _) = last.inverse(&y, model.root_config())?;
        for p in 1..model.dimension() {
            let prefix: Vec<f64> = (0..p).map(|q| z[last.order(q)]).collect();
            out.push(last.coupling(p, &prefix)?);
        }
    }
    Ok(out)
}

/// Rounding allowance on top of `epsilon * C`: a few ulps per term of the two
/// evaluations being subtracted.
fn rounding_allowance(c: f64, terms: usize) -> f64 {
    8.0 * f64::EPSILON * c * terms as f64
}

/// Perturbs each polynomial `perturbations` times in both bases and compares
/// the observed change on a grid with `epsilon * C_phi`.
pub fn perturbation_stability(
    polys: &[BernsteinPoly],
    epsilon: f64,
    perturbations: usize,
    grid_points: usize,
    seed: u64,
) -> CliResult<StabilityReport> {
    let mut rep = StabilityReport {
        polynomials: polys.len(),
        perturbations,
        grid_points,
        epsilon,
        ..StabilityReport::default()
    };
    for (i, b) in polys.iter().enumerate() {
        let power = b.to_power_basis();
        let grid = grid_on(b.domain(), grid_points);
        let mut cb = Vec::with_capacity(grid.len());
        let mut cp = Vec::with_capacity(grid.len());
        for &x in &grid {
            let vb = value_condition_number(b, x)?;
            let vp = value_condition_number(&power, x)?;
            if vb > vp + DOMINANCE_SLACK {
                rep.dominance_violations += 1;
            }
            cb.push(value_condition_number_floored(b, x, epsilon)?);
            cp.push(value_condition_number_floored(&power, x, epsilon)?);
        }
        for k in 0..perturbations {
            let s = mix_seed(seed, i as u64, k as u64);
            let pb = perturb_coefficients(b, epsilon, s)?;
            let pp = perturb_coefficients(&power, epsilon, s)?;
            for (g, &x) in grid.iter().enumerate() {
                let terms = b.degree() + 1;
                let db = (pb.eval(x)? - b.eval(x)?).abs();
                let dp = (pp.eval(x)? - power.eval(x)?).abs();
                let bound_b = epsilon * cb[g];
                let bound_p = epsilon * cp[g];
                rep.checks += 1;
                if db > bound_b + rounding_allowance(cb[g], terms) {
                    rep.violations_bernstein += 1;
                }
                if dp > bound_p + rounding_allowance(cp[g], terms) {
                    rep.violations_power += 1;
                }
                if bound_b > 0.0 {
                    rep.max_ratio_bernstein = rep.max_ratio_bernstein.max(db / bound_b);
                }
                if bound_p > 0.0 {
                    rep.max_ratio_power = rep.max_ratio_power.max(dp / bound_p);
                }
            }
        }
    }
    Ok(rep)
}

fn mix_seed(seed: u64, i: u64, k: u64) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(i.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(k.wrapping_mul(0x94d0_49bb_1331_11eb))
}

/// `points` equispaced nodes including both ends.
pub fn grid_on(d: Interval, points: usize) -> Vec<f64> {
    (0..points)
        .map(|j| d.from_unit(j as f64 / (points - 1) as f64).clamp(d.lo(), d.hi()))
        .collect()
}

// ---------------------------------------------------------------------------
// Condition numbers

/// How a benchmark polynomial was generated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolyKind {
    /// Product of known linear factors; its simple roots are checked.
    FromRoots,
    /// Uniform random Bernstein coefficients.
    RandomCoefficients,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionRow {
    pub index: usize,
    pub kind: PolyKind,
    pub degree: usize,
    pub lo: f64,
    pub hi: f64,
    pub value_checks: usize,
    pub value_violations: usize,
    /// `min (C_power - C_Bernstein)` over the grid.
    pub min_value_margin: f64,
    pub max_value_ratio: f64,
    pub roots_checked: usize,
    pub root_violations: usize,
    pub max_root_ratio: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Quantiles {
    pub min: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

impl Quantiles {
    pub fn of(mut v: Vec<f64>) -> Self {
        if v.is_empty() {
            return Self::default();
        }
        v.sort_by(f64::total_cmp);
        let at = |q: f64| v[((v.len() - 1) as f64 * q).round() as usize];
        Self {
            min: v[0],
            median: at(0.5),
            p90: at(0.9),
            max: v[v.len() - 1],
        }
    }
}

/// The `p(x) = 2x - 1` check on `[0, 1]`: `C_B = 1` and `C_pow = 1 + 2x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub max_dev_bernstein: f64,
    pub max_dev_power: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConditionSummary {
    pub polynomials: usize,
    pub grid_points: usize,
    pub value_checks: usize,
    pub value_dominance_rate: f64,
    pub root_checks: usize,
    pub root_dominance_rate: f64,
    pub value_ratio: Quantiles,
    pub root_ratio: Quantiles,
    pub perturbation: StabilityReport,
    pub reference: ReferenceCheck,
}

#[derive(Clone, Debug)]
pub struct ConditionBench {
    pub rows: Vec<ConditionRow>,
    pub summary: ConditionSummary,
}

/// Minimum gap between generated roots, keeping them simple.
const ROOT_SEPARATION: f64 = 1e-2;
/// Minimum domain width.
const MIN_DOMAIN_WIDTH: f64 = 0.05;

fn random_domain(rng: &mut ChaCha8Rng) -> Interval {
    loop {
        let a: f64 = rng.random();
        let b: f64 = rng.random();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if hi - lo >= MIN_DOMAIN_WIDTH {
            return Interval::new(lo, hi).expect("ordered finite bounds");
        }
    }
}

/// Roots drawn half inside the domain and half anywhere in `[-1, 2]`,
/// resampled until pairwise separated.
fn random_roots(rng: &mut ChaCha8Rng, n: usize, d: Interval) -> Vec<f64> {
    loop {
        let roots: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<bool>() {
                    rng.random_range(d.lo()..d.hi())
                } else {
                    rng.random_range(-1.0..2.0)
                }
            })
            .collect();
        let mut sorted = roots.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).all(|w| w[1] - w[0] >= ROOT_SEPARATION) {
            return roots;
        }
    }
}

fn from_roots(lead: f64, roots: &[f64]) -> Vec<f64> {
    let mut c = vec![lead];
    for r in roots {
        let mut next = vec![0.0; c.len() + 1];
        for (k, ck) in c.iter().enumerate() {
            next[k + 1] += ck;
            next[k] -= r * ck;
        }
        c = next;
    }
    c
}

/// One benchmark polynomial in both representations, with its known simple
/// roots inside `(lo, hi] ∩ (0, 1]`.
pub fn random_polynomial(
    index: usize,
    max_degree: usize,
    seed: u64,
) -> CliResult<(PolyKind, BernsteinPoly, PowerPoly, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index as u64, 0));
    let n = rng.random_range(1..=max_degree);
    let d = random_domain(&mut rng);
    if index.is_multiple_of(2) {
        let roots = random_roots(&mut rng, n, d);
        let lead = rng.random_range(0.5..2.0) * if rng.random::<bool>() { 1.0 } else { -1.0 };
        let power = PowerPoly::new(from_roots(lead, &roots), d)?;
        let bern = BernsteinPoly::from_power_basis(&power, n)?;
        let inside = roots
            .into_iter()
            .filter(|r| *r > d.lo() && *r <= d.hi() && *r > 0.0 && *r <= 1.0)
            .collect();
        Ok((PolyKind::FromRoots, bern, power, inside))
    } else {
        let coeffs = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let bern = BernsteinPoly::new(coeffs, d)?;
        let power = bern.to_power_basis();
        Ok((PolyKind::RandomCoefficients, bern, power, Vec::new()))
    }
}

fn reference_check(grid_points: usize) -> CliResult<ReferenceCheck> {
    let unit = Interval::unit();
    let b = BernsteinPoly::new(vec![-1.0, 1.0], unit)?;
    let p = PowerPoly::new(vec![-1.0, 2.0], unit)?;
    let mut db: f64 = 0.0;
    let mut dp: f64 = 0.0;
    for x in grid_on(unit, grid_points) {
        db = db.max((value_condition_number(&b, x)? - 1.0).abs());
        dp = dp.max((value_condition_number(&p, x)? - (1.0 + 2.0 * x)).abs());
    }
    Ok(ReferenceCheck {
        max_dev_bernstein: db,
        max_dev_power: dp,
        pass: db <= 1e-15 && dp <= 1e-15,
    })
}

/// Monte Carlo over random polynomials of degree at most `max_degree` on
/// random sub-intervals of `[0, 1]`.
pub fn condition_bench(cfg: &ExperimentConfig) -> CliResult<ConditionBench> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    if cfg.polynomials == 0 || cfg.max_degree == 0 {
        return Err(CliError::usage("polynomials and max_degree must be positive"));
    }
    let mut rows = Vec::with_capacity(cfg.polynomials);
    let mut value_ratios = Vec::new();
    let mut root_ratios = Vec::new();
    let mut perturbed = Vec::new();
    for i in 0..cfg.polynomials {
        let (kind, bern, power, roots) = random_polynomial(i, cfg.max_degree, seed)?;
        let mut row = ConditionRow {
            index: i,
            kind,
            degree: bern.degree(),
            lo: bern.domain().lo(),
            hi: bern.domain().hi(),
            value_checks: 0,
            value_violations: 0,
            min_value_margin: f64::INFINITY,
            max_value_ratio: 0.0,
            roots_checked: 0,
            root_violations: 0,
            max_root_ratio: 0.0,
        };
        for x in grid_on(bern.domain(), cfg.grid_points) {
            let cb = value_condition_number(&bern, x)?;
            let cp = value_condition_number(&power, x)?;
            row.value_checks += 1;
            if cb > cp + DOMINANCE_SLACK {
                row.value_violations += 1;
            }
            row.min_value_margin = row.min_value_margin.min(cp - cb);
            if cb > 0.0 {
                row.max_value_ratio = row.max_value_ratio.max(cp / cb);
                value_ratios.push(cp / cb);
            }
        }
        for &r in &roots {
            let cb = root_condition_number(&bern, r, 1)?;
            let cp = root_condition_number(&power, r, 1)?;
            row.roots_checked += 1;
            if cb > cp + DOMINANCE_SLACK {
                row.root_violations += 1;
            }
            row.max_root_ratio = row.max_root_ratio.max(cp / cb);
            root_ratios.push(cp / cb);
        }
        if perturbed.len() < cfg.perturbed_polynomials {
            perturbed.push(bern);
        }
        rows.push(row);
    }
    let value_checks: usize = rows.iter().map(|r| r.value_checks).sum();
    let value_bad: usize = rows.iter().map(|r| r.value_violations).sum();
    let root_checks: usize = rows.iter().map(|r| r.roots_checked).sum();
    let root_bad: usize = rows.iter().map(|r| r.root_violations).sum();
    let rate = |bad: usize, all: usize| if all == 0 { 1.0 } else { 1.0 - bad as f64 / all as f64 };
    let perturbation = perturbation_stability(&perturbed, cfg.epsilon, cfg.perturbations, cfg.grid_points, seed)?;
    let summary = ConditionSummary {
        polynomials: rows.len(),
        grid_points: cfg.grid_points,
        value_checks,
        value_dominance_rate: rate(value_bad, value_checks),
        root_checks,
        root_dominance_rate: rate(root_bad, root_checks),
        value_ratio: Quantiles::of(value_ratios),
        root_ratio: Quantiles::of(root_ratios),
        perturbation,
        reference: reference_check(cfg.grid_points)?,
    };
    Ok(ConditionBench { rows, summary })
}
