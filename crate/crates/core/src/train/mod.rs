//! Maximum-likelihood training with Adam and a step-decayed learning rate.

mod audit;
mod grad;

use std::path::Path;

use ndarray::{ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::FlowModel;

pub use audit::{
    finite_difference_audit, relative_error, AuditReport, EXHAUSTIVE_LIMIT, RELATIVE_FLOOR, SAMPLED_COORDS,
};
pub use grad::{nll, nll_and_gradients};

/// Consecutive non-finite iterations after which training stops.
pub const MAX_CONSECUTIVE_NONFINITE: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps_adam: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Rescale gradients whose Euclidean norm exceeds this value.
    pub grad_clip: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            decay_factor: 0.9,
            decay_every: 50,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            batch_size: 512,
            max_iters: 2000,
            seed: 0,
            grad_clip: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0 must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return bad("decay_factor must lie in (0, 1]");
        }
        if self.decay_every == 0 {
            return bad("decay_every must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("Adam betas must lie in (0, 1)");
        }
        if !(self.eps_adam > 0.0) {
            return bad("eps_adam must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                return bad("grad_clip must be positive");
            }
        }
        Ok(())
    }
}

/// `lr0 * decay_factor^floor(t / decay_every)` for the zero-based iteration `t`.
pub fn learning_rate(cfg: &TrainConfig, t: usize) -> f64 {
    cfg.lr0 * cfg.decay_factor.powi((t / cfg.decay_every) as i32)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    steps: u32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            steps: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.steps
    }
}

/// One bias-corrected Adam update of `params` at learning rate `lr`.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64, cfg: &TrainConfig) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::LengthMismatch {
            what: "Adam state",
            expected: params.len(),
            got: grad.len().min(state.m.len()),
        });
    }
    state.steps += 1;
    let c1 = 1.0 - cfg.beta1.powi(state.steps as i32);
    let c2 = 1.0 - cfg.beta2.powi(state.steps as i32);
    for i in 0..params.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps_adam);
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub nll: f64,
    pub grad_norm: f64,
    pub lr: f64,
    pub nonfinite: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub rows: Vec<HistoryRow>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn nonfinite_count(&self) -> usize {
        self.rows.iter().filter(|r| r.nonfinite).count()
    }

    pub fn final_nll(&self) -> Option<f64> {
        self.rows.last().map(|r| r.nll)
    }

    pub fn write_csv(&self, w: impl std::io::Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(r: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<HistoryRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}

/// Seeded epoch-wise shuffling; the last partial batch of an epoch is kept.
struct BatchSampler {
    order: Vec<usize>,
    at: usize,
    batch: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    fn new(count: usize, batch: usize, seed: u64) -> Self {
        let mut s = Self {
            order: (0..count).collect(),
            at: count,
            batch,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        s.reshuffle();
        s
    }

    fn reshuffle(&mut self) {
        self.order.shuffle(&mut self.rng);
        self.at = 0;
    }

    fn next(&mut self) -> &[usize] {
        if self.at >= self.order.len() {
            self.reshuffle();
        }
        let start = self.at;
        self.at = (start + self.batch).min(self.order.len());
        &self.order[start..self.at]
    }
}

/// Trains `model` on rows of `data` (in the model's data units).
///
/// Iterations whose loss or gradient is not finite are recorded and skipped;
/// [`MAX_CONSECUTIVE_NONFINITE`] of them in a row abort with the history so
/// far.
pub fn train(mut model: FlowModel, data: ArrayView2<f64>, cfg: &TrainConfig) -> Result<(FlowModel, TrainHistory)> {
    cfg.validate()?;
    if data.nrows() == 0 {
        return Err(Error::Config("training data is empty".into()));
    }
    let mut sampler = BatchSampler::new(data.nrows(), cfg.batch_size, cfg.seed);
    let mut params = model.params_flat();
    let mut adam = AdamState::new(params.len());
    let mut history = TrainHistory::default();
    let mut consecutive = 0;
    for it in 0..cfg.max_iters {
        let lr = learning_rate(cfg, it);
        let batch = data.select(Axis(0), sampler.next());
        let (loss, mut g) = match nll_and_gradients(&model, batch.view()) {
            Ok(v) => v,
            Err(e) if e.is_numeric() => (f64::NAN, vec![f64::NAN; params.len()]),
            Err(e) => return Err(e),
        };
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let finite = loss.is_finite() && norm.is_finite();
        history.rows.push(HistoryRow {
            iteration: it,
            nll: loss,
            grad_norm: norm,
            lr,
            nonfinite: !finite,
        });
        if !finite {
            consecutive += 1;
            if consecutive >= MAX_CONSECUTIVE_NONFINITE {
                return Err(Error::TrainingAborted {
                    iteration: it,
                    consecutive,
                    history: Box::new(history),
                });
            }
            continue;
        }
        consecutive = 0;
        if let Some(c) = cfg.grad_clip {
            if norm > c {
                for v in &mut g {
                    *v *= c / norm;
                }
            }
        }
        adam_step(&mut params, &g, &mut adam, lr, cfg)?;
        model.set_params_flat(&params)?;
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::Interval;
    use crate::flow::{FlowConfig, Init, PriorKind, TargetDiffeo};
    use approx::assert_abs_diff_eq;
    use ndarray::{concatenate, Array2};
    use rand::{Rng, SeedableRng};

    fn uniform_data(count: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((count, d), || rng.random_range(0.02..0.98))
    }

    fn random_model(d: usize, n: usize, layers: usize, seed: u64) -> FlowModel {
        FlowConfig {
            dimension: d,
            degree: n,
            layers,
            hidden: vec![8, 8],
            alternate_order: true,
            init: Init::Random { seed },
            ..FlowConfig::default()
        }
        .build(TargetDiffeo::identity(d))
        .unwrap()
    }

    #[test]
    fn learning_rate_schedule() {
        let cfg = TrainConfig::default();
        assert_eq!(learning_rate(&cfg, 0), 0.01);
        assert_eq!(learning_rate(&cfg, 49), 0.01);
        assert_abs_diff_eq!(learning_rate(&cfg, 50), 0.009, epsilon = 1e-15);
        assert_abs_diff_eq!(learning_rate(&cfg, 100), 0.0081, epsilon = 1e-15);
    }

    #[test]
    fn adam_examples() {
        let cfg = TrainConfig::default();
        let mut p = vec![1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01, &cfg).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut s = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.5], &mut s, 0.01, &cfg).unwrap();
        assert_abs_diff_eq!(p[0], 1.0 - 0.01 * 3.0 / (3.0 + 1e-8), epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], -2.0 + 0.01, epsilon = 1e-9);
        assert!(adam_step(&mut p, &[1.0], &mut s, 0.01, &cfg).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                lr0: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                decay_factor: 1.5,
                ..TrainConfig::default()
            },
            TrainConfig {
                beta2: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                grad_clip: Some(-1.0),
                ..TrainConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn identity_model_has_zero_loss() {
        let m = FlowConfig {
            dimension: 2,
            degree: 7,
            layers: 2,
            prior: PriorKind::UniformUnit,
            ..FlowConfig::default()
        }
        .build(TargetDiffeo::identity(2))
        .unwrap();
        let data = uniform_data(64, 2, 1);
        let (loss, g) = nll_and_gradients(&m, data.view()).unwrap();
        assert_abs_diff_eq!(loss, 0.0, epsilon = 1e-12);
        assert!(g.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(nll(&m, data.view()).unwrap(), loss, epsilon = 1e-12);
    }

    #[test]
    fn loss_matches_log_density() {
        let m = random_model(3, 9, 2, 4);
        let data = uniform_data(40, 3, 2);
        let (loss, _) = nll_and_gradients(&m, data.view()).unwrap();
        assert_abs_diff_eq!(loss, nll(&m, data.view()).unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn one_dimensional_gradients_match_finite_differences() {
        let m = random_model(1, 12, 1, 9);
        let data = uniform_data(50, 1, 3);
        let report = finite_difference_audit(&m, data.view(), 1e-5).unwrap();
        assert_eq!(report.checked, 11);
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn conditioned_gradients_match_finite_differences() {
        let m = random_model(2, 10, 2, 12);
        let data = uniform_data(30, 2, 5);
        let report = finite_difference_audit(&m, data.view(), 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
        assert_eq!(report.per_group.len(), 2);
    }

    #[test]
    fn gradients_through_an_affine_target() {
        let h = TargetDiffeo::affine_from_unit(vec![
            Interval::new(-3.0, 4.0).unwrap(),
            Interval::new(0.0, 0.5).unwrap(),
        ]);
        let m = FlowConfig {
            dimension: 2,
            degree: 6,
            layers: 2,
            hidden: vec![8, 8],
            scheme: crate::monotone::Scheme::ReciprocalSquare,
            init: Init::Random { seed: 5 },
            ..FlowConfig::default()
        }
        .build(h.clone())
        .unwrap();
        let y = uniform_data(20, 2, 8);
        let x = Array2::from_shape_fn(y.dim(), |(i, j)| h.apply(&y.row(i).to_vec()).unwrap()[j]);
        let report = finite_difference_audit(&m, x.view(), 1e-5).unwrap();
        assert!(report.max_relative_error <= 1e-4, "{report:?}");
    }

    #[test]
    fn duplicated_batch_gives_identical_results() {
        let m = random_model(2, 8, 2, 3);
        let data = uniform_data(37, 2, 4);
        let twice = concatenate(Axis(0), &[data.view(), data.view()]).unwrap();
        let (a, ga) = nll_and_gradients(&m, data.view()).unwrap();
        let (b, gb) = nll_and_gradients(&m, twice.view()).unwrap();
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let m = random_model(1, 10, 1, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let data = Array2::from_shape_simple_fn((300, 1), || rng.random::<f64>().powi(3).clamp(0.001, 0.999));
        let cfg = TrainConfig {
            max_iters: 150,
            batch_size: 64,
            seed: 5,
            ..TrainConfig::default()
        };
        let (m1, h1) = train(m.clone(), data.view(), &cfg).unwrap();
        let (m2, h2) = train(m.clone(), data.view(), &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.len(), 150);
        assert_eq!(h1.nonfinite_count(), 0);
        assert!(nll(&m1, data.view()).unwrap() < nll(&m, data.view()).unwrap() - 0.1);
    }

    #[test]
    fn identity_start_on_uniform_data_stays_put() {
        let m = FlowConfig {
            degree: 10,
            prior: PriorKind::UniformUnit,
            ..FlowConfig::default()
        }
        .build(TargetDiffeo::identity(1))
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_simple_fn((20_000, 1), || rng.random::<f64>());
        let cfg = TrainConfig {
            max_iters: 100,
            seed: 1,
            ..TrainConfig::default()
        };
        let (trained, hist) = train(m.clone(), data.view(), &cfg).unwrap();
        assert!(hist.rows.iter().all(|r| r.nll.abs() < 1e-2));
        let before = m.layers()[0].coupling(0, &[]).unwrap();
        let after = trained.layers()[0].coupling(0, &[]).unwrap();
        let drift = before
            .coeffs()
            .iter()
            .zip(after.coeffs())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(drift <= 1e-2, "coefficient drift {drift}");
    }

    #[test]
    fn history_csv_round_trip() {
        let h = TrainHistory {
            rows: vec![
                HistoryRow {
                    iteration: 0,
                    nll: 1.25,
                    grad_norm: 0.1 + 0.2,
                    lr: 0.01,
                    nonfinite: false,
                },
                HistoryRow {
                    iteration: 1,
                    nll: f64::NAN,
                    grad_norm: f64::NAN,
                    lr: 0.01,
                    nonfinite: true,
                },
            ],
        };
        let mut buf = Vec::new();
        h.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("iteration,nll,grad_norm,lr,nonfinite"));
        let back = TrainHistory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.rows[0], h.rows[0]);
        assert!(back.rows[1].nll.is_nan() && back.rows[1].nonfinite);
    }

    #[test]
    fn aborts_after_repeated_nonfinite_losses() {
        // a point on the boundary sends the prior log-density to -inf
        let m = FlowConfig::default().build(TargetDiffeo::identity(1)).unwrap();
        let data = Array2::from_elem((4, 1), 0.0);
        let err = train(
            m,
            data.view(),
            &TrainConfig {
                max_iters: 10,
                ..TrainConfig::default()
            },
        )
        .unwrap_err();
        match err {
            Error::TrainingAborted { iteration, history, .. } => {
                assert_eq!(iteration, 2);
                assert_eq!(history.nonfinite_count(), 3);
            }
            other => panic!("unexpected {other}"),
        }
    }
}
