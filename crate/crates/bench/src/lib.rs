//! Shared fixtures for the benchmarks.

use bernflow::flow::Init;
use bernflow::{BernsteinPoly, FlowConfig, FlowModel, TargetDiffeo};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A strictly increasing degree-`n` polynomial on the unit interval.
pub fn increasing_poly(n: usize, seed: u64) -> BernsteinPoly {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    let mut c: Vec<f64> = (0..=n)
        .map(|_| {
            acc += rng.random_range(0.1..1.0);
            acc
        })
        .collect();
    let top = *c.last().expect("n + 1 coefficients");
    for v in &mut c {
        *v /= top;
    }
    BernsteinPoly::on_unit(c).expect("finite coefficients")
}

/// A randomly initialized model on the unit cube.
pub fn random_model(d: usize, n: usize, layers: usize, seed: u64) -> FlowModel {
    FlowConfig {
        dimension: d,
        degree: n,
        layers,
        alternate_order: true,
        init: Init::Random { seed },
        ..FlowConfig::default()
    }
    .build(TargetDiffeo::identity(d))
    .expect("valid configuration")
}

/// Uniform points strictly inside the unit cube.
pub fn unit_points(count: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_simple_fn((count, d), || rng.random_range(0.01..0.99))
}
