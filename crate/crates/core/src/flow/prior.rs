use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base distribution on the open unit interval, applied i.i.d. per dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum PriorKind {
    Kumaraswamy {
        a: f64,
        b: f64,
    },
    UniformUnit,
    /// A standard normal pushed through `(1 + tanh(s)) / 2`.
    SquashedNormal,
}

impl Default for PriorKind {
    fn default() -> Self {
        PriorKind::Kumaraswamy { a: 2.0, b: 5.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub kind: PriorKind,
    pub dimension: usize,
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl PriorSpec {
    pub fn new(kind: PriorKind, dimension: usize) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Config("prior dimension must be positive".into()));
        }
        if let PriorKind::Kumaraswamy { a, b } = kind {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::Config(format!(
                    "Kumaraswamy parameters must be positive, got ({a}, {b})"
                )));
            }
        }
        Ok(Self { kind, dimension })
    }

    /// Log density of one coordinate; `-inf` on or outside the boundary.
    pub fn log_density_1d(&self, z: f64) -> f64 {
        if !(z > 0.0 && z < 1.0) {
            return f64::NEG_INFINITY;
        }
        match self.kind {
            PriorKind::UniformUnit => 0.0,
            PriorKind::Kumaraswamy { a, b } => {
                let za = z.powf(a);
                (a * b).ln() + (a - 1.0) * z.ln() + (b - 1.0) * (-za).ln_1p()
            }
            PriorKind::SquashedNormal => {
                let s = (2.0 * z - 1.0).atanh();
                -0.5 * s * s - LN_SQRT_2PI - (2.0 * z * (1.0 - z)).ln()
            }
        }
    }

    /// Derivative of [`Self::log_density_1d`]; only meaningful inside (0, 1).
    pub fn grad_log_density_1d(&self, z: f64) -> f64 {
        match self.kind {
            PriorKind::UniformUnit => 0.0,
            PriorKind::Kumaraswamy { a, b } => {
                let za = z.powf(a);
                (a - 1.0) / z - (b - 1.0) * a * za / (z * (1.0 - za))
            }
            PriorKind::SquashedNormal => {
                let s = (2.0 * z - 1.0).atanh();
                let ds = 1.0 / (2.0 * z * (1.0 - z));
                -s * ds - (1.0 - 2.0 * z) / (z * (1.0 - z))
            }
        }
    }

    pub fn log_density(&self, z: &[f64]) -> f64 {
        z.iter().map(|v| self.log_density_1d(*v)).sum()
    }

    pub fn cdf_1d(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        match self.kind {
            PriorKind::UniformUnit => z,
            PriorKind::Kumaraswamy { a, b } => 1.0 - (1.0 - z.powf(a)).powf(b),
            PriorKind::SquashedNormal => {
                if z == 0.0 || z == 1.0 {
                    return z;
                }
                standard_normal_cdf((2.0 * z - 1.0).atanh())
            }
        }
    }

    /// Maps a uniform draw to a prior draw (only used for the closed-form
    /// inverse CDFs; the squashed normal samples its normal directly).
    pub fn inverse_cdf_1d(&self, u: f64) -> Option<f64> {
        match self.kind {
            PriorKind::UniformUnit => Some(u),
            PriorKind::Kumaraswamy { a, b } => {
                // (1 - (1 - u)^(1/b))^(1/a), written to keep precision near 0
                let inner = -((-u).ln_1p() / b).exp_m1();
                Some(inner.powf(1.0 / a))
            }
            PriorKind::SquashedNormal => None,
        }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((count, self.dimension), || self.sample_one(&mut rng))
    }

    pub(crate) fn sample_one(&self, rng: &mut impl Rng) -> f64 {
        match self.kind {
            PriorKind::SquashedNormal => {
                let s: f64 = rng.sample(StandardNormal);
                0.5 * (1.0 + s.tanh())
            }
            _ => {
                let u: f64 = rng.sample(Open01);
                self.inverse_cdf_1d(u).expect("closed-form inverse cdf")
            }
        }
    }
}

pub(crate) fn standard_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
