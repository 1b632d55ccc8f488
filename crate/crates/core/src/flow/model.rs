//! The full flow: prior on the unit cube, a stack of layers and a fixed
//! diffeomorphism onto the data region.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conditioner::DEFAULT_HIDDEN;
use super::diffeo::TargetDiffeo;
use super::layer::{DimSource, FlowLayer, LayerShape};
use super::prior::{PriorKind, PriorSpec};
use crate::bernstein::Interval;
use crate::error::{Error, Result};
use crate::monotone::Scheme;
use crate::rootfind::RootConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowModel {
    prior: PriorSpec,
    diffeo: TargetDiffeo,
    layers: Vec<FlowLayer>,
    #[serde(default)]
    root: RootConfig,
}

/// Parameter family, used to break gradient audits down.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ParamKind {
    FreeCoefficients,
    NetWeights,
}

/// A contiguous block of the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub layer: usize,
    pub position: usize,
    pub kind: ParamKind,
    pub offset: usize,
    pub len: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Init {
    /// Every coupling equally spaced; the flow is the identity up to `h`.
    #[default]
    Identity,
    Random {
        seed: u64,
    },
}

/// Architecture description used to build a fresh model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub dimension: usize,
    pub degree: usize,
    pub layers: usize,
    pub scheme: Scheme,
    pub hidden: Vec<usize>,
    pub prior: PriorKind,
    /// Reverse the autoregressive order on every other layer.
    pub alternate_order: bool,
    pub init: Init,
    pub root: RootConfig,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dimension: 1,
            degree: 20,
            layers: 1,
            scheme: Scheme::CumulativePositive,
            hidden: DEFAULT_HIDDEN.to_vec(),
            prior: PriorKind::default(),
            alternate_order: false,
            init: Init::Identity,
            root: RootConfig::default(),
        }
    }
}

impl FlowConfig {
    /// Builds a model whose last layer maps onto the domain box of `diffeo`.
    pub fn build(&self, diffeo: TargetDiffeo) -> Result<FlowModel> {
        let d = self.dimension;
        if diffeo.dimension() != d {
            return Err(Error::Config(format!(
                "diffeomorphism dimension {} does not match model dimension {d}",
                diffeo.dimension()
            )));
        }
        let prior = PriorSpec::new(self.prior, d)?;
        let mut rng = match self.init {
            Init::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
            Init::Identity => None,
        };
        let out_box = diffeo.domain_box();
        let mut layers = Vec::with_capacity(self.layers);
        for i in 0..self.layers {
            let shape = LayerShape {
                degree: self.degree,
                scheme: self.scheme,
                ranges: if i + 1 == self.layers {
                    out_box.clone()
                } else {
                    vec![Interval::unit(); d]
                },
                reverse: self.alternate_order && i % 2 == 1,
                hidden: self.hidden.clone(),
            };
            layers.push(match rng.as_mut() {
                Some(r) => FlowLayer::random(&shape, r)?,
                None => FlowLayer::identity(&shape)?,
            });
        }
        FlowModel::new(prior, layers, diffeo, self.root)
    }
}

/// Errors that mean "this point is not in the support" rather than a failure.
fn is_outside(e: &Error) -> bool {
    match e {
        Error::OutsideDomain { .. } | Error::OutOfRange { .. } => true,
        Error::InDimension { source, .. } => is_outside(source),
        _ => false,
    }
}

impl FlowModel {
    pub fn new(prior: PriorSpec, layers: Vec<FlowLayer>, diffeo: TargetDiffeo, root: RootConfig) -> Result<Self> {
        let m = Self {
            prior,
            diffeo,
            layers,
            root,
        };
        m.validate()?;
        Ok(m)
    }

    /// Checks dimensions and that the layer boxes chain up.
    pub fn validate(&self) -> Result<()> {
        let d = self.prior.dimension;
        PriorSpec::new(self.prior.kind, d)?;
        self.diffeo.validate()?;
        self.root.validate()?;
        if self.diffeo.dimension() != d {
            return Err(Error::Config("prior and diffeomorphism dimensions differ".into()));
        }
        let last = self.layers.len().saturating_sub(1);
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if l.dimension() != d {
                return Err(Error::Config(format!(
                    "layer {i} has dimension {}, expected {d}",
                    l.dimension()
                )));
            }
            let expected = if i == last {
                self.diffeo.domain_box()
            } else {
                vec![Interval::unit(); d]
            };
            if l.ranges() != expected.as_slice() {
                return Err(Error::Config(format!(
                    "layer {i} output box does not match the next stage"
                )));
            }
        }
        if self.layers.is_empty() && self.diffeo.domain_box() != vec![Interval::unit(); d] {
            return Err(Error::Config(
                "without layers the diffeomorphism must start on the unit cube".into(),
            ));
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.prior.dimension
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn diffeo(&self) -> &TargetDiffeo {
        &self.diffeo
    }

    pub fn layers(&self) -> &[FlowLayer] {
        &self.layers
    }

    pub fn root_config(&self) -> &RootConfig {
        &self.root
    }

    /// Same layers and prior with a different target map.
    pub fn with_diffeo(&self, diffeo: TargetDiffeo) -> Result<Self> {
        Self::new(self.prior, self.layers.clone(), diffeo, self.root)
    }

    /// `x = h(f(z))` and `log |det J|` of that map at `z`.
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut y = z.to_vec();
        let mut logdet = 0.0;
        for l in &self.layers {
            let (next, ld) = l.forward(&y)?;
            y = next;
            logdet += ld;
        }
        let x = self.diffeo.apply(&y)?;
        Ok((x, logdet + self.diffeo.log_jacobian(&y)))
    }

    /// `z = f^{-1}(h^{-1}(x))` and the log-determinant of this inverse map,
    /// which is minus that of [`Self::forward`] at `z`.
    pub fn inverse(&self, x: &[f64]) -> Result<(Vec<f64>, f64)> {
        let mut y = self.diffeo.inverse(x)?;
        let mut logdet = -self.diffeo.log_jacobian(&y);
        for l in self.layers.iter().rev() {
            let (prev, ld) = l.inverse(&y, &self.root)?;
            y = prev;
            logdet -= ld;
        }
        Ok((y, logdet))
    }

    /// `log p_x(x) = log p_z(z) + log |det J_{f^{-1}}(x)|`; `-inf` outside
    /// the support.
    pub fn log_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dimension() {
            return Err(Error::LengthMismatch {
                what: "point dimension",
                expected: self.dimension(),
                got: x.len(),
            });
        }
        match self.inverse(x) {
            Ok((z, logdet)) => Ok(self.prior.log_density(&z) + logdet),
            Err(e) if is_outside(&e) => Ok(f64::NEG_INFINITY),
            Err(e) => Err(e),
        }
    }

    /// Log-densities of every row.
    pub fn log_density_batch(&self, points: ArrayView2<f64>) -> Result<Vec<f64>> {
        points
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| self.log_density(&r.to_vec()).map_err(|e| e.in_sample(i)))
            .collect()
    }

    /// Seeded prior draws pushed through the flow.
    pub fn sample(&self, count: usize, seed: u64) -> Result<Array2<f64>> {
        let z = self.prior.sample(count, seed);
        let mut out = Array2::zeros((count, self.dimension()));
        for (i, row) in z.rows().into_iter().enumerate() {
            let (x, _) = self.forward(&row.to_vec()).map_err(|e| e.in_sample(i))?;
            out.row_mut(i).assign(&ndarray::ArrayView1::from(&x));
        }
        Ok(out)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(FlowLayer::param_count).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            l.write_params(&mut out);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::LengthMismatch {
                what: "parameter vector",
                expected: self.param_count(),
                got: params.len(),
            });
        }
        if params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("parameter vector"));
        }
        let mut at = 0;
        for l in &mut self.layers {
            at += l.read_params(&params[at..]);
        }
        Ok(())
    }

    /// Blocks of the flat parameter vector in storage order.
    pub fn param_groups(&self) -> Vec<ParamGroup> {
        let mut groups = Vec::new();
        let mut offset = 0;
        for (li, l) in self.layers.iter().enumerate() {
            for (p, src) in l.sources().iter().enumerate() {
                let len = src.param_count();
                let kind = match src {
                    DimSource::FreeRaw(_) => ParamKind::FreeCoefficients,
                    DimSource::Net(_) => ParamKind::NetWeights,
                };
                groups.push(ParamGroup {
                    layer: li,
                    position: p,
                    kind,
                    offset,
                    len,
                });
                offset += len;
            }
        }
        groups
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(s)?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
