//! One autoregressive layer of monotone Bernstein couplings.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::conditioner::{ConditionerNet, NetCache};
use crate::bernstein::{BernsteinPoly, DomainPolicy, Interval, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::monotone::{fill_coefficients, Scheme};
use crate::rootfind::{invert_increasing, RootConfig};

/// Where the raw monotone parameters of one coupling come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DimSource {
    /// Trainable raw parameters (the first coupling of every layer).
    FreeRaw(Vec<f64>),
    /// A network of the latent prefix.
    Net(ConditionerNet),
}

impl DimSource {
    pub fn param_count(&self) -> usize {
        match self {
            DimSource::FreeRaw(v) => v.len(),
            DimSource::Net(n) => n.param_count(),
        }
    }
}

/// Maps the unit cube onto `prod ranges[j]`; coupling `p` in the
/// autoregressive order acts on dimension `order(p)` and is conditioned on
/// the layer inputs at `order(0..p)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowLayer {
    pub(crate) degree: usize,
    #[serde(default)]
    pub(crate) scheme: Scheme,
    pub(crate) ranges: Vec<Interval>,
    #[serde(default)]
    pub(crate) reverse: bool,
    pub(crate) dims: Vec<DimSource>,
}

/// Shape of a layer, shared by the constructors.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerShape {
    pub degree: usize,
    pub scheme: Scheme,
    pub ranges: Vec<Interval>,
    pub reverse: bool,
    pub hidden: Vec<usize>,
}

impl FlowLayer {
    fn build(shape: &LayerShape, mut source: impl FnMut(usize, Vec<usize>) -> Result<DimSource>) -> Result<Self> {
        let d = shape.ranges.len();
        let n = shape.degree;
        let mut dims = Vec::with_capacity(d);
        for p in 0..d {
            let mut sizes = vec![p];
            sizes.extend(&shape.hidden);
            sizes.push(n.saturating_sub(1));
            dims.push(source(p, sizes)?);
        }
        let layer = Self {
            degree: n,
            scheme: shape.scheme,
            ranges: shape.ranges.clone(),
            reverse: shape.reverse,
            dims,
        };
        layer.validate()?;
        Ok(layer)
    }

    /// Equally spaced coefficients everywhere: the affine map from the unit
    /// cube onto the ranges.
    pub fn identity(shape: &LayerShape) -> Result<Self> {
        Self::build(shape, |p, sizes| {
            if p == 0 || shape.degree == 1 {
                Ok(DimSource::FreeRaw(vec![0.0; shape.degree.saturating_sub(1)]))
            } else {
                ConditionerNet::zeros(&sizes).map(DimSource::Net)
            }
        })
    }

    /// Free parameters from `N(0, 1)` and randomly initialized nets.
    pub fn random(shape: &LayerShape, rng: &mut impl Rng) -> Result<Self> {
        Self::build(shape, |p, sizes| {
            if p == 0 || shape.degree == 1 {
                let raw = (0..shape.degree.saturating_sub(1))
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Ok(DimSource::FreeRaw(raw))
            } else {
                ConditionerNet::random(&sizes, rng).map(DimSource::Net)
            }
        })
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.degree;
        if n == 0 {
            return Err(Error::Config("coupling degree must be at least 1".into()));
        }
        if n > MAX_DEGREE {
            return Err(Error::DegreeTooLarge(n));
        }
        if self.ranges.is_empty() || self.dims.len() != self.ranges.len() {
            return Err(Error::Config(format!(
                "layer has {} ranges but {} couplings",
                self.ranges.len(),
                self.dims.len()
            )));
        }
        for (p, src) in self.dims.iter().enumerate() {
            match src {
                DimSource::FreeRaw(v) if v.len() != n - 1 => {
                    return Err(Error::LengthMismatch {
                        what: "free raw parameters",
                        expected: n - 1,
                        got: v.len(),
                    }
                    .in_dimension(self.order(p)))
                }
                DimSource::FreeRaw(v) if v.iter().any(|x| !x.is_finite()) => {
                    return Err(Error::NonFinite("free raw parameters").in_dimension(self.order(p)))
                }
                DimSource::Net(net) if net.input_width() != p || net.output_width() != n - 1 => {
                    return Err(Error::Config(format!(
                        "conditioner at position {p} must map {p} inputs to {} outputs",
                        n - 1
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn dimension(&self) -> usize {
        self.ranges.len()
    }

    pub fn ranges(&self) -> &[Interval] {
        &self.ranges
    }

    pub fn is_reversed(&self) -> bool {
        self.reverse
    }

    pub fn sources(&self) -> &[DimSource] {
        &self.dims
    }

    /// Dimension acted on by the coupling at autoregressive position `p`.
    pub fn order(&self, p: usize) -> usize {
        if self.reverse {
            self.dimension() - 1 - p
        } else {
            p
        }
    }

    pub fn param_count(&self) -> usize {
        self.dims.iter().map(DimSource::param_count).sum()
    }

    pub fn write_params(&self, out: &mut Vec<f64>) {
        for src in &self.dims {
            match src {
                DimSource::FreeRaw(v) => out.extend_from_slice(v),
                DimSource::Net(net) => net.write_params(out),
            }
        }
    }

    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for dim in &mut self.dims {
            match dim {
                DimSource::FreeRaw(v) => {
                    let len = v.len();
                    v.copy_from_slice(&src[at..at + len]);
                    at += len;
                }
                DimSource::Net(net) => at += net.read_params(&src[at..]),
            }
        }
        at
    }

    /// Raw parameters of coupling `p` given the prefix, optionally caching
    /// the net activations.
    pub(crate) fn raw_params(&self, p: usize, prefix: &[f64], cache: Option<&mut NetCache>) -> Result<Vec<f64>> {
        match &self.dims[p] {
            DimSource::FreeRaw(v) => Ok(v.clone()),
            DimSource::Net(net) => match cache {
                Some(c) => net.forward_cached(prefix, c),
                None => net.forward(prefix),
            },
        }
    }

    /// Builds the coupling polynomial (unit domain) from raw parameters.
    pub(crate) fn coupling_from_raw(&self, p: usize, raw: &[f64]) -> Result<BernsteinPoly> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("conditioner output"));
        }
        let mut coeffs = vec![0.0; self.degree + 1];
        fill_coefficients(raw, self.ranges[self.order(p)], self.scheme, &mut coeffs);
        BernsteinPoly::on_unit(coeffs)
    }

    /// The coupling at position `p` for a given latent prefix.
    pub fn coupling(&self, p: usize, prefix: &[f64]) -> Result<BernsteinPoly> {
        let raw = self.raw_params(p, prefix, None)?;
        self.coupling_from_raw(p, &raw)
    }

    fn check_len(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dimension() {
            return Err(Error::LengthMismatch {
                what: "point dimension",
                expected: self.dimension(),
                got: v.len(),
            });
        }
        Ok(())
    }

    /// `x_j = B_j(z_j)` with `B_j` conditioned on the latent prefix; returns
    /// `x` and `sum_j log B_j'(z_j)`.
    pub fn forward(&self, z: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(z)?;
        let d = self.dimension();
        let mut x = vec![0.0; d];
        let mut prefix = Vec::with_capacity(d);
        let mut logdet = 0.0;
        for p in 0..d {
            let j = self.order(p);
            let (t, _) = Interval::unit()
                .locate(z[j], DomainPolicy::Reject)
                .map_err(|e| e.in_dimension(j))?;
            let b = self.coupling(p, &prefix).map_err(|e| e.in_dimension(j))?;
            let (v, slope) = b.eval_unit_with_slope(t);
            x[j] = v;
            logdet += slope.ln();
            prefix.push(t);
        }
        Ok((x, logdet))
    }

    /// Sequential inversion: each coupling is rebuilt from the already
    /// recovered latent prefix and then inverted. The returned log-determinant
    /// is that of [`Self::forward`] at the recovered point.
    pub fn inverse(&self, x: &[f64], cfg: &RootConfig) -> Result<(Vec<f64>, f64)> {
        self.check_len(x)?;
        let d = self.dimension();
        let mut z = vec![0.0; d];
        let mut logdet = 0.0;
        for p in 0..d {
            let j = self.order(p);
            let prefix: Vec<f64> = (0..p).map(|q| z[self.order(q)]).collect();
            let b = self.coupling(p, &prefix).map_err(|e| e.in_dimension(j))?;
            let t = invert_in_range(&b, x[j], self.ranges[j], cfg).map_err(|e| e.in_dimension(j))?;
            z[j] = t;
            logdet += b.eval_unit_with_slope(t).1.ln();
        }
        Ok((z, logdet))
    }
}

/// Inverts a coupling, snapping targets within the domain tolerance of the
/// range onto its endpoints. One unguarded Newton step polishes the bracketed
/// root down to rounding level.
pub(crate) fn invert_in_range(b: &BernsteinPoly, x: f64, range: Interval, cfg: &RootConfig) -> Result<f64> {
    let (u, _) = range.locate(x, DomainPolicy::Reject)?;
    let target = range.from_unit(u).clamp(range.lo(), range.hi());
    let t = invert_increasing(b, target, cfg)?.z;
    let (v, slope) = b.eval_unit_with_slope(t);
    let polished = t - (v - target) / slope;
    Ok(if (0.0..=1.0).contains(&polished) { polished } else { t })
}
