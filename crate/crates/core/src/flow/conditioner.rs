//! Small fully connected conditioner networks with cached activations for
//! reverse-mode replay.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hidden widths used when none are configured.
pub const DEFAULT_HIDDEN: [usize; 2] = [32, 32];

/// One affine layer, weights stored row-major (`rows = fan_out`).
#[derive(Clone, Debug, PartialEq)]
struct Dense {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl Dense {
    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.fan_in..(r + 1) * self.fan_in];
            *o = self.biases[r] + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// `sizes[0] -> sizes[1] -> ... -> sizes[last]` with tanh between layers and
/// a linear output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetRepr", into = "NetRepr")]
pub struct ConditionerNet {
    layers: Vec<Dense>,
}

#[derive(Serialize, Deserialize)]
struct NetRepr {
    sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

impl From<ConditionerNet> for NetRepr {
    fn from(net: ConditionerNet) -> Self {
        NetRepr {
            sizes: net.sizes(),
            weights: net.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: net.layers.into_iter().map(|l| l.biases).collect(),
        }
    }
}

impl TryFrom<NetRepr> for ConditionerNet {
    type Error = Error;

    fn try_from(r: NetRepr) -> Result<Self> {
        if r.sizes.len() < 2 || r.weights.len() != r.sizes.len() - 1 || r.biases.len() != r.weights.len() {
            return Err(Error::Config("conditioner net layer lists are inconsistent".into()));
        }
        let mut layers = Vec::with_capacity(r.weights.len());
        for (i, (w, b)) in r.weights.into_iter().zip(r.biases).enumerate() {
            let (fan_in, fan_out) = (r.sizes[i], r.sizes[i + 1]);
            if w.len() != fan_in * fan_out || b.len() != fan_out {
                return Err(Error::Config(format!("conditioner layer {i} has the wrong shape")));
            }
            if w.iter().chain(&b).any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("conditioner weight"));
            }
            layers.push(Dense {
                fan_in,
                fan_out,
                weights: w,
                biases: b,
            });
        }
        Ok(Self { layers })
    }
}

/// Activations recorded by [`ConditionerNet::forward_cached`].
#[derive(Clone, Debug, Default)]
pub struct NetCache {
    /// Input of each layer; entries after the first are tanh outputs.
    inputs: Vec<Vec<f64>>,
}

impl ConditionerNet {
    fn build(sizes: &[usize], mut weight: impl FnMut(usize) -> f64) -> Result<Self> {
        if sizes.len() < 2 || sizes[1..].contains(&0) {
            return Err(Error::Config(format!("invalid conditioner sizes {sizes:?}")));
        }
        let layers = sizes
            .windows(2)
            .map(|w| Dense {
                fan_in: w[0],
                fan_out: w[1],
                weights: (0..w[0] * w[1]).map(|_| weight(w[0])).collect(),
                biases: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::build(sizes, |_| 0.0)
    }

    /// Weights drawn from `N(0, 1 / fan_in)`, biases zero.
    pub fn random(sizes: &[usize], rng: &mut impl Rng) -> Result<Self> {
        Self::build(sizes, |fan_in| {
            rng.sample::<f64, _>(StandardNormal) / (fan_in.max(1) as f64).sqrt()
        })
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].fan_in];
        s.extend(self.layers.iter().map(|l| l.fan_out));
        s
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_width(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Appends parameters in layer order, weights before biases.
    pub fn write_params(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.biases);
        }
    }

    /// Inverse of [`Self::write_params`]; returns the number consumed.
    pub fn read_params(&mut self, src: &[f64]) -> usize {
        let mut at = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&src[at..at + nw]);
            at += nw;
            let nb = l.biases.len();
            l.biases.copy_from_slice(&src[at..at + nb]);
            at += nb;
        }
        at
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_width() {
            return Err(Error::LengthMismatch {
                what: "conditioner input",
                expected: self.input_width(),
                got: input.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        let mut cache = NetCache::default();
        self.forward_cached(input, &mut cache)
    }

    /// Forward pass that keeps every layer input in `cache`.
    pub fn forward_cached(&self, input: &[f64], cache: &mut NetCache) -> Result<Vec<f64>> {
        self.check_input(input)?;
        cache.inputs.clear();
        cache.inputs.push(input.to_vec());
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut out = vec![0.0; l.fan_out];
            l.apply(&cache.inputs[i], &mut out);
            if i == last {
                return Ok(out);
            }
            for v in &mut out {
                *v = v.tanh();
            }
            cache.inputs.push(out);
        }
        unreachable!("a net has at least one layer")
    }

    /// Reverse pass over a cached forward: accumulates parameter sensitivities
    /// into `param_bar` (layout of [`Self::write_params`]) and input
    /// sensitivities into `input_bar`.
    pub fn backward(&self, cache: &NetCache, out_bar: &[f64], param_bar: &mut [f64], input_bar: &mut [f64]) {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut at = 0;
        for l in &self.layers {
            offsets.push(at);
            at += l.param_count();
        }
        let mut g = out_bar.to_vec();
        for (i, l) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let (wg, bg) = param_bar[offsets[i]..offsets[i] + l.param_count()].split_at_mut(l.weights.len());
            let mut x_bar = vec![0.0; l.fan_in];
            for r in 0..l.fan_out {
                let gr = g[r];
                if gr == 0.0 {
                    continue;
                }
                bg[r] += gr;
                let row = &l.weights[r * l.fan_in..(r + 1) * l.fan_in];
                let wrow = &mut wg[r * l.fan_in..(r + 1) * l.fan_in];
                for c in 0..l.fan_in {
                    wrow[c] += gr * x[c];
                    x_bar[c] += gr * row[c];
                }
            }
            if i == 0 {
                for (a, b) in input_bar.iter_mut().zip(&x_bar) {
                    *a += b;
                }
            } else {
                // x = tanh(pre), so d pre = (1 - x^2) d x
                for (xb, xv) in x_bar.iter_mut().zip(x) {
                    *xb *= 1.0 - xv * xv;
                }
                g = x_bar;
            }
        }
    }
}
