//! Fixed diffeomorphisms from the model box to the data region.
//!
//! Training happens on data pulled back into the compact model box; these
//! maps carry densities back to the original units through `log |J_h|`.

use serde::{Deserialize, Serialize};

use crate::bernstein::Interval;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TargetDiffeo {
    /// Per-dimension affine map sending `source[j]` onto `target[j]`.
    Affine {
        source: Vec<Interval>,
        target: Vec<Interval>,
    },
    /// `x = shift + scale * atanh(2y - 1)` on the open unit box, the inverse
    /// of the `(1 + tanh) / 2` squash.
    TanhSquash { scale: f64, shift: f64, dimension: usize },
}

impl TargetDiffeo {
    pub fn identity(dimension: usize) -> Self {
        TargetDiffeo::Affine {
            source: vec![Interval::unit(); dimension],
            target: vec![Interval::unit(); dimension],
        }
    }

    /// Affine map from the unit box onto `target`.
    pub fn affine_from_unit(target: Vec<Interval>) -> Self {
        TargetDiffeo::Affine {
            source: vec![Interval::unit(); target.len()],
            target,
        }
    }

    pub fn tanh_squash(scale: f64, shift: f64, dimension: usize) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && shift.is_finite()) || dimension == 0 {
            return Err(Error::Config(format!(
                "invalid tanh squash (scale {scale}, shift {shift})"
            )));
        }
        Ok(TargetDiffeo::TanhSquash {
            scale,
            shift,
            dimension,
        })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TargetDiffeo::Affine { source, target } if source.len() != target.len() || source.is_empty() => Err(
                Error::Config("affine diffeomorphism needs matching, non-empty boxes".into()),
            ),
            TargetDiffeo::TanhSquash {
                scale,
                shift,
                dimension,
            } => Self::tanh_squash(*scale, *shift, *dimension).map(|_| ()),
            _ => Ok(()),
        }
    }

    pub fn dimension(&self) -> usize {
        match self {
            TargetDiffeo::Affine { source, .. } => source.len(),
            TargetDiffeo::TanhSquash { dimension, .. } => *dimension,
        }
    }

    /// The model-side box this map is defined on.
    pub fn domain_box(&self) -> Vec<Interval> {
        match self {
            TargetDiffeo::Affine { source, .. } => source.clone(),
            TargetDiffeo::TanhSquash { dimension, .. } => vec![Interval::unit(); *dimension],
        }
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

    /// `h(y)`: model box to data units.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_len(y)?;
        match self {
            TargetDiffeo::Affine { source, target } => y
                .iter()
                .zip(source.iter().zip(target))
                .enumerate()
                .map(|(j, (v, (s, t)))| {
                    if !s.contains(*v) {
                        return Err(outside(*v, s).in_dimension(j));
                    }
                    Ok(t.from_unit(s.to_unit(*v)))
                })
                .collect(),
            TargetDiffeo::TanhSquash { scale, shift, .. } => y
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    if !(*v > 0.0 && *v < 1.0) {
                        return Err(outside(*v, &Interval::unit()).in_dimension(j));
                    }
                    Ok(shift + scale * (2.0 * v - 1.0).atanh())
                })
                .collect(),
        }
    }

    /// `h^{-1}(x)`: data units to the model box.
    pub fn inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        match self {
            TargetDiffeo::Affine { source, target } => x
                .iter()
                .zip(source.iter().zip(target))
                .enumerate()
                .map(|(j, (v, (s, t)))| {
                    if !t.contains(*v) {
                        return Err(outside(*v, t).in_dimension(j));
                    }
                    Ok(s.from_unit(t.to_unit(*v)))
                })
                .collect(),
            TargetDiffeo::TanhSquash { scale, shift, .. } => x
                .iter()
                .enumerate()
                .map(|(j, v)| {
                    if !v.is_finite() {
                        return Err(Error::NonFinite("diffeomorphism input").in_dimension(j));
                    }
                    Ok(0.5 * (1.0 + ((v - shift) / scale).tanh()))
                })
                .collect(),
        }
    }

    /// `log |det J_h(y)|` at a model-box point.
    pub fn log_jacobian(&self, y: &[f64]) -> f64 {
        match self {
            TargetDiffeo::Affine { source, target } => source
                .iter()
                .zip(target)
                .map(|(s, t)| (t.width() / s.width()).ln())
                .sum(),
            TargetDiffeo::TanhSquash { scale, .. } => y.iter().map(|v| scale.ln() - (2.0 * v * (1.0 - v)).ln()).sum(),
        }
    }

    /// Gradient of [`Self::log_jacobian`] with respect to `y`.
    pub fn grad_log_jacobian(&self, y: &[f64]) -> Vec<f64> {
        match self {
            TargetDiffeo::Affine { .. } => vec![0.0; y.len()],
            TargetDiffeo::TanhSquash { .. } => y.iter().map(|v| -(1.0 - 2.0 * v) / (v * (1.0 - v))).collect(),
        }
    }
}

fn outside(x: f64, i: &Interval) -> Error {
    Error::OutsideDomain {
        x,
        lo: i.lo(),
        hi: i.hi(),
    }
}
