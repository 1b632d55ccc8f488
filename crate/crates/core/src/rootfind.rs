//! Inversion of strictly increasing Bernstein-type polynomials.
//!
//! Solving `B(z) = x` is the same as finding the root of
//! `sum (alpha_k - x) b_{k,n}(z)` because the basis sums to one, and a sign
//! change `(alpha_0 - x)(alpha_n - x) < 0` guarantees exactly one root. The
//! solver works in the unit parameter with a safeguarded Newton iteration:
//! Newton steps use the slope that falls out of the de Casteljau pass, and a
//! bisection step is taken whenever the Newton iterate leaves the current
//! bracket.

use serde::{Deserialize, Serialize};

use crate::bernstein::BernsteinPoly;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RootMethod {
    #[default]
    NewtonBisection,
    BisectionOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootConfig {
    /// Bracket width (unit parameter) at which the search stops.
    pub tol_x: f64,
    /// Absolute residual tolerance; `None` means `1e-13 (alpha_n - alpha_0)`.
    pub tol_f: Option<f64>,
    pub max_iter: usize,
    pub method: RootMethod,
}

impl Default for RootConfig {
    fn default() -> Self {
        Self {
            tol_x: 1e-12,
            tol_f: None,
            max_iter: 100,
            method: RootMethod::NewtonBisection,
        }
    }
}

impl RootConfig {
    pub fn validate(&self) -> Result<()> {
        let tol_f_ok = self.tol_f.is_none_or(|t| t > 0.0);
        if !(self.tol_x > 0.0) || !tol_f_ok || self.max_iter == 0 {
            return Err(Error::Config(format!("invalid root finder settings {self:?}")));
        }
        Ok(())
    }

    pub fn residual_tolerance(&self, p: &BernsteinPoly) -> f64 {
        let c = p.coeffs();
        self.tol_f.unwrap_or(1e-13 * (c[c.len() - 1] - c[0]))
    }
}

/// Where a target value sits relative to the range of the polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BracketStatus {
    UniqueInterior,
    AtLowerEnd,
    AtUpperEnd,
    OutOfRange,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RootSolution {
    /// The root in the polynomial's domain.
    pub z: f64,
    pub iterations: usize,
    pub residual: f64,
}

pub fn root_bracket_check(p: &BernsteinPoly, x: f64, cfg: &RootConfig) -> Result<BracketStatus> {
    if !p.is_strictly_increasing() {
        return Err(Error::NotMonotone);
    }
    Ok(classify(p, x, cfg.residual_tolerance(p)))
}

fn classify(p: &BernsteinPoly, x: f64, tol_f: f64) -> BracketStatus {
    let c = p.coeffs();
    let (lo, hi) = (c[0], c[c.len() - 1]);
    if (x - lo).abs() <= tol_f {
        BracketStatus::AtLowerEnd
    } else if (x - hi).abs() <= tol_f {
        BracketStatus::AtUpperEnd
    } else if (lo - x) * (hi - x) < 0.0 {
        BracketStatus::UniqueInterior
    } else {
        BracketStatus::OutOfRange
    }
}

pub fn invert_monotone(p: &BernsteinPoly, x: f64, cfg: &RootConfig) -> Result<f64> {
    invert_monotone_with_stats(p, x, cfg).map(|s| s.z)
}

pub fn invert_monotone_with_stats(p: &BernsteinPoly, x: f64, cfg: &RootConfig) -> Result<RootSolution> {
    if !p.is_strictly_increasing() {
        return Err(Error::NotMonotone);
    }
    invert_increasing(p, x, cfg)
}

/// [`invert_monotone_with_stats`] without the O(n) monotonicity scan, for
/// callers whose coefficients are increasing by construction.
pub(crate) fn invert_increasing(p: &BernsteinPoly, x: f64, cfg: &RootConfig) -> Result<RootSolution> {
    if !x.is_finite() {
        return Err(Error::NonFinite("inversion target"));
    }
    let tol_f = cfg.residual_tolerance(p);
    let domain = p.domain();
    let c = p.coeffs();
    let (lo_val, hi_val) = (c[0], c[c.len() - 1]);
    let done = |t: f64, iterations: usize, residual: f64| RootSolution {
        z: domain.from_unit(t),
        iterations,
        residual,
    };
    match classify(p, x, tol_f) {
        BracketStatus::AtLowerEnd => return Ok(done(0.0, 0, lo_val - x)),
        BracketStatus::AtUpperEnd => return Ok(done(1.0, 0, hi_val - x)),
        BracketStatus::OutOfRange => {
            return Err(Error::OutOfRange {
                x,
                lo: lo_val,
                hi: hi_val,
            })
        }
        BracketStatus::UniqueInterior => {}
    }

    let (mut a, mut b) = (0.0_f64, 1.0_f64);
    let newton = cfg.method == RootMethod::NewtonBisection;
    // secant through the endpoints
    let mut t = if newton {
        ((x - lo_val) / (hi_val - lo_val)).clamp(0.0, 1.0)
    } else {
        0.5
    };
    let mut best = (f64::INFINITY, t);
    for iter in 1..=cfg.max_iter {
        let (v, slope) = p.eval_unit_with_slope(t);
        let f = v - x;
        if f.abs() < best.0 {
            best = (f.abs(), t);
        }
        if f.abs() <= tol_f {
            return Ok(done(t, iter, f));
        }
        if f < 0.0 {
            a = t;
        } else {
            b = t;
        }
        if b - a <= cfg.tol_x {
            return Ok(done(best.1, iter, best.0));
        }
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            // bracket is down to adjacent floats
            return Ok(done(best.1, iter, best.0));
        }
        t = if newton && slope.abs() >= 1e-14 {
            let cand = t - f / slope;
            if cand > a && cand < b {
                cand
            } else {
                mid
            }
        } else {
            mid
        };
    }
    Err(Error::MaxIterations {
        max_iter: cfg.max_iter,
        residual: best.0,
    })
}
