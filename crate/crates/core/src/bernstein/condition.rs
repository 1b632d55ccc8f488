//! Condition numbers for polynomial values and roots.
//!
//! For `p(x) = sum c_k phi_k(x)` and relative coefficient perturbations of
//! size at most `eps`, the value moves by at most `eps * C(x)` with
//! `C(x) = sum |c_k phi_k(x)|`. The root condition number of an `m`-fold root
//! `x0` is `(m! / |p^(m)(x0)| * C(x0))^(1/m)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{basis_values_unit, BernsteinPoly, DomainPolicy, Interval, PowerPoly};
use crate::error::{Error, Result};

/// Absolute threshold below which an `m`-th derivative counts as vanishing.
const DERIVATIVE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Bernstein,
    Power,
}

/// Common surface of the two coefficient representations.
pub trait PolynomialForm: Clone {
    const BASIS: Basis;

    fn coeffs(&self) -> &[f64];
    fn domain(&self) -> Interval;
    fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self>;
    fn value(&self, x: f64) -> Result<f64>;
    /// `phi_k(x)` for every `k`.
    fn basis_values(&self, x: f64) -> Result<Vec<f64>>;
    /// `p^(m)(x)` in the original variable.
    fn nth_derivative_at(&self, m: usize, x: f64) -> Result<f64>;
}

impl PolynomialForm for BernsteinPoly {
    const BASIS: Basis = Basis::Bernstein;

    fn coeffs(&self) -> &[f64] {
        BernsteinPoly::coeffs(self)
    }

    fn domain(&self) -> Interval {
        BernsteinPoly::domain(self)
    }

    fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        BernsteinPoly::new(coeffs, self.domain())
    }

    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x)
    }

    fn basis_values(&self, x: f64) -> Result<Vec<f64>> {
        let (t, _) = self.domain().locate(x, DomainPolicy::Reject)?;
        let mut out = vec![0.0; self.degree() + 1];
        basis_values_unit(self.degree(), t, &mut out);
        Ok(out)
    }

    fn nth_derivative_at(&self, m: usize, x: f64) -> Result<f64> {
        let mut p = self.clone();
        for _ in 0..m {
            p = p.derivative();
        }
        p.eval(x)
    }
}

impl PolynomialForm for PowerPoly {
    const BASIS: Basis = Basis::Power;

    fn coeffs(&self) -> &[f64] {
        PowerPoly::coeffs(self)
    }

    fn domain(&self) -> Interval {
        PowerPoly::domain(self)
    }

    fn with_coeffs(&self, coeffs: Vec<f64>) -> Result<Self> {
        PowerPoly::new(coeffs, self.domain())
    }

    fn value(&self, x: f64) -> Result<f64> {
        self.eval(x)
    }

    fn basis_values(&self, x: f64) -> Result<Vec<f64>> {
        self.domain().locate(x, DomainPolicy::Reject)?;
        let mut out = Vec::with_capacity(self.degree() + 1);
        let mut p = 1.0;
        for _ in 0..=self.degree() {
            out.push(p);
            p *= x;
        }
        Ok(out)
    }

    fn nth_derivative_at(&self, m: usize, x: f64) -> Result<f64> {
        let mut p = self.clone();
        for _ in 0..m {
            p = p.derivative();
        }
        p.eval(x)
    }
}

/// `sum_k |c_k phi_k(x)|`.
pub fn value_condition_number<P: PolynomialForm>(p: &P, x: f64) -> Result<f64> {
    let phi = p.basis_values(x)?;
    Ok(p.coeffs().iter().zip(&phi).map(|(c, f)| (c * f).abs()).sum())
}

/// Like [`value_condition_number`] with every `|c_k|` floored at `eps`; this
/// is the bound that still holds once zero coefficients receive the additive
/// perturbation used by [`perturb_coefficients`].
pub fn value_condition_number_floored<P: PolynomialForm>(p: &P, x: f64, eps: f64) -> Result<f64> {
    let phi = p.basis_values(x)?;
    Ok(p.coeffs()
        .iter()
        .zip(&phi)
        .map(|(c, f)| floor_magnitude(*c, eps) * f.abs())
        .sum())
}

fn floor_magnitude(c: f64, eps: f64) -> f64 {
    if c == 0.0 {
        eps
    } else {
        c.abs()
    }
}

pub fn root_condition_number<P: PolynomialForm>(p: &P, x0: f64, m: usize) -> Result<f64> {
    if m == 0 {
        return Err(Error::MultiplicityMismatch { x0, m });
    }
    let dm = p.nth_derivative_at(m, x0)?;
    if !(dm.abs() > DERIVATIVE_FLOOR) {
        return Err(Error::MultiplicityMismatch { x0, m });
    }
    let factorial: f64 = (1..=m).map(|i| i as f64).product();
    let c = value_condition_number(p, x0)?;
    Ok((factorial / dm.abs() * c).powf(1.0 / m as f64))
}

/// Replaces each `c_k` by `c_k (1 + u_k)`, `u_k ~ U(-eps, eps)` i.i.d. from a
/// generator seeded with `seed`. Zero coefficients get `eps * u_k` instead.
pub fn perturb_coefficients<P: PolynomialForm>(p: &P, eps: f64, seed: u64) -> Result<P> {
    if eps < 0.0 || eps.is_nan() {
        return Err(Error::NegativeEpsilon(eps));
    }
    if eps == 0.0 {
        return Ok(p.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = p
        .coeffs()
        .iter()
        .map(|&c| {
            let u = rng.random_range(-eps..eps);
            if c == 0.0 {
                eps * u
            } else {
                c * (1.0 + u)
            }
        })
        .collect();
    p.with_coeffs(coeffs)
}

/// Value and (optionally) root conditioning of one polynomial in both bases.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub eval_point: f64,
    pub value_cond_bernstein: f64,
    pub value_cond_power: f64,
    pub root_cond_bernstein: Option<f64>,
    pub root_cond_power: Option<f64>,
    pub root_multiplicity: usize,
}

impl ConditionReport {
    /// Conditions `p` at `x`; root numbers are filled in when `root_multiplicity`
    /// is given and `x` really is a root of that order.
    pub fn compute(p: &BernsteinPoly, x: f64, root_multiplicity: Option<usize>) -> Result<Self> {
        let power = p.to_power_basis();
        let (rb, rp, m) = match root_multiplicity {
            Some(m) => (
                Some(root_condition_number(p, x, m)?),
                Some(root_condition_number(&power, x, m)?),
                m,
            ),
            None => (None, None, 1),
        };
        Ok(Self {
            eval_point: x,
            value_cond_bernstein: value_condition_number(p, x)?,
            value_cond_power: value_condition_number(&power, x)?,
            root_cond_bernstein: rb,
            root_cond_power: rp,
            root_multiplicity: m,
        })
    }

    pub fn bernstein_dominates(&self, slack: f64) -> bool {
        let values = self.value_cond_bernstein <= self.value_cond_power + slack;
        let roots = match (self.root_cond_bernstein, self.root_cond_power) {
            (Some(b), Some(p)) => b <= p + slack,
            _ => true,
        };
        values && roots
    }
}
