use serde::{Deserialize, Serialize};

use super::{binomial_row, check_coeffs, BernsteinPoly, DomainPolicy, Interval, PolyRepr};
use crate::error::{Error, Result};

/// A polynomial `sum c_k x^k` in the monomial basis of the original variable,
/// considered on `domain`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct PowerPoly {
    coeffs: Vec<f64>,
    domain: Interval,
}

impl TryFrom<PolyRepr> for PowerPoly {
    type Error = Error;

    fn try_from(r: PolyRepr) -> Result<Self> {
        if r.coeffs.len() != r.degree + 1 {
            return Err(Error::LengthMismatch {
                what: "coefficients",
                expected: r.degree + 1,
                got: r.coeffs.len(),
            });
        }
        Self::new(r.coeffs, r.domain)
    }
}

impl From<PowerPoly> for PolyRepr {
    fn from(p: PowerPoly) -> Self {
        PolyRepr {
            degree: p.degree(),
            domain: p.domain,
            coeffs: p.coeffs,
        }
    }
}

impl PowerPoly {
    pub fn new(coeffs: Vec<f64>, domain: Interval) -> Result<Self> {
        check_coeffs(&coeffs)?;
        Ok(Self { coeffs, domain })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.domain.locate(x, DomainPolicy::Reject)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }

    pub fn derivative(&self) -> PowerPoly {
        if self.degree() == 0 {
            return PowerPoly {
                coeffs: vec![0.0],
                domain: self.domain,
            };
        }
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| k as f64 * c)
            .collect();
        PowerPoly {
            coeffs,
            domain: self.domain,
        }
    }
}

/// Expands `sum d_k t^k` with `t = (x - a) / w` into powers of `x`.
fn unit_to_x(d: &[f64], domain: Interval) -> Vec<f64> {
    let (a, w) = (domain.lo(), domain.width());
    if a == 0.0 && w == 1.0 {
        return d.to_vec();
    }
    let n = d.len() - 1;
    let mut c = vec![0.0; n + 1];
    let mut wk = 1.0;
    for (k, dk) in d.iter().enumerate() {
        let scaled = dk / wk;
        let binom = binomial_row(k);
        let mut shift = 1.0; // (-a)^(k - i), i running down from k
        for i in (0..=k).rev() {
            c[i] += scaled * binom[i] * shift;
            shift *= -a;
        }
        wk *= w;
    }
    c
}

/// Expands `sum c_k x^k` with `x = a + w t` into powers of `t`.
fn x_to_unit(c: &[f64], domain: Interval) -> Vec<f64> {
    let (a, w) = (domain.lo(), domain.width());
    if a == 0.0 && w == 1.0 {
        return c.to_vec();
    }
    let n = c.len() - 1;
    let mut e = vec![0.0; n + 1];
    for (k, ck) in c.iter().enumerate() {
        let binom = binomial_row(k);
        // c_k (a + w t)^k = c_k sum_j C(k,j) a^(k-j) w^j t^j
        let mut wj = 1.0;
        for j in 0..=k {
            e[j] += ck * binom[j] * a.powi((k - j) as i32) * wj;
            wj *= w;
        }
    }
    e
}

pub(super) fn bernstein_to_power(p: &BernsteinPoly) -> PowerPoly {
    let n = p.degree();
    let alpha = p.coeffs();
    let bn = binomial_row(n);
    let d: Vec<f64> = (0..=n)
        .map(|k| {
            let bk = binomial_row(k);
            let s: f64 = (0..=k)
                .map(|j| {
                    let sign = if (k - j) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * bk[j] * alpha[j]
                })
                .sum();
            bn[k] * s
        })
        .collect();
    PowerPoly {
        coeffs: unit_to_x(&d, p.domain()),
        domain: p.domain(),
    }
}

/// Uses `t^i = sum_{j >= i} C(j,i) / C(n,i) b_{j,n}(t)`; every entry of the
/// conversion is non-negative, which is what makes the Bernstein basis the
/// better conditioned of the two.
pub(super) fn power_to_bernstein(p: &PowerPoly, n: usize) -> Result<BernsteinPoly> {
    if n < p.degree() {
        return Err(Error::DegreeReduction {
            degree: p.degree(),
            target: n,
        });
    }
    let mut e = x_to_unit(p.coeffs(), p.domain());
    e.resize(n + 1, 0.0);
    let bn = binomial_row(n);
    let beta = (0..=n)
        .map(|j| {
            let bj = binomial_row(j);
            (0..=j).map(|i| bj[i] / bn[i] * e[i]).sum()
        })
        .collect();
    BernsteinPoly::new(beta, p.domain())
}
