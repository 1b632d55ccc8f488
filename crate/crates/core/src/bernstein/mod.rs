//! Bernstein-type polynomials on a closed interval.
//!
//! A degree `n` polynomial is stored through its Bernstein coefficients
//! `alpha_0..=alpha_n` on a domain `[a, b]`; evaluation maps `x` to the unit
//! parameter `t = (x - a) / (b - a)` and runs the de Casteljau recursion.
//! Coefficients double as control values: the polynomial interpolates
//! `alpha_0` at `a` and `alpha_n` at `b`, and strictly increasing
//! coefficients give a strictly increasing polynomial.

mod condition;
mod power;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use condition::{
    perturb_coefficients, root_condition_number, value_condition_number, value_condition_number_floored, Basis,
    ConditionReport, PolynomialForm,
};
pub use power::PowerPoly;

/// Largest degree accepted at construction.
pub const MAX_DEGREE: usize = 200;

/// Points this close to an endpoint (relative to the interval width) are
/// treated as the endpoint.
pub const DOMAIN_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { lo, hi });
        }
        Ok(Self { lo, hi })
    }

    pub const fn unit() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn is_unit(&self) -> bool {
        self.lo == 0.0 && self.hi == 1.0
    }

    /// The affine map sending `[lo, hi]` onto `[0, 1]`.
    pub fn to_unit(&self, x: f64) -> f64 {
        (x - self.lo) / self.width()
    }

    pub fn from_unit(&self, t: f64) -> f64 {
        self.lo + t * self.width()
    }

    pub fn contains(&self, x: f64) -> bool {
        let tol = DOMAIN_TOL * self.width();
        x >= self.lo - tol && x <= self.hi + tol
    }

    /// Maps `x` to the unit parameter, snapping points within tolerance of an
    /// endpoint onto it. The returned flag reports whether clamping happened.
    pub fn locate(&self, x: f64, policy: DomainPolicy) -> Result<(f64, bool)> {
        if x.is_nan() {
            return Err(Error::NonFinite("evaluation point"));
        }
        let t = self.to_unit(x);
        if (0.0..=1.0).contains(&t) {
            return Ok((t, false));
        }
        if self.contains(x) {
            return Ok((t.clamp(0.0, 1.0), false));
        }
        match policy {
            DomainPolicy::Reject => Err(Error::OutsideDomain {
                x,
                lo: self.lo,
                hi: self.hi,
            }),
            DomainPolicy::Clamp => Ok((t.clamp(0.0, 1.0), true)),
        }
    }
}

impl Default for Interval {
    fn default() -> Self {
        Self::unit()
    }
}

impl TryFrom<[f64; 2]> for Interval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        Self::new(v[0], v[1])
    }
}

impl From<Interval> for [f64; 2] {
    fn from(i: Interval) -> Self {
        [i.lo, i.hi]
    }
}

/// What to do with evaluation points outside the domain.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DomainPolicy {
    #[default]
    Reject,
    Clamp,
}

/// Result of a policy-aware evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub clamped: bool,
}

fn binomial_table() -> &'static [Vec<f64>] {
    static TABLE: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        (0..=MAX_DEGREE)
            .map(|n| {
                // first half by the multiplicative recurrence, snapped to
                // integers while they are exactly representable, then mirrored
                let mut row = vec![1.0_f64; n + 1];
                let mut c = 1.0_f64;
                for k in 0..n / 2 {
                    c = c * (n - k) as f64 / (k + 1) as f64;
                    if c < 9.0e15 {
                        c = c.round();
                    }
                    row[k + 1] = c;
                    row[n - k - 1] = c;
                }
                row
            })
            .collect()
    })
}

/// Binomial coefficients `C(n, 0..=n)` as floats, built once by the
/// multiplicative recurrence.
pub fn binomial_row(n: usize) -> &'static [f64] {
    &binomial_table()[n]
}

/// `b_{k,n}(x) = C(n,k) x^k (1-x)^(n-k)` for `x` in `[0, 1]`.
pub fn basis_at(n: usize, k: usize, x: f64) -> Result<f64> {
    if n > MAX_DEGREE {
        return Err(Error::DegreeTooLarge(n));
    }
    if k > n {
        return Err(Error::IndexOutOfRange { n, k });
    }
    let (t, _) = Interval::unit().locate(x, DomainPolicy::Reject)?;
    Ok(binomial_row(n)[k] * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32))
}

/// Fills `out` (length `n + 1`) with every degree-`n` basis value at the unit
/// parameter `t`. No domain check; callers pass `t` in `[0, 1]`.
pub fn basis_values_unit(n: usize, t: f64, out: &mut [f64]) {
    debug_assert_eq!(out.len(), n + 1);
    let s = 1.0 - t;
    // out[k] <- t^k, then multiply in (1 - t)^(n - k) from the top.
    let mut p = 1.0;
    for o in out.iter_mut() {
        *o = p;
        p *= t;
    }
    let mut q = 1.0;
    let binom = binomial_row(n);
    for k in (0..=n).rev() {
        out[k] *= q * binom[k];
        q *= s;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyRepr", into = "PolyRepr")]
pub struct BernsteinPoly {
    coeffs: Vec<f64>,
    domain: Interval,
}

/// Shared JSON shape of both polynomial forms.
#[derive(Serialize, Deserialize)]
pub(crate) struct PolyRepr {
    pub degree: usize,
    pub domain: Interval,
    pub coeffs: Vec<f64>,
}

pub(crate) fn check_coeffs(coeffs: &[f64]) -> Result<()> {
    if coeffs.is_empty() {
        return Err(Error::LengthMismatch {
            what: "coefficients",
            expected: 1,
            got: 0,
        });
    }
    if coeffs.len() - 1 > MAX_DEGREE {
        return Err(Error::DegreeTooLarge(coeffs.len() - 1));
    }
    if coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("coefficients"));
    }
    Ok(())
}

impl TryFrom<PolyRepr> for BernsteinPoly {
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

impl From<BernsteinPoly> for PolyRepr {
    fn from(p: BernsteinPoly) -> Self {
        PolyRepr {
            degree: p.degree(),
            domain: p.domain,
            coeffs: p.coeffs,
        }
    }
}

impl BernsteinPoly {
    pub fn new(coeffs: Vec<f64>, domain: Interval) -> Result<Self> {
        check_coeffs(&coeffs)?;
        Ok(Self { coeffs, domain })
    }

    pub fn on_unit(coeffs: Vec<f64>) -> Result<Self> {
        Self::new(coeffs, Interval::unit())
    }

    /// The identity map `x -> x` on `domain`, written with degree `n`.
    pub fn identity(n: usize, domain: Interval) -> Result<Self> {
        let n_f = n.max(1) as f64;
        let coeffs = (0..=n).map(|k| domain.from_unit(k as f64 / n_f)).collect();
        Self::new(coeffs, domain)
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
        let (t, _) = self.domain.locate(x, DomainPolicy::Reject)?;
        Ok(self.eval_unit(t))
    }

    pub fn eval_with(&self, x: f64, policy: DomainPolicy) -> Result<Evaluation> {
        let (t, clamped) = self.domain.locate(x, policy)?;
        Ok(Evaluation {
            value: self.eval_unit(t),
            clamped,
        })
    }

    /// de Casteljau evaluation at the unit parameter `t`.
    pub fn eval_unit(&self, t: f64) -> f64 {
        self.eval_unit_with_slope(t).0
    }

    /// Value and `dB/dt` at the unit parameter, both from one de Casteljau
    /// pass: the derivative is `n` times the difference of the two points on
    /// the second-to-last level.
    pub fn eval_unit_with_slope(&self, t: f64) -> (f64, f64) {
        let n = self.degree();
        if n == 0 {
            return (self.coeffs[0], 0.0);
        }
        let mut buf = [0.0_f64; MAX_DEGREE + 1];
        let b = &mut buf[..=n];
        b.copy_from_slice(&self.coeffs);
        let s = 1.0 - t;
        for level in (2..=n).rev() {
            for i in 0..level {
                b[i] = s * b[i] + t * b[i + 1];
            }
        }
        let value = s * b[0] + t * b[1];
        (value, n as f64 * (b[1] - b[0]))
    }

    /// Value and `dB/dx` at `x` (domain scaling applied).
    pub fn eval_with_derivative(&self, x: f64) -> Result<(f64, f64)> {
        let (t, _) = self.domain.locate(x, DomainPolicy::Reject)?;
        let (v, d) = self.eval_unit_with_slope(t);
        Ok((v, d / self.domain.width()))
    }

    /// The degree `n - 1` polynomial whose values are the derivative in `x`.
    pub fn derivative(&self) -> BernsteinPoly {
        let n = self.degree();
        if n == 0 {
            return BernsteinPoly {
                coeffs: vec![0.0],
                domain: self.domain,
            };
        }
        let scale = n as f64 / self.domain.width();
        let coeffs = self.coeffs.windows(2).map(|w| scale * (w[1] - w[0])).collect();
        BernsteinPoly {
            coeffs,
            domain: self.domain,
        }
    }

    /// Bernstein coefficients of the same polynomial at degree `n + 1`.
    pub fn elevate(&self) -> Result<BernsteinPoly> {
        let n = self.degree();
        if n + 1 > MAX_DEGREE {
            return Err(Error::DegreeTooLarge(n + 1));
        }
        let m = (n + 1) as f64;
        let a = &self.coeffs;
        let mut coeffs = Vec::with_capacity(n + 2);
        coeffs.push(a[0]);
        for k in 1..=n {
            let w = k as f64 / m;
            coeffs.push(w * a[k - 1] + (1.0 - w) * a[k]);
        }
        coeffs.push(a[n]);
        Ok(BernsteinPoly {
            coeffs,
            domain: self.domain,
        })
    }

    /// Power-basis coefficients in the original variable `x`.
    pub fn to_power_basis(&self) -> PowerPoly {
        power::bernstein_to_power(self)
    }

    pub fn from_power_basis(p: &PowerPoly, target_degree: usize) -> Result<BernsteinPoly> {
        power::power_to_bernstein(p, target_degree)
    }

    pub fn is_strictly_increasing(&self) -> bool {
        self.coeffs.windows(2).all(|w| w[0] < w[1])
    }
}

/// Builds `B_n(f)` on `domain` from the samples `f(x_k)`, `x_k` the images of
/// `k / n` in the domain.
pub fn bernstein_operator(samples: &[f64], domain: Interval) -> Result<BernsteinPoly> {
    BernsteinPoly::new(samples.to_vec(), domain)
}

/// Samples `f` at the `n + 1` equispaced nodes and builds `B_n(f)`.
pub fn bernstein_approximation(f: impl Fn(f64) -> f64, n: usize, domain: Interval) -> Result<BernsteinPoly> {
    let n_f = n.max(1) as f64;
    let samples: Vec<f64> = (0..=n).map(|k| f(domain.from_unit(k as f64 / n_f))).collect();
    bernstein_operator(&samples, domain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct summation with exact-ish binomials, independent of de Casteljau.
    fn direct_sum(coeffs: &[f64], t: f64) -> f64 {
        let n = coeffs.len() - 1;
        let mut total = 0.0;
        for (k, a) in coeffs.iter().enumerate() {
            let mut c = 1.0_f64;
            for i in 0..k {
                c *= (n - i) as f64 / (i + 1) as f64;
            }
            total += a * c * t.powi(k as i32) * (1.0 - t).powi((n - k) as i32);
        }
        total
    }

    #[test]
    fn basis_examples() {
        assert_abs_diff_eq!(basis_at(1, 0, 0.3).unwrap(), 0.7, epsilon = 1e-15);
        assert_abs_diff_eq!(basis_at(2, 1, 0.5).unwrap(), 0.5, epsilon = 1e-15);
        let s: f64 = (0..=5).map(|k| basis_at(5, k, 0.37).unwrap()).sum();
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn basis_errors() {
        assert!(matches!(basis_at(3, 4, 0.5), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(basis_at(3, 1, 1.5), Err(Error::OutsideDomain { .. })));
        assert!(matches!(basis_at(3, 1, -0.1), Err(Error::OutsideDomain { .. })));
    }

    #[test]
    fn binomials_stay_finite_to_max_degree() {
        let row = binomial_row(MAX_DEGREE);
        assert!(row.iter().all(|c| c.is_finite() && *c >= 1.0));
        assert_eq!(binomial_row(10)[3], 120.0);
        assert_eq!(binomial_row(60)[30], 118264581564861424.0);
    }

    #[test]
    fn partition_of_unity_all_degrees() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut buf = vec![0.0; MAX_DEGREE + 1];
        for n in 0..=MAX_DEGREE {
            for _ in 0..1000 {
                let x: f64 = rng.random();
                let b = &mut buf[..=n];
                basis_values_unit(n, x, b);
                let s: f64 = b.iter().sum();
                assert!((s - 1.0).abs() <= 1e-12, "n={n} x={x} sum={s}");
            }
        }
    }

    #[test]
    fn basis_vector_matches_basis_at() {
        let mut out = vec![0.0; 13];
        basis_values_unit(12, 0.27, &mut out);
        for (k, v) in out.iter().enumerate() {
            assert_abs_diff_eq!(*v, basis_at(12, k, 0.27).unwrap(), epsilon = 1e-15);
        }
    }

    #[test]
    fn eval_examples() {
        let c = BernsteinPoly::on_unit(vec![3.5; 7]).unwrap();
        for x in [0.0, 0.1, 0.77, 1.0] {
            assert_abs_diff_eq!(c.eval(x).unwrap(), 3.5, epsilon = 1e-14);
        }
        let id = BernsteinPoly::identity(9, Interval::unit()).unwrap();
        assert_abs_diff_eq!(id.eval(0.42).unwrap(), 0.42, epsilon = 1e-15);
        let q = BernsteinPoly::on_unit(vec![0.0, 0.25, 1.0]).unwrap();
        assert_abs_diff_eq!(q.eval(0.5).unwrap(), 0.375, epsilon = 1e-15);
    }

    #[test]
    fn eval_domain_policy() {
        let p = BernsteinPoly::new(vec![1.0, 2.0, 4.0], Interval::new(-1.0, 3.0).unwrap()).unwrap();
        assert!(matches!(p.eval(3.5), Err(Error::OutsideDomain { .. })));
        let e = p.eval_with(3.5, DomainPolicy::Clamp).unwrap();
        assert!(e.clamped);
        assert_eq!(e.value, 4.0);
        // within tolerance of the endpoint is the endpoint, not a clamp
        let e = p.eval_with(3.0 + 1e-13, DomainPolicy::Reject).unwrap();
        assert!(!e.clamped);
        assert_eq!(e.value, 4.0);
    }

    #[test]
    fn endpoint_interpolation_general_domain() {
        let d = Interval::new(-2.5, 7.0).unwrap();
        let p = BernsteinPoly::new(vec![0.3, -4.0, 9.0, 2.0, -1.25], d).unwrap();
        assert_eq!(p.eval(-2.5).unwrap(), 0.3);
        assert_eq!(p.eval(7.0).unwrap(), -1.25);
    }

    #[test]
    fn derivative_examples() {
        let id = BernsteinPoly::identity(6, Interval::unit()).unwrap();
        let d = id.derivative();
        assert_eq!(d.degree(), 5);
        for x in [0.0, 0.3, 1.0] {
            assert_abs_diff_eq!(d.eval(x).unwrap(), 1.0, epsilon = 1e-14);
        }
        let c = BernsteinPoly::on_unit(vec![2.0; 4]).unwrap();
        assert_abs_diff_eq!(c.derivative().eval(0.6).unwrap(), 0.0, epsilon = 0.0);
        let q = BernsteinPoly::on_unit(vec![0.0, 0.25, 1.0]).unwrap();
        let dq = q.derivative();
        assert_eq!(dq.coeffs(), &[0.5, 1.5]);
        assert_abs_diff_eq!(dq.eval(0.5).unwrap(), 1.0, epsilon = 1e-15);
        let zero = BernsteinPoly::on_unit(vec![5.0]).unwrap().derivative();
        assert_eq!(zero.coeffs(), &[0.0]);
    }

    #[test]
    fn slope_from_de_casteljau_matches_derivative_poly() {
        let d = Interval::new(1.0, 3.0).unwrap();
        let p = BernsteinPoly::new(vec![0.1, 0.9, -0.4, 2.0, 1.1], d).unwrap();
        for x in [1.0, 1.3, 2.2, 3.0] {
            let (v, s) = p.eval_with_derivative(x).unwrap();
            assert_abs_diff_eq!(v, p.eval(x).unwrap(), epsilon = 1e-15);
            assert_abs_diff_eq!(s, p.derivative().eval(x).unwrap(), epsilon = 1e-13);
        }
    }

    #[test]
    fn operator_examples() {
        let id = bernstein_approximation(|x| x, 7, Interval::unit()).unwrap();
        assert_abs_diff_eq!(id.eval(0.123).unwrap(), 0.123, epsilon = 1e-15);
        let sq = bernstein_approximation(|x| x * x, 2, Interval::unit()).unwrap();
        assert_eq!(sq.coeffs(), &[0.0, 0.25, 1.0]);
        for x in [0.1, 0.5, 0.8] {
            assert_abs_diff_eq!(sq.eval(x).unwrap(), x * x + x * (1.0 - x) / 2.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn operator_on_kumaraswamy_cdf_is_increasing_with_first_order_error() {
        let f = |x: f64| 1.0 - (1.0 - x * x).powi(5);
        let mut prev = f64::INFINITY;
        for n in [10usize, 20, 40, 80] {
            let p = bernstein_approximation(f, n, Interval::unit()).unwrap();
            assert!(p.is_strictly_increasing());
            let err = (0..=2000)
                .map(|i| {
                    let x = i as f64 / 2000.0;
                    (p.eval(x).unwrap() - f(x)).abs()
                })
                .fold(0.0, f64::max);
            // n * err stays bounded (first-order convergence)
            assert!(n as f64 * err < 1.0, "n={n} err={err}");
            assert!(err < prev);
            prev = err;
        }
    }

    #[test]
    fn voronovskaya_square_identity() {
        for n in 1..=100 {
            let p = bernstein_approximation(|x| x * x, n, Interval::unit()).unwrap();
            for i in 0..=50 {
                let x = i as f64 / 50.0;
                let got = p.eval(x).unwrap() - x * x;
                let want = x * (1.0 - x) / n as f64;
                assert!((got - want).abs() <= 1e-12, "n={n} x={x}");
            }
        }
    }

    #[test]
    fn elevation_preserves_values() {
        let p = BernsteinPoly::on_unit(vec![0.2, -1.0, 3.0, 0.5]).unwrap();
        let q = p.elevate().unwrap();
        assert_eq!(q.degree(), 4);
        for x in [0.0, 0.2, 0.6, 1.0] {
            assert_abs_diff_eq!(p.eval(x).unwrap(), q.eval(x).unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            BernsteinPoly::on_unit(vec![0.0; MAX_DEGREE + 2]),
            Err(Error::DegreeTooLarge(_))
        ));
        assert!(matches!(
            BernsteinPoly::on_unit(vec![0.0, f64::NAN]),
            Err(Error::NonFinite(_))
        ));
        assert!(Interval::new(1.0, 1.0).is_err());
        assert!(Interval::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn json_shape() {
        let p = BernsteinPoly::new(vec![0.1, 1.0 / 3.0], Interval::new(-1.0, 2.0).unwrap()).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"degree":1,"domain":[-1.0,2.0],"coeffs":[0.1,0.3333333333333333]}"#
        );
        let back: BernsteinPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"degree":2,"domain":[0.0,1.0],"coeffs":[0.1,0.2]}"#;
        assert!(serde_json::from_str::<BernsteinPoly>(bad).is_err());
        let bad = r#"{"degree":1,"domain":[1.0,0.0],"coeffs":[0.1,0.2]}"#;
        assert!(serde_json::from_str::<BernsteinPoly>(bad).is_err());
    }

    proptest! {
        #[test]
        fn de_casteljau_matches_direct_summation(
            coeffs in prop::collection::vec(-10.0f64..10.0, 1..=101),
            t in 0.0f64..=1.0,
        ) {
            let p = BernsteinPoly::on_unit(coeffs.clone()).unwrap();
            let got = p.eval_unit(t);
            let want = direct_sum(&coeffs, t);
            let scale: f64 = coeffs.iter().map(|c| c.abs()).fold(1.0, f64::max);
            prop_assert!((got - want).abs() <= 1e-10 * scale.max(want.abs()));
        }

        #[test]
        fn endpoints_and_linear_precision(
            lo in -50.0f64..50.0, w in 1e-3f64..100.0, n in 1usize..=MAX_DEGREE,
            coeffs in prop::collection::vec(-10.0f64..10.0, 2..=60),
            s in 0.0f64..=1.0,
        ) {
            let d = Interval::new(lo, lo + w).unwrap();
            let p = BernsteinPoly::new(coeffs.clone(), d).unwrap();
            prop_assert!((p.eval(d.lo()).unwrap() - coeffs[0]).abs() <= 1e-14);
            prop_assert!((p.eval(d.hi()).unwrap() - coeffs[coeffs.len() - 1]).abs() <= 1e-14);
            let lin = BernsteinPoly::new((0..=n).map(|k| k as f64 / n as f64).collect(), d).unwrap();
            let x = d.from_unit(s);
            prop_assert!((lin.eval(x).unwrap() - d.to_unit(x)).abs() <= 1e-12);
        }

        #[test]
        fn derivative_matches_central_differences(
            coeffs in prop::collection::vec(-5.0f64..5.0, 2..=30),
            s in 0.05f64..0.95,
            lo in -3.0f64..3.0, w in 0.5f64..4.0,
        ) {
            let d = Interval::new(lo, lo + w).unwrap();
            let p = BernsteinPoly::new(coeffs, d).unwrap();
            let x = d.from_unit(s);
            let h = 1e-5;
            let fd = (p.eval(x + h).unwrap() - p.eval(x - h).unwrap()) / (2.0 * h);
            let an = p.derivative().eval(x).unwrap();
            prop_assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "fd={} an={}", fd, an);
        }
    }
}
