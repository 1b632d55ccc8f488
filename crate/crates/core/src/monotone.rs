//! Unconstrained parameterizations of strictly increasing coefficient
//! vectors with pinned endpoints.
//!
//! Both schemes first build normalized positions `0 = a_0 < ... < a_n = 1`
//! and then set `alpha_k = c + (d - c) (k eps + (1 - n eps) a_k)`, which keeps
//! `alpha_0 = c`, `alpha_n = d` and every gap at least `eps (d - c)` with
//! `eps = MIN_GAP`.
//!
//! `CumulativePositive` has `n` gaps `softplus(v)` but only `n - 1` raw
//! values: the normalization makes the overall scale redundant, so the
//! central gap (index `n / 2`) is held at `softplus(0)`. A zero raw vector
//! therefore gives equally spaced coefficients. Adding a constant to every
//! raw value does change the coefficients (softplus is not scale
//! equivariant), so no shift invariance is claimed.
//!
//! `ReciprocalSquare` uses `a_n = 1`, `a_{n-k} = 1 / (1 + v_0^2 + ... + v_{k-1}^2)`
//! for `0 < k < n` and `a_0 = 0`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bernstein::{Interval, MAX_DEGREE};
use crate::error::{Error, Result};

/// Minimum coefficient gap as a fraction of the range width.
pub const MIN_GAP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[default]
    CumulativePositive,
    ReciprocalSquare,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotoneParams {
    raw: Vec<f64>,
    range: Interval,
    scheme: Scheme,
}

/// A strictly increasing coefficient vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoeffVector {
    alphas: Vec<f64>,
}

impl CoeffVector {
    pub fn new(alphas: Vec<f64>) -> Self {
        Self { alphas }
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.alphas
    }
}

/// True iff every consecutive gap is at least `MIN_GAP` times the span
/// `alpha_n - alpha_0` (with a relative slack of 1e-6 for rounding).
pub fn check_strictly_increasing(a: &CoeffVector) -> bool {
    let alphas = a.alphas();
    if alphas.len() < 2 {
        return true;
    }
    let span = alphas[alphas.len() - 1] - alphas[0];
    if !(span > 0.0) {
        return false;
    }
    let min_gap = MIN_GAP * span * (1.0 - 1e-6);
    alphas.windows(2).all(|w| w[1] - w[0] >= min_gap)
}

pub(crate) fn softplus(v: f64) -> f64 {
    if v > 35.0 {
        v
    } else if v < -35.0 {
        v.exp()
    } else {
        v.exp().ln_1p()
    }
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn check_shape(raw_len: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Config("monotone coupling needs degree >= 1".into()));
    }
    if n > MAX_DEGREE {
        return Err(Error::DegreeTooLarge(n));
    }
    if raw_len != n - 1 {
        return Err(Error::LengthMismatch {
            what: "raw monotone parameters",
            expected: n - 1,
            got: raw_len,
        });
    }
    Ok(())
}

/// Gap index held at the reference value in the cumulative scheme.
fn reference_gap(n: usize) -> usize {
    n / 2
}

/// Gap `i` of the cumulative scheme and the raw index driving it.
fn gap_source(i: usize, n: usize) -> Option<usize> {
    let r = reference_gap(n);
    match i.cmp(&r) {
        std::cmp::Ordering::Less => Some(i),
        std::cmp::Ordering::Equal => None,
        std::cmp::Ordering::Greater => Some(i - 1),
    }
}

fn positions(raw: &[f64], scheme: Scheme, pos: &mut [f64]) {
    let n = pos.len() - 1;
    match scheme {
        Scheme::CumulativePositive => {
            let mut s = 0.0;
            pos[0] = 0.0;
            for i in 0..n {
                s += gap_source(i, n).map_or(std::f64::consts::LN_2, |j| softplus(raw[j]));
                pos[i + 1] = s;
            }
            for p in pos.iter_mut() {
                *p /= s;
            }
        }
        Scheme::ReciprocalSquare => {
            pos[0] = 0.0;
            pos[n] = 1.0;
            let mut t = 1.0;
            for k in 1..n {
                t += raw[k - 1] * raw[k - 1];
                pos[n - k] = 1.0 / t;
            }
        }
    }
}

/// Writes the coefficients for `raw` into `out` (length `raw.len() + 2`).
pub(crate) fn fill_coefficients(raw: &[f64], range: Interval, scheme: Scheme, out: &mut [f64]) {
    let n = out.len() - 1;
    positions(raw, scheme, out);
    let (c, d, w) = (range.lo(), range.hi(), range.width());
    let mix = 1.0 - n as f64 * MIN_GAP;
    for (k, a) in out.iter_mut().enumerate() {
        *a = c + w * (k as f64 * MIN_GAP + mix * *a);
    }
    out[0] = c;
    out[n] = d;
}

/// Reverse-mode sensitivity: accumulates `(d alpha / d raw)^T alpha_bar` into
/// `raw_bar`.
pub(crate) fn coefficient_vjp(raw: &[f64], range: Interval, scheme: Scheme, alpha_bar: &[f64], raw_bar: &mut [f64]) {
    let n = alpha_bar.len() - 1;
    if n < 2 {
        return;
    }
    let scale = range.width() * (1.0 - n as f64 * MIN_GAP);
    // interior positions only; the endpoints are constants
    let pos_bar = |k: usize| if k == 0 || k == n { 0.0 } else { scale * alpha_bar[k] };
    match scheme {
        Scheme::CumulativePositive => {
            let mut pos = vec![0.0; n + 1];
            positions(raw, scheme, &mut pos);
            let mut total = 0.0;
            for i in 0..n {
                total += gap_source(i, n).map_or(std::f64::consts::LN_2, |j| softplus(raw[j]));
            }
            let weighted: f64 = (0..=n).map(|k| pos_bar(k) * pos[k]).sum();
            // tail[i] = sum_{k > i} pos_bar(k)
            let mut tail = 0.0;
            for i in (0..n).rev() {
                tail += pos_bar(i + 1);
                if let Some(j) = gap_source(i, n) {
                    let g_bar = (tail - weighted) / total;
                    raw_bar[j] += g_bar * sigmoid(raw[j]);
                }
            }
        }
        Scheme::ReciprocalSquare => {
            // q_k = 1 / (1 + sum_{i<k} v_i^2) sits at position n - k;
            // dq_k/dv_i = -2 v_i q_k^2 for i < k.
            let mut t = 1.0;
            let mut contrib = vec![0.0; n];
            for k in 1..n {
                t += raw[k - 1] * raw[k - 1];
                let q = 1.0 / t;
                contrib[k] = pos_bar(n - k) * q * q;
            }
            let mut acc = 0.0;
            for i in (0..n - 1).rev() {
                acc += contrib[i + 1];
                raw_bar[i] += -2.0 * raw[i] * acc;
            }
        }
    }
}

impl MonotoneParams {
    pub fn new(raw: Vec<f64>, range: Interval, scheme: Scheme) -> Result<Self> {
        if raw.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("raw monotone parameters"));
        }
        Ok(Self { raw, range, scheme })
    }

    pub fn raw(&self) -> &[f64] {
        &self.raw
    }

    pub fn range(&self) -> Interval {
        self.range
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn to_coefficients(&self, n: usize) -> Result<CoeffVector> {
        check_shape(self.raw.len(), n)?;
        let mut out = vec![0.0; n + 1];
        fill_coefficients(&self.raw, self.range, self.scheme, &mut out);
        Ok(CoeffVector::new(out))
    }

    /// Dense `(n + 1) x (n - 1)` matrix of `d alpha_k / d v_j`.
    pub fn parameterization_jacobian(&self, n: usize) -> Result<Array2<f64>> {
        check_shape(self.raw.len(), n)?;
        let mut jac = Array2::zeros((n + 1, n - 1));
        let mut alpha_bar = vec![0.0; n + 1];
        let mut row = vec![0.0; n - 1];
        for k in 0..=n {
            alpha_bar.fill(0.0);
            alpha_bar[k] = 1.0;
            row.fill(0.0);
            coefficient_vjp(&self.raw, self.range, self.scheme, &alpha_bar, &mut row);
            for (j, v) in row.iter().enumerate() {
                jac[[k, j]] = *v;
            }
        }
        Ok(jac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::BernsteinPoly;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn inv_softplus(y: f64) -> f64 {
        y.exp_m1().ln()
    }

    fn fd_jacobian(p: &MonotoneParams, n: usize, h: f64) -> Array2<f64> {
        let mut jac = Array2::zeros((n + 1, n - 1));
        for j in 0..n - 1 {
            let mut up = p.raw.clone();
            let mut dn = p.raw.clone();
            up[j] += h;
            dn[j] -= h;
            let a = MonotoneParams::new(up, p.range, p.scheme)
                .unwrap()
                .to_coefficients(n)
                .unwrap();
            let b = MonotoneParams::new(dn, p.range, p.scheme)
                .unwrap()
                .to_coefficients(n)
                .unwrap();
            for k in 0..=n {
                jac[[k, j]] = (a.alphas()[k] - b.alphas()[k]) / (2.0 * h);
            }
        }
        jac
    }

    #[test]
    fn zero_raw_gives_equal_spacing() {
        let p = MonotoneParams::new(vec![0.0; 3], Interval::unit(), Scheme::CumulativePositive).unwrap();
        let a = p.to_coefficients(4).unwrap();
        for (got, want) in a.alphas().iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-15);
        }
    }

    #[test]
    fn increments_one_to_three() {
        // gap 0 is free, gap 1 is the reference softplus(0) = ln 2
        let v = inv_softplus(std::f64::consts::LN_2 / 3.0);
        let p = MonotoneParams::new(vec![v], Interval::unit(), Scheme::CumulativePositive).unwrap();
        let a = p.to_coefficients(2).unwrap();
        assert_eq!(a.alphas()[0], 0.0);
        assert_abs_diff_eq!(a.alphas()[1], 0.25, epsilon = 1e-6);
        assert_eq!(a.alphas()[2], 1.0);
    }

    #[test]
    fn check_examples() {
        assert!(check_strictly_increasing(&CoeffVector::new(vec![0.0, 0.25, 1.0])));
        assert!(!check_strictly_increasing(&CoeffVector::new(vec![0.0, 0.25, 0.25])));
        assert!(!check_strictly_increasing(&CoeffVector::new(vec![1.0, 0.0, 2.0])));
        assert!(!check_strictly_increasing(&CoeffVector::new(vec![0.0, 1e-9, 1.0])));
    }

    #[test]
    fn shape_errors() {
        let p = MonotoneParams::new(vec![0.0; 3], Interval::unit(), Scheme::CumulativePositive).unwrap();
        assert!(matches!(p.to_coefficients(3), Err(Error::LengthMismatch { .. })));
        assert!(p.to_coefficients(0).is_err());
        assert!(MonotoneParams::new(vec![f64::NAN], Interval::unit(), Scheme::CumulativePositive).is_err());
    }

    #[test]
    fn degree_one_is_the_range() {
        let p = MonotoneParams::new(vec![], Interval::new(-2.0, 5.0).unwrap(), Scheme::ReciprocalSquare).unwrap();
        assert_eq!(p.to_coefficients(1).unwrap().alphas(), &[-2.0, 5.0]);
        assert_eq!(p.parameterization_jacobian(1).unwrap().shape(), &[2, 0]);
    }

    #[test]
    fn extreme_raw_values_stay_strict() {
        let range = Interval::new(-1.0, 3.0).unwrap();
        for scheme in [Scheme::CumulativePositive, Scheme::ReciprocalSquare] {
            let raw = vec![-800.0, 900.0, 0.0, -1e-3, 50.0, -50.0, 0.0, 0.0];
            let p = MonotoneParams::new(raw, range, scheme).unwrap();
            let a = p.to_coefficients(9).unwrap();
            assert!(check_strictly_increasing(&a), "{scheme:?}: {:?}", a.alphas());
            assert_eq!(a.alphas()[0], -1.0);
            assert_eq!(a.alphas()[9], 3.0);
        }
    }

    #[test]
    fn random_raw_vectors_are_strict() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..10_000 {
            let n = rng.random_range(1..=100);
            let scheme = if trial % 2 == 0 {
                Scheme::CumulativePositive
            } else {
                Scheme::ReciprocalSquare
            };
            let lo: f64 = rng.random_range(-5.0..5.0);
            let range = Interval::new(lo, lo + rng.random_range(0.1..10.0)).unwrap();
            let scale: f64 = rng.random_range(0.1..5.0);
            let raw: Vec<f64> = (0..n - 1)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let a = MonotoneParams::new(raw, range, scheme)
                .unwrap()
                .to_coefficients(n)
                .unwrap();
            assert!(check_strictly_increasing(&a));
            assert_eq!(a.alphas()[0], range.lo());
            assert_eq!(a.alphas()[n], range.hi());
        }
    }

    #[test]
    fn composed_polynomial_has_positive_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for scheme in [Scheme::CumulativePositive, Scheme::ReciprocalSquare] {
            for _ in 0..20 {
                let n = rng.random_range(2..=60);
                let raw: Vec<f64> = (0..n - 1).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
                let a = MonotoneParams::new(raw, Interval::unit(), scheme)
                    .unwrap()
                    .to_coefficients(n)
                    .unwrap();
                let dp = BernsteinPoly::on_unit(a.into_inner()).unwrap().derivative();
                for i in 1..1000 {
                    assert!(dp.eval(i as f64 / 1000.0).unwrap() > 0.0);
                }
            }
        }
    }

    #[test]
    fn jacobian_endpoint_rows_vanish_and_degree_two_matches() {
        for scheme in [Scheme::CumulativePositive, Scheme::ReciprocalSquare] {
            let p = MonotoneParams::new(vec![0.7], Interval::new(1.0, 4.0).unwrap(), scheme).unwrap();
            let jac = p.parameterization_jacobian(2).unwrap();
            assert_eq!(jac[[0, 0]], 0.0);
            assert_eq!(jac[[2, 0]], 0.0);
            let fd = fd_jacobian(&p, 2, 1e-6);
            assert!((jac[[1, 0]] - fd[[1, 0]]).abs() <= 1e-6 * fd[[1, 0]].abs());
        }
    }

    #[test]
    fn jacobian_taylor_check() {
        let raw = vec![0.3, -1.2, 0.8, 2.0, -0.4];
        let p = MonotoneParams::new(raw.clone(), Interval::unit(), Scheme::CumulativePositive).unwrap();
        let jac = p.parameterization_jacobian(6).unwrap();
        let base = p.to_coefficients(6).unwrap();
        let delta = 1e-5;
        for j in 0..5 {
            let mut r = raw.clone();
            r[j] += delta;
            let moved = MonotoneParams::new(r, p.range(), p.scheme())
                .unwrap()
                .to_coefficients(6)
                .unwrap();
            for k in 0..=6 {
                let lin = base.alphas()[k] + jac[[k, j]] * delta;
                assert!((moved.alphas()[k] - lin).abs() <= 1e-9);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn jacobian_matches_finite_differences(
            raw in prop::collection::vec(-3.0f64..3.0, 1..40),
            reciprocal in any::<bool>(),
            lo in -2.0f64..2.0, w in 0.5f64..4.0,
        ) {
            let scheme = if reciprocal { Scheme::ReciprocalSquare } else { Scheme::CumulativePositive };
            let n = raw.len() + 1;
            let p = MonotoneParams::new(raw, Interval::new(lo, lo + w).unwrap(), scheme).unwrap();
            let jac = p.parameterization_jacobian(n).unwrap();
            let fd = fd_jacobian(&p, n, 1e-6);
            // central differences of coefficients of size ~|lo| + w carry
            // rounding noise of order 1e-16 (|lo| + w) / 1e-6
            let noise = 1e-8 * (lo.abs() + w);
            for (a, b) in jac.iter().zip(fd.iter()) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()) + noise,
                    "analytic {} vs fd {}", a, b);
            }
        }
    }
}
