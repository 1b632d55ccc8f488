//! Finite-difference check of the analytic gradients.

use std::collections::BTreeMap;

use ndarray::ArrayView2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::grad::{nll, nll_and_gradients};
use crate::error::{Error, Result};
use crate::flow::{FlowModel, ParamKind};

/// Models with at most this many parameters are checked coordinate by
/// coordinate; larger ones on a random subset.
pub const EXHAUSTIVE_LIMIT: usize = 500;
/// Coordinates checked on larger models.
pub const SAMPLED_COORDS: usize = 200;
/// Gradient magnitudes below `RELATIVE_FLOOR * max(1, |loss|)` are compared
/// in absolute terms. Below that level the difference quotient is dominated by
/// rounding noise in the loss, which grows with the loss itself.
pub const RELATIVE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize)]
pub struct AuditReport {
    pub max_relative_error: f64,
    pub per_group: BTreeMap<ParamKind, f64>,
    pub checked: usize,
    pub total_params: usize,
}

/// `|a - f| / max(|a|, |f|, floor)`; infinite if either is NaN.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor);
    if e.is_nan() {
        f64::INFINITY
    } else {
        e
    }
}

/// Compares every analytic partial (or a seeded sample of [`SAMPLED_COORDS`]
/// of them) with the fourth-order central difference
/// `(8 (L(p + h e_i) - L(p - h e_i)) - (L(p + 2h e_i) - L(p - 2h e_i))) / 12h`.
///
/// Steps around `1e-3` balance truncation against cancellation in the loss.
pub fn finite_difference_audit(model: &FlowModel, batch: ArrayView2<f64>, step: f64) -> Result<AuditReport> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Config(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let (loss, analytic) = nll_and_gradients(model, batch)?;
    let floor = RELATIVE_FLOOR * loss.abs().max(1.0);
    let total = analytic.len();
    let coords: Vec<usize> = if total <= EXHAUSTIVE_LIMIT {
        (0..total).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(total as u64);
        let mut c = sample(&mut rng, total, SAMPLED_COORDS).into_vec();
        c.sort_unstable();
        c
    };
    let groups = model.param_groups();
    let kind_of = |i: usize| {
        groups
            .iter()
            .find(|g| i >= g.offset && i < g.offset + g.len)
            .map(|g| g.kind)
            .expect("every coordinate belongs to a group")
    };
    let base = model.params_flat();
    let mut probe = model.clone();
    let mut params = base.clone();
    let mut per_group = BTreeMap::new();
    let mut max_err: f64 = 0.0;
    let mut loss_at = |i: usize, offset: f64| -> Result<f64> {
        params[i] = base[i] + offset;
        probe.set_params_flat(&params)?;
        let v = nll(&probe, batch);
        params[i] = base[i];
        v
    };
    for &i in &coords {
        let (p1, m1) = (loss_at(i, step)?, loss_at(i, -step)?);
        let (p2, m2) = (loss_at(i, 2.0 * step)?, loss_at(i, -2.0 * step)?);
        let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * step);
        let err = relative_error(analytic[i], numeric, floor);
        let entry = per_group.entry(kind_of(i)).or_insert(0.0_f64);
        *entry = entry.max(err);
        max_err = max_err.max(err);
    }
    Ok(AuditReport {
        max_relative_error: max_err,
        per_group,
        checked: coords.len(),
        total_params: total,
    })
}
