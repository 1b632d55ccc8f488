//! Exact negative log-likelihood gradients.
//!
//! Each sample is inverted layer by layer with a tape of the recovered
//! latents, the coupling coefficients and the conditioner activations. The
//! reverse sweep then runs from the prior back out to the data. For a
//! coupling `w = B(u; alpha)` with `u` recovered by root finding,
//! `du/dw = 1 / B'(u)` and `du/dalpha_k = -b_{k,n}(u) / B'(u)`, so with `A`
//! the adjoint of `u` (including the `B''/B'` term of `log B'`):
//!
//! ```text
//! w_bar       = A / B'
//! alpha_bar_k = -A b_{k,n}(u) / B' + n (b_{k-1,n-1}(u) - b_{k,n-1}(u)) / B'
//! ```
//!
//! The coefficient adjoints go through the monotone parameterization and,
//! for conditioned couplings, back through the net into earlier latents.

use ndarray::ArrayView2;

use crate::bernstein::basis_values_unit;
use crate::error::{Error, Result};
use crate::flow::layer::{invert_in_range, DimSource, FlowLayer};
use crate::flow::{FlowModel, NetCache};
use crate::monotone::coefficient_vjp;

struct CouplingTape {
    prefix: Vec<f64>,
    raw: Vec<f64>,
    cache: NetCache,
    coeffs: Vec<f64>,
    u: f64,
}

fn invert_with_tape(layer: &FlowLayer, x: &[f64], model: &FlowModel) -> Result<(Vec<f64>, Vec<CouplingTape>)> {
    let d = layer.dimension();
    let mut z = vec![0.0; d];
    let mut tape = Vec::with_capacity(d);
    for p in 0..d {
        let j = layer.order(p);
        let prefix: Vec<f64> = (0..p).map(|q| z[layer.order(q)]).collect();
        let mut cache = NetCache::default();
        let raw = layer
            .raw_params(p, &prefix, Some(&mut cache))
            .map_err(|e| e.in_dimension(j))?;
        let b = layer.coupling_from_raw(p, &raw).map_err(|e| e.in_dimension(j))?;
        let u = invert_in_range(&b, x[j], layer.ranges()[j], model.root_config()).map_err(|e| e.in_dimension(j))?;
        z[j] = u;
        tape.push(CouplingTape {
            prefix,
            raw,
            cache,
            coeffs: b.coeffs().to_vec(),
            u,
        });
    }
    Ok((z, tape))
}

/// Scratch buffers for the basis values of one coupling.
struct Basis {
    n: Vec<f64>,
    n1: Vec<f64>,
    n2: Vec<f64>,
}

impl Basis {
    fn new(n: usize) -> Self {
        Self {
            n: vec![0.0; n + 1],
            n1: vec![0.0; n],
            n2: vec![0.0; n.saturating_sub(1)],
        }
    }
}

/// Reverse sweep through one layer: consumes the adjoint of the layer input
/// `u_bar`, adds parameter adjoints into `grad` (the layer's slice) and
/// returns the adjoint of the layer output together with `sum log B'`.
fn layer_backward(
    layer: &FlowLayer,
    tape: &[CouplingTape],
    mut u_bar: Vec<f64>,
    grad: &mut [f64],
    basis: &mut Basis,
) -> (Vec<f64>, f64) {
    let n = layer.degree();
    let nf = n as f64;
    let d = layer.dimension();
    let mut offsets = Vec::with_capacity(d);
    let mut at = 0;
    for src in layer.sources() {
        offsets.push(at);
        at += src.param_count();
    }
    let mut w_bar = vec![0.0; d];
    let mut logdet = 0.0;
    let mut alpha_bar = vec![0.0; n + 1];
    for p in (0..d).rev() {
        let j = layer.order(p);
        let t = &tape[p];
        let a = &t.coeffs;
        basis_values_unit(n, t.u, &mut basis.n);
        basis_values_unit(n - 1, t.u, &mut basis.n1);
        let slope = nf * (0..n).map(|k| (a[k + 1] - a[k]) * basis.n1[k]).sum::<f64>();
        let curve = if n >= 2 {
            basis_values_unit(n - 2, t.u, &mut basis.n2);
            nf * (nf - 1.0)
                * (0..n - 1)
                    .map(|k| (a[k + 2] - 2.0 * a[k + 1] + a[k]) * basis.n2[k])
                    .sum::<f64>()
        } else {
            0.0
        };
        logdet += slope.ln();
        let adj = u_bar[j] + curve / slope;
        w_bar[j] = adj / slope;
        if n < 2 {
            continue;
        }
        for (k, ab) in alpha_bar.iter_mut().enumerate() {
            let lower = if k > 0 { basis.n1[k - 1] } else { 0.0 };
            let upper = if k < n { basis.n1[k] } else { 0.0 };
            *ab = (-adj * basis.n[k] + nf * (lower - upper)) / slope;
        }
        let range = layer.ranges()[j];
        let slice = &mut grad[offsets[p]..offsets[p] + layer.sources()[p].param_count()];
        match &layer.sources()[p] {
            DimSource::FreeRaw(_) => coefficient_vjp(&t.raw, range, layer.scheme(), &alpha_bar, slice),
            DimSource::Net(net) => {
                let mut raw_bar = vec![0.0; n - 1];
                coefficient_vjp(&t.raw, range, layer.scheme(), &alpha_bar, &mut raw_bar);
                let mut prefix_bar = vec![0.0; t.prefix.len()];
                net.backward(&t.cache, &raw_bar, slice, &mut prefix_bar);
                for (q, pb) in prefix_bar.iter().enumerate() {
                    u_bar[layer.order(q)] += pb;
                }
            }
        }
    }
    (w_bar, logdet)
}

/// Loss `-log p(x)` of one sample; adds its gradient into `grad`.
fn sample_loss(model: &FlowModel, x: &[f64], layer_offsets: &[usize], grad: &mut [f64]) -> Result<f64> {
    let diffeo = model.diffeo();
    let mut y = diffeo.inverse(x)?;
    let mut loss = diffeo.log_jacobian(&y);
    let layers = model.layers();
    let mut tapes = Vec::with_capacity(layers.len());
    for l in layers.iter().rev() {
        let (prev, tape) = invert_with_tape(l, &y, model)?;
        y = prev;
        tapes.push(tape);
    }
    tapes.reverse();
    let prior = model.prior();
    loss -= prior.log_density(&y);
    let mut u_bar: Vec<f64> = y.iter().map(|z| -prior.grad_log_density_1d(*z)).collect();
    for (li, (l, tape)) in layers.iter().zip(&tapes).enumerate() {
        let mut basis = Basis::new(l.degree());
        let end = layer_offsets[li] + l.param_count();
        let (w_bar, logdet) = layer_backward(l, tape, u_bar, &mut grad[layer_offsets[li]..end], &mut basis);
        loss += logdet;
        u_bar = w_bar;
    }
    Ok(loss)
}

fn layer_offsets(model: &FlowModel) -> Vec<usize> {
    let mut at = 0;
    model
        .layers()
        .iter()
        .map(|l| {
            let o = at;
            at += l.param_count();
            o
        })
        .collect()
}

fn check_batch(model: &FlowModel, batch: &ArrayView2<f64>) -> Result<()> {
    if batch.ncols() != model.dimension() {
        return Err(Error::LengthMismatch {
            what: "batch dimension",
            expected: model.dimension(),
            got: batch.ncols(),
        });
    }
    if batch.nrows() == 0 {
        return Err(Error::Config("empty batch".into()));
    }
    Ok(())
}

/// Pairwise sum over `lo..hi` with a fixed split topology; `leaf` adds the
/// gradient of one sample into its buffer and returns the loss.
fn pairwise(
    lo: usize,
    hi: usize,
    out: &mut [f64],
    pool: &mut [Vec<f64>],
    leaf: &mut impl FnMut(usize, &mut [f64]) -> Result<f64>,
) -> Result<f64> {
    if hi - lo == 1 {
        return leaf(lo, out);
    }
    let mid = lo + (hi - lo) / 2;
    let (tmp, rest) = pool.split_first_mut().expect("pool depth covers the batch");
    let left = pairwise(lo, mid, out, rest, leaf)?;
    tmp.fill(0.0);
    let right = pairwise(mid, hi, tmp, rest, leaf)?;
    for (o, t) in out.iter_mut().zip(tmp.iter()) {
        *o += t;
    }
    Ok(left + right)
}

/// Mean negative log-likelihood over the rows of `batch` (data units) and
/// its gradient with respect to [`FlowModel::params_flat`].
///
/// A non-finite loss is returned as is; callers decide what to do with it.
pub fn nll_and_gradients(model: &FlowModel, batch: ArrayView2<f64>) -> Result<(f64, Vec<f64>)> {
    check_batch(model, &batch)?;
    let count = batch.nrows();
    let params = model.param_count();
    let offsets = layer_offsets(model);
    let depth = usize::BITS as usize - count.leading_zeros() as usize + 1;
    let mut pool = vec![vec![0.0; params]; depth];
    let mut grad = vec![0.0; params];
    let mut point = vec![0.0; model.dimension()];
    let mut leaf = |i: usize, g: &mut [f64]| {
        for (p, v) in point.iter_mut().zip(batch.row(i)) {
            *p = *v;
        }
        sample_loss(model, &point, &offsets, g).map_err(|e| e.in_sample(i))
    };
    let total = pairwise(0, count, &mut grad, &mut pool, &mut leaf)?;
    let scale = 1.0 / count as f64;
    for g in &mut grad {
        *g *= scale;
    }
    Ok((total * scale, grad))
}

/// Mean negative log-likelihood only, summed in the same pairwise order.
pub fn nll(model: &FlowModel, batch: ArrayView2<f64>) -> Result<f64> {
    check_batch(model, &batch)?;
    fn sum(model: &FlowModel, batch: &ArrayView2<f64>, lo: usize, hi: usize) -> Result<f64> {
        if hi - lo == 1 {
            let x = batch.row(lo).to_vec();
            return model.log_density(&x).map(|v| -v).map_err(|e| e.in_sample(lo));
        }
        let mid = lo + (hi - lo) / 2;
        Ok(sum(model, batch, lo, mid)? + sum(model, batch, mid, hi)?)
    }
    Ok(sum(model, &batch, 0, batch.nrows())? / batch.nrows() as f64)
}
