use std::fmt::Debug;

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use num_traits::{Float, FromPrimitive, NumAssign};

use crate::error::{Error, Result};

/// Scalar type the network is generic over: `f32` for training, `f64` for
/// gradient checks.
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Debug
    + Send
    + Sync
    + std::iter::Sum
    + 'static
{
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal fits the scalar type")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Fully connected layer `y = x·w + b` on row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<R> {
    /// `in × out`.
    pub w: Array2<R>,
    pub b: Array1<R>,
}

impl<R: Real> Dense<R> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            w: Array2::zeros((fan_in, fan_out)),
            b: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.w.ncols()
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.fan_in(), self.fan_out())
    }

    pub fn forward(&self, x: &ArrayView2<R>) -> Array2<R> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    pub fn cast<S: Real>(&self) -> Dense<S> {
        let c = |v: &R| S::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or_else(S::nan);
        Dense {
            w: self.w.map(c),
            b: self.b.map(c),
        }
    }
}

pub(crate) fn relu_inplace<R: Real>(x: &mut Array2<R>) {
    x.mapv_inplace(|v| if v < R::zero() { R::zero() } else { v });
}

/// Zeroes `grad` wherever the ReLU output `act` was not positive.
pub(crate) fn relu_backward<R: Real>(grad: &mut Array2<R>, act: &Array2<R>) {
    grad.zip_mut_with(act, |g, &a| {
        if a <= R::zero() {
            *g = R::zero();
        }
    });
}

pub(crate) fn check_finite<R: Real>(x: &Array2<R>, layer: &'static str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric { layer })
    }
}

/// Activations of an MLP, `acts[0]` being the input.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache<R> {
    pub acts: Vec<Array2<R>>,
}

impl<R> MlpCache<R> {
    pub fn output(&self) -> &Array2<R> {
        self.acts.last().expect("cache holds at least the input")
    }
}

/// Runs `layers` with ReLU after every layer, except the last one when
/// `linear_last` is set.
pub(crate) fn mlp_forward<R: Real>(
    layers: &[Dense<R>],
    x: Array2<R>,
    linear_last: bool,
    name: &'static str,
) -> Result<MlpCache<R>> {
    let mut acts = Vec::with_capacity(layers.len() + 1);
    acts.push(x);
    for (l, layer) in layers.iter().enumerate() {
        let mut y = layer.forward(&acts[l].view());
        if !(linear_last && l + 1 == layers.len()) {
            relu_inplace(&mut y);
        }
        check_finite(&y, name)?;
        acts.push(y);
    }
    Ok(MlpCache { acts })
}

/// Accumulates parameter gradients into `grads` and returns the gradient
/// with respect to the MLP input.
pub(crate) fn mlp_backward<R: Real>(
    layers: &[Dense<R>],
    cache: &MlpCache<R>,
    mut grad: Array2<R>,
    linear_last: bool,
    grads: &mut [Dense<R>],
) -> Array2<R> {
    for l in (0..layers.len()).rev() {
        if !(linear_last && l + 1 == layers.len()) {
            relu_backward(&mut grad, &cache.acts[l + 1]);
        }
        general_mat_mul(R::one(), &cache.acts[l].t(), &grad, R::one(), &mut grads[l].w);
        grads[l].b += &grad.sum_axis(Axis(0));
        grad = grad.dot(&layers[l].w.t());
    }
    grad
}

/// Column-wise max over all rows, with the winning row per column (first
/// row on ties).
pub(crate) fn max_pool<R: Real>(x: &Array2<R>) -> (Array2<R>, Vec<usize>) {
    let cols = x.ncols();
    let mut best = x.row(0).to_owned();
    let mut arg = vec![0usize; cols];
    for (r, row) in x.outer_iter().enumerate().skip(1) {
        for c in 0..cols {
            if row[c] > best[c] {
                best[c] = row[c];
                arg[c] = r;
            }
        }
    }
    (best.insert_axis(Axis(0)), arg)
}

/// Routes a pooled gradient `(1 × cols)` back to the winning rows.
pub(crate) fn max_pool_backward<R: Real>(grad: &Array2<R>, arg: &[usize], rows: usize) -> Array2<R> {
    let mut out = Array2::zeros((rows, arg.len()));
    for (c, &r) in arg.iter().enumerate() {
        out[[r, c]] += grad[[0, c]];
    }
    out
}

/// Max over consecutive groups of `k` rows.
pub(crate) fn group_max_pool<R: Real>(x: &Array2<R>, k: usize) -> (Array2<R>, Vec<usize>) {
    let groups = x.nrows() / k;
    let cols = x.ncols();
    let mut out = Array2::zeros((groups, cols));
    let mut arg = vec![0usize; groups * cols];
    for g in 0..groups {
        for c in 0..cols {
            let mut best = x[[g * k, c]];
            let mut at = g * k;
            for r in g * k + 1..(g + 1) * k {
                if x[[r, c]] > best {
                    best = x[[r, c]];
                    at = r;
                }
            }
            out[[g, c]] = best;
            arg[g * cols + c] = at;
        }
    }
    (out, arg)
}

pub(crate) fn group_max_pool_backward<R: Real>(grad: &Array2<R>, arg: &[usize], rows: usize) -> Array2<R> {
    let cols = grad.ncols();
    let mut out = Array2::zeros((rows, cols));
    for g in 0..grad.nrows() {
        for c in 0..cols {
            out[[arg[g * cols + c], c]] += grad[[g, c]];
        }
    }
    out
}

/// Sum over consecutive groups of `k` rows.
pub(crate) fn group_sum<R: Real>(x: &Array2<R>, k: usize) -> Array2<R> {
    let groups = x.nrows() / k;
    let mut out = Array2::zeros((groups, x.ncols()));
    for g in 0..groups {
        for r in g * k..(g + 1) * k {
            let mut o = out.row_mut(g);
            o += &x.row(r);
        }
    }
    out
}

pub(crate) fn sigmoid<R: Real>(x: R) -> R {
    if x >= R::zero() {
        R::one() / (R::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (R::one() + e)
    }
}
