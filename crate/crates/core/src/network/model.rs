use ndarray::linalg::general_mat_mul;
use ndarray::{concatenate, s, Array2, Axis};

use super::layers::{
    check_finite, group_max_pool, group_max_pool_backward, group_sum, max_pool, max_pool_backward, mlp_backward,
    mlp_forward, relu_backward, relu_inplace, sigmoid, Dense, MlpCache, Real,
};
use super::params::NetworkParams;
use crate::datagen::QuerySample;
use crate::error::{Error, Result};

/// A [`QuerySample`] converted to matrices of the network's scalar type.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleTensors<R> {
    /// `n_d × 3`.
    pub patch: Array2<R>,
    /// `n_s × 3`.
    pub subsample: Array2<R>,
    /// `(n_d·k) × 3`, grouped by patch point.
    pub knn: Array2<R>,
    pub target: R,
}

impl<R: Real> SampleTensors<R> {
    pub fn from_sample(s: &QuerySample) -> Self {
        let m = |pts: &[[f32; 3]]| {
            Array2::from_shape_fn((pts.len(), 3), |(i, c)| R::lit(pts[i][c] as f64))
        };
        Self {
            patch: m(&s.patch),
            subsample: m(&s.subsample),
            knn: m(&s.knn),
            target: R::lit(s.target as f64),
        }
    }

    pub fn check(&self, params: &NetworkParams<R>) -> Result<()> {
        let d = &params.dims;
        let (n_d, n_s, nk) = (self.patch.nrows(), self.subsample.nrows(), self.knn.nrows());
        if n_d != d.n_d || n_s != d.n_s {
            return Err(Error::Contract(format!(
                "sample has n_d={n_d}, n_s={n_s}; network expects n_d={}, n_s={}",
                d.n_d, d.n_s
            )));
        }
        if nk != n_d * d.k {
            return Err(Error::Contract(format!(
                "sample carries {nk} neighbour rows for {n_d} patch points; network expects k={}",
                d.k
            )));
        }
        Ok(())
    }
}

/// The 3×3 transform applied to every input point, `x ↦ x·M`.
pub fn stn_transform<R: Real>(params: &NetworkParams<R>, sample: &SampleTensors<R>) -> Result<Array2<R>> {
    Ok(stn_forward(params, sample)?.m)
}

struct StnCache<R> {
    point: MlpCache<R>,
    arg: Vec<usize>,
    fc: MlpCache<R>,
    m: Array2<R>,
}

fn stn_forward<R: Real>(params: &NetworkParams<R>, x: &SampleTensors<R>) -> Result<StnCache<R>> {
    let union = concatenate![Axis(0), x.patch, x.subsample];
    let point = mlp_forward(&params.stn_point, union, false, "stn_point_mlp")?;
    let (pooled, arg) = max_pool(point.output());
    let fc = mlp_forward(&params.stn_fc, pooled, true, "stn_fc")?;
    let t = fc.output();
    let m = Array2::from_shape_fn((3, 3), |(i, j)| {
        t[[0, 3 * i + j]] + if i == j { R::one() } else { R::zero() }
    });
    Ok(StnCache { point, arg, fc, m })
}

/// First layer of a head whose input is `[rows | broadcast vector]`. `w`
/// stacks the row part over the vector part.
fn split_forward<R: Real>(layer: &Dense<R>, rows: &Array2<R>, vector: &Array2<R>) -> Array2<R> {
    let top = rows.ncols();
    let mut pre = rows.dot(&layer.w.slice(s![..top, ..]));
    let mut bias = vector.dot(&layer.w.slice(s![top.., ..]));
    bias += &layer.b;
    pre += &bias;
    pre
}

struct HeadCache<R> {
    first: Array2<R>,
    rest: MlpCache<R>,
}

/// Contribution head: split first layer, then the remaining layers, ReLU on
/// all but the last. Returns the per-point outputs.
fn head_forward<R: Real>(
    layers: &[Dense<R>],
    rows: &Array2<R>,
    vector: &Array2<R>,
    name: &'static str,
) -> Result<HeadCache<R>> {
    let mut first = split_forward(&layers[0], rows, vector);
    if layers.len() > 1 {
        relu_inplace(&mut first);
    }
    check_finite(&first, name)?;
    let rest = mlp_forward(&layers[1..], first.clone(), true, name)?;
    Ok(HeadCache { first, rest })
}

/// Returns gradients for `rows` and `vector`.
fn head_backward<R: Real>(
    layers: &[Dense<R>],
    cache: &HeadCache<R>,
    rows: &Array2<R>,
    vector: &Array2<R>,
    grad_out: Array2<R>,
    grads: &mut [Dense<R>],
) -> (Array2<R>, Array2<R>) {
    let (g0, g_rest) = grads.split_at_mut(1);
    let mut g = mlp_backward(&layers[1..], &cache.rest, grad_out, true, g_rest);
    if layers.len() > 1 {
        relu_backward(&mut g, &cache.first);
    }
    let top = rows.ncols();
    let w = &layers[0].w;
    let colsum = g.sum_axis(Axis(0)).insert_axis(Axis(0));
    {
        let gw = &mut g0[0].w;
        general_mat_mul(R::one(), &rows.t(), &g, R::one(), &mut gw.slice_mut(s![..top, ..]));
        general_mat_mul(R::one(), &vector.t(), &colsum, R::one(), &mut gw.slice_mut(s![top.., ..]));
    }
    g0[0].b += &colsum.row(0);
    let d_rows = g.dot(&w.slice(s![..top, ..]).t());
    let d_vec = colsum.dot(&w.slice(s![top.., ..]).t());
    (d_rows, d_vec)
}

struct SefCache<R> {
    first: Array2<R>,
    rest: MlpCache<R>,
    arg: Vec<usize>,
}

fn sef_forward<R: Real>(
    layers: &[Dense<R>],
    features: &Array2<R>,
    knn: &Array2<R>,
    k: usize,
) -> Result<(Array2<R>, SefCache<R>)> {
    let f = features.ncols();
    let w = &layers[0].w;
    let per_point = features.dot(&w.slice(s![..f, ..]));
    let mut first = knn.dot(&w.slice(s![f.., ..]));
    first += &layers[0].b;
    for (r, mut row) in first.outer_iter_mut().enumerate() {
        row += &per_point.row(r / k);
    }
    if layers.len() > 1 {
        relu_inplace(&mut first);
    }
    check_finite(&first, "sef_mlp")?;
    let rest = mlp_forward(&layers[1..], first.clone(), true, "sef_mlp")?;
    let (local, arg) = group_max_pool(rest.output(), k);
    Ok((local, SefCache { first, rest, arg }))
}

/// Returns gradients for the point features and the neighbour coordinates.
fn sef_backward<R: Real>(
    layers: &[Dense<R>],
    cache: &SefCache<R>,
    features: &Array2<R>,
    knn: &Array2<R>,
    k: usize,
    grad_local: &Array2<R>,
    grads: &mut [Dense<R>],
) -> (Array2<R>, Array2<R>) {
    let rows = knn.nrows();
    let g_out = group_max_pool_backward(grad_local, &cache.arg, rows);
    let (g0, g_rest) = grads.split_at_mut(1);
    let mut g = mlp_backward(&layers[1..], &cache.rest, g_out, true, g_rest);
    if layers.len() > 1 {
        relu_backward(&mut g, &cache.first);
    }
    let f = features.ncols();
    let w = &layers[0].w;
    let per_point = group_sum(&g, k);
    {
        let gw = &mut g0[0].w;
        general_mat_mul(R::one(), &features.t(), &per_point, R::one(), &mut gw.slice_mut(s![..f, ..]));
        general_mat_mul(R::one(), &knn.t(), &g, R::one(), &mut gw.slice_mut(s![f.., ..]));
    }
    g0[0].b += &g.sum_axis(Axis(0));
    let d_features = per_point.dot(&w.slice(s![..f, ..]).t());
    let d_knn = g.dot(&w.slice(s![f.., ..]).t());
    (d_features, d_knn)
}

/// Everything the backward pass needs from one forward pass.
pub struct ForwardCache<R> {
    stn: StnCache<R>,
    subsample: Array2<R>,
    knn: Array2<R>,
    patch_point: MlpCache<R>,
    shape_point: MlpCache<R>,
    sef: SefCache<R>,
    patch_feat: Array2<R>,
    patch_expand: MlpCache<R>,
    patch_arg: Vec<usize>,
    shape_expand: MlpCache<R>,
    shape_arg: Vec<usize>,
    patch_latent: MlpCache<R>,
    shape_latent: MlpCache<R>,
    patch_contrib: HeadCache<R>,
    shape_contrib: HeadCache<R>,
    combine: MlpCache<R>,
    /// Network output in `[0, 1]`.
    pub output: R,
}

/// Prediction for one sample.
pub fn network_forward<R: Real>(params: &NetworkParams<R>, sample: &SampleTensors<R>) -> Result<R> {
    Ok(forward(params, sample)?.output)
}

/// Forward pass keeping the intermediate values.
pub fn forward<R: Real>(params: &NetworkParams<R>, x: &SampleTensors<R>) -> Result<ForwardCache<R>> {
    x.check(params)?;
    let k = params.dims.k;
    let stn = stn_forward(params, x)?;
    let patch = x.patch.dot(&stn.m);
    let subsample = x.subsample.dot(&stn.m);
    let knn = x.knn.dot(&stn.m);

    let patch_point = mlp_forward(&params.patch_point, patch.clone(), false, "patch_point_mlp")?;
    let shape_point = mlp_forward(&params.shape_point, subsample.clone(), false, "shape_point_mlp")?;
    let (local, sef) = sef_forward(&params.sef, patch_point.output(), &knn, k)?;
    let patch_feat = concatenate![Axis(1), *patch_point.output(), local];

    let patch_expand = mlp_forward(&params.patch_expand, patch_feat.clone(), true, "patch_expand_mlp")?;
    let (patch_pool, patch_arg) = max_pool(patch_expand.output());
    let shape_expand = mlp_forward(&params.shape_expand, shape_point.output().clone(), true, "shape_expand_mlp")?;
    let (shape_pool, shape_arg) = max_pool(shape_expand.output());
    let global = concatenate![Axis(1), patch_pool, shape_pool];

    let patch_latent = mlp_forward(&params.patch_latent, global.clone(), true, "patch_global_fc")?;
    let shape_latent = mlp_forward(&params.shape_latent, global, true, "shape_global_fc")?;

    let patch_contrib = head_forward(&params.patch_contrib, &patch_feat, patch_latent.output(), "patch_contrib_mlp")?;
    let shape_contrib = head_forward(
        &params.shape_contrib,
        shape_point.output(),
        shape_latent.output(),
        "shape_contrib_mlp",
    )?;
    let patch_sum = patch_contrib.rest.output().sum_axis(Axis(0)).insert_axis(Axis(0));
    let shape_sum = shape_contrib.rest.output().sum_axis(Axis(0)).insert_axis(Axis(0));
    let combined = concatenate![Axis(1), patch_sum, shape_sum];
    let combine = mlp_forward(&params.combine, combined, true, "combine_fc")?;
    let output = sigmoid(combine.output()[[0, 0]]);

    Ok(ForwardCache {
        stn,
        subsample,
        knn,
        patch_point,
        shape_point,
        sef,
        patch_feat,
        patch_expand,
        patch_arg,
        shape_expand,
        shape_arg,
        patch_latent,
        shape_latent,
        patch_contrib,
        shape_contrib,
        combine,
        output,
    })
}

/// `(pred - target)²`.
pub fn loss_l2<R: Real>(pred: R, target: R) -> R {
    (pred - target) * (pred - target)
}

/// Mean of per-sample losses.
pub fn batch_loss<R: Real>(losses: &[R]) -> R {
    if losses.is_empty() {
        return R::zero();
    }
    losses.iter().copied().sum::<R>() / R::lit(losses.len() as f64)
}

/// Adds `d_output · ∂output/∂θ` to `grads`.
pub fn backward<R: Real>(
    params: &NetworkParams<R>,
    x: &SampleTensors<R>,
    cache: &ForwardCache<R>,
    d_output: R,
    grads: &mut NetworkParams<R>,
) {
    let k = params.dims.k;
    let c = params.dims.c;
    let f = params.dims.point_width();
    let g_width = params.dims.pooled_width();
    let y = cache.output;

    let d_logit = Array2::from_elem((1, 1), d_output * y * (R::one() - y));
    let d_combined = mlp_backward(&params.combine, &cache.combine, d_logit, true, &mut grads.combine);

    let bcast = |cols: ndarray::ArrayView2<R>, rows: usize| {
        cols.broadcast((rows, cols.ncols())).expect("row vector broadcasts").to_owned()
    };
    let d_patch_out = bcast(d_combined.slice(s![.., ..c]), cache.patch_feat.nrows());
    let d_shape_out = bcast(d_combined.slice(s![.., c..]), cache.subsample.nrows());

    let (mut d_patch_feat, d_patch_latent) = head_backward(
        &params.patch_contrib,
        &cache.patch_contrib,
        &cache.patch_feat,
        cache.patch_latent.output(),
        d_patch_out,
        &mut grads.patch_contrib,
    );
    let (mut d_shape_feat, d_shape_latent) = head_backward(
        &params.shape_contrib,
        &cache.shape_contrib,
        cache.shape_point.output(),
        cache.shape_latent.output(),
        d_shape_out,
        &mut grads.shape_contrib,
    );

    let mut d_global = mlp_backward(&params.patch_latent, &cache.patch_latent, d_patch_latent, true, &mut grads.patch_latent);
    d_global += &mlp_backward(&params.shape_latent, &cache.shape_latent, d_shape_latent, true, &mut grads.shape_latent);

    let d_patch_pool = d_global.slice(s![.., ..g_width]).to_owned();
    let d_shape_pool = d_global.slice(s![.., g_width..]).to_owned();
    let d_patch_exp = max_pool_backward(&d_patch_pool, &cache.patch_arg, cache.patch_feat.nrows());
    let d_shape_exp = max_pool_backward(&d_shape_pool, &cache.shape_arg, cache.subsample.nrows());
    d_patch_feat += &mlp_backward(&params.patch_expand, &cache.patch_expand, d_patch_exp, true, &mut grads.patch_expand);
    d_shape_feat += &mlp_backward(&params.shape_expand, &cache.shape_expand, d_shape_exp, true, &mut grads.shape_expand);

    let mut d_point_feat = d_patch_feat.slice(s![.., ..f]).to_owned();
    let d_local = d_patch_feat.slice(s![.., f..]).to_owned();
    let (d_from_sef, d_knn) = sef_backward(
        &params.sef,
        &cache.sef,
        cache.patch_point.output(),
        &cache.knn,
        k,
        &d_local,
        &mut grads.sef,
    );
    d_point_feat += &d_from_sef;

    let d_patch = mlp_backward(&params.patch_point, &cache.patch_point, d_point_feat, false, &mut grads.patch_point);
    let d_sub = mlp_backward(&params.shape_point, &cache.shape_point, d_shape_feat, false, &mut grads.shape_point);

    let mut d_m = x.patch.t().dot(&d_patch);
    general_mat_mul(R::one(), &x.subsample.t(), &d_sub, R::one(), &mut d_m);
    general_mat_mul(R::one(), &x.knn.t(), &d_knn, R::one(), &mut d_m);
    let d_t = Array2::from_shape_fn((1, 9), |(_, j)| d_m[[j / 3, j % 3]]);
    let d_pool = mlp_backward(&params.stn_fc, &cache.stn.fc, d_t, true, &mut grads.stn_fc);
    let rows = cache.stn.point.acts[0].nrows();
    let d_point = max_pool_backward(&d_pool, &cache.stn.arg, rows);
    mlp_backward(&params.stn_point, &cache.stn.point, d_point, false, &mut grads.stn_point);
}

/// Loss and gradient of `(f(x) - target)²` for one sample, scaled by
/// `weight`, accumulated into `grads`.
pub fn loss_and_gradient<R: Real>(
    params: &NetworkParams<R>,
    x: &SampleTensors<R>,
    weight: R,
    grads: &mut NetworkParams<R>,
) -> Result<R> {
    let cache = forward(params, x)?;
    let d = R::lit(2.0) * (cache.output - x.target) * weight;
    backward(params, x, &cache, d, grads);
    Ok(loss_l2(cache.output, x.target))
}

impl<R: Real> ForwardCache<R> {
    /// Which piece of the piecewise-smooth network this evaluation lies on:
    /// the sign of every ReLU output and every max-pool winner.
    pub fn activation_pattern(&self) -> Vec<u64> {
        let mut bits = Vec::new();
        let mut push_signs = |a: &Array2<R>| bits.extend(a.iter().map(|v| (*v > R::zero()) as u64));
        for c in [
            &self.stn.point,
            &self.stn.fc,
            &self.patch_point,
            &self.shape_point,
            &self.sef.rest,
            &self.patch_expand,
            &self.shape_expand,
            &self.patch_latent,
            &self.shape_latent,
            &self.patch_contrib.rest,
            &self.shape_contrib.rest,
            &self.combine,
        ] {
            c.acts.iter().skip(1).for_each(&mut push_signs);
        }
        push_signs(&self.sef.first);
        push_signs(&self.patch_contrib.first);
        push_signs(&self.shape_contrib.first);
        for arg in [&self.stn.arg, &self.sef.arg, &self.patch_arg, &self.shape_arg] {
            bits.extend(arg.iter().map(|&i| i as u64));
        }
        bits
    }
}
