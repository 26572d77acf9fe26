use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{Dense, Real};
use crate::error::{Error, Result};

/// Sizes of every part of the network. Width lists name hidden or output
/// widths; the final widths of `stn_fc` (9), `contrib` (`c`) and `combine`
/// (1) are implied.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkDims {
    pub n_d: usize,
    pub n_s: usize,
    pub k: usize,
    /// Width of each per-point contribution vector.
    pub c: usize,
    pub stn_point: Vec<usize>,
    pub stn_fc: Vec<usize>,
    /// Shared per-point MLP of both branches; the last entry is the point
    /// feature width.
    pub point: Vec<usize>,
    /// Local-feature MLP of the SEF extractor; the last entry is the local
    /// feature width.
    pub sef: Vec<usize>,
    /// Per-point expansion before pooling; the last entry is the pooled
    /// width of each branch.
    pub expand: Vec<usize>,
    /// Latent MLP from the concatenated pools; the last entry is the latent
    /// width.
    pub latent: Vec<usize>,
    pub contrib_hidden: Vec<usize>,
    pub combine_hidden: Vec<usize>,
}

impl NetworkDims {
    /// Full-size network: `n_d = 200`, `n_s = 1000`, `k = 10`, 1024-wide pools.
    pub fn paper() -> Self {
        Self {
            n_d: 200,
            n_s: 1000,
            k: 10,
            c: 16,
            stn_point: vec![64, 128, 1024],
            stn_fc: vec![512, 256],
            point: vec![64, 64],
            sef: vec![64, 64],
            expand: vec![128, 1024],
            latent: vec![1024],
            contrib_hidden: vec![256, 64],
            combine_hidden: vec![64],
        }
    }

    /// A network that trains on one CPU core in minutes.
    pub fn desk() -> Self {
        Self {
            n_d: 32,
            n_s: 64,
            k: 5,
            c: 8,
            stn_point: vec![16, 32],
            stn_fc: vec![16],
            point: vec![32, 32],
            sef: vec![32],
            expand: vec![64],
            latent: vec![32],
            contrib_hidden: vec![32, 16],
            combine_hidden: vec![32],
        }
    }

    /// Smallest sensible network, used for gradient checks.
    pub fn tiny() -> Self {
        Self {
            n_d: 8,
            n_s: 16,
            k: 3,
            c: 4,
            stn_point: vec![6, 8],
            stn_fc: vec![6],
            point: vec![6, 5],
            sef: vec![6, 4],
            expand: vec![7],
            latent: vec![6],
            contrib_hidden: vec![5, 4],
            combine_hidden: vec![5],
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(Self::paper()),
            "desk" => Ok(Self::desk()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::Validation(format!(
                "unknown network preset `{other}` (expected paper, desk or tiny)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let scalars = [("n_d", self.n_d), ("n_s", self.n_s), ("k", self.k), ("c", self.c)];
        for (name, v) in scalars {
            if v == 0 {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        let lists = [
            ("stn_point", &self.stn_point),
            ("point", &self.point),
            ("sef", &self.sef),
            ("expand", &self.expand),
            ("latent", &self.latent),
        ];
        for (name, l) in lists {
            if l.is_empty() || l.contains(&0) {
                return Err(Error::Validation(format!("{name} needs at least one positive width")));
            }
        }
        for (name, l) in [
            ("stn_fc", &self.stn_fc),
            ("contrib_hidden", &self.contrib_hidden),
            ("combine_hidden", &self.combine_hidden),
        ] {
            if l.contains(&0) {
                return Err(Error::Validation(format!("{name} widths must be positive")));
            }
        }
        Ok(())
    }

    pub fn point_width(&self) -> usize {
        *self.point.last().expect("validated")
    }

    pub fn local_width(&self) -> usize {
        *self.sef.last().expect("validated")
    }

    pub fn pooled_width(&self) -> usize {
        *self.expand.last().expect("validated")
    }

    pub fn latent_width(&self) -> usize {
        *self.latent.last().expect("validated")
    }

    /// Layer shapes `(fan_in, fan_out)` of every group, in [`GROUPS`] order.
    pub(crate) fn shapes(&self) -> Vec<Vec<(usize, usize)>> {
        fn chain(input: usize, widths: &[usize]) -> Vec<(usize, usize)> {
            let mut out = Vec::with_capacity(widths.len());
            let mut prev = input;
            for &w in widths {
                out.push((prev, w));
                prev = w;
            }
            out
        }
        let f = self.point_width();
        let lf = self.local_width();
        let g = self.pooled_width();
        let l = self.latent_width();
        let with_tail = |v: &[usize], tail: usize| v.iter().copied().chain([tail]).collect::<Vec<_>>();
        vec![
            chain(3, &self.stn_point),
            chain(*self.stn_point.last().expect("validated"), &with_tail(&self.stn_fc, 9)),
            chain(3, &self.point),
            chain(3, &self.point),
            chain(f + 3, &self.sef),
            chain(f + lf, &self.expand),
            chain(f, &self.expand),
            chain(2 * g, &self.latent),
            chain(2 * g, &self.latent),
            chain(f + lf + l, &with_tail(&self.contrib_hidden, self.c)),
            chain(f + l, &with_tail(&self.contrib_hidden, self.c)),
            chain(2 * self.c, &with_tail(&self.combine_hidden, 1)),
        ]
    }
}

/// Names of the layer groups, in storage order.
pub const GROUPS: [&str; 12] = [
    "stn_point_mlp",
    "stn_fc",
    "patch_point_mlp",
    "shape_point_mlp",
    "sef_mlp",
    "patch_expand_mlp",
    "shape_expand_mlp",
    "patch_global_fc",
    "shape_global_fc",
    "patch_contrib_mlp",
    "shape_contrib_mlp",
    "combine_fc",
];

/// All trainable tensors. The same type holds gradients and optimizer
/// moments.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<R> {
    pub dims: NetworkDims,
    pub stn_point: Vec<Dense<R>>,
    pub stn_fc: Vec<Dense<R>>,
    pub patch_point: Vec<Dense<R>>,
    pub shape_point: Vec<Dense<R>>,
    pub sef: Vec<Dense<R>>,
    pub patch_expand: Vec<Dense<R>>,
    pub shape_expand: Vec<Dense<R>>,
    pub patch_latent: Vec<Dense<R>>,
    pub shape_latent: Vec<Dense<R>>,
    pub patch_contrib: Vec<Dense<R>>,
    pub shape_contrib: Vec<Dense<R>>,
    pub combine: Vec<Dense<R>>,
}

impl<R: Real> NetworkParams<R> {
    /// All-zero tensors of the right shapes.
    pub fn zeros(dims: &NetworkDims) -> Result<Self> {
        dims.validate()?;
        let mut groups = dims
            .shapes()
            .into_iter()
            .map(|g| g.into_iter().map(|(i, o)| Dense::zeros(i, o)).collect::<Vec<_>>());
        let mut next = || groups.next().expect("twelve groups");
        Ok(Self {
            dims: dims.clone(),
            stn_point: next(),
            stn_fc: next(),
            patch_point: next(),
            shape_point: next(),
            sef: next(),
            patch_expand: next(),
            shape_expand: next(),
            patch_latent: next(),
            shape_latent: next(),
            patch_contrib: next(),
            shape_contrib: next(),
            combine: next(),
        })
    }

    /// Seeded initialization. ReLU layers use He-uniform weights, linear
    /// output layers Glorot-uniform; biases start at zero. The last STN layer
    /// is zero so the transform starts as the identity, and contribution
    /// output layers are scaled by the number of summed points.
    pub fn init(dims: &NetworkDims, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(dims)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_d = R::lit(dims.n_d as f64);
        let n_s = R::lit(dims.n_s as f64);
        for (gi, group) in p.groups_mut().into_iter().enumerate() {
            let n = group.len();
            for (li, layer) in group.iter_mut().enumerate() {
                let last = li + 1 == n;
                let linear = last && gi != 0 && gi != 2 && gi != 3;
                let (fi, fo) = (layer.fan_in() as f64, layer.fan_out() as f64);
                let bound = if linear { (6.0 / (fi + fo)).sqrt() } else { (6.0 / fi).sqrt() };
                layer.w.mapv_inplace(|_| R::lit(rng.random_range(-bound..bound)));
                if last {
                    match GROUPS[gi] {
                        "stn_fc" => layer.w.fill(R::zero()),
                        "patch_contrib_mlp" => layer.w.mapv_inplace(|v| v / n_d),
                        "shape_contrib_mlp" => layer.w.mapv_inplace(|v| v / n_s),
                        _ => {}
                    }
                }
            }
        }
        Ok(p)
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.dims).expect("dims were validated on construction")
    }

    pub fn groups(&self) -> [&Vec<Dense<R>>; 12] {
        [
            &self.stn_point,
            &self.stn_fc,
            &self.patch_point,
            &self.shape_point,
            &self.sef,
            &self.patch_expand,
            &self.shape_expand,
            &self.patch_latent,
            &self.shape_latent,
            &self.patch_contrib,
            &self.shape_contrib,
            &self.combine,
        ]
    }

    pub fn groups_mut(&mut self) -> [&mut Vec<Dense<R>>; 12] {
        [
            &mut self.stn_point,
            &mut self.stn_fc,
            &mut self.patch_point,
            &mut self.shape_point,
            &mut self.sef,
            &mut self.patch_expand,
            &mut self.shape_expand,
            &mut self.patch_latent,
            &mut self.shape_latent,
            &mut self.patch_contrib,
            &mut self.shape_contrib,
            &mut self.combine,
        ]
    }

    /// `(name, tensor)` pairs such as `patch_point_mlp.0.weight`, in a
    /// fixed order. Weights are `in × out`, biases length `out`.
    pub fn named_tensors(&self) -> Vec<(String, TensorRef<'_, R>)> {
        let mut out = Vec::new();
        for (name, group) in GROUPS.iter().zip(self.groups()) {
            for (i, layer) in group.iter().enumerate() {
                out.push((format!("{name}.{i}.weight"), TensorRef::Matrix(&layer.w)));
                out.push((format!("{name}.{i}.bias"), TensorRef::Vector(&layer.b)));
            }
        }
        out
    }

    /// Flat visit of every scalar, in [`NetworkParams::named_tensors`] order.
    pub fn for_each_mut(&mut self, mut f: impl FnMut(&mut R)) {
        for group in self.groups_mut() {
            for layer in group.iter_mut() {
                layer.w.iter_mut().for_each(&mut f);
                layer.b.iter_mut().for_each(&mut f);
            }
        }
    }

    /// Visits matching scalars of `self` and `other`, which must share dims.
    pub fn zip_mut_with(&mut self, other: &Self, mut f: impl FnMut(&mut R, R)) {
        for (ga, gb) in self.groups_mut().into_iter().zip(other.groups()) {
            for (a, b) in ga.iter_mut().zip(gb) {
                a.w.zip_mut_with(&b.w, |x, &y| f(x, y));
                a.b.zip_mut_with(&b.b, |x, &y| f(x, y));
            }
        }
    }

    /// Like [`NetworkParams::zip_mut_with`] with two companions.
    pub fn zip2_mut_with(&mut self, a: &Self, b: &Self, mut f: impl FnMut(&mut R, R, R)) {
        for ((gx, ga), gb) in self.groups_mut().into_iter().zip(a.groups()).zip(b.groups()) {
            for ((x, y), z) in gx.iter_mut().zip(ga).zip(gb) {
                ndarray::Zip::from(&mut x.w).and(&y.w).and(&z.w).for_each(|p, &u, &v| f(p, u, v));
                ndarray::Zip::from(&mut x.b).and(&y.b).and(&z.b).for_each(|p, &u, &v| f(p, u, v));
            }
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .map(|l| l.w.len() + l.b.len())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.groups()
            .iter()
            .flat_map(|g| g.iter())
            .all(|l| l.w.iter().chain(l.b.iter()).all(|v| v.is_finite()))
    }

    /// Converts every tensor to another scalar type.
    pub fn cast<S: Real>(&self) -> NetworkParams<S> {
        let c = |g: &Vec<Dense<R>>| g.iter().map(Dense::cast).collect::<Vec<_>>();
        NetworkParams {
            dims: self.dims.clone(),
            stn_point: c(&self.stn_point),
            stn_fc: c(&self.stn_fc),
            patch_point: c(&self.patch_point),
            shape_point: c(&self.shape_point),
            sef: c(&self.sef),
            patch_expand: c(&self.patch_expand),
            shape_expand: c(&self.shape_expand),
            patch_latent: c(&self.patch_latent),
            shape_latent: c(&self.shape_latent),
            patch_contrib: c(&self.patch_contrib),
            shape_contrib: c(&self.shape_contrib),
            combine: c(&self.combine),
        }
    }

    /// Looks up a tensor by its [`NetworkParams::named_tensors`] name.
    pub fn tensor_mut(&mut self, name: &str) -> Option<TensorMut<'_, R>> {
        let mut parts = name.split('.');
        let (group, index, kind) = (parts.next()?, parts.next()?, parts.next()?);
        if parts.next().is_some() {
            return None;
        }
        let gi = GROUPS.iter().position(|g| *g == group)?;
        let index: usize = index.parse().ok()?;
        let layer = self.groups_mut().into_iter().nth(gi)?.get_mut(index)?;
        match kind {
            "weight" => Some(TensorMut::Matrix(&mut layer.w)),
            "bias" => Some(TensorMut::Vector(&mut layer.b)),
            _ => None,
        }
    }
}

#[derive(Debug)]
pub enum TensorRef<'a, R> {
    Matrix(&'a Array2<R>),
    Vector(&'a Array1<R>),
}

impl<R: Copy> TensorRef<'_, R> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorRef::Matrix(m) => m.shape().to_vec(),
            TensorRef::Vector(v) => v.shape().to_vec(),
        }
    }

    pub fn values(&self) -> Vec<R> {
        match self {
            TensorRef::Matrix(m) => m.iter().copied().collect(),
            TensorRef::Vector(v) => v.iter().copied().collect(),
        }
    }
}

#[derive(Debug)]
pub enum TensorMut<'a, R> {
    Matrix(&'a mut Array2<R>),
    Vector(&'a mut Array1<R>),
}

impl<R: Copy> TensorMut<'_, R> {
    pub fn shape(&self) -> Vec<usize> {
        match self {
            TensorMut::Matrix(m) => m.shape().to_vec(),
            TensorMut::Vector(v) => v.shape().to_vec(),
        }
    }

    /// Overwrites the tensor from row-major values of the same length.
    pub fn assign(&mut self, values: &[R]) -> bool {
        match self {
            TensorMut::Matrix(m) if m.len() == values.len() => {
                m.iter_mut().zip(values).for_each(|(a, b)| *a = *b);
                true
            }
            TensorMut::Vector(v) if v.len() == values.len() => {
                v.iter_mut().zip(values).for_each(|(a, b)| *a = *b);
                true
            }
            _ => false,
        }
    }
}
