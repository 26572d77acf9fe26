use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{KdTree, OrientedPointSet, Vec3};

/// Network input for one query: the local patch, the global subsample and
/// the neighbour coordinates of every patch point, all translated so the
/// query sits at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct QuerySample {
    /// Query location in world coordinates.
    pub query: [f32; 3],
    /// `n_d` nearest cloud points, nearest first.
    pub patch: Vec<[f32; 3]>,
    /// `n_s` uniformly drawn cloud points.
    pub subsample: Vec<[f32; 3]>,
    /// Row-major `n_d × k`: the `k` nearest neighbours of each patch point
    /// inside `patch ∪ subsample`, the point itself excluded.
    pub knn: Vec<[f32; 3]>,
    pub target: f32,
}

impl QuerySample {
    pub fn n_d(&self) -> usize {
        self.patch.len()
    }

    pub fn n_s(&self) -> usize {
        self.subsample.len()
    }

    /// Neighbour count per patch point, or 0 for an empty patch.
    pub fn k(&self) -> usize {
        self.knn.len().checked_div(self.patch.len()).unwrap_or(0)
    }

    /// Checks that the sample has the given dimensions.
    pub fn check_dims(&self, n_d: usize, n_s: usize, k: usize) -> Result<()> {
        if self.patch.len() != n_d || self.subsample.len() != n_s || self.knn.len() != n_d * k {
            return Err(Error::Contract(format!(
                "sample has n_d={}, n_s={}, {} neighbour rows; expected n_d={n_d}, n_s={n_s}, k={k}",
                self.patch.len(),
                self.subsample.len(),
                self.knn.len()
            )));
        }
        Ok(())
    }
}

fn centered(p: &Vec3, x: &Vec3) -> [f32; 3] {
    let d = p - x;
    [d.x as f32, d.y as f32, d.z as f32]
}

/// Builds [`QuerySample`]s from one cloud, reusing its k-d tree.
pub struct SampleBuilder<'a> {
    positions: &'a [Vec3],
    tree: KdTree,
    n_d: usize,
    n_s: usize,
    k: usize,
}

impl<'a> SampleBuilder<'a> {
    pub fn new(cloud: &'a OrientedPointSet, n_d: usize, n_s: usize, k: usize) -> Result<Self> {
        if n_d == 0 || n_s == 0 || k == 0 {
            return Err(Error::Contract(format!(
                "n_d, n_s and k must be positive (got {n_d}, {n_s}, {k})"
            )));
        }
        if cloud.len() < n_d {
            return Err(Error::Contract(format!(
                "cloud has {} points, fewer than n_d = {n_d}",
                cloud.len()
            )));
        }
        Ok(Self {
            positions: &cloud.positions,
            tree: KdTree::new(&cloud.positions),
            n_d,
            n_s,
            k,
        })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n_d, self.n_s, self.k)
    }

    /// Indices of the local patch of `x`, nearest first.
    pub fn patch_indices(&self, x: &Vec3) -> Result<Vec<usize>> {
        self.tree.knn(x, self.n_d)
    }

    /// Sample for query `x` with the given target. `seed` drives the
    /// subsample draw only.
    pub fn build(&self, x: &Vec3, target: f64, seed: u64) -> Result<QuerySample> {
        let patch_idx = self.patch_indices(x)?;
        let n = self.positions.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sub_idx: Vec<usize> = if self.n_s <= n {
            index::sample(&mut rng, n, self.n_s).into_vec()
        } else {
            (0..self.n_s).map(|_| rng.random_range(0..n)).collect()
        };

        // The neighbour search runs over distinct cloud points so that a
        // point drawn into both sets is never its own neighbour.
        let mut union_idx: Vec<usize> = patch_idx.iter().chain(&sub_idx).copied().collect();
        union_idx.sort_unstable();
        union_idx.dedup();
        let union_pts: Vec<Vec3> = union_idx.iter().map(|&i| self.positions[i] - x).collect();
        let union_tree = KdTree::new(&union_pts);

        let mut knn = Vec::with_capacity(self.n_d * self.k);
        for &pi in &patch_idx {
            let local = self.positions[pi] - x;
            let found = union_tree.knn(&local, self.k + 1)?;
            let mut row: Vec<[f32; 3]> = found
                .into_iter()
                .filter(|&u| union_idx[u] != pi)
                .take(self.k)
                .map(|u| centered(&union_pts[u], &Vec3::zeros()))
                .collect();
            let pad = row.last().copied().unwrap_or_else(|| centered(&local, &Vec3::zeros()));
            row.resize(self.k, pad);
            knn.extend(row);
        }

        Ok(QuerySample {
            query: [x.x as f32, x.y as f32, x.z as f32],
            patch: patch_idx.iter().map(|&i| centered(&self.positions[i], x)).collect(),
            subsample: sub_idx.iter().map(|&i| centered(&self.positions[i], x)).collect(),
            knn,
            target: target as f32,
        })
    }
}

/// One-off version of [`SampleBuilder::build`] with a zero target.
pub fn build_sample(
    cloud: &OrientedPointSet,
    x: &Vec3,
    n_d: usize,
    n_s: usize,
    k: usize,
    seed: u64,
) -> Result<QuerySample> {
    SampleBuilder::new(cloud, n_d, n_s, k)?.build(x, 0.0, seed)
}
