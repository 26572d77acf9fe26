use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gauss::{modified_indicator, ModifiedIndicatorParams};
use crate::geometry::{sample_surface, TriangleBvh, TriangleMesh, Vec3};
use crate::seed;

/// A query location with its ground-truth modified indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub point: Vec3,
    pub target: f64,
}

/// Signed distance and modified-indicator targets for a fixed mesh, with
/// the triangle hierarchy built once.
pub struct GroundTruth<'a> {
    mesh: &'a TriangleMesh,
    bvh: TriangleBvh,
}

impl<'a> GroundTruth<'a> {
    pub fn new(mesh: &'a TriangleMesh) -> Self {
        Self {
            mesh,
            bvh: TriangleBvh::new(mesh),
        }
    }

    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.bvh.signed_distance(self.mesh, x)
    }

    pub fn target(&self, x: &Vec3, params: &ModifiedIndicatorParams) -> f64 {
        modified_indicator(self.signed_distance(x), params)
    }
}

/// `n_near` points offset from the surface along the face normal by a
/// Gaussian of std `2w` (clipped to `±4w`), followed by `n_cube` points
/// uniform in the unit cube. Targets are the modified indicator of the
/// signed distance to `mesh`.
pub fn generate_queries(
    mesh: &TriangleMesh,
    n_near: usize,
    n_cube: usize,
    params: &ModifiedIndicatorParams,
    seed: u64,
) -> Result<Vec<Query>> {
    if mesh.triangles.is_empty() {
        return Err(Error::Contract("cannot generate queries for an empty mesh".into()));
    }
    let mut points = Vec::with_capacity(n_near + n_cube);
    if n_near > 0 {
        let base = sample_surface(mesh, n_near, seed::mix(seed, 0))?;
        let normals = base.normals.as_ref().expect("sample_surface attaches normals");
        let offset = Normal::new(0.0, 2.0 * params.w).expect("w is positive");
        let limit = 4.0 * params.w;
        let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, 1));
        for (p, n) in base.positions.iter().zip(normals) {
            let t: f64 = offset.sample(&mut rng);
            points.push(p + n * t.clamp(-limit, limit));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed::mix(seed, 2));
    for _ in 0..n_cube {
        points.push(Vec3::new(rng.random(), rng.random(), rng.random()));
    }
    let truth = GroundTruth::new(mesh);
    Ok(points
        .into_par_iter()
        .map(|point| Query {
            point,
            target: truth.target(&point, params),
        })
        .collect())
}
