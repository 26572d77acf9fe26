use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{OrientedPointSet, TriangleMesh};
#[cfg(test)]
use super::Vec3;
use crate::error::{Error, Result};

/// Draws `n` points uniformly by area. Each point carries the unit normal of
/// the face it came from and an area weight of `total_area / n`.
/// Deterministic in `seed`.
pub fn sample_surface(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<OrientedPointSet> {
    if n == 0 {
        return Err(Error::Contract("sample_surface needs n >= 1".into()));
    }
    if mesh.triangles.is_empty() {
        return Err(Error::Contract("cannot sample a mesh without triangles".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.triangles.len());
    let mut total = 0.0;
    for t in 0..mesh.triangles.len() {
        total += mesh.face_area(t);
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::Validation("mesh has zero surface area".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let t = cumulative
            .partition_point(|&c| c <= target)
            .min(mesh.triangles.len() - 1);
        let (r1, r2): (f64, f64) = (rng.random(), rng.random());
        let s = r1.sqrt();
        let [a, b, c] = mesh.corners(t);
        positions.push(a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2));
        normals.push(mesh.face_normal(t));
    }
    let weight = total / n as f64;
    Ok(OrientedPointSet {
        positions,
        normals: Some(normals),
        areas: Some(vec![weight; n]),
    })
}

/// Barycentric residual of `p` w.r.t. triangle `(a, b, c)`: the distance
/// between `p` and its reconstruction from clamped barycentric coordinates.
#[cfg(test)]
pub(crate) fn barycentric_residual(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - super::closest_point_on_triangle(p, a, b, c)).norm()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use approx::assert_relative_eq;

    fn unit_square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(1.0, 0.0, 0.0),
                Vec3::new(1.0, 1.0, 0.0),
                Vec3::new(0.0, 1.0, 0.0),
            ],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn square_sample_mean_near_centroid() {
        let pts = sample_surface(&unit_square(), 10_000, 3).unwrap();
        let mean = pts.positions.iter().sum::<Vec3>() / 10_000.0;
        assert!((mean - Vec3::new(0.5, 0.5, 0.0)).norm() < 0.02, "{mean}");
    }

    #[test]
    fn single_point_lies_on_a_triangle() {
        let mesh = primitives::icosphere(2);
        let pts = sample_surface(&mesh, 1, 11).unwrap();
        let p = pts.positions[0];
        let best = (0..mesh.triangles.len())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                barycentric_residual(&p, &a, &b, &c)
            })
            .fold(f64::INFINITY, f64::min);
        assert!(best < 1e-9);
    }

    #[test]
    fn deterministic_in_seed() {
        let mesh = primitives::torus(0.3, 0.1, 12, 6);
        let a = sample_surface(&mesh, 500, 9).unwrap();
        let b = sample_surface(&mesh, 500, 9).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, sample_surface(&mesh, 500, 10).unwrap());
    }

    #[test]
    fn area_weights_sum_to_surface_area() {
        for mesh in [primitives::unit_cube(), primitives::icosphere(3), primitives::torus(0.3, 0.1, 20, 8)] {
            let pts = sample_surface(&mesh, 777, 1).unwrap();
            let sum: f64 = pts.areas.as_ref().unwrap().iter().sum();
            assert_relative_eq!(sum, mesh.surface_area(), max_relative = 1e-6);
            pts.validate().unwrap();
        }
    }
}
