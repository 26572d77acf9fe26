use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{OrientedPointSet, Vec3};

/// A cloud after hole punching, with the indices (into the input) that
/// survived.
#[derive(Debug, Clone, PartialEq)]
pub struct PunchedCloud {
    pub cloud: OrientedPointSet,
    pub kept: Vec<usize>,
    pub center: Vec3,
    pub radius: f64,
}

/// Removes every point within a random radius of a random cloud point. The
/// radius is uniform in `radius_range`. Fails when fewer than `min_remaining`
/// points would survive.
pub fn punch_holes(
    points: &OrientedPointSet,
    radius_range: [f64; 2],
    min_remaining: usize,
    seed: u64,
) -> Result<PunchedCloud> {
    let [lo, hi] = radius_range;
    if !(0.0 <= lo && lo <= hi && hi.is_finite()) {
        return Err(Error::Contract(format!("bad hole radius range [{lo}, {hi}]")));
    }
    if points.is_empty() {
        return Err(Error::EmptyResult);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = points.positions[rng.random_range(0..points.len())];
    let radius = if hi > lo { rng.random_range(lo..=hi) } else { lo };
    punch_hole_at(points, center, radius, min_remaining)
}

/// Removes every point strictly closer than `radius` to `center`.
pub fn punch_hole_at(
    points: &OrientedPointSet,
    center: Vec3,
    radius: f64,
    min_remaining: usize,
) -> Result<PunchedCloud> {
    let kept: Vec<usize> = (0..points.len())
        .filter(|&i| (points.positions[i] - center).norm() >= radius)
        .collect();
    if kept.len() < min_remaining {
        return Err(Error::Validation(format!(
            "hole of radius {radius:.4} leaves {} points, fewer than the required {min_remaining}",
            kept.len()
        )));
    }
    Ok(PunchedCloud {
        cloud: points.select(&kept),
        kept,
        center,
        radius,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::fibonacci_sphere;

    #[test]
    fn zero_radius_keeps_everything() {
        let s = fibonacci_sphere(&Vec3::zeros(), 1.0, 500).unwrap();
        let out = punch_holes(&s, [0.0, 0.0], 1, 4).unwrap();
        assert_eq!(out.cloud, s);
    }

    #[test]
    fn north_pole_hole_is_empty() {
        let s = fibonacci_sphere(&Vec3::zeros(), 1.0, 5000).unwrap();
        let pole = Vec3::z();
        let out = punch_hole_at(&s, pole, 0.3, 10).unwrap();
        assert!(out.cloud.len() < s.len());
        assert!(out.cloud.positions.iter().all(|p| (p - pole).norm() >= 0.3));
    }

    #[test]
    fn same_seed_same_survivors() {
        let s = fibonacci_sphere(&Vec3::zeros(), 1.0, 2000).unwrap();
        let a = punch_holes(&s, [0.1, 0.3], 10, 77).unwrap();
        let b = punch_holes(&s, [0.1, 0.3], 10, 77).unwrap();
        assert_eq!(a.kept, b.kept);
        assert!((0.1..=0.3).contains(&a.radius));
    }

    #[test]
    fn refuses_to_strip_the_cloud() {
        let s = fibonacci_sphere(&Vec3::zeros(), 1.0, 100).unwrap();
        assert!(matches!(punch_hole_at(&s, Vec3::zeros(), 5.0, 1), Err(Error::Validation(_))));
    }
}
