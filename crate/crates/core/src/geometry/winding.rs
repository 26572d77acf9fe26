use std::f64::consts::PI;

use super::{TriangleMesh, Vec3};

/// Value returned by [`solid_angle_winding`] for query points lying on the
/// surface, matching the indicator's boundary value.
pub const ON_SURFACE_WINDING: f64 = 0.5;

/// Relative tolerance under which a query counts as lying on a triangle.
const ON_TRIANGLE_TOL: f64 = 1e-12;

/// Signed solid angle subtended by triangle `(a, b, c)` at `x`
/// (Van Oosterom–Strackee, via `atan2`). Positive when `x` is behind the
/// counter-clockwise face. Returns `None` when `x` lies on the closed
/// triangle, where the angle is undefined.
#[inline]
pub fn triangle_solid_angle(x: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Option<f64> {
    let a = a - x;
    let b = b - x;
    let c = c - x;
    let la = a.norm();
    let lb = b.norm();
    let lc = c.norm();
    let scale = la * lb * lc;
    if scale == 0.0 {
        return None;
    }
    let det = a.dot(&b.cross(&c));
    let den = scale + a.dot(&b) * lc + a.dot(&c) * lb + b.dot(&c) * la;
    if det.abs() <= ON_TRIANGLE_TOL * scale && den <= ON_TRIANGLE_TOL * scale {
        return None;
    }
    Some(2.0 * det.atan2(den))
}

/// Generalized winding number of `x` with respect to the mesh: the sum of
/// signed solid angles divided by 4π. For a closed outward-oriented mesh this
/// is the indicator: 1 inside, 0 outside. Points on the surface return
/// [`ON_SURFACE_WINDING`].
pub fn solid_angle_winding(mesh: &TriangleMesh, x: &Vec3) -> f64 {
    let mut total = 0.0;
    for &[i, j, k] in &mesh.triangles {
        match triangle_solid_angle(x, &mesh.vertices[i], &mesh.vertices[j], &mesh.vertices[k]) {
            Some(omega) => total += omega,
            None => return ON_SURFACE_WINDING,
        }
    }
    total / (4.0 * PI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use approx::assert_abs_diff_eq;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    #[test]
    fn cube_inside_outside_and_face() {
        let cube = primitives::unit_cube();
        assert_abs_diff_eq!(solid_angle_winding(&cube, &Vec3::repeat(0.5)), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(solid_angle_winding(&cube, &Vec3::repeat(5.0)), 0.0, epsilon = 1e-9);
        assert_abs_diff_eq!(
            solid_angle_winding(&cube, &Vec3::new(0.5, 0.5, 1.0)),
            0.5,
            epsilon = 1e-6
        );
    }

    #[test]
    fn face_interior_point_is_boundary() {
        let cube = primitives::unit_cube();
        let w = solid_angle_winding(&cube, &Vec3::new(0.2, 0.7, 0.0));
        assert_abs_diff_eq!(w, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn reversed_orientation_negates() {
        let sphere = primitives::icosphere(2);
        let flipped = sphere.flipped();
        assert_abs_diff_eq!(solid_angle_winding(&flipped, &Vec3::zeros()), -1.0, epsilon = 1e-9);
        // Open surface: a single triangle.
        let tri = crate::geometry::TriangleMesh::new(
            vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let x = Vec3::new(0.2, 0.3, -0.4);
        let v = solid_angle_winding(&tri, &x);
        assert!(v > 0.0);
        assert_abs_diff_eq!(solid_angle_winding(&tri.flipped(), &x), -v, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn rigid_motion_equivariance(
            axis in (-1.0f64..1.0, -1.0f64..1.0, 0.1f64..1.0),
            angle in 0.0f64..6.28,
            shift in (-3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
            q in (-1.5f64..1.5, -1.5f64..1.5, -1.5f64..1.5),
        ) {
            let mesh = primitives::torus(0.6, 0.25, 16, 8);
            let rot = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(axis.0, axis.1, axis.2)), angle);
            let t = Vec3::new(shift.0, shift.1, shift.2);
            let moved = mesh.map_vertices(|v| rot * v + t);
            let x = Vec3::new(q.0, q.1, q.2);
            let a = solid_angle_winding(&mesh, &x);
            let b = solid_angle_winding(&moved, &(rot * x + t));
            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }
}
