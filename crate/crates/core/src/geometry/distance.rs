use super::{solid_angle_winding, TriangleBvh, TriangleMesh, Vec3};

/// Closest point to `p` on triangle `(a, b, c)` (Voronoi-region walk).
///
/// The corners are visited in lexicographic order, so the result is the same
/// bits for every ordering of the same three points.
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> Vec3 {
    let mut corners = [a, b, c];
    corners.sort_by(|u, v| u.iter().partial_cmp(v.iter()).unwrap_or(std::cmp::Ordering::Equal));
    let [a, b, c] = corners;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

pub fn point_triangle_distance_squared(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    (p - closest_point_on_triangle(p, a, b, c)).norm_squared()
}

/// Signed distance from `x` to a closed, outward-oriented mesh, **positive
/// inside**. The sign comes from the solid-angle winding number; points on
/// the surface get magnitude 0.
pub fn signed_distance(mesh: &TriangleMesh, x: &Vec3) -> f64 {
    let d2 = (0..mesh.triangles.len())
        .map(|t| {
            let [a, b, c] = mesh.corners(t);
            point_triangle_distance_squared(x, &a, &b, &c)
        })
        .fold(f64::INFINITY, f64::min);
    let d = d2.sqrt();
    if solid_angle_winding(mesh, x) > 0.5 {
        d
    } else {
        -d
    }
}

impl TriangleBvh {
    /// Signed distance using the hierarchy for the magnitude. Same sign rule
    /// as [`signed_distance`].
    pub fn signed_distance(&self, mesh: &TriangleMesh, x: &Vec3) -> f64 {
        let d = self.closest(x).map_or(f64::INFINITY, |(_, d2)| d2.sqrt());
        if solid_angle_winding(mesh, x) > 0.5 {
            d
        } else {
            -d
        }
    }
}
