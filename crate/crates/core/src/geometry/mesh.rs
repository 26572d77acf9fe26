use std::collections::HashMap;

use super::Vec3;
use crate::error::{Error, Result};

/// Triangles with an area at or below this are considered degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    /// The `[0,1]^3` cube normalized meshes live in.
    pub fn unit_cube() -> Self {
        Self::new(Vec3::zeros(), Vec3::repeat(1.0))
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let (min, max) = it.fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
        Some(Self { min, max })
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn expanded(&self, margin: f64) -> Self {
        Self::new(
            self.min - Vec3::repeat(margin),
            self.max + Vec3::repeat(margin),
        )
    }

    /// Squared distance from `p` to the box (0 inside).
    pub fn distance_squared(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for a in 0..3 {
            let v = if p[a] < self.min[a] {
                self.min[a] - p[a]
            } else if p[a] > self.max[a] {
                p[a] - self.max[a]
            } else {
                0.0
            };
            d2 += v * v;
        }
        d2
    }
}

/// Indexed triangle mesh. Counter-clockwise vertex order (seen from outside)
/// gives the outward normal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[usize; 3]>,
}

impl TriangleMesh {
    /// Builds a mesh, checking every index refers to an existing vertex.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some((t, tri)) = triangles
            .iter()
            .enumerate()
            .find(|(_, tri)| tri.iter().any(|&i| i >= n))
        {
            return Err(Error::Validation(format!(
                "triangle {t} references vertex {:?} but the mesh has {n} vertices",
                tri
            )));
        }
        Ok(Self {
            vertices,
            triangles,
        })
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    #[inline]
    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    /// Unnormalized normal; its length is twice the triangle area.
    #[inline]
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn face_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    /// Unit face normal, or the zero vector for a degenerate face.
    pub fn face_normal(&self, t: usize) -> Vec3 {
        let n = self.face_cross(t);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.face_area(t)).sum()
    }

    pub fn bounding_box(&self) -> Option<Aabb> {
        Aabb::from_points(&self.vertices)
    }

    /// Checks that the mesh is closed and consistently oriented: every
    /// directed edge appears once and its reverse appears once. Also rejects
    /// degenerate triangles.
    pub fn validate_watertight(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::Validation("mesh has no triangles".into()));
        }
        for t in 0..self.triangles.len() {
            if self.face_area(t) <= MIN_TRIANGLE_AREA {
                return Err(Error::Validation(format!(
                    "triangle {t} {:?} is degenerate (area {:e})",
                    self.triangles[t],
                    self.face_area(t)
                )));
            }
        }
        let mut directed: HashMap<(usize, usize), usize> = HashMap::new();
        for tri in &self.triangles {
            for e in 0..3 {
                *directed.entry((tri[e], tri[(e + 1) % 3])).or_insert(0) += 1;
            }
        }
        // Walk triangles in order so the reported edge is deterministic.
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                let fwd = directed[&(a, b)];
                let rev = directed.get(&(b, a)).copied().unwrap_or(0);
                if fwd != 1 || rev != 1 {
                    return Err(Error::Validation(format!(
                        "edge ({a}, {b}) is not shared by exactly two oppositely oriented \
                         triangles ({fwd} with this orientation, {rev} reversed)"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Same surface with every triangle's orientation reversed.
    pub fn flipped(&self) -> Self {
        Self {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    /// Applies `f` to every vertex.
    pub fn map_vertices(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self {
            vertices: self.vertices.iter().map(f).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Uniformly scales the mesh so its longest bounding-box side is 1 and
    /// centers the box at (0.5, 0.5, 0.5).
    pub fn normalized(&self) -> Result<Self> {
        let bbox = self
            .bounding_box()
            .ok_or_else(|| Error::Validation("cannot normalize an empty mesh".into()))?;
        let longest = bbox.extent().max();
        if !(longest > 0.0) || !longest.is_finite() {
            return Err(Error::Validation(format!(
                "mesh has degenerate extent {longest}"
            )));
        }
        let center = bbox.center();
        let half = Vec3::repeat(0.5);
        Ok(self.map_vertices(|v| (v - center) / longest + half))
    }

    /// Euler characteristic V - E + F over referenced vertices.
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        let mut used = vec![false; self.vertices.len()];
        for tri in &self.triangles {
            for e in 0..3 {
                let (a, b) = (tri[e], tri[(e + 1) % 3]);
                edges.insert((a.min(b), a.max(b)));
                used[a] = true;
            }
        }
        let v = used.iter().filter(|&&u| u).count() as i64;
        v - edges.len() as i64 + self.triangles.len() as i64
    }
}

/// Normalizes a mesh into the unit cube; see [`TriangleMesh::normalized`].
pub fn normalize_mesh(mesh: &TriangleMesh) -> Result<TriangleMesh> {
    mesh.normalized()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;
    use approx::assert_abs_diff_eq;

    fn box_mesh(ext: Vec3) -> TriangleMesh {
        primitives::unit_cube().map_vertices(|v| v.component_mul(&ext))
    }

    #[test]
    fn rejects_out_of_range_index() {
        let err = TriangleMesh::new(vec![Vec3::zeros(); 2], vec![[0, 1, 2]]).unwrap_err();
        assert!(matches!(err, Error::Validation(_)));
    }

    #[test]
    fn cube_is_watertight() {
        primitives::unit_cube().validate_watertight().unwrap();
    }

    #[test]
    fn open_mesh_names_first_bad_edge() {
        let mut cube = primitives::unit_cube();
        cube.triangles.pop();
        let msg = cube.validate_watertight().unwrap_err().to_string();
        assert!(msg.contains("edge ("), "{msg}");
    }

    #[test]
    fn normalize_cube_edge_two() {
        let m = box_mesh(Vec3::repeat(2.0)).normalized().unwrap();
        let bb = m.bounding_box().unwrap();
        assert_abs_diff_eq!(bb.min, Vec3::zeros(), epsilon = 1e-12);
        assert_abs_diff_eq!(bb.max, Vec3::repeat(1.0), epsilon = 1e-12);
    }

    #[test]
    fn normalize_is_idempotent() {
        let once = primitives::icosphere(2).normalized().unwrap();
        let twice = once.normalized().unwrap();
        for (a, b) in once.vertices.iter().zip(&twice.vertices) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_box_scales_longest_axis() {
        let m = box_mesh(Vec3::new(4.0, 2.0, 1.0)).normalized().unwrap();
        let bb = m.bounding_box().unwrap();
        assert_abs_diff_eq!(bb.extent(), Vec3::new(1.0, 0.5, 0.25), epsilon = 1e-12);
        assert_abs_diff_eq!(bb.center(), Vec3::repeat(0.5), epsilon = 1e-12);
    }

    #[test]
    fn normalize_rejects_point_mesh() {
        let m = TriangleMesh::new(vec![Vec3::repeat(1.0); 3], vec![[0, 1, 2]]).unwrap();
        assert!(matches!(m.normalized(), Err(Error::Validation(_))));
    }

    #[test]
    fn sphere_euler_characteristic() {
        assert_eq!(primitives::icosphere(3).euler_characteristic(), 2);
        assert_eq!(primitives::torus(0.3, 0.1, 24, 12).euler_characteristic(), 0);
    }
}
