//! Closed test shapes: cube, icosphere and torus, all outward oriented.

use std::collections::HashMap;

use super::{TriangleMesh, Vec3};

/// The cube `[0,1]^3` as 8 vertices and 12 triangles.
pub fn unit_cube() -> TriangleMesh {
    let vertices = (0..8)
        .map(|i| Vec3::new((i & 1) as f64, ((i >> 1) & 1) as f64, ((i >> 2) & 1) as f64))
        .collect();
    let triangles = vec![
        // z = 0
        [0, 2, 3],
        [0, 3, 1],
        // z = 1
        [4, 5, 7],
        [4, 7, 6],
        // y = 0
        [0, 1, 5],
        [0, 5, 4],
        // y = 1
        [2, 6, 7],
        [2, 7, 3],
        // x = 0
        [0, 4, 6],
        [0, 6, 2],
        // x = 1
        [1, 3, 7],
        [1, 7, 5],
    ];
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Unit-radius icosphere centered at the origin, built by `subdivisions`
/// rounds of 4-to-1 splitting of an icosahedron.
pub fn icosphere(subdivisions: u32) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut mid = |a: usize, b: usize, vertices: &mut Vec<Vec3>| -> usize {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                vertices.push(((vertices[a] + vertices[b]) * 0.5).normalize());
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Torus around the z axis with tube center radius `major` and tube radius
/// `minor`, centered at the origin.
pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let u = i as f64 / segments as f64 * std::f64::consts::TAU;
        for j in 0..sides {
            let v = j as f64 / sides as f64 * std::f64::consts::TAU;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| (i % segments) * sides + (j % sides);
    let mut triangles = Vec::with_capacity(2 * segments * sides);
    for i in 0..segments {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh {
        vertices,
        triangles,
    }
}

/// Sphere of the given radius and center, as an icosphere.
pub fn sphere(center: Vec3, radius: f64, subdivisions: u32) -> TriangleMesh {
    icosphere(subdivisions).map_vertices(|v| center + v * radius)
}
