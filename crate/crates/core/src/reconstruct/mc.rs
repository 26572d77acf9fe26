//! Marching cubes with a case table derived from face rules at first use.

use std::collections::HashMap;
use std::sync::OnceLock;

use rayon::prelude::*;

use super::IndicatorGrid;
use crate::geometry::{TriangleMesh, Vec3, MIN_TRIANGLE_AREA};

const CORNERS: [[usize; 3]; 8] = [
    [0, 0, 0],
    [1, 0, 0],
    [1, 1, 0],
    [0, 1, 0],
    [0, 0, 1],
    [1, 0, 1],
    [1, 1, 1],
    [0, 1, 1],
];

const EDGES: [[usize; 2]; 12] = [
    [0, 1],
    [1, 2],
    [2, 3],
    [3, 0],
    [4, 5],
    [5, 6],
    [6, 7],
    [7, 4],
    [0, 4],
    [1, 5],
    [2, 6],
    [3, 7],
];

/// Cube faces as corner cycles starting at the face's lowest corner, with
/// the outward normal.
const FACES: [([usize; 4], [f64; 3]); 6] = [
    ([0, 1, 2, 3], [0.0, 0.0, -1.0]),
    ([4, 5, 6, 7], [0.0, 0.0, 1.0]),
    ([0, 1, 5, 4], [0.0, -1.0, 0.0]),
    ([3, 2, 6, 7], [0.0, 1.0, 0.0]),
    ([0, 3, 7, 4], [-1.0, 0.0, 0.0]),
    ([1, 2, 6, 5], [1.0, 0.0, 0.0]),
];

fn corner_pos(c: usize) -> Vec3 {
    let [x, y, z] = CORNERS[c];
    Vec3::new(x as f64, y as f64, z as f64)
}

fn edge_between(a: usize, b: usize) -> usize {
    EDGES
        .iter()
        .position(|&[p, q]| (p == a && q == b) || (p == b && q == a))
        .expect("face corners are cube-edge neighbours")
}

fn edge_mid(e: usize) -> Vec3 {
    let [a, b] = EDGES[e];
    (corner_pos(a) + corner_pos(b)) * 0.5
}

/// Boundary segments of the inside region on each face, oriented with the
/// inside on the left when the face is seen from outside the cell. On faces
/// with four crossings the diagonal through the face's lowest corner is
/// taken as connected, whatever its sign, so the rule agrees between the
/// two cells sharing a face and between a field and its complement.
fn face_segments(mask: u8) -> Vec<(usize, usize)> {
    let inside = |c: usize| mask & (1 << c) != 0;
    let mut segs = Vec::new();
    for (f, n) in FACES {
        let n = Vec3::from(n);
        let crossings: Vec<usize> = (0..4).filter(|&m| inside(f[m]) != inside(f[(m + 1) % 4])).collect();
        let mut push = |a: usize, b: usize, r: Vec3| {
            let (ma, mb) = (edge_mid(a), edge_mid(b));
            if (mb - ma).cross(&(r - ma)).dot(&n) >= 0.0 {
                segs.push((a, b));
            } else {
                segs.push((b, a));
            }
        };
        let center = f.iter().map(|&c| corner_pos(c)).sum::<Vec3>() / 4.0;
        match crossings.len() {
            0 => {}
            2 => {
                let a = edge_between(f[crossings[0]], f[(crossings[0] + 1) % 4]);
                let b = edge_between(f[crossings[1]], f[(crossings[1] + 1) % 4]);
                let ins: Vec<Vec3> = f.iter().filter(|&&c| inside(c)).map(|&c| corner_pos(c)).collect();
                let r = ins.iter().sum::<Vec3>() / ins.len() as f64;
                push(a, b, r);
            }
            4 => {
                for m in [1, 3] {
                    let c = f[m];
                    let a = edge_between(f[m - 1], c);
                    let b = edge_between(c, f[(m + 1) % 4]);
                    let r = if inside(c) { corner_pos(c) } else { center };
                    push(a, b, r);
                }
            }
            _ => unreachable!("a face cycle has an even number of sign changes"),
        }
    }
    segs
}

/// Triangles of one corner configuration. Entries below 12 are cube edges;
/// entry `12 + l` is the centroid of loop `l` in `loops`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CubeCase {
    pub triangles: Vec<[u8; 3]>,
    pub loops: Vec<Vec<u8>>,
}

fn edge_faces(e: usize) -> impl Iterator<Item = usize> {
    let [a, b] = EDGES[e];
    (0..6).filter(move |&f| FACES[f].0.contains(&a) && FACES[f].0.contains(&b))
}

fn share_face(a: usize, b: usize) -> bool {
    edge_faces(a).any(|f| edge_faces(b).any(|g| g == f))
}

fn build_case(mask: u8) -> CubeCase {
    let segs = face_segments(mask);
    let mut next = [usize::MAX; 12];
    for &(a, b) in &segs {
        debug_assert_eq!(next[a], usize::MAX, "edge {a} starts two segments in case {mask}");
        next[a] = b;
    }
    let mut used = [false; 12];
    let mut case = CubeCase { triangles: Vec::new(), loops: Vec::new() };
    for start in 0..12 {
        if next[start] == usize::MAX || used[start] {
            continue;
        }
        let mut ring = vec![start];
        used[start] = true;
        let mut e = next[start];
        while e != start {
            used[e] = true;
            ring.push(e);
            e = next[e];
        }
        let n = ring.len();
        // A chord lying in a cube face would be drawn again by the
        // neighbouring cell, so fan from an apex whose chords all cross the
        // cell interior, or from the loop centroid when there is none.
        let apex = (0..n)
            .filter(|&s| (2..n - 1).all(|d| !share_face(ring[s], ring[(s + d) % n])))
            .min_by_key(|&s| ring[s]);
        // Loops run with the inside on their left seen from outside the
        // cell; the surface normal must point away from the inside.
        match apex {
            Some(s) => {
                for d in 1..n - 1 {
                    let (b, c) = (ring[(s + d) % n], ring[(s + d + 1) % n]);
                    case.triangles.push([ring[s] as u8, c as u8, b as u8]);
                }
            }
            None => {
                let centre = 12 + case.loops.len() as u8;
                for i in 0..n {
                    case.triangles.push([centre, ring[(i + 1) % n] as u8, ring[i] as u8]);
                }
                case.loops.push(ring.iter().map(|&e| e as u8).collect());
            }
        }
    }
    case
}

/// Triangulations of the 256 inside/outside corner configurations.
pub fn case_table() -> &'static [CubeCase; 256] {
    static TABLE: OnceLock<[CubeCase; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|m| build_case(m as u8)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum VertexKey {
    Lattice(usize),
    Edge(usize, u8),
    Centre(usize, u8),
}

/// Extracts the `iso` level set. Lattice values strictly above `iso` count
/// as inside; triangle normals point from inside to outside. Vertices on
/// shared cell edges are welded; degenerate triangles and unreferenced
/// vertices are dropped.
pub fn marching_cubes(grid: &IndicatorGrid, iso: f64) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return TriangleMesh::default();
    }
    let table = case_table();
    let slabs: Vec<Vec<[VertexKey; 3]>> = (0..nz - 1)
        .into_par_iter()
        .map(|k| {
            let mut out = Vec::new();
            for j in 0..ny - 1 {
                for i in 0..nx - 1 {
                    let mut mask = 0u8;
                    for (c, off) in CORNERS.iter().enumerate() {
                        if grid.value(i + off[0], j + off[1], k + off[2]) > iso {
                            mask |= 1 << c;
                        }
                    }
                    let case = &table[mask as usize];
                    for tri in &case.triangles {
                        out.push(tri.map(|e| match e {
                            0..12 => edge_key(grid, [i, j, k], e as usize, iso),
                            _ => VertexKey::Centre(grid.index(i, j, k), e - 12),
                        }));
                    }
                }
            }
            out
        })
        .collect();

    let mut index: HashMap<VertexKey, usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for key_tri in slabs.into_iter().flatten() {
        if key_tri[0] == key_tri[1] || key_tri[1] == key_tri[2] || key_tri[0] == key_tri[2] {
            continue;
        }
        let t = key_tri.map(|key| {
            *index.entry(key).or_insert_with(|| {
                vertices.push(key_position(grid, key, iso, table));
                vertices.len() - 1
            })
        });
        triangles.push(t);
    }
    let mesh = TriangleMesh { vertices, triangles };
    drop_degenerate(mesh)
}

fn edge_key(grid: &IndicatorGrid, cell: [usize; 3], e: usize, iso: f64) -> VertexKey {
    let [a, b] = EDGES[e];
    let pa = [0, 1, 2].map(|d| cell[d] + CORNERS[a][d]);
    let pb = [0, 1, 2].map(|d| cell[d] + CORNERS[b][d]);
    let (lo, hi) = if pa <= pb { (pa, pb) } else { (pb, pa) };
    let axis = (0..3).find(|&d| lo[d] != hi[d]).expect("edge spans one axis");
    let (vl, vh) = (grid.value(lo[0], lo[1], lo[2]), grid.value(hi[0], hi[1], hi[2]));
    let t = (iso - vl) / (vh - vl);
    if t <= 0.0 {
        VertexKey::Lattice(grid.index(lo[0], lo[1], lo[2]))
    } else if t >= 1.0 {
        VertexKey::Lattice(grid.index(hi[0], hi[1], hi[2]))
    } else {
        VertexKey::Edge(grid.index(lo[0], lo[1], lo[2]), axis as u8)
    }
}

fn key_position(grid: &IndicatorGrid, key: VertexKey, iso: f64, table: &[CubeCase; 256]) -> Vec3 {
    match key {
        VertexKey::Centre(idx, l) => {
            let cell = grid.coords(idx);
            let mut mask = 0u8;
            for (c, off) in CORNERS.iter().enumerate() {
                if grid.value(cell[0] + off[0], cell[1] + off[1], cell[2] + off[2]) > iso {
                    mask |= 1 << c;
                }
            }
            let ring = &table[mask as usize].loops[l as usize];
            let sum: Vec3 = ring
                .iter()
                .map(|&e| key_position(grid, edge_key(grid, cell, e as usize, iso), iso, table))
                .sum();
            sum / ring.len() as f64
        }
        VertexKey::Lattice(idx) => {
            let [i, j, k] = grid.coords(idx);
            grid.point(i, j, k)
        }
        VertexKey::Edge(idx, axis) => {
            let lo = grid.coords(idx);
            let mut hi = lo;
            hi[axis as usize] += 1;
            let (vl, vh) = (grid.value(lo[0], lo[1], lo[2]), grid.value(hi[0], hi[1], hi[2]));
            let t = (iso - vl) / (vh - vl);
            let (pl, ph) = (grid.point(lo[0], lo[1], lo[2]), grid.point(hi[0], hi[1], hi[2]));
            pl + (ph - pl) * t
        }
    }
}

fn drop_degenerate(mesh: TriangleMesh) -> TriangleMesh {
    let keep: Vec<[usize; 3]> = (0..mesh.triangles.len())
        .filter(|&t| mesh.face_area(t) > MIN_TRIANGLE_AREA)
        .map(|t| mesh.triangles[t])
        .collect();
    let mut remap = vec![usize::MAX; mesh.vertices.len()];
    let mut vertices = Vec::new();
    let triangles = keep
        .into_iter()
        .map(|tri| {
            tri.map(|v| {
                if remap[v] == usize::MAX {
                    remap[v] = vertices.len();
                    vertices.push(mesh.vertices[v]);
                }
                remap[v]
            })
        })
        .collect();
    TriangleMesh { vertices, triangles }
}
