use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{TriangleMesh, Vec3};

/// Parses Wavefront OBJ text. Only `v` and `f` records are used; polygons
/// are fan-triangulated and negative (relative) indices are resolved.
pub fn parse_obj(text: &str, path: &Path) -> Result<TriangleMesh> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut fields = line.split_whitespace();
        let loc = || format!("line {}", lineno + 1);
        match fields.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for c in &mut xyz {
                    let tok = fields
                        .next()
                        .ok_or_else(|| Error::malformed(path, loc(), "vertex needs 3 coordinates"))?;
                    *c = tok.parse().map_err(|_| {
                        Error::malformed(path, loc(), format!("bad coordinate `{tok}`"))
                    })?;
                }
                vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for tok in fields {
                    let idx_tok = tok.split('/').next().unwrap_or("");
                    let idx: i64 = idx_tok.parse().map_err(|_| {
                        Error::malformed(path, loc(), format!("bad face index `{tok}`"))
                    })?;
                    let resolved = if idx > 0 {
                        idx - 1
                    } else if idx < 0 {
                        vertices.len() as i64 + idx
                    } else {
                        return Err(Error::malformed(
                            path,
                            loc(),
                            "face index 0 is invalid (OBJ indices are 1-based)",
                        ));
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(Error::malformed(
                            path,
                            loc(),
                            format!("face index {idx} out of range ({} vertices so far)", vertices.len()),
                        ));
                    }
                    poly.push(resolved as usize);
                }
                if poly.len() < 3 {
                    return Err(Error::malformed(path, loc(), "face needs at least 3 vertices"));
                }
                for i in 1..poly.len() - 1 {
                    triangles.push([poly[0], poly[i], poly[i + 1]]);
                }
            }
            _ => {}
        }
    }
    TriangleMesh::new(vertices, triangles)
}

pub fn format_obj(mesh: &TriangleMesh) -> String {
    let mut out = String::with_capacity(mesh.vertices.len() * 40 + mesh.triangles.len() * 24);
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}
