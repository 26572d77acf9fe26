//! Mesh and point-cloud file I/O: OBJ, PLY and whitespace XYZ.

mod obj;
mod ply;

use std::path::Path;

pub use obj::{format_obj, parse_obj};
pub use ply::{format_ply, parse_ply, PlyData, PlyFormat};

use crate::error::{Error, Result};
use crate::geometry::{OrientedPointSet, TriangleMesh, Vec3};

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads an OBJ or PLY mesh. Indices are validated; orientation is left as
/// stored. Use [`load_watertight_mesh`] for ground-truth surfaces.
pub fn load_mesh(path: &Path) -> Result<TriangleMesh> {
    let bytes = read_bytes(path)?;
    match extension(path).as_str() {
        "obj" => {
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::malformed(path, format!("byte {}", e.utf8_error().valid_up_to()), "not UTF-8"))?;
            parse_obj(&text, path)
        }
        "ply" => {
            let data = parse_ply(&bytes, path)?;
            let mut triangles = Vec::new();
            for f in &data.faces {
                if f.len() < 3 {
                    return Err(Error::malformed(path, "face element", "face with fewer than 3 vertices"));
                }
                for i in 1..f.len() - 1 {
                    triangles.push([f[0], f[i], f[i + 1]]);
                }
            }
            TriangleMesh::new(data.positions, triangles)
        }
        other => Err(Error::malformed(path, "extension", format!("unsupported mesh format `{other}`"))),
    }
}

/// Loads a mesh and requires it to be closed and consistently oriented.
pub fn load_watertight_mesh(path: &Path) -> Result<TriangleMesh> {
    let mesh = load_mesh(path)?;
    mesh.validate_watertight().map_err(|e| match e {
        Error::Validation(msg) => Error::Validation(format!("{}: {msg}", path.display())),
        other => other,
    })?;
    Ok(mesh)
}

/// Writes a mesh as OBJ or (binary) PLY depending on the extension.
pub fn save_mesh(path: &Path, mesh: &TriangleMesh) -> Result<()> {
    match extension(path).as_str() {
        "obj" => write_bytes(path, format_obj(mesh).as_bytes()),
        "ply" => write_bytes(
            path,
            &format_ply(&mesh.vertices, None, &mesh.triangles, PlyFormat::BinaryLittleEndian),
        ),
        other => Err(Error::malformed(path, "extension", format!("unsupported mesh format `{other}`"))),
    }
}

/// Loads a point cloud from PLY (vertex element, optional normals) or
/// whitespace-separated XYZ with 3 or 6 columns (the last three being
/// normals). Normals are normalized to unit length on load.
pub fn load_cloud(path: &Path) -> Result<OrientedPointSet> {
    let bytes = read_bytes(path)?;
    let (positions, normals) = match extension(path).as_str() {
        "ply" => {
            let data = parse_ply(&bytes, path)?;
            (data.positions, data.normals)
        }
        "xyz" | "txt" | "pts" => {
            let text = String::from_utf8(bytes)
                .map_err(|e| Error::malformed(path, format!("byte {}", e.utf8_error().valid_up_to()), "not UTF-8"))?;
            parse_xyz(&text, path)?
        }
        other => return Err(Error::malformed(path, "extension", format!("unsupported cloud format `{other}`"))),
    };
    let normals = match normals {
        Some(ns) => {
            let mut out = Vec::with_capacity(ns.len());
            for (i, n) in ns.into_iter().enumerate() {
                let len = n.norm();
                if !(len > 0.0) || !len.is_finite() {
                    return Err(Error::Validation(format!("{}: normal {i} has zero length", path.display())));
                }
                out.push(n / len);
            }
            Some(out)
        }
        None => None,
    };
    OrientedPointSet::new(positions, normals, None)
}

/// Writes positions (and normals, when present) as PLY or XYZ.
pub fn save_cloud(path: &Path, cloud: &OrientedPointSet) -> Result<()> {
    match extension(path).as_str() {
        "ply" => write_bytes(
            path,
            &format_ply(&cloud.positions, cloud.normals.as_deref(), &[], PlyFormat::BinaryLittleEndian),
        ),
        "xyz" | "txt" | "pts" => {
            use std::fmt::Write as _;
            let mut out = String::new();
            for (i, p) in cloud.positions.iter().enumerate() {
                let _ = write!(out, "{} {} {}", p.x, p.y, p.z);
                if let Some(n) = &cloud.normals {
                    let _ = write!(out, " {} {} {}", n[i].x, n[i].y, n[i].z);
                }
                out.push('\n');
            }
            write_bytes(path, out.as_bytes())
        }
        other => Err(Error::malformed(path, "extension", format!("unsupported cloud format `{other}`"))),
    }
}

fn parse_xyz(text: &str, path: &Path) -> Result<(Vec<Vec3>, Option<Vec<Vec3>>)> {
    let mut positions = Vec::new();
    let mut normals = Vec::new();
    let mut columns = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::malformed(path, format!("line {}", i + 1), "bad number"))?;
        if vals.len() != 3 && vals.len() != 6 {
            return Err(Error::malformed(path, format!("line {}", i + 1), "expected 3 or 6 columns"));
        }
        match columns {
            None => columns = Some(vals.len()),
            Some(c) if c != vals.len() => {
                return Err(Error::malformed(path, format!("line {}", i + 1), "inconsistent column count"))
            }
            _ => {}
        }
        positions.push(Vec3::new(vals[0], vals[1], vals[2]));
        if vals.len() == 6 {
            normals.push(Vec3::new(vals[3], vals[4], vals[5]));
        }
    }
    Ok((positions, (columns == Some(6)).then_some(normals)))
}
