//! Chamfer distance, normal consistency error and best-consistency rate.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{sample_surface, KdTree, TriangleBvh, TriangleMesh, Vec3};

/// Surface samples drawn from each mesh for evaluation.
pub const EVAL_SAMPLES: usize = 10_000;

/// Seed for the evaluation samples. Recon and ground truth use the same
/// seed, so a mesh compared with itself gives exactly zero.
pub const EVAL_SEED: u64 = 0xC0FFEE;

fn mean_nearest(from: &[Vec3], to: &KdTree) -> Result<f64> {
    let d: Vec<f64> = from
        .par_iter()
        .map(|p| to.nearest(p).map(|(_, d2)| d2.sqrt()))
        .collect::<Result<_>>()?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean nearest-neighbour distance from `a` to `b` plus the mean from `b`
/// to `a`. Distances are Euclidean, not squared.
///
/// ```
/// use mifrecon::geometry::Vec3;
/// use mifrecon::metrics::chamfer_distance;
///
/// let a = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0)];
/// let b = [Vec3::zeros()];
/// assert_eq!(chamfer_distance(&a, &b).unwrap(), 0.5);
/// ```
pub fn chamfer_distance(a: &[Vec3], b: &[Vec3]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Contract("chamfer distance needs two non-empty point sets".into()));
    }
    let ab = mean_nearest(a, &KdTree::new(b))?;
    let ba = mean_nearest(b, &KdTree::new(a))?;
    Ok(ab + ba)
}

/// Chamfer distance between [`EVAL_SAMPLES`] area-weighted samples of each
/// mesh. An empty reconstruction scores `+∞`.
pub fn mesh_chamfer(recon: &TriangleMesh, gt: &TriangleMesh) -> Result<f64> {
    if recon.triangles.is_empty() {
        return Ok(f64::INFINITY);
    }
    let a = sample_surface(recon, EVAL_SAMPLES, EVAL_SEED)?;
    let b = sample_surface(gt, EVAL_SAMPLES, EVAL_SEED)?;
    chamfer_distance(&a.positions, &b.positions)
}

/// `1 − mean |n_i · n_j|` over [`EVAL_SAMPLES`] samples `(p_i, n_i)` of
/// `gt`, where `n_j` is the normal of the `recon` face nearest to `p_i`.
/// Orientation of either mesh does not matter. An empty reconstruction
/// scores 1.
pub fn normal_consistency_error(recon: &TriangleMesh, gt: &TriangleMesh) -> Result<f64> {
    if recon.triangles.is_empty() {
        return Ok(1.0);
    }
    let samples = sample_surface(gt, EVAL_SAMPLES, EVAL_SEED)?;
    let normals = samples.normals.as_ref().expect("surface samples carry normals");
    let bvh = TriangleBvh::new(recon);
    let cos: Vec<f64> = samples
        .positions
        .par_iter()
        .zip(normals)
        .map(|(p, n)| {
            let (face, _) = bvh.closest(p).expect("non-empty mesh has a closest face");
            n.dot(&recon.face_normal(face)).abs()
        })
        .collect();
    let mean = cos.iter().sum::<f64>() / cos.len() as f64;
    Ok((1.0 - mean).clamp(0.0, 1.0))
}

/// Share of shapes on which each method attains the lowest NCE.
/// `nce[m][s]` is method `m` on shape `s`; a tie splits the shape's credit
/// equally between the tied methods.
///
/// ```
/// use mifrecon::metrics::best_consistency_rate;
///
/// let rates = best_consistency_rate(&[vec![0.1, 0.3], vec![0.2, 0.2]]).unwrap();
/// assert_eq!(rates, vec![0.5, 0.5]);
/// ```
pub fn best_consistency_rate(nce: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = nce.first() else {
        return Err(Error::Contract("best consistency rate needs at least one method".into()));
    };
    let shapes = first.len();
    if shapes == 0 {
        return Err(Error::Contract("best consistency rate needs at least one shape".into()));
    }
    if let Some(m) = nce.iter().position(|row| row.len() != shapes) {
        return Err(Error::Contract(format!(
            "method {m} has {} scores, expected {shapes}",
            nce[m].len()
        )));
    }
    for (m, row) in nce.iter().enumerate() {
        if let Some(s) = row.iter().position(|v| v.is_nan()) {
            return Err(Error::Contract(format!("NCE of method {m} on shape {s} is NaN")));
        }
    }
    let mut credit = vec![0.0; nce.len()];
    for s in 0..shapes {
        let best = nce.iter().map(|row| row[s]).fold(f64::INFINITY, f64::min);
        let winners: Vec<usize> = (0..nce.len()).filter(|&m| nce[m][s] == best).collect();
        for &m in &winners {
            credit[m] += 1.0 / winners.len() as f64;
        }
    }
    Ok(credit.into_iter().map(|c| c / shapes as f64).collect())
}

/// Scores of one reconstruction against its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeScore {
    pub shape: String,
    pub cd_x100: f64,
    pub nce: f64,
}

pub fn evaluate_pair(shape: &str, recon: &TriangleMesh, gt: &TriangleMesh) -> Result<ShapeScore> {
    Ok(ShapeScore {
        shape: shape.to_string(),
        cd_x100: 100.0 * mesh_chamfer(recon, gt)?,
        nce: normal_consistency_error(recon, gt)?,
    })
}

/// Per-shape scores of one method.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub samples: usize,
    pub shapes: Vec<ShapeScore>,
}

impl EvalReport {
    pub fn new(method: impl Into<String>, shapes: Vec<ShapeScore>) -> Self {
        Self {
            method: method.into(),
            samples: EVAL_SAMPLES,
            shapes,
        }
    }

    pub fn mean_cd_x100(&self) -> f64 {
        self.shapes.iter().map(|s| s.cd_x100).sum::<f64>() / self.shapes.len() as f64
    }

    pub fn mean_nce(&self) -> f64 {
        self.shapes.iter().map(|s| s.nce).sum::<f64>() / self.shapes.len() as f64
    }
}

/// BCR of several reports over the same shape list, in report order.
pub fn report_bcr(reports: &[EvalReport]) -> Result<Vec<f64>> {
    if let Some(first) = reports.first() {
        for r in reports {
            let same = r.shapes.len() == first.shapes.len()
                && r.shapes.iter().zip(&first.shapes).all(|(a, b)| a.shape == b.shape);
            if !same {
                return Err(Error::Contract(format!(
                    "methods `{}` and `{}` were scored on different shapes",
                    first.method, r.method
                )));
            }
        }
    }
    let table: Vec<Vec<f64>> = reports
        .iter()
        .map(|r| r.shapes.iter().map(|s| s.nce).collect())
        .collect();
    best_consistency_rate(&table)
}

/// One row per method and shape: `method,shape,cd_x100,nce`.
pub fn reports_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from("method,shape,cd_x100,nce\n");
    for r in reports {
        for s in &r.shapes {
            let _ = writeln!(out, "{},{},{},{}", r.method, s.shape, s.cd_x100, s.nce);
        }
    }
    out
}

/// Aligned text table per method with a mean footer, and a BCR line when
/// more than one method is given.
pub fn format_reports(reports: &[EvalReport]) -> Result<String> {
    let mut out = String::new();
    let width = reports
        .iter()
        .flat_map(|r| r.shapes.iter().map(|s| s.shape.len()))
        .chain([5])
        .max()
        .unwrap_or(5);
    for r in reports {
        let _ = writeln!(out, "{} ({} samples per mesh)", r.method, r.samples);
        let _ = writeln!(out, "  {:<width$}  {:>10}  {:>8}", "shape", "cd_x100", "nce");
        for s in &r.shapes {
            let _ = writeln!(out, "  {:<width$}  {:>10.4}  {:>8.4}", s.shape, s.cd_x100, s.nce);
        }
        let _ = writeln!(out, "  {:<width$}  {:>10.4}  {:>8.4}", "mean", r.mean_cd_x100(), r.mean_nce());
    }
    if reports.len() > 1 {
        let bcr = report_bcr(reports)?;
        let parts: Vec<String> = reports
            .iter()
            .zip(&bcr)
            .map(|(r, b)| format!("{}={b:.3}", r.method))
            .collect();
        let _ = writeln!(out, "BCR: {}", parts.join(" "));
    }
    Ok(out)
}
