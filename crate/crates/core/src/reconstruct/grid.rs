use std::fmt::Write as _;
use std::io::Read;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// Regular lattice of scalar values, x varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorGrid {
    pub dims: [usize; 3],
    /// World position of lattice point `(0, 0, 0)`.
    pub origin: Vec3,
    /// Distance between neighbouring lattice points along each axis.
    pub spacing: Vec3,
    pub values: Vec<f64>,
}

impl IndicatorGrid {
    pub fn new(dims: [usize; 3], origin: Vec3, spacing: Vec3, values: Vec<f64>) -> Result<Self> {
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::Validation(format!("grid dims {dims:?} must be positive")));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Validation(format!("grid spacing {spacing:?} must be positive")));
        }
        if values.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Validation(format!(
                "{} values for a {}×{}×{} grid",
                values.len(),
                dims[0],
                dims[1],
                dims[2]
            )));
        }
        if let Some(i) = values.iter().position(|v| v.is_nan()) {
            return Err(Error::Validation(format!("grid value {i} is NaN")));
        }
        Ok(Self {
            dims,
            origin,
            spacing,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }

    #[inline]
    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing)
    }

    /// Lattice coordinates of a linear index.
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.dims;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    /// `1 - v` at every lattice point.
    pub fn complement(&self) -> Self {
        Self {
            values: self.values.iter().map(|v| 1.0 - v).collect(),
            ..self.clone()
        }
    }
}

/// Lattice placement: `res` points per axis spanning `domain` inclusively.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub res: [usize; 3],
    pub domain: Aabb,
}

impl GridSpec {
    pub fn cube(res: usize, domain: Aabb) -> Self {
        Self {
            res: [res; 3],
            domain,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.res.iter().any(|&r| r < 2) {
            return Err(Error::Contract(format!("grid resolution {:?} needs at least 2 per axis", self.res)));
        }
        let e = self.domain.extent();
        if e.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::Contract("grid domain has zero extent".into()));
        }
        Ok(())
    }

    pub fn spacing(&self) -> Vec3 {
        let e = self.domain.extent();
        Vec3::new(
            e.x / (self.res[0] - 1) as f64,
            e.y / (self.res[1] - 1) as f64,
            e.z / (self.res[2] - 1) as f64,
        )
    }

    pub fn len(&self) -> usize {
        self.res.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, index: usize) -> [usize; 3] {
        let [nx, ny, _] = self.res;
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    pub fn point(&self, index: usize) -> Vec3 {
        let [i, j, k] = self.coords(index);
        self.domain.min + Vec3::new(i as f64, j as f64, k as f64).component_mul(&self.spacing())
    }
}

/// Samples `field` at every lattice point, in parallel. A failing or NaN
/// evaluation aborts with the lattice coordinates of the first failure in
/// index order.
pub fn evaluate_grid<F>(field: F, spec: &GridSpec) -> Result<IndicatorGrid>
where
    F: Fn(&Vec3) -> Result<f64> + Sync,
{
    spec.validate()?;
    let all: Vec<usize> = (0..spec.len()).collect();
    let values = evaluate_at(spec, &all, |_, p| field(p))?;
    IndicatorGrid::new(spec.res, spec.domain.min, spec.spacing(), values)
}

/// Evaluates `field(index, point)` at the given lattice indices, in parallel,
/// reporting the first failure in the order of `indices`.
pub(crate) fn evaluate_at<F>(spec: &GridSpec, indices: &[usize], field: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &Vec3) -> Result<f64> + Sync,
{
    let results: Vec<Result<f64>> = indices
        .par_iter()
        .map(|&idx| {
            let wrap = |source: Error| {
                let [i, j, k] = spec.coords(idx);
                Error::Grid {
                    i,
                    j,
                    k,
                    source: Box::new(source),
                }
            };
            match field(idx, &spec.point(idx)) {
                Ok(v) if v.is_nan() => Err(wrap(Error::Numeric { layer: "indicator oracle" })),
                Ok(v) => Ok(v),
                Err(e) => Err(wrap(e)),
            }
        })
        .collect();
    results.into_iter().collect()
}

fn header_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".hdr");
    path.with_file_name(name)
}

/// Writes the values as raw little-endian `f32` (x fastest) to `path` and a
/// text header with dims, origin and spacing to `path` + `.hdr`.
pub fn write_grid_dump(path: &Path, grid: &IndicatorGrid) -> Result<()> {
    let mut raw = Vec::with_capacity(4 * grid.len());
    for v in &grid.values {
        raw.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(path, raw).map_err(|e| Error::io(path, e))?;
    let mut hdr = String::new();
    let [nx, ny, nz] = grid.dims;
    let (o, s) = (grid.origin, grid.spacing);
    let _ = writeln!(hdr, "dims {nx} {ny} {nz}");
    let _ = writeln!(hdr, "origin {} {} {}", o.x, o.y, o.z);
    let _ = writeln!(hdr, "spacing {} {} {}", s.x, s.y, s.z);
    let _ = writeln!(hdr, "format f32le x-fastest");
    let hp = header_path(path);
    std::fs::write(&hp, hdr).map_err(|e| Error::io(&hp, e))
}

/// Reads a dump written by [`write_grid_dump`]. Values come back rounded to
/// `f32`.
pub fn read_grid_dump(path: &Path) -> Result<IndicatorGrid> {
    let hp = header_path(path);
    let text = std::fs::read_to_string(&hp).map_err(|e| Error::io(&hp, e))?;
    let mut dims = None;
    let mut origin = None;
    let mut spacing = None;
    for (n, line) in text.lines().enumerate() {
        let mut f = line.split_whitespace();
        let key = f.next().unwrap_or("");
        let nums: Vec<&str> = f.collect();
        let loc = || format!("line {}", n + 1);
        let parse3 = |nums: &[&str]| -> Result<[f64; 3]> {
            if nums.len() != 3 {
                return Err(Error::malformed(&hp, loc(), "expected three numbers"));
            }
            let mut out = [0.0; 3];
            for (o, t) in out.iter_mut().zip(nums) {
                *o = t.parse().map_err(|_| Error::malformed(&hp, loc(), format!("bad number `{t}`")))?;
            }
            Ok(out)
        };
        match key {
            "dims" => {
                let d = parse3(&nums)?;
                dims = Some([d[0] as usize, d[1] as usize, d[2] as usize]);
            }
            "origin" => origin = Some(Vec3::from(parse3(&nums)?)),
            "spacing" => spacing = Some(Vec3::from(parse3(&nums)?)),
            _ => {}
        }
    }
    let (Some(dims), Some(origin), Some(spacing)) = (dims, origin, spacing) else {
        return Err(Error::malformed(&hp, "header", "missing dims, origin or spacing"));
    };
    let mut raw = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    let expected = dims.iter().product::<usize>() * 4;
    if raw.len() != expected {
        return Err(Error::malformed(
            path,
            format!("byte {}", raw.len()),
            format!("expected {expected} bytes of f32 data"),
        ));
    }
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    IndicatorGrid::new(dims, origin, spacing, values)
}
