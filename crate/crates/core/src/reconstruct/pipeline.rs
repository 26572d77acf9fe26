use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::grid::evaluate_at;
use super::{marching_cubes, GridSpec, IndicatorGrid};
use crate::datagen::SampleBuilder;
use crate::error::{Error, Result};
use crate::gauss::discrete_gauss_indicator;
use crate::geometry::{Aabb, KdTree, OrientedPointSet, TriangleMesh, Vec3};
use crate::network::{network_forward, NetworkParams, SampleTensors};
use crate::seed::mix;

/// Lattice evaluations spent on each far-field component in band mode.
const FAR_VOTES: usize = 5;

/// Neighbours used to estimate per-point area weights for clouds without
/// them.
const AREA_NEIGHBOURS: usize = 10;

/// Grid placement and evaluation policy for reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconstructOptions {
    /// Lattice points per axis.
    pub res: usize,
    /// Evaluation box. `None` means the unit cube grown by `padding`.
    pub domain: Option<Aabb>,
    pub padding: f64,
    pub iso: f64,
    /// When set, only lattice points within this distance of the cloud are
    /// evaluated; every connected far region takes the median of a few
    /// evaluations inside it.
    pub band: Option<f64>,
    /// Seeds the per-lattice-point subsample draws.
    pub seed: u64,
}

impl Default for ReconstructOptions {
    fn default() -> Self {
        Self {
            res: 64,
            domain: None,
            padding: 0.05,
            iso: 0.5,
            band: None,
            seed: 0,
        }
    }
}

impl ReconstructOptions {
    pub fn grid_spec(&self) -> GridSpec {
        let domain = self.domain.unwrap_or_else(|| Aabb::unit_cube().expanded(self.padding));
        GridSpec::cube(self.res, domain)
    }

    pub fn validate(&self) -> Result<()> {
        self.grid_spec().validate()?;
        if !(self.padding >= 0.0) {
            return Err(Error::Contract(format!("padding {} must be non-negative", self.padding)));
        }
        if let Some(b) = self.band {
            if !(b > 0.0) {
                return Err(Error::Contract(format!("band width {b} must be positive")));
            }
        }
        if !self.iso.is_finite() {
            return Err(Error::Contract("iso level must be finite".into()));
        }
        Ok(())
    }
}

/// Evaluates `field` on the lattice, either everywhere or in a band around
/// `anchors` with the far field filled per connected component.
fn evaluate_field<F>(spec: &GridSpec, anchors: &[Vec3], band: Option<f64>, field: F) -> Result<IndicatorGrid>
where
    F: Fn(usize, &Vec3) -> Result<f64> + Sync,
{
    spec.validate()?;
    let n = spec.len();
    let Some(width) = band else {
        let all: Vec<usize> = (0..n).collect();
        let values = evaluate_at(spec, &all, field)?;
        return IndicatorGrid::new(spec.res, spec.domain.min, spec.spacing(), values);
    };

    let tree = KdTree::new(anchors);
    let near: Vec<bool> = (0..n)
        .map(|idx| tree.nearest(&spec.point(idx)).map(|(_, d2)| d2 <= width * width))
        .collect::<Result<_>>()?;
    let near_idx: Vec<usize> = (0..n).filter(|&i| near[i]).collect();
    let mut values = vec![f64::NAN; n];
    for (i, v) in near_idx.iter().zip(evaluate_at(spec, &near_idx, &field)?) {
        values[*i] = v;
    }

    let components = far_components(spec, &near);
    log::debug!(
        "band evaluation: {} of {n} lattice points, {} far components",
        near_idx.len(),
        components.len()
    );
    let probes: Vec<usize> = components
        .iter()
        .flat_map(|c| (0..FAR_VOTES.min(c.len())).map(move |v| c[v * c.len() / FAR_VOTES.min(c.len())]))
        .collect();
    let probe_values = evaluate_at(spec, &probes, &field)?;
    let mut offset = 0;
    for c in &components {
        let m = FAR_VOTES.min(c.len());
        let mut votes = probe_values[offset..offset + m].to_vec();
        offset += m;
        votes.sort_by(f64::total_cmp);
        let fill = votes[m / 2];
        for &i in c {
            values[i] = fill;
        }
    }
    IndicatorGrid::new(spec.res, spec.domain.min, spec.spacing(), values)
}

/// 6-connected components of the lattice points not flagged `near`, each
/// listed in increasing index order.
fn far_components(spec: &GridSpec, near: &[bool]) -> Vec<Vec<usize>> {
    let [nx, ny, nz] = spec.res;
    let mut seen = near.to_vec();
    let mut out = Vec::new();
    for start in 0..near.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        let mut comp = vec![start];
        let mut queue = VecDeque::from([start]);
        while let Some(idx) = queue.pop_front() {
            let [i, j, k] = spec.coords(idx);
            let mut visit = |ok: bool, other: usize| {
                if ok && !seen[other] {
                    seen[other] = true;
                    comp.push(other);
                    queue.push_back(other);
                }
            };
            visit(i > 0, idx.wrapping_sub(1));
            visit(i + 1 < nx, idx + 1);
            visit(j > 0, idx.wrapping_sub(nx));
            visit(j + 1 < ny, idx + nx);
            visit(k > 0, idx.wrapping_sub(nx * ny));
            visit(k + 1 < nz, idx + nx * ny);
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Learned indicator on the lattice: one network evaluation per lattice
/// point, with the subsample of point `idx` drawn from `mix(seed, idx)`.
pub fn learned_indicator_grid(
    cloud: &OrientedPointSet,
    params: &NetworkParams<f32>,
    opts: &ReconstructOptions,
) -> Result<IndicatorGrid> {
    opts.validate()?;
    params.dims.validate()?;
    let d = &params.dims;
    let builder = SampleBuilder::new(cloud, d.n_d, d.n_s, d.k)?;
    let spec = opts.grid_spec();
    log::info!("evaluating the learned indicator on a {}³ grid", opts.res);
    evaluate_field(&spec, &cloud.positions, opts.band, |idx, p| {
        let sample = builder.build(p, 0.0, mix(opts.seed, idx as u64))?;
        let x = SampleTensors::<f32>::from_sample(&sample);
        Ok(network_forward(params, &x)? as f64)
    })
}

/// Learned reconstruction: [`learned_indicator_grid`] followed by marching
/// cubes at `opts.iso`. A field that never crosses the iso level gives an
/// empty mesh.
pub fn reconstruct_shape(
    cloud: &OrientedPointSet,
    params: &NetworkParams<f32>,
    opts: &ReconstructOptions,
) -> Result<TriangleMesh> {
    let grid = learned_indicator_grid(cloud, params, opts)?;
    Ok(marching_cubes(&grid, opts.iso))
}

/// Outcome of [`gauss_reconstruct`].
#[derive(Debug, Clone)]
pub struct GaussReconstruction {
    pub mesh: TriangleMesh,
    /// The field that was contoured (shifted by one when `complemented`).
    pub grid: IndicatorGrid,
    /// The raw field was mostly near −1, as produced by inward normals, so
    /// `1 + g` was contoured instead. The mesh then faces inwards.
    pub complemented: bool,
}

/// Per-point area weights `π r² / k` from the distance `r` to the k-th
/// neighbour.
pub fn estimate_point_areas(positions: &[Vec3]) -> Result<Vec<f64>> {
    if positions.len() < 2 {
        return Err(Error::Contract("area estimation needs at least two points".into()));
    }
    let k = AREA_NEIGHBOURS.min(positions.len() - 1);
    let tree = KdTree::new(positions);
    positions
        .iter()
        .map(|p| {
            let found = tree.knn_with_distances(p, k + 1)?;
            let r2 = found.last().map_or(0.0, |&(_, d2)| d2);
            Ok(std::f64::consts::PI * r2 / k as f64)
        })
        .collect()
}

/// Classical oriented baseline: contours the discrete Gauss integral of the
/// cloud. Needs normals; area weights are estimated when absent.
pub fn gauss_reconstruct(cloud: &OrientedPointSet, opts: &ReconstructOptions) -> Result<GaussReconstruction> {
    opts.validate()?;
    if cloud.normals.is_none() {
        return Err(Error::Contract(
            "the Gauss baseline integrates oriented normals, and this cloud has none \
             (the learned `reconstruct` path works without them)"
                .into(),
        ));
    }
    let mut oriented = cloud.clone();
    if oriented.areas.is_none() {
        oriented.areas = Some(estimate_point_areas(&oriented.positions)?);
    }
    let spec = opts.grid_spec();
    log::info!("evaluating the discrete Gauss field on a {}³ grid", opts.res);
    let mut grid = evaluate_field(&spec, &oriented.positions, opts.band, |_, p| {
        discrete_gauss_indicator(&oriented, p)
    })?;
    let below = grid.values.iter().filter(|&&v| v < -0.5).count();
    let above = grid.values.iter().filter(|&&v| v > 0.5).count();
    let complemented = below > above;
    if complemented {
        for v in &mut grid.values {
            *v += 1.0;
        }
    }
    let mesh = marching_cubes(&grid, opts.iso);
    Ok(GaussReconstruction {
        mesh,
        grid,
        complemented,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::fibonacci_sphere;
    use crate::network::NetworkDims;

    fn small(res: usize) -> ReconstructOptions {
        ReconstructOptions {
            res,
            ..Default::default()
        }
    }

    #[test]
    fn options_reject_bad_values() {
        assert!(small(1).validate().is_err());
        let bad_band = ReconstructOptions {
            band: Some(0.0),
            ..Default::default()
        };
        assert!(bad_band.validate().is_err());
        assert!(ReconstructOptions::default().validate().is_ok());
    }

    #[test]
    fn gauss_sphere_is_closed_and_outward() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.35, 2000).unwrap();
        let out = gauss_reconstruct(&cloud, &small(24)).unwrap();
        assert!(!out.complemented);
        out.mesh.validate_watertight().unwrap();
        let c = Vec3::repeat(0.5);
        let spacing = small(24).grid_spec().spacing().x;
        for v in &out.mesh.vertices {
            assert!(((v - c).norm() - 0.35).abs() < spacing);
        }
        let t = 0;
        let [a, b, d] = out.mesh.corners(t);
        assert!(out.mesh.face_normal(t).dot(&((a + b + d) / 3.0 - c)) > 0.0);
    }

    #[test]
    fn flipped_normals_give_an_inside_out_mesh() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.35, 2000).unwrap();
        let mut flipped = cloud.clone();
        for n in flipped.normals.as_mut().unwrap() {
            *n = -*n;
        }
        let a = gauss_reconstruct(&cloud, &small(20)).unwrap();
        let b = gauss_reconstruct(&flipped, &small(20)).unwrap();
        assert!(b.complemented);
        assert_eq!(a.mesh.triangles.len(), b.mesh.triangles.len());
        let c = Vec3::repeat(0.5);
        for t in 0..b.mesh.triangles.len() {
            let [p, q, r] = b.mesh.corners(t);
            assert!(b.mesh.face_normal(t).dot(&((p + q + r) / 3.0 - c)) < 0.0);
        }
    }

    #[test]
    fn gauss_needs_normals() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.35, 100).unwrap().without_attributes();
        let err = gauss_reconstruct(&cloud, &small(8)).unwrap_err();
        assert!(err.to_string().contains("normals"), "{err}");
    }

    #[test]
    fn missing_areas_are_estimated() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.35, 3000).unwrap();
        let areas = estimate_point_areas(&cloud.positions).unwrap();
        let total: f64 = areas.iter().sum();
        let exact = 4.0 * std::f64::consts::PI * 0.35 * 0.35;
        assert!((total / exact - 1.0).abs() < 0.25, "{total} vs {exact}");
        let mut bare = cloud.clone();
        bare.areas = None;
        let out = gauss_reconstruct(&bare, &small(16)).unwrap();
        assert!(!out.mesh.is_empty());
    }

    #[test]
    fn band_mode_matches_full_grid_for_the_gauss_field() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.3, 1500).unwrap();
        let full = gauss_reconstruct(&cloud, &small(20)).unwrap();
        let band = ReconstructOptions {
            band: Some(0.15),
            ..small(20)
        };
        let banded = gauss_reconstruct(&cloud, &band).unwrap();
        assert_eq!(full.mesh.triangles.len(), banded.mesh.triangles.len());
        for (a, b) in full.mesh.vertices.iter().zip(&banded.mesh.vertices) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn far_components_split_inside_from_outside() {
        let spec = GridSpec::cube(9, Aabb::unit_cube());
        let c = Vec3::repeat(0.5);
        let near: Vec<bool> = (0..spec.len())
            .map(|i| ((spec.point(i) - c).norm() - 0.3).abs() < 0.13)
            .collect();
        let comps = far_components(&spec, &near);
        assert_eq!(comps.len(), 2);
        let total: usize = comps.iter().map(Vec::len).sum();
        assert_eq!(total, near.iter().filter(|&&b| !b).count());
    }

    #[test]
    fn learned_reconstruction_is_deterministic() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.3, 400).unwrap().without_attributes();
        let params = NetworkParams::<f32>::init(&NetworkDims::tiny(), 3).unwrap();
        let opts = ReconstructOptions { seed: 7, ..small(6) };
        let a = learned_indicator_grid(&cloud, &params, &opts).unwrap();
        let b = learned_indicator_grid(&cloud, &params, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(
            reconstruct_shape(&cloud, &params, &opts).unwrap(),
            marching_cubes(&a, 0.5)
        );
    }

    #[test]
    fn undersized_cloud_is_a_contract_error() {
        let cloud = fibonacci_sphere(&Vec3::repeat(0.5), 0.3, 4).unwrap();
        let params = NetworkParams::<f32>::init(&NetworkDims::tiny(), 3).unwrap();
        assert!(matches!(
            reconstruct_shape(&cloud, &params, &small(4)),
            Err(Error::Contract(_))
        ));
    }
}
