use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{apply_noise, generate_queries, punch_holes, Dataset, NoisePolicy, SampleBuilder, ShapeRecord, ShapeSamples};
use crate::error::{Error, Result};
use crate::gauss::ModifiedIndicatorParams;
use crate::geometry::{normalize_mesh, sample_surface, OrientedPointSet, TriangleMesh};
use crate::seed;

/// Everything needed to turn meshes into training samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepareConfig {
    pub n_d: usize,
    pub n_s: usize,
    pub k: usize,
    /// Inclusive range the per-shape cloud size is drawn from.
    pub points: [usize; 2],
    pub n_near: usize,
    pub n_cube: usize,
    pub grid_size: f64,
    pub noise: NoisePolicy,
    /// Hole radius range; `None` disables hole punching.
    pub holes: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        Self::dense()
    }
}

impl PrepareConfig {
    /// 20k to 80k points per shape, `n_d = 200`, `n_s = 1000`, `k = 10`.
    pub fn dense() -> Self {
        Self {
            n_d: 200,
            n_s: 1000,
            k: 10,
            points: [20_000, 80_000],
            n_near: 800,
            n_cube: 200,
            grid_size: ModifiedIndicatorParams::DEFAULT_GRID_SIZE,
            noise: NoisePolicy::default(),
            holes: None,
            seed: 0,
        }
    }

    /// 1k to 5k points per shape with `n_d = 30` and `k = 5`.
    pub fn sparse() -> Self {
        Self {
            n_d: 30,
            k: 5,
            points: [1_000, 5_000],
            ..Self::dense()
        }
    }

    /// Matches the `desk` network preset: 20k points per shape,
    /// `n_d = 32`, `n_s = 64`, `k = 5`.
    pub fn desk() -> Self {
        Self {
            n_d: 32,
            n_s: 64,
            k: 5,
            points: [20_000, 20_000],
            ..Self::dense()
        }
    }

    /// `dense`, `sparse` or `desk`.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "dense" => Ok(Self::dense()),
            "sparse" => Ok(Self::sparse()),
            "desk" => Ok(Self::desk()),
            other => Err(Error::Validation(format!(
                "unknown data preset `{other}` (expected dense, sparse or desk)"
            ))),
        }
    }

    pub fn indicator_params(&self) -> Result<ModifiedIndicatorParams> {
        ModifiedIndicatorParams::from_grid_size(self.grid_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_d == 0 || self.n_s == 0 || self.k == 0 {
            return Err(Error::Validation("n_d, n_s and k must be positive".into()));
        }
        let [lo, hi] = self.points;
        if lo > hi || lo < self.n_d {
            return Err(Error::Validation(format!(
                "point range [{lo}, {hi}] must be ordered and start at n_d = {} or more",
                self.n_d
            )));
        }
        if let Some([a, b]) = self.holes {
            if !(0.0 <= a && a <= b && b.is_finite()) {
                return Err(Error::Validation(format!("bad hole radius range [{a}, {b}]")));
            }
        }
        self.noise.validate()?;
        self.indicator_params()?;
        Ok(())
    }
}

/// Builds the samples of one shape. `index` is the shape's position in the
/// input list and selects its random streams, so skipping other shapes does
/// not change this one.
pub fn prepare_shape(source: &str, mesh: &TriangleMesh, cfg: &PrepareConfig, index: u64) -> Result<ShapeSamples> {
    Ok(prepare_shape_with_cloud(source, mesh, cfg, index)?.0)
}

/// [`prepare_shape`] that also returns the noisy (and holed) cloud the
/// samples were built from, in normalized coordinates.
pub fn prepare_shape_with_cloud(
    source: &str,
    mesh: &TriangleMesh,
    cfg: &PrepareConfig,
    index: u64,
) -> Result<(ShapeSamples, OrientedPointSet)> {
    cfg.validate()?;
    let mesh = normalize_mesh(mesh)?;
    let shape_seed = seed::mix(cfg.seed, index);
    let mut rng = ChaCha8Rng::seed_from_u64(shape_seed);
    let [lo, hi] = cfg.points;
    let n_points = rng.random_range(lo..=hi);
    let noise = cfg.noise.draw(&mut rng);

    let clean = sample_surface(&mesh, n_points, seed::mix(shape_seed, 1))?;
    let mut cloud = apply_noise(&clean, &noise, seed::mix(shape_seed, 2))?;
    let mut hole_radius = 0.0;
    if let Some(range) = cfg.holes {
        let punched = punch_holes(&cloud, range, cfg.n_d, seed::mix(shape_seed, 3))?;
        hole_radius = punched.radius;
        cloud = punched.cloud;
    }

    let params = cfg.indicator_params()?;
    let queries = generate_queries(&mesh, cfg.n_near, cfg.n_cube, &params, seed::mix(shape_seed, 4))?;
    let builder = SampleBuilder::new(&cloud, cfg.n_d, cfg.n_s, cfg.k)?;
    let sample_stream = seed::mix(shape_seed, 5);
    let samples = queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| builder.build(&q.point, q.target, seed::mix(sample_stream, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let shape = ShapeSamples {
        record: ShapeRecord {
            source: source.to_string(),
            alpha_p: noise.alpha_p,
            beta: noise.beta,
            hole_radius,
            n_points: cloud.len() as u64,
            seed: shape_seed,
        },
        samples,
    };
    Ok((shape, cloud))
}

/// Builds a dataset from named meshes, failing on the first bad shape.
pub fn prepare_dataset(meshes: &[(String, TriangleMesh)], cfg: &PrepareConfig) -> Result<Dataset> {
    let mut dataset = Dataset::new(cfg.n_d, cfg.n_s, cfg.k);
    for (i, (name, mesh)) in meshes.iter().enumerate() {
        dataset.shapes.push(prepare_shape(name, mesh, cfg, i as u64)?);
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::primitives;

    fn small() -> PrepareConfig {
        PrepareConfig {
            n_d: 16,
            n_s: 32,
            k: 4,
            points: [500, 800],
            n_near: 8,
            n_cube: 2,
            holes: Some([0.0, 0.2]),
            seed: 11,
            ..PrepareConfig::dense()
        }
    }

    #[test]
    fn cube_yields_requested_queries() {
        let shape = prepare_shape("cube", &primitives::unit_cube(), &small(), 0).unwrap();
        assert_eq!(shape.samples.len(), 10);
        for s in &shape.samples {
            s.check_dims(16, 32, 4).unwrap();
            assert!((0.0..=1.0).contains(&s.target));
        }
    }

    #[test]
    fn pure_function_of_inputs() {
        let meshes = vec![
            ("a".to_string(), primitives::icosphere(2)),
            ("b".to_string(), primitives::torus(0.3, 0.1, 16, 8)),
        ];
        let a = prepare_dataset(&meshes, &small()).unwrap();
        let b = prepare_dataset(&meshes, &small()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sample_count(), 20);
    }

    #[test]
    fn presets_validate() {
        PrepareConfig::dense().validate().unwrap();
        PrepareConfig::sparse().validate().unwrap();
        let bad = PrepareConfig { points: [10, 20], ..PrepareConfig::dense() };
        assert!(bad.validate().is_err());
    }
}
