use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::OrientedPointSet;

/// Noise applied to one shape's cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Probability that a given point is displaced.
    pub alpha_p: f64,
    /// Maximum per-coordinate displacement; the Gaussian has std `beta / 3`.
    pub beta: f64,
}

impl NoiseConfig {
    pub const CLEAN: NoiseConfig = NoiseConfig { alpha_p: 0.0, beta: 0.0 };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha_p) {
            return Err(Error::Validation(format!("alpha_p must lie in [0, 1], got {}", self.alpha_p)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Validation(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        Ok(())
    }
}

/// How [`NoiseConfig`]s are drawn per shape when building a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoisePolicy {
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    /// Probability that a shape is left without noise.
    pub clean_shape_prob: f64,
}

impl Default for NoisePolicy {
    fn default() -> Self {
        Self {
            alpha_range: [0.0, 1.0],
            beta_range: [0.02, 0.04],
            clean_shape_prob: 0.1,
        }
    }
}

impl NoisePolicy {
    /// No noise on any shape.
    pub fn clean() -> Self {
        Self {
            clean_shape_prob: 1.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [a0, a1] = self.alpha_range;
        let [b0, b1] = self.beta_range;
        if !(0.0 <= a0 && a0 <= a1 && a1 <= 1.0) {
            return Err(Error::Validation(format!("bad alpha_range [{a0}, {a1}]")));
        }
        if !(0.0 <= b0 && b0 <= b1 && b1.is_finite()) {
            return Err(Error::Validation(format!("bad beta_range [{b0}, {b1}]")));
        }
        if !(0.0..=1.0).contains(&self.clean_shape_prob) {
            return Err(Error::Validation(format!(
                "clean_shape_prob must lie in [0, 1], got {}",
                self.clean_shape_prob
            )));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut impl Rng) -> NoiseConfig {
        if rng.random::<f64>() < self.clean_shape_prob {
            return NoiseConfig::CLEAN;
        }
        let lerp = |[lo, hi]: [f64; 2], t: f64| lo + (hi - lo) * t;
        NoiseConfig {
            alpha_p: lerp(self.alpha_range, rng.random()),
            beta: lerp(self.beta_range, rng.random()),
        }
    }
}

/// Displaces each point with probability `alpha_p` by a per-coordinate
/// Gaussian of std `beta / 3`, truncated to `[-beta, beta]`. Normals and
/// areas are passed through.
pub fn apply_noise(points: &OrientedPointSet, cfg: &NoiseConfig, seed: u64) -> Result<OrientedPointSet> {
    cfg.validate()?;
    let mut out = points.clone();
    if cfg.beta == 0.0 || cfg.alpha_p == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0, cfg.beta / 3.0).expect("std is positive and finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in &mut out.positions {
        if rng.random::<f64>() < cfg.alpha_p {
            for c in p.iter_mut() {
                let delta = normal.sample(&mut rng).clamp(-cfg.beta, cfg.beta);
                *c = displaced(*c, delta, cfg.beta);
            }
        }
    }
    Ok(out)
}

/// `x + delta`, stepped back toward `x` by ulps if rounding pushed the
/// realized displacement past `bound`.
fn displaced(x: f64, delta: f64, bound: f64) -> f64 {
    let mut y = x + delta;
    while (y - x).abs() > bound {
        y = if y > x { y.next_down() } else { y.next_up() };
    }
    y
}
