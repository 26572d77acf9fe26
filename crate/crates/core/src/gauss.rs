//! The Gauss-lemma kernel, its discrete point-sum, and the modified indicator.
//!
//! For a closed surface `∂Ω` with outward normals,
//!
//! ```text
//! χ(x) = ∫∂Ω  -(1/4π) (x - y)·N(y) / |x - y|³  dS(y)
//! ```
//!
//! is 1 inside, 0 outside and ½ on the surface. Replacing the integral by a
//! weighted sum over oriented samples gives [`discrete_gauss_indicator`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{OrientedPointSet, Vec3};

/// Below this separation the kernel is reported as singular.
pub const SINGULAR_DISTANCE: f64 = 1e-12;

/// Default lower clamp on `|x - y_i|` inside [`discrete_gauss_indicator`].
pub const DEFAULT_DISTANCE_CLAMP: f64 = 1e-6;

/// `-(1/4π)·((x - y)·n)/|x - y|³`, the normal derivative of the Laplace
/// fundamental solution.
///
/// ```
/// use mifrecon::gauss::kernel_derivative;
/// use mifrecon::geometry::Vec3;
/// let v = kernel_derivative(&Vec3::new(0.0, 0.0, 2.0), &Vec3::zeros(), &Vec3::z()).unwrap();
/// assert!((v + 1.0 / (16.0 * std::f64::consts::PI)).abs() < 1e-15);
/// ```
pub fn kernel_derivative(x: &Vec3, y: &Vec3, n: &Vec3) -> Result<f64> {
    let d = x - y;
    let r = d.norm();
    if r < SINGULAR_DISTANCE {
        return Err(Error::Singular { distance: r });
    }
    Ok(kernel_term(&d, n, r))
}

#[inline]
fn kernel_term(d: &Vec3, n: &Vec3, r: f64) -> f64 {
    -d.dot(n) / (4.0 * PI * r * r * r)
}

/// Width of the linear ramp of the modified indicator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModifiedIndicatorParams {
    /// Half-width `w` of the ramp, in world units.
    pub w: f64,
    /// Reconstruction grid spacing the width was derived from.
    pub grid_size: f64,
}

impl ModifiedIndicatorParams {
    pub const DEFAULT_GRID_SIZE: f64 = 1.0 / 256.0;

    /// `w = 4 · grid_size`.
    pub fn from_grid_size(grid_size: f64) -> Result<Self> {
        Self::new(4.0 * grid_size, grid_size)
    }

    pub fn new(w: f64, grid_size: f64) -> Result<Self> {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Validation(format!("ramp half-width must be positive, got {w}")));
        }
        if !(grid_size > 0.0) || !grid_size.is_finite() {
            return Err(Error::Validation(format!("grid size must be positive, got {grid_size}")));
        }
        Ok(Self { w, grid_size })
    }
}

impl Default for ModifiedIndicatorParams {
    fn default() -> Self {
        Self {
            w: 4.0 * Self::DEFAULT_GRID_SIZE,
            grid_size: Self::DEFAULT_GRID_SIZE,
        }
    }
}

/// The indicator smoothed to a linear ramp across the surface: 0 for
/// `d < -w`, 1 for `d > w` and `0.5 + d / (2w)` in between. `d` is a signed
/// distance, positive inside.
pub fn modified_indicator(d: f64, params: &ModifiedIndicatorParams) -> f64 {
    let w = params.w;
    if d < -w {
        0.0
    } else if d > w {
        1.0
    } else {
        (0.5 + d / (2.0 * w)).clamp(0.0, 1.0)
    }
}

/// Neumaier's variant of compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// `Σ_i kernel(x, y_i, N(y_i)) · σ(y_i)` with [`DEFAULT_DISTANCE_CLAMP`].
///
/// Requires both normals and areas on `samples`.
pub fn discrete_gauss_indicator(samples: &OrientedPointSet, x: &Vec3) -> Result<f64> {
    discrete_gauss_indicator_clamped(samples, x, DEFAULT_DISTANCE_CLAMP)
}

/// Like [`discrete_gauss_indicator`] with an explicit lower clamp on the
/// per-term distance, which keeps terms finite when `x` sits on a sample.
pub fn discrete_gauss_indicator_clamped(samples: &OrientedPointSet, x: &Vec3, clamp: f64) -> Result<f64> {
    let (normals, areas) = oriented_parts(samples)?;
    let mut acc = CompensatedSum::default();
    for ((y, n), &a) in samples.positions.iter().zip(normals).zip(areas) {
        let d = x - y;
        let r = d.norm().max(clamp);
        acc.add(kernel_term(&d, n, r) * a);
    }
    Ok(acc.value())
}

fn oriented_parts(samples: &OrientedPointSet) -> Result<(&[Vec3], &[f64])> {
    match (&samples.normals, &samples.areas) {
        (Some(n), Some(a)) => Ok((n, a)),
        (None, _) => Err(Error::Contract(
            "the discrete Gauss integral needs oriented normals on every sample".into(),
        )),
        (_, None) => Err(Error::Contract(
            "the discrete Gauss integral needs per-sample area weights".into(),
        )),
    }
}

/// `n` points on a sphere along a spherical Fibonacci lattice, with radial
/// outward normals and equal area weights `4πr²/n`. The lattice cells are
/// close to equal-area, which makes it a good quadrature rule for the Gauss
/// integral.
pub fn fibonacci_sphere(center: &Vec3, radius: f64, n: usize) -> Result<OrientedPointSet> {
    if n == 0 {
        return Err(Error::Contract("fibonacci_sphere needs n >= 1".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::Validation(format!("sphere radius must be positive, got {radius}")));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    let mut positions = Vec::with_capacity(n);
    let mut normals = Vec::with_capacity(n);
    for i in 0..n {
        let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        let phi = golden * i as f64;
        let dir = Vec3::new(rho * phi.cos(), rho * phi.sin(), z).normalize();
        positions.push(center + dir * radius);
        normals.push(dir);
    }
    let area = 4.0 * PI * radius * radius / n as f64;
    OrientedPointSet::new(positions, Some(normals), Some(vec![area; n]))
}
