use super::Vec3;
use crate::error::{Error, Result};

/// Surface samples with optional unit normals and per-point area weights.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OrientedPointSet {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub areas: Option<Vec<f64>>,
}

impl OrientedPointSet {
    pub fn from_positions(positions: Vec<Vec3>) -> Self {
        Self {
            positions,
            normals: None,
            areas: None,
        }
    }

    /// Builds a point set and checks the attribute invariants: matching
    /// lengths, unit normals (within 1e-9) and nonnegative areas.
    pub fn new(
        positions: Vec<Vec3>,
        normals: Option<Vec<Vec3>>,
        areas: Option<Vec<f64>>,
    ) -> Result<Self> {
        let set = Self {
            positions,
            normals,
            areas,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if let Some(normals) = &self.normals {
            if normals.len() != n {
                return Err(Error::Validation(format!(
                    "{} normals for {n} points",
                    normals.len()
                )));
            }
            if let Some(i) = normals.iter().position(|v| (v.norm() - 1.0).abs() > 1e-9) {
                return Err(Error::Validation(format!(
                    "normal {i} has length {}",
                    normals[i].norm()
                )));
            }
        }
        if let Some(areas) = &self.areas {
            if areas.len() != n {
                return Err(Error::Validation(format!(
                    "{} area weights for {n} points",
                    areas.len()
                )));
            }
            if let Some(i) = areas.iter().position(|a| !(*a >= 0.0)) {
                return Err(Error::Validation(format!(
                    "area weight {i} is {}",
                    areas[i]
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Keeps the points at `indices`, in that order, with their attributes.
    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            normals: self
                .normals
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i]).collect()),
            areas: self
                .areas
                .as_ref()
                .map(|a| indices.iter().map(|&i| a[i]).collect()),
        }
    }

    /// Drops normals and areas.
    pub fn without_attributes(&self) -> Self {
        Self::from_positions(self.positions.clone())
    }
}
