//! Boxes, cubications with their skeletons and dual skeletons, structured
//! singular sets and triangulated spheres.

mod cubication;
mod disks;
mod singular;
mod sphere;

pub use cubication::{Cubication, Face};
pub use disks::{standard_disk_boundaries, DiskBoundary};
pub use singular::{AffinePiece, StructuredSingularSet};
pub(crate) use sphere::sort_parity;
pub use sphere::TriangulatedSphere;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("cube radius {eta} does not tile axis {axis} of length {side}")]
    NonDivisibleEta { axis: usize, side: f64, eta: f64 },
    #[error("degenerate box: {0}")]
    DegenerateBox(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Axis-aligned box `[lo_0, hi_0] x ... x [lo_{m-1}, hi_{m-1}]`.
///
/// Dimensions 1 through 4 are accepted; the one-dimensional case only serves
/// scalar oscillation experiments on intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisBox {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::InvalidBox(format!(
                "lo has {} axes but hi has {}",
                lo.len(),
                hi.len()
            )));
        }
        if lo.is_empty() || lo.len() > 4 {
            return Err(GeometryError::InvalidBox(format!(
                "dimension {} outside 1..=4",
                lo.len()
            )));
        }
        for (i, (a, b)) in lo.iter().zip(&hi).enumerate() {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(GeometryError::InvalidBox(format!(
                    "axis {i}: need lo < hi, got [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lo, hi })
    }

    /// The cube `[-a, a]^m`.
    pub fn centered_cube(m: usize, a: f64) -> Result<Self, GeometryError> {
        Self::new(vec![-a; m], vec![a; m])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i)).product()
    }

    pub fn diameter(&self) -> f64 {
        (0..self.dim()).map(|i| self.side(i).powi(2)).sum::<f64>().sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| v >= self.lo[i] && v <= self.hi[i])
    }

    /// Sup-norm distance from `x` to the complement of the box (negative outside).
    pub fn interior_margin(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(i, &v)| (v - self.lo[i]).min(self.hi[i] - v))
            .fold(f64::INFINITY, f64::min)
    }
}
