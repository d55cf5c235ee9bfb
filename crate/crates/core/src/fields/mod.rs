//! Grid-sampled maps into `R^nu` (optionally constrained to a sphere), their
//! finite-difference derivatives, Sobolev, VMO and fractional norms, the
//! projection onto the target sphere, circle lifting and restriction to
//! parametrized spheres.

mod diff;
mod fractional;
mod mollifier;
mod norms;
mod oscillation;
mod sphere_ops;

pub use diff::{finite_difference, Derivative};
pub use fractional::{fractional_seminorm, FractionalReport};
pub use mollifier::Mollifier;
pub use norms::{cell_average_integral, sobolev_distance, sobolev_norm, NormReport};
pub use oscillation::{mean_oscillation, OscillationReport};
pub use sphere_ops::{circle_lift, project_to_sphere, restrict_to_curve, restrict_to_points, SampledSphereMap};

use crate::geometry::{AxisBox, GeometryError, StructuredSingularSet};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("node {node} lies at distance {distance} from the sphere, beyond the tubular radius {iota}")]
    OutsideTubularNeighborhood { node: usize, distance: f64, iota: f64 },
    #[error("lifting is inconsistent across the edge {from} -> {to}: nonzero holonomy")]
    NonzeroHolonomy { from: usize, to: usize },
    #[error("curve sample {sample} leaves the box")]
    CurveOutsideBox { sample: usize },
    #[error("curve sample {sample} comes within one cell of the singular set")]
    CurveHitsSingularSet { sample: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Target of a field: the unit sphere `S^n ⊂ R^{n+1}` or no constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Sphere(usize),
    Unconstrained,
}

/// Uniform tensor grid on a box; node `i` along axis `a` sits at
/// `lo[a] + (hi[a] - lo[a]) * i / (dims[a] - 1)`, last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    bx: AxisBox,
    dims: Vec<usize>,
    h: Vec<f64>,
    strides: Vec<usize>,
}

impl Grid {
    pub fn new(bx: &AxisBox, dims: &[usize]) -> Result<Self, FieldError> {
        if dims.len() != bx.dim() {
            return Err(FieldError::InvalidField(format!(
                "{} dims given for a {}-dimensional box",
                dims.len(),
                bx.dim()
            )));
        }
        if dims.iter().any(|&d| d < 2) {
            return Err(FieldError::GridTooCoarse(format!("dims {dims:?}")));
        }
        let m = dims.len();
        let mut strides = vec![1; m];
        for a in (0..m.saturating_sub(1)).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let h = (0..m).map(|a| bx.side(a) / (dims[a] - 1) as f64).collect();
        Ok(Self {
            bx: bx.clone(),
            dims: dims.to_vec(),
            h,
            strides,
        })
    }

    pub fn bx(&self) -> &AxisBox {
        &self.bx
    }

    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn h(&self) -> &[f64] {
        &self.h
    }

    pub fn h_max(&self) -> f64 {
        self.h.iter().fold(0.0, |a: f64, &b| a.max(b))
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        let lo = self.bx.lo()[axis];
        let hi = self.bx.hi()[axis];
        lo + (hi - lo) * (i as f64) / ((self.dims[axis] - 1) as f64)
    }

    pub fn multi_index(&self, mut flat: usize, out: &mut [usize]) {
        for a in (0..self.dim()).rev() {
            out[a] = flat % self.dims[a];
            flat /= self.dims[a];
        }
    }

    pub fn flat(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut idx = vec![0; self.dim()];
        self.multi_index(flat, &mut idx);
        idx.iter().enumerate().map(|(a, &i)| self.coord(a, i)).collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h.iter().product()
    }

    pub fn cell_count(&self) -> usize {
        self.dims.iter().map(|d| d - 1).product()
    }

    /// Flat index of the lowest corner of each cell, in row-major order.
    pub fn cell_bases(&self) -> Vec<usize> {
        let m = self.dim();
        let cdims: Vec<usize> = self.dims.iter().map(|d| d - 1).collect();
        let n: usize = cdims.iter().product();
        let mut out = Vec::with_capacity(n);
        let mut idx = vec![0usize; m];
        for mut c in 0..n {
            for a in (0..m).rev() {
                idx[a] = c % cdims[a];
                c /= cdims[a];
            }
            out.push(self.flat(&idx));
        }
        out
    }

    /// Offsets (relative to the lowest corner) of the `2^m` cell corners.
    pub fn corner_offsets(&self) -> Vec<usize> {
        let m = self.dim();
        (0..(1usize << m))
            .map(|c| (0..m).filter(|a| c >> a & 1 == 1).map(|a| self.strides[a]).sum())
            .collect()
    }

    /// Center of the cell with the given lowest corner.
    pub fn cell_center(&self, base: usize) -> Vec<f64> {
        let mut p = self.point(base);
        for (a, v) in p.iter_mut().enumerate() {
            *v += 0.5 * self.h[a];
        }
        p
    }

    /// Lowest corner and fractional offsets of the cell containing `x`.
    /// Fractions within 1e-9 of a lattice value snap to it exactly.
    pub fn locate(&self, x: &[f64]) -> Option<(usize, Vec<f64>)> {
        let m = self.dim();
        let mut base = 0;
        let mut frac = Vec::with_capacity(m);
        for a in 0..m {
            let lo = self.bx.lo()[a];
            let t = (x[a] - lo) / self.h[a];
            let n = (self.dims[a] - 1) as f64;
            if !(t >= -1e-9 && t <= n + 1e-9) {
                return None;
            }
            let r = t.round();
            let t = if (t - r).abs() < 1e-9 { r } else { t };
            let mut i = t.floor();
            if i >= n {
                i = n - 1.0;
            }
            if i < 0.0 {
                i = 0.0;
            }
            base += i as usize * self.strides[a];
            frac.push(t - i);
        }
        Some((base, frac))
    }

    /// Multilinear interpolation weights: `(node, weight)` pairs with
    /// nonzero weight only.
    pub fn weights(&self, x: &[f64]) -> Option<Vec<(usize, f64)>> {
        let (base, frac) = self.locate(x)?;
        let m = self.dim();
        let mut out = Vec::with_capacity(1 << m);
        for c in 0..(1usize << m) {
            let mut w = 1.0;
            let mut off = 0;
            for a in 0..m {
                if c >> a & 1 == 1 {
                    w *= frac[a];
                    off += self.strides[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                out.push((base + off, w));
            }
        }
        Some(out)
    }
}

/// Samples of a map `box -> R^nu` at grid nodes, with a per-node validity
/// mask and optional geometric singular-set metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    grid: Grid,
    nu: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    target: Target,
    singular: Option<StructuredSingularSet>,
}

/// Unit-norm tolerance for sphere-valued fields.
pub const UNIT_TOL: f64 = 1e-9;

impl GridField {
    /// Builds a field from raw values; masked nodes hold `NaN`.
    pub fn from_values(
        grid: Grid,
        nu: usize,
        target: Target,
        mut values: Vec<f64>,
        mut mask: Vec<bool>,
    ) -> Result<Self, FieldError> {
        if nu == 0 || values.len() != nu * grid.len() {
            return Err(FieldError::InvalidField(format!(
                "{} values for {} nodes with nu = {nu}",
                values.len(),
                grid.len()
            )));
        }
        if mask.len() != grid.len() {
            return Err(FieldError::InvalidField("mask length mismatch".into()));
        }
        if let Target::Sphere(n) = target {
            if n + 1 != nu {
                return Err(FieldError::InvalidField(format!(
                    "target S^{n} needs nu = {}, got {nu}",
                    n + 1
                )));
            }
        }
        for i in 0..grid.len() {
            let v = &values[i * nu..(i + 1) * nu];
            if v.iter().any(|x| !x.is_finite()) {
                mask[i] = true;
            }
            if mask[i] {
                values[i * nu..(i + 1) * nu].fill(f64::NAN);
            }
        }
        let f = Self {
            grid,
            nu,
            values,
            mask,
            target,
            singular: None,
        };
        f.validate()?;
        Ok(f)
    }

    /// Samples `f` at every node. Nodes where `f` returns `None`, or which
    /// are corners of a cell meeting `singular`, are masked.
    pub fn sample<F>(
        grid: Grid,
        nu: usize,
        target: Target,
        singular: Option<StructuredSingularSet>,
        f: F,
    ) -> Result<Self, FieldError>
    where
        F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
    {
        use rayon::prelude::*;
        let h = grid.h().to_vec();
        let rows: Vec<(Vec<f64>, bool)> = (0..grid.len())
            .into_par_iter()
            .map(|i| {
                let x = grid.point(i);
                let near = singular.as_ref().is_some_and(|s| s.within_cell(&x, &h));
                if near {
                    return (vec![f64::NAN; nu], true);
                }
                match f(&x) {
                    Some(v) => {
                        assert_eq!(v.len(), nu, "sampler returned wrong length");
                        (v, false)
                    }
                    None => (vec![f64::NAN; nu], true),
                }
            })
            .collect();
        let mut values = Vec::with_capacity(nu * grid.len());
        let mut mask = Vec::with_capacity(grid.len());
        for (v, m) in rows {
            values.extend(v);
            mask.push(m);
        }
        let mut out = Self::from_values(grid, nu, target, values, mask)?;
        out.singular = singular;
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.grid.dims().iter().any(|&d| d < 4) {
            return Err(FieldError::GridTooCoarse(format!(
                "every axis needs at least 4 nodes, got {:?}",
                self.grid.dims()
            )));
        }
        if let Target::Sphere(_) = self.target {
            for i in 0..self.grid.len() {
                if self.mask[i] {
                    continue;
                }
                let r = crate::util::norm(self.value(i));
                if (r - 1.0).abs() > UNIT_TOL {
                    return Err(FieldError::InvalidField(format!(
                        "node {i} has norm {r}, expected a unit vector"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn target(&self) -> Target {
        self.target
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, node: usize) -> &[f64] {
        &self.values[node * self.nu..(node + 1) * self.nu]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_masked(&self, node: usize) -> bool {
        self.mask[node]
    }

    pub fn masked_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn singular_set(&self) -> Option<&StructuredSingularSet> {
        self.singular.as_ref()
    }

    pub fn with_singular_set(mut self, s: Option<StructuredSingularSet>) -> Self {
        self.singular = s;
        self
    }

    /// Replaces the target descriptor without touching the values.
    pub fn with_target(mut self, target: Target) -> Result<Self, FieldError> {
        self.target = target;
        self.validate()?;
        Ok(self)
    }

    /// Same grid, values replaced; the mask is recomputed from non-finite
    /// entries and merged with `extra_mask` when given.
    pub fn with_values(
        &self,
        values: Vec<f64>,
        extra_mask: Option<&[bool]>,
        target: Target,
    ) -> Result<Self, FieldError> {
        self.derived(self.nu, values, extra_mask, target)
    }

    /// Field on the same grid with a possibly different number of
    /// components, inheriting the singular-set metadata.
    pub fn derived(
        &self,
        nu: usize,
        values: Vec<f64>,
        extra_mask: Option<&[bool]>,
        target: Target,
    ) -> Result<Self, FieldError> {
        let mask = match extra_mask {
            Some(m) => m.to_vec(),
            None => vec![false; self.grid.len()],
        };
        let mut out = Self::from_values(self.grid.clone(), nu, target, values, mask)?;
        out.singular = self.singular.clone();
        Ok(out)
    }

    /// Multilinear interpolation; `None` outside the box or when a corner
    /// with nonzero weight is masked.
    pub fn interpolate(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w = self.grid.weights(x)?;
        let mut out = vec![0.0; self.nu];
        for (node, wt) in w {
            if self.mask[node] {
                return None;
            }
            for (o, v) in out.iter_mut().zip(self.value(node)) {
                *o += wt * v;
            }
        }
        Some(out)
    }

    /// Multilinear interpolation over the unmasked corners of the cell, with
    /// the weights renormalised; `None` outside the box or when every corner
    /// with nonzero weight is masked. Agrees with [`Self::interpolate`]
    /// whenever that succeeds.
    pub fn interpolate_partial(&self, x: &[f64]) -> Option<Vec<f64>> {
        let w = self.grid.weights(x)?;
        let mut out = vec![0.0; self.nu];
        let mut total = 0.0;
        let mut masked = false;
        for (node, wt) in w {
            if self.mask[node] {
                masked = true;
                continue;
            }
            total += wt;
            for (o, v) in out.iter_mut().zip(self.value(node)) {
                *o += wt * v;
            }
        }
        if !masked {
            return Some(out);
        }
        if total <= 1e-12 {
            return None;
        }
        out.iter_mut().for_each(|o| *o /= total);
        Some(out)
    }

    /// Pointwise difference `self - other` as an unconstrained field whose
    /// mask is the union of both masks.
    pub fn difference(&self, other: &Self) -> Result<Self, FieldError> {
        if self.grid != other.grid || self.nu != other.nu {
            return Err(FieldError::InvalidField("difference of incompatible fields".into()));
        }
        let mask: Vec<bool> = self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect();
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::from_values(self.grid.clone(), self.nu, Target::Unconstrained, values, mask)
    }

    /// Copy with additional nodes masked.
    pub fn masked_with(&self, extra: &[bool]) -> Result<Self, FieldError> {
        let mask: Vec<bool> = self.mask.iter().zip(extra).map(|(a, b)| *a || *b).collect();
        let mut out = Self::from_values(self.grid.clone(), self.nu, self.target, self.values.clone(), mask)?;
        out.singular = self.singular.clone();
        Ok(out)
    }
}
