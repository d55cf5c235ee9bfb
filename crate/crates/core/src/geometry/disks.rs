use super::{AxisBox, GeometryError, TriangulatedSphere};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Boundary of an axis-aligned disk `xi + r * B^{l+1}` lying in the affine
/// plane spanned by `axes`, parametrized by a triangulated `S^l`.
#[derive(Debug, Clone)]
pub struct DiskBoundary {
    pub id: usize,
    pub center: Vec<f64>,
    pub radius: f64,
    pub axes: Vec<usize>,
    pub sphere: Arc<TriangulatedSphere>,
}

impl DiskBoundary {
    pub fn new(id: usize, center: Vec<f64>, radius: f64, axes: Vec<usize>, sphere: Arc<TriangulatedSphere>) -> Self {
        assert_eq!(axes.len(), sphere.dim() + 1, "one plane axis per sphere coordinate");
        Self {
            id,
            center,
            radius,
            axes,
            sphere,
        }
    }

    pub fn dim(&self) -> usize {
        self.sphere.dim()
    }

    /// Lipschitz constant of the parametrization.
    pub fn lipschitz(&self) -> f64 {
        self.radius
    }

    /// Image of a point of `S^l`.
    pub fn map(&self, s: &[f64]) -> Vec<f64> {
        let mut x = self.center.clone();
        for (k, &a) in self.axes.iter().enumerate() {
            x[a] += self.radius * s[k];
        }
        x
    }

    /// Images of all sphere vertices.
    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.sphere.num_vertices())
            .map(|i| self.map(self.sphere.vertex(i)))
            .collect()
    }

    /// `l`-dimensional measure of the image, `r^l |S^l|`.
    pub fn measure(&self) -> f64 {
        self.radius.powi(self.dim() as i32) * self.sphere.exact_measure()
    }

    /// Same disk translated by `xi`.
    pub fn translated(&self, xi: &[f64]) -> Self {
        let mut c = self.center.clone();
        for (a, v) in c.iter_mut().zip(xi) {
            *a += v;
        }
        Self {
            center: c,
            ..self.clone()
        }
    }
}

/// Default refinement of the parametrizing sphere for each dimension.
pub fn default_sphere_level(ell: usize) -> usize {
    match ell {
        1 => 7,
        2 => 4,
        _ => 2,
    }
}

/// Samples `count` axis-aligned disk boundaries of dimension `ell` fully
/// inside `bx`: the plane axes are uniform among all `(ell+1)`-subsets, the
/// radius is log-uniform in `[2 min_radius, fit]`, and the center is uniform
/// among positions keeping the disk inside the box.
pub fn standard_disk_boundaries(
    bx: &AxisBox,
    ell: usize,
    count: usize,
    seed: u64,
    min_radius: f64,
) -> Result<Vec<DiskBoundary>, GeometryError> {
    let m = bx.dim();
    if ell + 1 > m || ell == 0 || ell > 3 {
        return Err(GeometryError::InvalidArgument(format!(
            "disk boundary dimension {ell} needs 1 <= l and l + 1 <= m = {m}"
        )));
    }
    if count == 0 {
        return Err(GeometryError::InvalidArgument("count must be at least 1".into()));
    }
    let subsets: Vec<Vec<usize>> = (0..(1usize << m))
        .filter(|s| s.count_ones() as usize == ell + 1)
        .map(|s| (0..m).filter(|a| s >> a & 1 == 1).collect())
        .collect();
    let fit_of = |axes: &[usize]| axes.iter().map(|&a| 0.5 * bx.side(a)).fold(f64::INFINITY, f64::min) * 0.98;
    if subsets.iter().all(|s| fit_of(s) < 2.0 * min_radius) {
        return Err(GeometryError::DegenerateBox(format!(
            "no disk of radius >= {} fits",
            2.0 * min_radius
        )));
    }
    let sphere = Arc::new(TriangulatedSphere::new(ell, default_sphere_level(ell))?);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let axes = subsets[rng.gen_range(0..subsets.len())].clone();
        let fit = fit_of(&axes);
        if fit < 2.0 * min_radius {
            continue;
        }
        let (a, b) = ((2.0 * min_radius).ln(), fit.ln());
        let r = if b > a { rng.gen_range(a..b).exp() } else { fit };
        let center: Vec<f64> = (0..m)
            .map(|i| {
                let pad = if axes.contains(&i) { r } else { 0.0 };
                let (lo, hi) = (bx.lo()[i] + pad, bx.hi()[i] - pad);
                if hi > lo {
                    rng.gen_range(lo..hi)
                } else {
                    0.5 * (lo + hi)
                }
            })
            .collect();
        out.push(DiskBoundary::new(out.len(), center, r, axes, sphere.clone()));
    }
    Ok(out)
}
