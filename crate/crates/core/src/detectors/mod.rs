//! Detector functions `w`, Fuglede admissibility of restrictions to disk
//! boundaries, and averaging over translated restrictions.

use crate::fields::{finite_difference, FieldError, Grid, GridField};
use crate::geometry::{DiskBoundary, StructuredSingularSet};
use crate::util::{sphere_measure, unit_ball_volume};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectorError {
    #[error("detector is not summable: integral grows by {growth:.3}x under refinement ({detail})")]
    NonSummable { growth: f64, detail: String },
    #[error("all {samples} translates hit an infinite detector value")]
    NoAdmissibleTranslate { samples: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Origin of a detector field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Provenance {
    MaximalFunction { p: f64 },
    PowerDistance { alpha: f64, rank: i32 },
    Sum(Vec<Provenance>),
}

#[derive(Debug, Clone)]
enum Evaluator {
    Nodal,
    PowerDistance { set: StructuredSingularSet, alpha: f64 },
    Sum(Vec<DetectorField>),
}

/// Nonnegative extended-real function on a grid; `+inf` is allowed on the
/// singular mask only.
#[derive(Debug, Clone)]
pub struct DetectorField {
    grid: Grid,
    w: Vec<f64>,
    integral: f64,
    excluded_volume: f64,
    provenance: Provenance,
    eval: Evaluator,
}

impl DetectorField {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn nodal(&self) -> &[f64] {
        &self.w
    }

    /// Quadrature value of `int w` over the box.
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// Volume of cells left out of the integral because a corner is infinite.
    pub fn excluded_volume(&self) -> f64 {
        self.excluded_volume
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Value at an arbitrary point: closed form when available, multilinear
    /// interpolation otherwise (infinite as soon as a contributing corner is).
    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.eval {
            Evaluator::PowerDistance { set, alpha } => {
                let d = set.distance(x);
                if d == 0.0 {
                    f64::INFINITY
                } else {
                    d.powf(-alpha)
                }
            }
            Evaluator::Sum(parts) => parts.iter().map(|p| p.eval(x)).sum(),
            Evaluator::Nodal => match self.grid.weights(x) {
                None => f64::INFINITY,
                Some(ws) => {
                    let mut s = 0.0;
                    for (node, wt) in ws {
                        let v = self.w[node];
                        if v.is_infinite() {
                            return f64::INFINITY;
                        }
                        s += wt * v;
                    }
                    s
                }
            },
        }
    }

    /// Pointwise sum of detectors on the same grid.
    pub fn sum(parts: Vec<DetectorField>) -> Result<Self, DetectorError> {
        let first = parts
            .first()
            .ok_or_else(|| DetectorError::InvalidArgument("empty detector sum".into()))?;
        let grid = first.grid.clone();
        if parts.iter().any(|p| p.grid != grid) {
            return Err(DetectorError::InvalidArgument("detectors on different grids".into()));
        }
        let mut w = vec![0.0; grid.len()];
        for p in &parts {
            for (a, b) in w.iter_mut().zip(&p.w) {
                *a += b;
            }
        }
        Ok(Self {
            integral: parts.iter().map(|p| p.integral).sum(),
            excluded_volume: parts.iter().map(|p| p.excluded_volume).fold(0.0, f64::max),
            provenance: Provenance::Sum(parts.iter().map(|p| p.provenance.clone()).collect()),
            grid,
            w,
            eval: Evaluator::Sum(parts),
        })
    }
}

/// Cell quadrature of a nodal function: corner average times cell volume,
/// skipping cells with an infinite corner.
fn nodal_integral(grid: &Grid, w: &[f64]) -> (f64, f64) {
    let finite: Vec<bool> = w.iter().map(|v| v.is_finite()).collect();
    crate::fields::cell_average_integral(grid, 1, w, &finite, |v| v[0])
}

/// Summed-area table over nodes, padded by one leading zero per axis.
struct Integral {
    strides: Vec<usize>,
    table: Vec<f64>,
}

impl Integral {
    fn new(grid: &Grid, data: &[f64]) -> Self {
        let m = grid.dim();
        let dims: Vec<usize> = grid.dims().iter().map(|d| d + 1).collect();
        let mut strides = vec![1; m];
        for a in (0..m - 1).rev() {
            strides[a] = strides[a + 1] * dims[a + 1];
        }
        let total: usize = dims.iter().product();
        let mut table = vec![0.0; total];
        let mut idx = vec![0usize; m];
        for flat in 0..total {
            let mut r = flat;
            for a in (0..m).rev() {
                idx[a] = r % dims[a];
                r /= dims[a];
            }
            if idx.contains(&0) {
                continue;
            }
            let src: usize = idx.iter().zip(grid.strides()).map(|(i, s)| (i - 1) * s).sum();
            table[flat] = data[src];
        }
        for a in 0..m {
            for flat in 0..total {
                let i = (flat / strides[a]) % dims[a];
                if i > 0 {
                    table[flat] += table[flat - strides[a]];
                }
            }
        }
        Self { strides, table }
    }

    /// Sum over the node box `[lo, hi]` (inclusive).
    fn sum(&self, lo: &[usize], hi: &[usize]) -> f64 {
        let m = lo.len();
        let mut s = 0.0;
        for c in 0..(1usize << m) {
            let mut flat = 0;
            let mut sign = 1.0;
            let mut skip = false;
            for a in 0..m {
                let i = if c >> a & 1 == 1 {
                    hi[a] + 1
                } else {
                    sign = -sign;
                    if lo[a] == 0 {
                        skip = true;
                    }
                    lo[a]
                };
                flat += i * self.strides[a];
            }
            if !skip {
                s += sign * self.table[flat];
            }
        }
        s
    }
}

/// Radii (in nodes) at which the maximal function is sampled: dyadic
/// `1, 2, 4, ...` or every integer up to the largest dimension.
fn maximal_function(grid: &Grid, values: &[f64], valid: &[bool], radii: &[usize]) -> Vec<f64> {
    let m = grid.dim();
    let data: Vec<f64> = values
        .iter()
        .zip(valid)
        .map(|(v, ok)| if *ok { *v } else { 0.0 })
        .collect();
    let ones: Vec<f64> = valid.iter().map(|&ok| if ok { 1.0 } else { 0.0 }).collect();
    let sums = Integral::new(grid, &data);
    let counts = Integral::new(grid, &ones);
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let mut idx = vec![0usize; m];
            grid.multi_index(node, &mut idx);
            let mut lo = vec![0usize; m];
            let mut hi = vec![0usize; m];
            let mut best: f64 = 0.0;
            for &r in radii {
                for a in 0..m {
                    lo[a] = idx[a].saturating_sub(r);
                    hi[a] = (idx[a] + r).min(grid.dims()[a] - 1);
                }
                let c = counts.sum(&lo, &hi);
                if c > 0.5 {
                    best = best.max(sums.sum(&lo, &hi) / c);
                }
            }
            best
        })
        .collect()
}

fn dyadic_radii(grid: &Grid) -> Vec<usize> {
    let max = *grid.dims().iter().max().unwrap_or(&1);
    let mut r = 1;
    let mut out = Vec::new();
    while r < 2 * max {
        out.push(r);
        r *= 2;
    }
    out
}

/// `w = |u|^p + (M|Du|)^p` with the discrete maximal function over
/// sup-norm cubes of dyadic radii `h, 2h, 4h, ...`. Masked nodes and nodes
/// whose difference stencil touches the mask get `+inf`.
pub fn maximal_function_detector(u: &GridField, p: f64) -> Result<DetectorField, DetectorError> {
    maximal_function_detector_with(u, p, &dyadic_radii(u.grid()))
}

/// Same as [`maximal_function_detector`] with every integer radius; the
/// brute-force reference for the dyadic version.
pub fn maximal_function_detector_all_radii(u: &GridField, p: f64) -> Result<DetectorField, DetectorError> {
    let max = *u.grid().dims().iter().max().unwrap_or(&1);
    let radii: Vec<usize> = (1..=max).collect();
    maximal_function_detector_with(u, p, &radii)
}

fn maximal_function_detector_with(u: &GridField, p: f64, radii: &[usize]) -> Result<DetectorField, DetectorError> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(DetectorError::InvalidArgument(format!("p = {p} outside [1, inf)")));
    }
    let grid = u.grid().clone();
    let d = finite_difference(u, 1)?;
    let mags: Vec<f64> = (0..grid.len())
        .map(|i| if d.valid[i] { d.norm_at(i) } else { 0.0 })
        .collect();
    let mf = maximal_function(&grid, &mags, &d.valid, radii);
    let w: Vec<f64> = (0..grid.len())
        .map(|i| {
            if !d.valid[i] {
                f64::INFINITY
            } else {
                let r: f64 = u.value(i).iter().map(|v| v * v).sum::<f64>().sqrt();
                r.powf(p) + mf[i].powf(p)
            }
        })
        .collect();
    let (integral, excluded_volume) = nodal_integral(&grid, &w);
    Ok(DetectorField {
        grid,
        w,
        integral,
        excluded_volume,
        provenance: Provenance::MaximalFunction { p },
        eval: Evaluator::Nodal,
    })
}

/// Midpoint quadrature of `d(x, T)^{-alpha}` on the cells of `grid`.
fn power_integral(grid: &Grid, set: &StructuredSingularSet, alpha: f64) -> f64 {
    let bases = grid.cell_bases();
    let vol = grid.cell_volume();
    let parts: Vec<f64> = bases
        .par_chunks(1024)
        .map(|chunk| {
            chunk
                .iter()
                .map(|&b| {
                    let d = set.distance(&grid.cell_center(b));
                    if d == 0.0 {
                        0.0
                    } else {
                        d.powf(-alpha) * vol
                    }
                })
                .sum::<f64>()
        })
        .collect();
    parts.iter().sum()
}

/// `w = 1 / d(x, T)^alpha`, infinite on `T`. Summability is certified both
/// by the exponent (`alpha < m - rank`) and numerically: the integral must
/// not grow by more than 2x when the grid is refined.
pub fn power_distance_detector(
    set: &StructuredSingularSet,
    alpha: f64,
    grid: &Grid,
) -> Result<DetectorField, DetectorError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(DetectorError::InvalidArgument(format!("alpha = {alpha}")));
    }
    let m = grid.dim();
    let codim = m as f64 - set.rank().max(0) as f64;
    let w: Vec<f64> = (0..grid.len())
        .map(|i| {
            let d = set.distance(&grid.point(i));
            if d == 0.0 {
                f64::INFINITY
            } else {
                d.powf(-alpha)
            }
        })
        .collect();
    let integral = power_integral(grid, set, alpha);
    let fine_dims: Vec<usize> = grid.dims().iter().map(|d| 2 * d - 1).collect();
    let fine = Grid::new(grid.bx(), &fine_dims)?;
    let refined = power_integral(&fine, set, alpha);
    let growth = if integral > 0.0 { refined / integral } else { 1.0 };
    if !set.is_empty() && alpha >= codim {
        return Err(DetectorError::NonSummable {
            growth,
            detail: format!("alpha = {alpha} >= codimension {codim}"),
        });
    }
    if growth > 2.0 {
        return Err(DetectorError::NonSummable {
            growth,
            detail: "quadrature diverges".into(),
        });
    }
    Ok(DetectorField {
        grid: grid.clone(),
        w,
        integral,
        excluded_volume: 0.0,
        provenance: Provenance::PowerDistance {
            alpha,
            rank: set.rank(),
        },
        eval: Evaluator::PowerDistance {
            set: set.clone(),
            alpha,
        },
    })
}

/// Result of screening one restriction.
#[derive(Debug, Clone, Serialize)]
pub struct FugledeVerdict {
    pub gamma_id: usize,
    pub integral: f64,
    pub admissible: bool,
    pub budget: f64,
}

/// Default budget `64 int w / |S^l|`.
pub fn default_budget(w: &DetectorField, ell: usize) -> f64 {
    64.0 * w.integral() / sphere_measure(ell)
}

/// Trapezoid rule on the simplices of the parametrizing sphere:
/// `int_{S^l} w(gamma) dH^l` with the image measure `r^l dH^l`.
pub fn restricted_integral(w: &DetectorField, gamma: &DiskBoundary) -> f64 {
    let values: Vec<f64> = gamma.points().iter().map(|x| w.eval(x)).collect();
    if values.iter().any(|v| v.is_infinite()) {
        return f64::INFINITY;
    }
    trapezoid(gamma, &values)
}

/// [`restricted_integral`] of `w` set to zero where it is infinite, the
/// same convention as [`DetectorField::integral`].
pub fn restricted_finite_part(w: &DetectorField, gamma: &DiskBoundary) -> f64 {
    let values: Vec<f64> = gamma
        .points()
        .iter()
        .map(|x| w.eval(x))
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect();
    trapezoid(gamma, &values)
}

fn trapezoid(gamma: &DiskBoundary, values: &[f64]) -> f64 {
    let sphere = &gamma.sphere;
    let ell = sphere.dim();
    let scale = gamma.radius.powi(ell as i32) / (ell + 1) as f64;
    let mut s = 0.0;
    for i in 0..sphere.num_simplices() {
        let avg: f64 = sphere.simplex(i).iter().map(|&v| values[v]).sum();
        s += sphere.simplex_measure(i) * avg;
    }
    s * scale
}

/// Admissible iff the restricted integral is at most `budget`.
pub fn fuglede_check(w: &DetectorField, gamma: &DiskBoundary, budget: f64) -> FugledeVerdict {
    let integral = restricted_integral(w, gamma);
    FugledeVerdict {
        gamma_id: gamma.id,
        integral,
        admissible: integral.is_finite() && integral <= budget,
        budget,
    }
}

/// Monte-Carlo statistics of `xi -> int w(gamma + xi)` for `xi` uniform in
/// the ball `B_delta`.
#[derive(Debug, Clone, Serialize)]
pub struct TranslationStats {
    pub mean: f64,
    pub min: f64,
    pub argmin: Vec<f64>,
    pub argmin_index: usize,
    pub samples: usize,
    pub finite_samples: usize,
    /// Mean of the translated integrals with `w` zeroed where infinite, so
    /// that both sides of the Tonelli bound drop the same region.
    pub finite_part_mean: f64,
    /// `finite_part_mean * |B_delta|`, to compare with `len(gamma) * int w`.
    pub mean_times_ball: f64,
    /// `len(gamma) * int w`.
    pub tonelli_bound: f64,
}

/// Sample `i` draws from its own ChaCha stream, so results do not depend on
/// evaluation order. Ties in the minimum go to the lowest sample index.
pub fn translation_average(
    w: &DetectorField,
    gamma: &DiskBoundary,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<TranslationStats, DetectorError> {
    let m = gamma.center.len();
    if !(delta > 0.0) || samples == 0 {
        return Err(DetectorError::InvalidArgument(format!(
            "need delta > 0 and samples > 0, got {delta}, {samples}"
        )));
    }
    let bx = w.grid().bx();
    for a in 0..m {
        let reach = if gamma.axes.contains(&a) { gamma.radius } else { 0.0 } + delta;
        if gamma.center[a] - reach < bx.lo()[a] || gamma.center[a] + reach > bx.hi()[a] {
            return Err(DetectorError::InvalidArgument("gamma + B_delta leaves the box".into()));
        }
    }
    let draws: Vec<(Vec<f64>, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let xi = loop {
                let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-delta..delta)).collect();
                if v.iter().map(|x| x * x).sum::<f64>() < delta * delta {
                    break v;
                }
            };
            let moved = gamma.translated(&xi);
            let val = restricted_integral(w, &moved);
            let finite = if val.is_finite() {
                val
            } else {
                restricted_finite_part(w, &moved)
            };
            (xi, val, finite)
        })
        .collect();
    let finite: Vec<&(Vec<f64>, f64, f64)> = draws.iter().filter(|d| d.1.is_finite()).collect();
    if finite.is_empty() {
        return Err(DetectorError::NoAdmissibleTranslate { samples });
    }
    let mut argmin_index = 0;
    let mut min = f64::INFINITY;
    for (i, d) in draws.iter().enumerate() {
        if d.1 < min {
            min = d.1;
            argmin_index = i;
        }
    }
    let mean = draws.iter().map(|d| d.1).sum::<f64>() / samples as f64;
    let finite_part_mean = draws.iter().map(|d| d.2).sum::<f64>() / samples as f64;
    let ball = unit_ball_volume(m) * delta.powi(m as i32);
    Ok(TranslationStats {
        mean,
        min,
        argmin: draws[argmin_index].0.clone(),
        argmin_index,
        samples,
        finite_samples: finite.len(),
        finite_part_mean,
        mean_times_ball: finite_part_mean * ball,
        tonelli_bound: gamma.measure() * w.integral(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Target;
    use crate::geometry::{AxisBox, TriangulatedSphere};
    use std::sync::Arc;

    fn grid(n: usize) -> Grid {
        Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[n, n]).unwrap()
    }

    fn circle(center: [f64; 2], r: f64) -> DiskBoundary {
        let s = Arc::new(TriangulatedSphere::new(1, 7).unwrap());
        DiskBoundary::new(0, center.to_vec(), r, vec![0, 1], s)
    }

    #[test]
    fn summed_area_table_matches_direct_sum() {
        let g = Grid::new(&AxisBox::centered_cube(3, 1.0).unwrap(), &[5, 6, 7]).unwrap();
        let data: Vec<f64> = (0..g.len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let t = Integral::new(&g, &data);
        let lo = [1, 0, 2];
        let hi = [3, 4, 6];
        let mut direct = 0.0;
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                for k in lo[2]..=hi[2] {
                    direct += data[g.flat(&[i, j, k])];
                }
            }
        }
        assert!((t.sum(&lo, &hi) - direct).abs() < 1e-12);
    }

    #[test]
    fn constant_field_detector() {
        let u = GridField::sample(grid(33), 2, Target::Sphere(1), None, |_| Some(vec![1.0, 0.0])).unwrap();
        let w = maximal_function_detector(&u, 2.0).unwrap();
        assert!(w.nodal().iter().all(|&v| (v - 1.0).abs() < 1e-14));
        assert!((w.integral() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn unit_detector_arclength() {
        let u = GridField::sample(grid(17), 2, Target::Sphere(1), None, |_| Some(vec![1.0, 0.0])).unwrap();
        let w = maximal_function_detector(&u, 2.0).unwrap();
        let g = circle([0.1, -0.2], 0.4);
        let v = fuglede_check(&w, &g, f64::INFINITY);
        assert!((v.integral - 2.0 * std::f64::consts::PI * 0.4).abs() < 1e-3);
        assert!(v.admissible);
    }

    #[test]
    fn inverse_distance_integral_on_square() {
        let g = grid(257);
        let t = StructuredSingularSet::new(2, 0, vec![crate::geometry::AffinePiece::point(&[0.0, 0.0])]).unwrap();
        let w = power_distance_detector(&t, 1.0, &g).unwrap();
        let exact = 8.0 * (1.0 + 2f64.sqrt()).ln();
        assert!((w.integral() - exact).abs() / exact < 0.01, "{}", w.integral());
        assert!(matches!(
            power_distance_detector(&t, 2.0, &g),
            Err(DetectorError::NonSummable { .. })
        ));
    }

    #[test]
    fn dyadic_maximal_function_within_factor_of_all_radii() {
        let u = GridField::sample(grid(21), 2, Target::Sphere(1), None, |x| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            (r > 0.1).then(|| vec![x[0] / r, x[1] / r])
        })
        .unwrap();
        let dy = maximal_function_detector(&u, 1.0).unwrap();
        let all = maximal_function_detector_all_radii(&u, 1.0).unwrap();
        for (a, b) in dy.nodal().iter().zip(all.nodal()) {
            if b.is_finite() {
                assert!(*a <= *b + 1e-12 && *b <= 4.0 * *a + 1e-12);
            } else {
                assert!(a.is_infinite());
            }
        }
    }
}
