use super::{finite_difference, FieldError, Grid, GridField};
use rayon::prelude::*;
use serde::Serialize;

/// `W^{k,p}` norm broken down by derivative order.
#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub k: usize,
    pub p: f64,
    /// `(sum_j ||D^j u||_p^p)^{1/p}` for `j = 0..=k`.
    pub norm: f64,
    /// `||D^j u||_{L^p}` for `j = 0..=k`.
    pub parts: Vec<f64>,
    /// Volume of the cells excluded at each order.
    pub excluded_volume: Vec<f64>,
}

/// Midpoint quadrature over grid cells: the nodal tensor is averaged over
/// the `2^m` corners (its multilinear value at the cell center) and `f` is
/// applied to the average. Cells with an invalid corner are skipped and
/// their volume is returned separately. Partial sums are accumulated per
/// cell row in a fixed order, so the result does not depend on threading.
pub fn cell_average_integral<F>(grid: &Grid, ncomp: usize, data: &[f64], valid: &[bool], f: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let bases = grid.cell_bases();
    let corners = grid.corner_offsets();
    let vol = grid.cell_volume();
    let scale = 1.0 / corners.len() as f64;
    let chunk = grid.dims().last().map(|d| d - 1).unwrap_or(1).max(1);
    let partial: Vec<(f64, f64)> = bases
        .par_chunks(chunk)
        .map(|row| {
            let mut avg = vec![0.0; ncomp];
            let mut sum = 0.0;
            let mut excluded = 0.0;
            for &b in row {
                if corners.iter().any(|&o| !valid[b + o]) {
                    excluded += vol;
                    continue;
                }
                avg.fill(0.0);
                for &o in &corners {
                    let v = &data[(b + o) * ncomp..(b + o + 1) * ncomp];
                    for (a, x) in avg.iter_mut().zip(v) {
                        *a += x;
                    }
                }
                for a in avg.iter_mut() {
                    *a *= scale;
                }
                sum += f(&avg) * vol;
            }
            (sum, excluded)
        })
        .collect();
    partial.iter().fold((0.0, 0.0), |(s, e), (a, b)| (s + a, e + b))
}

fn lp_power(v: &[f64], p: f64) -> f64 {
    let s: f64 = v.iter().map(|x| x * x).sum();
    if p == 2.0 {
        s
    } else {
        s.sqrt().powf(p)
    }
}

/// `||u||_{W^{k,p}}` with Frobenius norms of the derivative tensors.
pub fn sobolev_norm(u: &GridField, k: usize, p: f64) -> Result<NormReport, FieldError> {
    if !(1.0..f64::INFINITY).contains(&p) {
        return Err(FieldError::InvalidField(format!("exponent p = {p} outside [1, inf)")));
    }
    if k > 2 {
        return Err(FieldError::InvalidField(format!("order k = {k} outside 0..=2")));
    }
    let grid = u.grid();
    let mut parts = Vec::with_capacity(k + 1);
    let mut excluded = Vec::with_capacity(k + 1);
    let valid0: Vec<bool> = u.mask().iter().map(|m| !m).collect();
    let (s0, e0) = cell_average_integral(grid, u.nu(), u.values(), &valid0, |v| lp_power(v, p));
    parts.push(s0);
    excluded.push(e0);
    for j in 1..=k {
        let d = finite_difference(u, j)?;
        let (s, e) = cell_average_integral(grid, d.ncomp, &d.data, &d.valid, |v| lp_power(v, p));
        parts.push(s);
        excluded.push(e);
    }
    let total: f64 = parts.iter().sum();
    Ok(NormReport {
        k,
        p,
        norm: total.powf(1.0 / p),
        parts: parts.iter().map(|s| s.powf(1.0 / p)).collect(),
        excluded_volume: excluded,
    })
}

/// `||u - v||_{W^{k,p}}` over the cells valid for both fields.
pub fn sobolev_distance(u: &GridField, v: &GridField, k: usize, p: f64) -> Result<NormReport, FieldError> {
    sobolev_norm(&u.difference(v)?, k, p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::Target;
    use crate::geometry::AxisBox;

    #[test]
    fn constant_unit_field() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[17, 17]).unwrap();
        let u = GridField::sample(g, 2, Target::Sphere(1), None, |_| Some(vec![0.6, 0.8])).unwrap();
        for p in [1.0, 1.5, 2.0, 3.0] {
            let r = sobolev_norm(&u, 2, p).unwrap();
            assert!((r.parts[0] - 4f64.powf(1.0 / p)).abs() < 1e-12);
            assert!(r.parts[1].abs() < 1e-12 && r.parts[2].abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_norm_converges_quadratically() {
        let bx = AxisBox::centered_cube(2, 1.0).unwrap();
        let f = |x: &[f64]| Some(vec![(x[0] + 0.3 * x[1]).sin()]);
        let val = |n: usize| {
            let g = Grid::new(&bx, &[n, n]).unwrap();
            let u = GridField::sample(g, 1, Target::Unconstrained, None, f).unwrap();
            sobolev_norm(&u, 1, 2.0).unwrap().norm
        };
        let (a, b, c) = (val(33), val(65), val(129));
        let ratio = (a - b).abs() / (b - c).abs();
        assert!(ratio > 3.0 && ratio < 5.0, "ratio {ratio}");
    }
}
