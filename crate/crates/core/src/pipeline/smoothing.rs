use super::PipelineError;
use crate::fields::{GridField, Mollifier, Target};
use rayon::prelude::*;

/// Largest difference quotient of a scalar nodal field along grid edges.
pub fn discrete_lipschitz(psi: &GridField) -> f64 {
    let grid = psi.grid();
    let m = grid.dim();
    (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let mut idx = vec![0usize; m];
            grid.multi_index(node, &mut idx);
            let mut best: f64 = 0.0;
            for a in 0..m {
                if idx[a] + 1 < grid.dims()[a] {
                    let nb = node + grid.strides()[a];
                    let d = (psi.value(nb)[0] - psi.value(node)[0]).abs() / grid.h()[a];
                    best = best.max(d);
                }
            }
            best
        })
        .reduce(|| 0.0, f64::max)
}

/// Adaptive convolution `v(x) = int phi(z) u(x + psi(x) z) dz` by the
/// mollifier's lattice quadrature with multilinear interpolation of `u`.
/// Nodes with `psi = 0` are copied verbatim. Quadrature points falling in a
/// fully masked cell are dropped and the remaining weights renormalised; a
/// node keeping less than half of the mollifier mass is masked. The result
/// is unconstrained.
pub fn adaptive_smooth(u: &GridField, psi: &GridField, phi: &Mollifier) -> Result<GridField, PipelineError> {
    let grid = u.grid();
    if psi.grid() != grid || psi.nu() != 1 || phi.dim() != grid.dim() {
        return Err(PipelineError::InvalidArgument(
            "psi must be a scalar field on the grid of u and phi must match its dimension".into(),
        ));
    }
    let lip = discrete_lipschitz(psi);
    if lip >= 1.0 {
        return Err(PipelineError::PsiTooSteep(lip));
    }
    let bx = grid.bx();
    for node in 0..grid.len() {
        let r = psi.value(node)[0];
        if psi.is_masked(node) || r < 0.0 {
            return Err(PipelineError::InvalidArgument(format!(
                "psi must be a nonnegative finite field (node {node})"
            )));
        }
        if r > 0.0 && r >= bx.interior_margin(&grid.point(node)) {
            return Err(PipelineError::InvalidArgument(format!(
                "psi = {r} reaches the boundary at node {node}"
            )));
        }
    }
    let nu = u.nu();
    let quad: Vec<(Vec<f64>, f64)> = phi.quadrature().map(|(z, w)| (z.to_vec(), w)).collect();
    let total_mass: f64 = quad.iter().map(|q| q.1).sum();
    let rows: Vec<Option<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let r = psi.value(node)[0];
            if u.is_masked(node) && r == 0.0 {
                return None;
            }
            if r == 0.0 {
                return Some(u.value(node).to_vec());
            }
            let x = grid.point(node);
            let mut acc = vec![0.0; nu];
            let mut mass = 0.0;
            let mut dropped = false;
            let mut y = x.clone();
            for (z, w) in &quad {
                for a in 0..x.len() {
                    y[a] = x[a] + r * z[a];
                }
                let Some(v) = u.interpolate_partial(&y) else {
                    dropped = true;
                    continue;
                };
                mass += w;
                for (s, c) in acc.iter_mut().zip(v) {
                    *s += w * c;
                }
            }
            if dropped && mass < 0.5 * total_mass {
                return None;
            }
            if dropped {
                acc.iter_mut().for_each(|s| *s *= total_mass / mass);
            }
            Some(acc)
        })
        .collect();
    let mut values = Vec::with_capacity(nu * grid.len());
    let mut mask = Vec::with_capacity(grid.len());
    for row in rows {
        match row {
            Some(v) => {
                values.extend(v);
                mask.push(false);
            }
            None => {
                values.extend(std::iter::repeat_n(f64::NAN, nu));
                mask.push(true);
            }
        }
    }
    Ok(u.with_values(values, Some(&mask), Target::Unconstrained)?)
}
