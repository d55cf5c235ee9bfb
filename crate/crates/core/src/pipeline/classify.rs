use super::PipelineError;
use crate::fields::{finite_difference, GridField};
use crate::geometry::Cubication;
use serde::Serialize;

/// Good/bad labels of a cubication together with the neighbourhood `U^m`
/// of the bad set.
#[derive(Debug, Clone, Serialize)]
pub struct Classification {
    #[serde(skip)]
    pub cubication: Cubication,
    pub eta: f64,
    pub alpha: f64,
    pub iota: f64,
    pub rho: f64,
    pub k: usize,
    pub p: f64,
    /// Rescaled gradient norm `alpha eta^{1 - m/kp} |Du|_{L^{kp}(cube + Q_{2 rho eta})}`.
    pub criterion: Vec<f64>,
    pub bad: Vec<bool>,
    pub in_u: Vec<bool>,
    /// `|E^m + Q_{2 rho eta}|` and `|U^m + Q_{2 rho eta}|`, clipped to the box.
    pub bad_volume: f64,
    pub u_volume: f64,
    /// `int |Du|^{kp}` over the valid cells of the box.
    pub energy: f64,
    /// `C` in `|E^m + Q_{2 rho eta}| <= C eta^{kp} int |Du|^{kp}`.
    pub volume_constant: f64,
}

impl Classification {
    pub fn bad_cubes(&self) -> Vec<usize> {
        (0..self.bad.len()).filter(|&q| self.bad[q]).collect()
    }

    pub fn u_cubes(&self) -> Vec<usize> {
        (0..self.in_u.len()).filter(|&q| self.in_u[q]).collect()
    }

    pub fn kp(&self) -> f64 {
        self.k as f64 * self.p
    }
}

/// Per-cell `|Du|^{kp}` at the cell center (`NaN` where a corner is invalid),
/// indexed by the cell multi-index with the last axis fastest.
fn cell_energy(u: &GridField, kp: f64) -> Result<(Vec<f64>, Vec<usize>), PipelineError> {
    let grid = u.grid();
    let m = grid.dim();
    let d = finite_difference(u, 1)?;
    let cdims: Vec<usize> = grid.dims().iter().map(|n| n - 1).collect();
    let total: usize = cdims.iter().product();
    let corners = grid.corner_offsets();
    let mut out = vec![f64::NAN; total];
    let mut avg = vec![0.0; d.ncomp];
    for (cell, slot) in out.iter_mut().enumerate() {
        let mut rem = cell;
        let mut base = 0;
        for a in (0..m).rev() {
            base += (rem % cdims[a]) * grid.strides()[a];
            rem /= cdims[a];
        }
        if corners.iter().any(|&o| !d.valid[base + o]) {
            continue;
        }
        avg.fill(0.0);
        for &o in &corners {
            for (s, v) in avg.iter_mut().zip(d.at(base + o)) {
                *s += v;
            }
        }
        let n2: f64 = avg.iter().map(|v| v * v).sum::<f64>() / (corners.len() * corners.len()) as f64;
        *slot = n2.sqrt().powf(kp);
    }
    Ok((out, cdims))
}

/// Inclusive range of cells whose centers lie in `[x0, x1]` along `axis`.
fn cell_range(u: &GridField, axis: usize, x0: f64, x1: f64) -> Option<(usize, usize)> {
    let grid = u.grid();
    let lo = grid.bx().lo()[axis];
    let h = grid.h()[axis];
    let n = grid.dims()[axis] as i64 - 1;
    let a = (((x0 - lo) / h - 0.5) - 1e-9).ceil().max(0.0) as i64;
    let b = ((((x1 - lo) / h - 0.5) + 1e-9).floor() as i64).min(n - 1);
    (a <= b).then_some((a as usize, b as usize))
}

fn for_each_cell_in<F: FnMut(usize)>(cdims: &[usize], ranges: &[(usize, usize)], mut f: F) {
    let m = cdims.len();
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        let mut flat = 0;
        for a in 0..m {
            flat = flat * cdims[a] + idx[a];
        }
        f(flat);
        let mut a = m;
        loop {
            if a == 0 {
                return;
            }
            a -= 1;
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                break;
            }
            idx[a] = ranges[a].0;
        }
    }
}

/// Labels every cube good or bad by the rescaled `L^{kp}` gradient norm on
/// the cube enlarged by `2 rho eta` (clipped to the box). Cubes whose
/// enlargement meets a cell without a valid derivative are bad.
pub fn classify_cubes(
    u: &GridField,
    cub: &Cubication,
    alpha: f64,
    iota: f64,
    rho: f64,
    k: usize,
    p: f64,
) -> Result<Classification, PipelineError> {
    if u.grid().bx() != cub.bx() {
        return Err(PipelineError::InvalidArgument(
            "field and cubication boxes differ".into(),
        ));
    }
    if !(0.0 < rho && rho < 0.5) || alpha <= 0.0 || iota <= 0.0 || k == 0 || p < 1.0 {
        return Err(PipelineError::InvalidArgument(format!(
            "alpha = {alpha}, iota = {iota}, rho = {rho}, k = {k}, p = {p}"
        )));
    }
    let m = cub.dim();
    let eta = cub.eta();
    let kp = k as f64 * p;
    let (energy_cells, cdims) = cell_energy(u, kp)?;
    let vol = u.grid().cell_volume();
    let pad = eta * (1.0 + 2.0 * rho);
    let ncubes = cub.cubes().len();
    let ranges: Vec<Vec<(usize, usize)>> = (0..ncubes)
        .map(|q| {
            let c = cub.cube_center(q);
            (0..m)
                .map(|a| cell_range(u, a, c[a] - pad, c[a] + pad).unwrap_or((1, 0)))
                .collect()
        })
        .collect();
    let scale = alpha / eta.powf(m as f64 / kp - 1.0);
    let mut criterion = Vec::with_capacity(ncubes);
    for r in &ranges {
        let mut sum = 0.0;
        let mut invalid = false;
        if r.iter().all(|(a, b)| a <= b) {
            for_each_cell_in(&cdims, r, |c| {
                let v = energy_cells[c];
                if v.is_nan() {
                    invalid = true;
                } else {
                    sum += v * vol;
                }
            });
        }
        criterion.push(if invalid {
            f64::INFINITY
        } else {
            scale * sum.powf(1.0 / kp)
        });
    }
    let bad: Vec<bool> = criterion.iter().map(|&c| c > iota).collect();
    let mut in_u = vec![false; ncubes];
    for q in 0..ncubes {
        if bad[q] {
            for nb in cub.vertex_neighbors(q) {
                in_u[nb] = true;
            }
        }
    }
    let union_volume = |set: &[bool]| {
        let mut mark = vec![false; energy_cells.len()];
        for q in 0..ncubes {
            if set[q] && ranges[q].iter().all(|(a, b)| a <= b) {
                for_each_cell_in(&cdims, &ranges[q], |c| mark[c] = true);
            }
        }
        mark.iter().filter(|&&b| b).count() as f64 * vol
    };
    let bad_volume = union_volume(&bad);
    let u_volume = union_volume(&in_u);
    let energy: f64 = energy_cells.iter().filter(|v| !v.is_nan()).sum::<f64>() * vol;
    let volume_constant = if energy > 0.0 {
        bad_volume / (eta.powf(kp) * energy)
    } else {
        0.0
    };
    Ok(Classification {
        cubication: cub.clone(),
        eta,
        alpha,
        iota,
        rho,
        k,
        p,
        criterion,
        bad,
        in_u,
        bad_volume,
        u_volume,
        energy,
        volume_constant,
    })
}
