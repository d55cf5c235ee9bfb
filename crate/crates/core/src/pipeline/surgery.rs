use super::{compose, Classification, PipelineError, RadialProfile};
use crate::fields::{finite_difference, restrict_to_points, GridField, Target};
use crate::geometry::StructuredSingularSet;
use crate::invariants::{winding_degree, Atom};
use crate::util::wrap_angle;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::HashMap;

fn sup_offset(x: &[f64], c: &[f64]) -> f64 {
    x.iter().zip(c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Index of the center whose cube `|x - c|_inf <= r` contains `x`, if any.
/// Centers are cube centers of one cubication, so the cubes are disjoint
/// whenever `r < eta`.
fn owning_center(centers: &HashMap<Vec<i64>, usize>, cls: &Classification, x: &[f64]) -> Option<usize> {
    let q = cls.cubication.locate(x)?;
    let key = cls.cubication.cubes()[q].clone();
    centers.get(&key).copied()
}

fn center_index(cls: &Classification, cubes: &[usize]) -> HashMap<Vec<i64>, usize> {
    cubes
        .iter()
        .enumerate()
        .map(|(i, &q)| (cls.cubication.cubes()[q].clone(), i))
        .collect()
}

fn mask_near(u: &GridField, set: &StructuredSingularSet) -> Result<GridField, PipelineError> {
    let grid = u.grid();
    let h = grid.h().to_vec();
    let extra: Vec<bool> = (0..grid.len())
        .into_par_iter()
        .map(|n| set.within_cell(&grid.point(n), &h))
        .collect();
    Ok(u.masked_with(&extra)?
        .with_singular_set(if set.is_empty() { None } else { Some(set.clone()) }))
}

/// Diagnostics of the thickening stage.
#[derive(Debug, Clone, Serialize)]
pub struct ThickeningStats {
    pub centers: Vec<Vec<f64>>,
    /// `max |D(u o Phi)(x)| d(x, Z)` over valid nodes of the thickened cubes.
    pub certificate_constant: f64,
    pub jacobian_floor: f64,
}

/// Thickens every bad cube toward its center: in sup-norm coordinates
/// `s = |x - c|_inf / eta`, `x -> c + phi(s)(x - c)` with the given profile,
/// so the punctured cube `s < rho_profile` is pushed onto the shell
/// `r <= s < rho_profile`. Requires `kp < l + 1` and `l = m - 1` (point dual
/// skeleton). The cube centers become the singular set.
pub fn apply_thickening(
    u: &GridField,
    cls: &Classification,
    ell: usize,
    profile: &RadialProfile,
) -> Result<(GridField, ThickeningStats), PipelineError> {
    let m = u.dim();
    let kp = cls.kp();
    if kp >= ell as f64 + 1.0 {
        return Err(PipelineError::AdmissibilityViolation { kp, ell });
    }
    if ell + 1 != m {
        return Err(PipelineError::Unsupported(format!(
            "thickening toward a dual skeleton of dimension {} (only points are supported)",
            m - ell - 1
        )));
    }
    let eta = cls.eta;
    let bad = cls.bad_cubes();
    let centers: Vec<Vec<f64>> = bad.iter().map(|&q| cls.cubication.cube_center(q)).collect();
    if bad.is_empty() {
        return Ok((
            u.clone(),
            ThickeningStats {
                centers,
                certificate_constant: 0.0,
                jacobian_floor: profile.certificate.jacobian_floor,
            },
        ));
    }
    let index = center_index(cls, &bad);
    let reach = profile.rho;
    let composed = compose(u, |x| {
        let i = owning_center(&index, cls, x)?;
        let c = &centers[i];
        let s = sup_offset(x, c) / eta;
        if s >= reach {
            return None;
        }
        if s == 0.0 {
            return Some(vec![f64::NAN; m]);
        }
        let f = profile.phi(s);
        Some(x.iter().zip(c).map(|(a, b)| b + f * (a - b)).collect())
    })?;
    let set = StructuredSingularSet::points(m, &centers);
    let out = mask_near(&composed, &set)?;
    let d = finite_difference(&out, 1)?;
    let grid = out.grid();
    let certificate_constant = (0..grid.len())
        .into_par_iter()
        .filter(|&n| d.valid[n])
        .filter_map(|n| {
            let x = grid.point(n);
            let i = owning_center(&index, cls, &x)?;
            Some(d.norm_at(n) * crate::util::norm(&x.iter().zip(&centers[i]).map(|(a, b)| a - b).collect::<Vec<_>>()))
        })
        .reduce(|| 0.0, f64::max);
    Ok((
        out,
        ThickeningStats {
            centers,
            certificate_constant,
            jacobian_floor: profile.certificate.jacobian_floor,
        },
    ))
}

/// Diagnostics of the extension stage.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ExtensionStats {
    /// Atoms of nonzero degree, kept as obstructions.
    pub kept: Vec<Atom>,
    /// Degree-zero singular points removed by the phase extension.
    pub removed: Vec<Vec<f64>>,
}

/// Point of the square of sup-radius `r` around `c` at parameter
/// `t in [0, 8)`, walked counterclockwise from `c + r(1, -1)`.
fn square_point(c: &[f64], r: f64, t: f64) -> Vec<f64> {
    let (x, y) = match t {
        t if t < 2.0 => (1.0, -1.0 + t),
        t if t < 4.0 => (1.0 - (t - 2.0), 1.0),
        t if t < 6.0 => (-1.0, 1.0 - (t - 4.0)),
        t => (-1.0 + (t - 6.0), -1.0),
    };
    vec![c[0] + r * x, c[1] + r * y]
}

/// Inverse of [`square_point`] for a point on the square.
fn square_param(c: &[f64], r: f64, p: &[f64]) -> f64 {
    let (x, y) = ((p[0] - c[0]) / r, (p[1] - c[1]) / r);
    let t = if x.abs() >= y.abs() {
        if x > 0.0 {
            y + 1.0
        } else {
            4.0 + (1.0 - y)
        }
    } else if y > 0.0 {
        2.0 + (1.0 - x)
    } else {
        6.0 + (x + 1.0)
    };
    t.rem_euclid(8.0)
}

/// Degree of `u` on the square loop of sup-radius `radius` around `c`.
pub fn loop_degree(u: &GridField, c: &[f64], radius: f64, samples: usize) -> Result<i64, PipelineError> {
    let pts: Vec<Vec<f64>> = (0..samples)
        .map(|k| square_point(c, radius, 8.0 * k as f64 / samples as f64))
        .collect();
    let vals = restrict_to_points(u, &pts)?;
    let loop_vals: Vec<[f64; 2]> = vals.chunks(2).map(|v| [v[0], v[1]]).collect();
    Ok(winding_degree(&loop_vals)?)
}

/// For every singular point of a circle-valued field, lifts the phase along
/// the middle loop `|x - c|_inf = 3 mu eta / 4` of the annulus
/// `mu eta / 2 <= |x - c|_inf <= mu eta`.
/// A point of turning number zero is removed by extending the lift inward
/// linearly along rays toward the mean phase; any other point is kept as an
/// obstruction.
pub fn extend_or_keep(
    u: &GridField,
    cls: &Classification,
    mu: f64,
) -> Result<(GridField, ExtensionStats), PipelineError> {
    if u.target() != Target::Sphere(1) || u.dim() != 2 {
        return Err(PipelineError::InvalidArgument(
            "extension needs a field B^2 -> S^1".into(),
        ));
    }
    let grid = u.grid();
    let outer = mu * cls.eta;
    let inner = outer / 2.0;
    let points: Vec<Vec<f64>> = match u.singular_set() {
        Some(s) if s.rank() == 0 => s
            .pieces()
            .iter()
            .map(|p| p.fixed.iter().map(|&(_, v)| v).collect())
            .collect(),
        Some(s) if !s.is_empty() => {
            return Err(PipelineError::Unsupported(format!(
                "singular set of rank {} in a circle-valued extension",
                s.rank()
            )))
        }
        _ => Vec::new(),
    };
    let mid = 0.75 * outer;
    if !points.is_empty() && mid < 2.5 * grid.h_max() {
        return Err(PipelineError::InvalidArgument(format!(
            "annulus of radii {inner}..{outer} is not resolved by the grid spacing {}",
            grid.h_max()
        )));
    }
    let mut values = u.values().to_vec();
    let mut mask = u.mask().to_vec();
    let mut stats = ExtensionStats::default();
    let mut kept_points = Vec::new();
    let angle = |v: &[f64]| v[1].atan2(v[0]);
    for c in points {
        let fail = |detail: String| PipelineError::LiftFailure {
            location: c.clone(),
            detail,
        };
        // sequential unwrap along the middle loop of the annulus
        let samples = (64.0 * mid / grid.h_max()).ceil().max(1024.0) as usize;
        let pts: Vec<Vec<f64>> = (0..samples)
            .map(|k| square_point(&c, mid, 8.0 * k as f64 / samples as f64))
            .collect();
        let vals = restrict_to_points(u, &pts)?;
        let mut theta = Vec::with_capacity(samples + 1);
        theta.push(angle(&vals[0..2]));
        for k in 1..=samples {
            let v = &vals[2 * (k % samples)..2 * (k % samples) + 2];
            let prev = theta[k - 1];
            theta.push(prev + wrap_angle(angle(v) - prev));
        }
        let turn = (theta[samples] - theta[0]) / (2.0 * std::f64::consts::PI);
        let degree = turn.round() as i64;
        if (turn - degree as f64).abs() > 1e-6 {
            return Err(fail(format!("non-integer turning number {turn}")));
        }
        if degree != 0 {
            stats.kept.push(Atom {
                location: c.clone(),
                degree,
            });
            kept_points.push(c);
            continue;
        }
        theta.pop();
        // core nodes, and the annulus nodes that must stay valid
        let mut core = Vec::new();
        let lo: Vec<usize> = (0..2)
            .map(|a| (((c[a] - outer - grid.bx().lo()[a]) / grid.h()[a]).floor().max(0.0)) as usize)
            .collect();
        let hi: Vec<usize> = (0..2)
            .map(|a| ((((c[a] + outer - grid.bx().lo()[a]) / grid.h()[a]).ceil()) as usize).min(grid.dims()[a] - 1))
            .collect();
        for i in lo[0]..=hi[0] {
            for j in lo[1]..=hi[1] {
                let n = grid.flat(&[i, j]);
                let s = sup_offset(&grid.point(n), &c);
                if s <= outer + 1e-12 && s >= inner - 1e-12 {
                    if u.is_masked(n) {
                        return Err(fail(format!("annulus node {n} is masked")));
                    }
                } else if s < inner {
                    core.push(n);
                }
            }
        }
        let mean = theta.iter().sum::<f64>() / theta.len() as f64;
        let lift_at = |p: &[f64]| -> Result<f64, PipelineError> {
            let t = square_param(&c, inner, p) / 8.0 * samples as f64;
            let k0 = t.floor() as usize % samples;
            let k1 = (k0 + 1) % samples;
            let f = t - t.floor();
            let reference = theta[k0] + f * wrap_angle(theta[k1] - theta[k0]);
            let v = u
                .interpolate_partial(p)
                .ok_or_else(|| fail(format!("no value at {p:?}")))?;
            Ok(reference + wrap_angle(angle(&v) - reference))
        };
        for n in core {
            let x = grid.point(n);
            let s = sup_offset(&x, &c);
            let t = if s == 0.0 {
                mean
            } else {
                let p: Vec<f64> = (0..2).map(|a| c[a] + (x[a] - c[a]) * inner / s).collect();
                let lam = s / inner;
                lam * lift_at(&p)? + (1.0 - lam) * mean
            };
            values[2 * n] = t.cos();
            values[2 * n + 1] = t.sin();
            mask[n] = false;
        }
        stats.removed.push(c);
    }
    let mut out = GridField::from_values(grid.clone(), 2, Target::Sphere(1), values, mask)?;
    out = out.with_singular_set(if kept_points.is_empty() {
        None
    } else {
        Some(StructuredSingularSet::points(2, &kept_points))
    });
    Ok((out, stats))
}

/// Diagnostics of the shrinking stage.
#[derive(Debug, Clone, Serialize)]
pub struct ShrinkingStats {
    pub tau: f64,
    /// `tau^{(l + 1 - kp)/p}`.
    pub energy_factor: f64,
    /// `int |D u|^p` over `Z + Q_{mu eta}` before and after.
    pub inner_energy_before: f64,
    pub inner_energy_after: f64,
    /// `int |D u|^p` over `Z + Q_{tau mu eta}` after shrinking.
    pub core_energy_after: f64,
}

/// Shrinks around every center `c`: with `sigma = |x - c|_inf / (mu eta)`,
/// `x -> c + (R(sigma)/sigma)(x - c)` where `R(sigma) = sigma / tau` on
/// `[0, tau]` and rises linearly from 1 to 2 on `[tau, 2]`, so
/// `Q_{tau mu eta}` is blown up onto `Q_{mu eta}` and the map is the
/// identity off `Z + Q_{2 mu eta}`.
pub fn apply_shrinking(
    u: &GridField,
    cls: &Classification,
    ell: usize,
    mu: f64,
    tau: f64,
    centers: &[Vec<f64>],
) -> Result<(GridField, ShrinkingStats), PipelineError> {
    let kp = cls.kp();
    if kp >= ell as f64 + 1.0 {
        return Err(PipelineError::AdmissibilityViolation { kp, ell });
    }
    if !(0.0 < tau && tau < mu && mu < 0.5) {
        return Err(PipelineError::InvalidArgument(format!(
            "need 0 < tau < mu < 1/2, got tau = {tau}, mu = {mu}"
        )));
    }
    let r = mu * cls.eta;
    let cubes: Vec<usize> = centers.iter().filter_map(|c| cls.cubication.locate(c)).collect();
    let index = center_index(cls, &cubes);
    let inner_energy = |f: &GridField, radius: f64| -> Result<f64, PipelineError> {
        let d = finite_difference(f, 1)?;
        let grid = f.grid();
        let vol = grid.cell_volume();
        Ok((0..grid.len())
            .into_par_iter()
            .filter(|&n| d.valid[n])
            .filter(|&n| {
                let x = grid.point(n);
                owning_center(&index, cls, &x).is_some_and(|i| sup_offset(&x, &centers[i]) <= radius)
            })
            .map(|n| d.norm_at(n).powf(cls.p) * vol)
            .sum())
    };
    let before = inner_energy(u, r)?;
    let composed = compose(u, |x| {
        let i = owning_center(&index, cls, x)?;
        let c = &centers[i];
        let sigma = sup_offset(x, c) / r;
        if sigma >= 2.0 {
            return None;
        }
        if sigma == 0.0 {
            return Some(c.clone());
        }
        let big = if sigma <= tau {
            sigma / tau
        } else {
            1.0 + (sigma - tau) / (2.0 - tau)
        };
        let f = big / sigma;
        Some(x.iter().zip(c).map(|(a, b)| b + f * (a - b)).collect())
    })?;
    let out = match u.singular_set() {
        Some(s) => mask_near(&composed, &s.clone())?,
        None => composed,
    };
    let after = inner_energy(&out, r)?;
    let core = inner_energy(&out, tau * r)?;
    Ok((
        out,
        ShrinkingStats {
            tau,
            energy_factor: tau.powf((ell as f64 + 1.0 - kp) / cls.p),
            inner_energy_before: before,
            inner_energy_after: after,
            core_energy_after: core,
        },
    ))
}
