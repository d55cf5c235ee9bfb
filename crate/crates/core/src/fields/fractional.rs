use super::{finite_difference, FieldError, GridField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Gagliardo double integral and seminorm of `W^{s,p}`.
#[derive(Debug, Clone, Serialize)]
pub struct FractionalReport {
    pub s: f64,
    pub p: f64,
    /// `int int |u(y) - u(z)|^p / |y - z|^{sp + m}` over pairs farther apart
    /// than `cutoff`.
    pub energy: f64,
    /// `energy^{1/p}`.
    pub seminorm: f64,
    /// Pairs closer than this distance (one cell diameter) are dropped.
    pub cutoff: f64,
    /// Number of pair terms evaluated.
    pub terms: u64,
    pub subsampled: bool,
    /// First-order estimate of the dropped pairs: per node
    /// `cutoff^{p(1-s)} / (p(1-s)) * int_{S^{m-1}} |Du theta|^p`, zero where
    /// the gradient stencil touches the mask.
    pub near_diagonal: f64,
    /// `(energy + near_diagonal)^{1/p}`.
    pub corrected_seminorm: f64,
}

const MAX_TERMS: u64 = 100_000_000;
const SAMPLED_TERMS: u64 = 20_000_000;

/// Double-sum quadrature with trapezoid node weights.
pub fn fractional_seminorm(u: &GridField, s: f64, p: f64, seed: u64) -> Result<FractionalReport, FieldError> {
    if !(s > 0.0 && s < 1.0) || !(p >= 1.0 && p.is_finite()) {
        return Err(FieldError::InvalidField(format!(
            "need 0 < s < 1 and 1 <= p < inf, got s = {s}, p = {p}"
        )));
    }
    let grid = u.grid();
    let m = grid.dim();
    let nu = u.nu();
    let cutoff = grid.h().iter().map(|h| h * h).sum::<f64>().sqrt();
    let mut pts = Vec::new();
    let mut weights = Vec::new();
    let mut vals = Vec::new();
    let mut idx = vec![0; m];
    for node in 0..grid.len() {
        if u.is_masked(node) {
            continue;
        }
        grid.multi_index(node, &mut idx);
        let mut w = 1.0;
        for a in 0..m {
            let edge = idx[a] == 0 || idx[a] == grid.dims()[a] - 1;
            w *= if edge { 0.5 * grid.h()[a] } else { grid.h()[a] };
        }
        pts.extend(grid.point(node));
        weights.push(w);
        vals.extend_from_slice(u.value(node));
    }
    let n = weights.len();
    let expo = s * p + m as f64;
    let term = |i: usize, j: usize| -> f64 {
        let mut r2 = 0.0;
        for a in 0..m {
            let d = pts[i * m + a] - pts[j * m + a];
            r2 += d * d;
        }
        let r = r2.sqrt();
        if r <= cutoff * (1.0 + 1e-12) {
            return 0.0;
        }
        let mut d2 = 0.0;
        for c in 0..nu {
            let d = vals[i * nu + c] - vals[j * nu + c];
            d2 += d * d;
        }
        if d2 == 0.0 {
            return 0.0;
        }
        weights[i] * weights[j] * d2.sqrt().powf(p) / r.powf(expo)
    };
    let total_terms = (n as u64) * (n as u64);
    let (energy, terms, subsampled) = if total_terms <= MAX_TERMS {
        let partial: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| (i + 1..n).map(|j| term(i, j)).sum::<f64>())
            .collect();
        (2.0 * partial.iter().sum::<f64>(), total_terms, false)
    } else {
        let chunks = 64u64;
        let per = SAMPLED_TERMS / chunks;
        let partial: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c);
                let mut acc = 0.0;
                for _ in 0..per {
                    let i = rng.gen_range(0..n);
                    let j = rng.gen_range(0..n);
                    acc += term(i, j);
                }
                acc
            })
            .collect();
        let mean = partial.iter().sum::<f64>() / (per * chunks) as f64;
        (mean * total_terms as f64, per * chunks, true)
    };
    let near_diagonal = near_diagonal(u, s, p, cutoff, seed)?;
    Ok(FractionalReport {
        s,
        p,
        energy,
        seminorm: energy.powf(1.0 / p),
        cutoff,
        terms,
        subsampled,
        near_diagonal,
        corrected_seminorm: (energy + near_diagonal).powf(1.0 / p),
    })
}

/// Directions with weights summing to the area of `S^{m-1}`: both signs in
/// one dimension, equally spaced angles in two, seeded uniform samples above.
fn sphere_directions(m: usize, seed: u64) -> Vec<(Vec<f64>, f64)> {
    use std::f64::consts::{PI, TAU};
    match m {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let k = 64;
            (0..k)
                .map(|i| {
                    let t = TAU * i as f64 / k as f64;
                    (vec![t.cos(), t.sin()], TAU / k as f64)
                })
                .collect()
        }
        _ => {
            // |S^{m-1}| from |S^0| = 2, |S^1| = 2 pi and |S^k| = 2 pi |S^{k-2}| / (k - 1)
            let mut area = [2.0, TAU];
            for k in 2..m {
                area[k % 2] *= TAU / (k as f64 - 1.0);
            }
            let area = area[(m - 1) % 2];
            let k = 512;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..k)
                .map(|_| {
                    let mut v: Vec<f64> = (0..m)
                        .map(|_| {
                            let (a, b): (f64, f64) = (rng.gen::<f64>().max(f64::MIN_POSITIVE), rng.gen());
                            (-2.0 * a.ln()).sqrt() * (2.0 * PI * b).cos()
                        })
                        .collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    (v, area / k as f64)
                })
                .collect()
        }
    }
}

fn near_diagonal(u: &GridField, s: f64, p: f64, cutoff: f64, seed: u64) -> Result<f64, FieldError> {
    let grid = u.grid();
    let m = grid.dim();
    let nu = u.nu();
    if grid.dims().iter().any(|&d| d < 3) {
        return Ok(0.0);
    }
    let du = finite_difference(u, 1)?;
    let dirs = sphere_directions(m, seed);
    let radial = cutoff.powf(p * (1.0 - s)) / (p * (1.0 - s));
    let total = (0..grid.len())
        .into_par_iter()
        .filter(|&node| du.valid[node])
        .map(|node| {
            let mut idx = vec![0; m];
            grid.multi_index(node, &mut idx);
            let mut w = 1.0;
            for a in 0..m {
                let edge = idx[a] == 0 || idx[a] == grid.dims()[a] - 1;
                w *= if edge { 0.5 * grid.h()[a] } else { grid.h()[a] };
            }
            let jac = du.at(node);
            let angular: f64 = dirs
                .iter()
                .map(|(theta, dw)| {
                    let d2: f64 = (0..nu)
                        .map(|c| {
                            let x: f64 = (0..m).map(|a| jac[c * m + a] * theta[a]).sum();
                            x * x
                        })
                        .sum();
                    dw * d2.sqrt().powf(p)
                })
                .sum();
            w * angular
        })
        .sum::<f64>();
    Ok(total * radial)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Target};
    use crate::geometry::AxisBox;

    #[test]
    fn constant_field_vanishes() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[16, 16]).unwrap();
        let u = GridField::sample(g, 2, Target::Sphere(1), None, |_| Some(vec![0.0, 1.0])).unwrap();
        let r = fractional_seminorm(&u, 0.5, 2.0, 0).unwrap();
        assert_eq!(r.energy, 0.0);
        assert_eq!(r.near_diagonal, 0.0);
        assert!(!r.subsampled);
    }

    #[test]
    fn direction_weights_cover_the_sphere() {
        use std::f64::consts::PI;
        for (m, area) in [(1, 2.0), (2, 2.0 * PI), (3, 4.0 * PI), (4, 2.0 * PI * PI)] {
            let total: f64 = sphere_directions(m, 1).iter().map(|d| d.1).sum();
            assert!((total - area).abs() < 1e-12, "{m}: {total}");
        }
    }

    #[test]
    fn rejects_bad_exponents() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[8, 8]).unwrap();
        let u = GridField::sample(g, 1, Target::Unconstrained, None, |_| Some(vec![0.0])).unwrap();
        assert!(fractional_seminorm(&u, 1.0, 2.0, 0).is_err());
        assert!(fractional_seminorm(&u, 0.5, 0.5, 0).is_err());
    }
}
