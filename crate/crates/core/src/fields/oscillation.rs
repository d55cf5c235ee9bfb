use super::{FieldError, GridField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

/// Mean oscillation `[v]_rho` for a list of radii.
#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Number of centers visited for each radius.
    pub sup_centers: Vec<usize>,
    /// True when some vector-valued double average was estimated from a
    /// random subset of pairs.
    pub subsampled: bool,
}

const EXACT_PAIR_LIMIT: usize = 4_000_000;
const SAMPLED_PAIRS: usize = 1_000_000;

/// Double average `(1/n^2) sum_{i,j} |a_i - a_j|` of scalars, computed
/// exactly in `O(n log n)` from the order statistics.
fn scalar_double_average(vals: &mut [f64]) -> f64 {
    let n = vals.len();
    if n < 2 {
        return 0.0;
    }
    vals.sort_by(|a, b| a.total_cmp(b));
    let mut s = 0.0;
    for (k, &a) in vals.iter().enumerate() {
        s += a * (2.0 * k as f64 - n as f64 + 1.0);
    }
    2.0 * s / (n as f64 * n as f64)
}

fn vector_double_average(vals: &[f64], nu: usize, seed: u64) -> (f64, bool) {
    let n = vals.len() / nu;
    if n < 2 {
        return (0.0, false);
    }
    let dist = |i: usize, j: usize| {
        let mut s = 0.0;
        for c in 0..nu {
            let d = vals[i * nu + c] - vals[j * nu + c];
            s += d * d;
        }
        s.sqrt()
    };
    if n * n <= EXACT_PAIR_LIMIT {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += dist(i, j);
            }
        }
        (2.0 * s / (n as f64 * n as f64), false)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = 0.0;
        for _ in 0..SAMPLED_PAIRS {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(0..n);
            s += dist(i, j);
        }
        (s / SAMPLED_PAIRS as f64, true)
    }
}

/// For each radius, the supremum over a center lattice of spacing `rho/2`
/// (anchored at the box corner) of the double average of `|v(y) - v(z)|`
/// over the nodes of `B_rho(x)`. Only unmasked nodes with `include` set
/// (when given) take part, and centers must sit on such a node's cell.
pub fn mean_oscillation(
    v: &GridField,
    radii: &[f64],
    include: Option<&[bool]>,
) -> Result<OscillationReport, FieldError> {
    let grid = v.grid();
    let m = grid.dim();
    let diam = grid.bx().diameter();
    let nu = v.nu();
    let usable = |node: usize| !v.is_masked(node) && include.is_none_or(|inc| inc[node]);
    let mut values = Vec::with_capacity(radii.len());
    let mut counts = Vec::with_capacity(radii.len());
    let mut subsampled = false;
    for (ri, &rho) in radii.iter().enumerate() {
        if !(rho > 0.0 && rho <= diam) {
            return Err(FieldError::InvalidField(format!("radius {rho} outside (0, {diam}]")));
        }
        let step = rho / 2.0;
        let per_axis: Vec<Vec<f64>> = (0..m)
            .map(|a| {
                let lo = grid.bx().lo()[a];
                let hi = grid.bx().hi()[a];
                let n = ((hi - lo) / step + 1e-9).floor() as usize;
                (0..=n).map(|k| lo + k as f64 * step).collect()
            })
            .collect();
        let total: usize = per_axis.iter().map(|p| p.len()).product();
        let centers: Vec<Vec<f64>> = (0..total)
            .map(|mut c| {
                let mut x = vec![0.0; m];
                for a in (0..m).rev() {
                    let n = per_axis[a].len();
                    x[a] = per_axis[a][c % n];
                    c /= n;
                }
                x
            })
            .filter(|x| {
                let mut idx = vec![0; m];
                for a in 0..m {
                    let t = ((x[a] - grid.bx().lo()[a]) / grid.h()[a]).round();
                    idx[a] = (t.max(0.0) as usize).min(grid.dims()[a] - 1);
                }
                usable(grid.flat(&idx))
            })
            .collect();
        let results: Vec<(f64, bool)> = centers
            .par_iter()
            .enumerate()
            .map(|(ci, x)| {
                let mut lo_idx = vec![0usize; m];
                let mut hi_idx = vec![0usize; m];
                for a in 0..m {
                    let l = grid.bx().lo()[a];
                    let h = grid.h()[a];
                    let d = grid.dims()[a] as f64 - 1.0;
                    lo_idx[a] = ((x[a] - rho - l) / h).ceil().clamp(0.0, d) as usize;
                    hi_idx[a] = ((x[a] + rho - l) / h).floor().clamp(0.0, d) as usize;
                }
                let mut picked = Vec::new();
                let mut idx = lo_idx.clone();
                'walk: loop {
                    let mut r2 = 0.0;
                    for a in 0..m {
                        let d = grid.coord(a, idx[a]) - x[a];
                        r2 += d * d;
                    }
                    let node = grid.flat(&idx);
                    if r2 <= rho * rho && usable(node) {
                        picked.extend_from_slice(v.value(node));
                    }
                    let mut a = m;
                    loop {
                        if a == 0 {
                            break 'walk;
                        }
                        a -= 1;
                        if idx[a] < hi_idx[a] {
                            idx[a] += 1;
                            break;
                        }
                        idx[a] = lo_idx[a];
                    }
                }
                if nu == 1 {
                    (scalar_double_average(&mut picked), false)
                } else {
                    vector_double_average(&picked, nu, ((ri as u64) << 32) ^ ci as u64)
                }
            })
            .collect();
        let sup = results.iter().map(|r| r.0).fold(0.0, f64::max);
        subsampled |= results.iter().any(|r| r.1);
        values.push(sup);
        counts.push(centers.len());
    }
    Ok(OscillationReport {
        radii: radii.to_vec(),
        values,
        sup_centers: counts,
        subsampled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{Grid, Target};
    use crate::geometry::AxisBox;

    #[test]
    fn sorted_formula_matches_brute_force() {
        let vals: [f64; 6] = [0.3, -1.2, 4.0, 0.3, 2.5, -0.7];
        let mut brute = 0.0;
        for a in vals {
            for b in vals {
                brute += (a - b).abs();
            }
        }
        brute /= 36.0;
        let mut v = vals.to_vec();
        assert!((scalar_double_average(&mut v) - brute).abs() < 1e-14);
    }

    #[test]
    fn constant_field_has_zero_oscillation() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[33, 33]).unwrap();
        let u = GridField::sample(g, 2, Target::Sphere(1), None, |_| Some(vec![1.0, 0.0])).unwrap();
        let r = mean_oscillation(&u, &[0.1, 0.5, 1.0], None).unwrap();
        assert!(r.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bounded_by_twice_the_sup() {
        let g = Grid::new(&AxisBox::centered_cube(2, 1.0).unwrap(), &[41, 41]).unwrap();
        let u = GridField::sample(g, 1, Target::Unconstrained, None, |x| {
            Some(vec![(5.0 * x[0]).sin() * (3.0 * x[1]).cos()])
        })
        .unwrap();
        let sup = u.values().iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let r = mean_oscillation(&u, &[0.05, 0.2, 0.8], None).unwrap();
        for v in r.values {
            assert!(v >= 0.0 && v <= 2.0 * sup);
        }
    }
}
