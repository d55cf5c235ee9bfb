use crate::fields::{FieldError, Grid, GridField, SampledSphereMap, Target};
use crate::geometry::{AxisBox, GeometryError, StructuredSingularSet, TriangulatedSphere};
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BuiltinError {
    #[error("unknown builtin field {0:?} (known: {known})", known = BUILTINS.join(", "))]
    UnknownBuiltin(String),
    #[error("builtin {name}: {detail}")]
    InvalidArgument { name: String, detail: String },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

pub const BUILTINS: [&str; 8] = [
    "identity_circle",
    "power_d",
    "radial",
    "dipole",
    "smooth_bump",
    "hopf",
    "constant",
    "homogeneous0",
];

/// Vortex positions of the `dipole` builtin.
pub const DIPOLE_POSITIVE: [f64; 2] = [-0.3, 0.0];
pub const DIPOLE_NEGATIVE: [f64; 2] = [0.3, 0.0];

/// The Hopf fibration `S^3 -> S^2`.
pub fn hopf_map(x: &[f64]) -> Vec<f64> {
    vec![
        2.0 * (x[0] * x[2] + x[1] * x[3]),
        2.0 * (x[1] * x[2] - x[0] * x[3]),
        x[0] * x[0] + x[1] * x[1] - x[2] * x[2] - x[3] * x[3],
    ]
}

/// Phase of the `homogeneous0` builtin: degree zero, not constant.
fn homogeneous0_phase(theta: f64) -> f64 {
    1.2 * theta.sin()
}

fn bad(name: &str, detail: impl Into<String>) -> BuiltinError {
    BuiltinError::InvalidArgument {
        name: name.to_string(),
        detail: detail.into(),
    }
}

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let r = v.iter().map(|c| c * c).sum::<f64>().sqrt();
    (r > 0.0).then(|| v.into_iter().map(|c| c / r).collect())
}

fn cube_grid(m: usize, a: f64, dims: &[usize]) -> Result<Grid, BuiltinError> {
    let bx = AxisBox::centered_cube(m, a)?;
    Ok(Grid::new(&bx, dims)?)
}

fn origin(m: usize) -> StructuredSingularSet {
    StructuredSingularSet::points(m, &[vec![0.0; m]])
}

/// Analytic sample of a named example on a grid with `dims` nodes per axis
/// (the dimension is `dims.len()`). `d` is the degree of `power_d`.
///
/// - `identity_circle`: `t -> (cos t, sin t)` on `[0, 2 pi]`.
/// - `power_d`: `(z/|z|)^d` on `[-1, 1]^2`.
/// - `radial`: `x/|x|` on `[-1, 1]^m`, `m in {2, 3}`.
/// - `dipole`: vortices of degree `+1` at `(-0.3, 0)` and `-1` at `(0.3, 0)`.
/// - `smooth_bump`: phase `0.8 exp(-|x|^2)` on `[-1, 1]^m`, `m in {2, 3}`.
/// - `hopf`: the Hopf fibration after inverse stereographic projection, on
///   `[-2, 2]^3`.
/// - `constant`: the first basis vector of `S^(m-1)` (of `S^1` for `m = 1`).
/// - `homogeneous0`: the zero-homogeneous degree-zero phase `1.2 sin(theta)`.
pub fn builtin_field(name: &str, dims: &[usize], d: i64) -> Result<GridField, BuiltinError> {
    let m = dims.len();
    let need = |ok: bool, what: &str| if ok { Ok(()) } else { Err(bad(name, what)) };
    match name {
        "identity_circle" => {
            need(m == 1, "needs one axis")?;
            let bx = AxisBox::new(vec![0.0], vec![2.0 * PI])?;
            let grid = Grid::new(&bx, dims)?;
            Ok(GridField::sample(grid, 2, Target::Sphere(1), None, |x| {
                Some(vec![x[0].cos(), x[0].sin()])
            })?)
        }
        "power_d" => {
            need(m == 2, "needs two axes")?;
            let sing = (d != 0).then(|| origin(2));
            Ok(GridField::sample(
                cube_grid(2, 1.0, dims)?,
                2,
                Target::Sphere(1),
                sing,
                |x| {
                    let r = x[0].hypot(x[1]);
                    if r == 0.0 {
                        return (d == 0).then(|| vec![1.0, 0.0]);
                    }
                    let t = d as f64 * x[1].atan2(x[0]);
                    Some(vec![t.cos(), t.sin()])
                },
            )?)
        }
        "radial" => {
            need(m == 2 || m == 3, "needs two or three axes")?;
            Ok(GridField::sample(
                cube_grid(m, 1.0, dims)?,
                m,
                Target::Sphere(m - 1),
                Some(origin(m)),
                |x| unit(x.to_vec()),
            )?)
        }
        "dipole" => {
            need(m == 2, "needs two axes")?;
            let (a, b) = (DIPOLE_POSITIVE, DIPOLE_NEGATIVE);
            let sing = StructuredSingularSet::points(2, &[a.to_vec(), b.to_vec()]);
            Ok(GridField::sample(
                cube_grid(2, 1.0, dims)?,
                2,
                Target::Sphere(1),
                Some(sing),
                |x| {
                    // (z - a) * conj(z - b)
                    let (p, q) = (x[0] - a[0], x[1] - a[1]);
                    let (r, s) = (x[0] - b[0], x[1] - b[1]);
                    unit(vec![p * r + q * s, q * r - p * s])
                },
            )?)
        }
        "smooth_bump" => {
            need(m == 2 || m == 3, "needs two or three axes")?;
            Ok(GridField::sample(
                cube_grid(m, 1.0, dims)?,
                m,
                Target::Sphere(m - 1),
                None,
                |x| {
                    let phase = 0.8 * (-x.iter().map(|c| c * c).sum::<f64>()).exp();
                    let mut v = vec![0.0; m];
                    v[0] = phase.cos();
                    v[1] = phase.sin();
                    Some(v)
                },
            )?)
        }
        "hopf" => {
            need(m == 3, "needs three axes")?;
            Ok(GridField::sample(
                cube_grid(3, 2.0, dims)?,
                3,
                Target::Sphere(2),
                None,
                |x| {
                    let r2: f64 = x.iter().map(|c| c * c).sum();
                    let s = [2.0 * x[0], 2.0 * x[1], 2.0 * x[2], r2 - 1.0].map(|c| c / (r2 + 1.0));
                    Some(hopf_map(&s))
                },
            )?)
        }
        "constant" => {
            need(m >= 1, "needs at least one axis")?;
            let nu = m.max(2);
            Ok(GridField::sample(
                cube_grid(m, 1.0, dims)?,
                nu,
                Target::Sphere(nu - 1),
                None,
                |_| {
                    let mut v = vec![0.0; nu];
                    v[0] = 1.0;
                    Some(v)
                },
            )?)
        }
        "homogeneous0" => {
            need(m == 2, "needs two axes")?;
            Ok(GridField::sample(
                cube_grid(2, 1.0, dims)?,
                2,
                Target::Sphere(1),
                Some(origin(2)),
                |x| {
                    if x[0] == 0.0 && x[1] == 0.0 {
                        return None;
                    }
                    let t = homogeneous0_phase(x[1].atan2(x[0]));
                    Some(vec![t.cos(), t.sin()])
                },
            )?)
        }
        _ => Err(BuiltinError::UnknownBuiltin(name.to_string())),
    }
}

/// Named maps `S^3 -> S^2` sampled on the vertices of `sphere`: `hopf` and
/// `constant`.
pub fn builtin_sphere_map(name: &str, sphere: Arc<TriangulatedSphere>) -> Result<SampledSphereMap, BuiltinError> {
    if sphere.dim() != 3 {
        return Err(bad(name, "maps on S^3 only"));
    }
    match name {
        "hopf" => Ok(SampledSphereMap::from_fn(sphere, 3, hopf_map)),
        "constant" => Ok(SampledSphereMap::from_fn(sphere, 3, |_| vec![0.0, 0.0, 1.0])),
        _ => Err(BuiltinError::UnknownBuiltin(name.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radial_masks_only_the_origin_cell() {
        let u = builtin_field("radial", &[128, 128], 0).unwrap();
        // 128 nodes: the origin is the center of a cell, whose 4 corners are masked
        assert_eq!(u.masked_count(), 4);
        for n in 0..u.grid().len() {
            if !u.is_masked(n) {
                let v = u.value(n);
                assert!((v[0].hypot(v[1]) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn hopf_values_are_unit() {
        let u = builtin_field("hopf", &[9, 9, 9], 0).unwrap();
        assert_eq!(u.masked_count(), 0);
    }

    #[test]
    fn unknown_name_is_reported() {
        assert!(matches!(
            builtin_field("nope", &[8, 8], 0),
            Err(BuiltinError::UnknownBuiltin(_))
        ));
        assert!(matches!(
            builtin_field("dipole", &[8, 8, 8], 0),
            Err(BuiltinError::InvalidArgument { .. })
        ));
    }
}
