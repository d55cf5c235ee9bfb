//! Topological invariants of sampled sphere-valued maps: degrees, the
//! distributional Jacobian with its Dirac decomposition, the extendability
//! oracle, and the Hopf invariant of maps `S^3 -> S^2`.

mod current;
mod hopf;

pub use current::{
    cell_degree_sweep, extendability_oracle, jacobian_pairing, test_form_battery, Atom, CurrentReport,
    ExtendabilityVerdict, TestForm,
};
pub use hopf::{hopf_linking, hopf_linking_auto, hopf_whitehead, DecSphere3, SparseMatrix};

use crate::fields::{restrict_to_curve, FieldError, GridField, SampledSphereMap};
use crate::geometry::DiskBoundary;
use crate::util::{solid_angle, wrap_angle};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InvariantError {
    #[error("undersampled: {0}")]
    Undersampled(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("conjugate gradient did not reach tolerance in {iterations} iterations (residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },
    #[error("pulled-back form is not closed: |d omega| = {0:e}")]
    NonClosedForm(f64),
    #[error("value {0:?} is not regular for the sampled map")]
    NonRegularValue(Vec<f64>),
    #[error("only {found} admissible disks, need at least {needed}")]
    InsufficientAdmissibleDisks { found: usize, needed: usize },
    #[error(transparent)]
    Field(#[from] FieldError),
}

/// Rounding thresholds turning quadratures into certified integers.
pub const WINDING_RESIDUAL: f64 = 0.05;
pub const PULLBACK_RESIDUAL: f64 = 0.1;

fn certify(value: f64, tol: f64) -> Result<i64, InvariantError> {
    let k = value.round();
    if (value - k).abs() >= tol {
        return Err(InvariantError::Undersampled(format!(
            "quadrature {value:.6} is not within {tol} of an integer"
        )));
    }
    Ok(k as i64)
}

/// Raw winding number of a closed polygon of planar vectors (not
/// necessarily unit), `(1/2pi) sum wrap(arg v_{i+1} - arg v_i)`.
/// Errors when some step turns by `pi` or more.
pub fn winding_number_raw(samples: &[[f64; 2]]) -> Result<f64, InvariantError> {
    let n = samples.len();
    let mut total = 0.0;
    for i in 0..n {
        let a = samples[i];
        let b = samples[(i + 1) % n];
        let d = wrap_angle(b[1].atan2(b[0]) - a[1].atan2(a[0]));
        if d.abs() >= PI {
            return Err(InvariantError::Undersampled(format!(
                "angular jump of pi between samples {i} and {}",
                (i + 1) % n
            )));
        }
        total += d;
    }
    Ok(total / (2.0 * PI))
}

/// Degree of a cyclically ordered sampling of a loop in `S^1`.
pub fn winding_degree(samples: &[[f64; 2]]) -> Result<i64, InvariantError> {
    if samples.len() < 64 {
        return Err(InvariantError::Undersampled(format!(
            "{} samples, need at least 64",
            samples.len()
        )));
    }
    certify(winding_number_raw(samples)?, WINDING_RESIDUAL)
}

/// Unrounded pullback `(1/|S^l|) sum_sigma vol(f(sigma))` for `l in {1, 2}`.
pub fn pullback_integral(f: &SampledSphereMap) -> Result<f64, InvariantError> {
    let s = &f.sphere;
    let ell = s.dim();
    if f.nu != ell + 1 || !(1..=2).contains(&ell) {
        return Err(InvariantError::InvalidArgument(format!(
            "pullback degree needs a map S^{ell} -> S^{ell} with l in 1..=2, got nu = {}",
            f.nu
        )));
    }
    let mut total = 0.0;
    for i in 0..s.num_simplices() {
        let sx = s.simplex(i);
        let o = s.orientation(i);
        let contribution = if ell == 1 {
            let (a, b) = (f.value(sx[0]), f.value(sx[1]));
            let d = wrap_angle(b[1].atan2(b[0]) - a[1].atan2(a[0]));
            if d.abs() >= PI {
                return Err(InvariantError::Undersampled(format!("angular jump of pi on edge {i}")));
            }
            d
        } else {
            let p = |k: usize| {
                let v = f.value(sx[k]);
                [v[0], v[1], v[2]]
            };
            solid_angle(&p(0), &p(1), &p(2))
        };
        total += o * contribution;
    }
    Ok(total / crate::util::sphere_measure(ell))
}

/// Degree of a map `S^l -> S^l` sampled on a triangulated sphere, `l in {1, 2}`.
pub fn pullback_degree(f: &SampledSphereMap) -> Result<i64, InvariantError> {
    certify(pullback_integral(f)?, PULLBACK_RESIDUAL)
}

/// Hurewicz degree of `u` relative to the restriction to `gamma`, whose
/// sphere dimension must match the target sphere.
pub fn hurewicz_degree(u: &GridField, gamma: &DiskBoundary) -> Result<i64, InvariantError> {
    if gamma.dim() + 1 != u.nu() {
        return Err(InvariantError::InvalidArgument(format!(
            "restriction of dimension {} against target S^{}",
            gamma.dim(),
            u.nu() - 1
        )));
    }
    let f = restrict_to_curve(u, gamma)?;
    pullback_degree(&f)
}
