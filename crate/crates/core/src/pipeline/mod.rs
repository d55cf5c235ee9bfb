//! The constructive approximation machine: good/bad cube classification,
//! opening near a skeleton, adaptive smoothing, thickening toward the dual
//! skeleton, degree-based removal of circle singularities, shrinking, and
//! the end-to-end driver.

mod classify;
mod opening;
mod profile;
mod smoothing;
mod surgery;

pub use classify::{classify_cubes, Classification};
pub use opening::{open_at_point, open_on_skeleton, FaceOpening, OpeningMap, OpeningStats, OpeningTarget};
pub use profile::{ProfileCertificate, ProfileKind, RadialProfile};
pub use smoothing::{adaptive_smooth, discrete_lipschitz};
pub use surgery::{
    apply_shrinking, apply_thickening, extend_or_keep, loop_degree, ExtensionStats, ShrinkingStats, ThickeningStats,
};

use crate::detectors::{maximal_function_detector, DetectorError};
use crate::fields::{project_to_sphere, sobolev_distance, sobolev_norm, FieldError, GridField, Mollifier, Target};
use crate::geometry::{Cubication, GeometryError};
use crate::invariants::{cell_degree_sweep, Atom, InvariantError};
use crate::util::{norm, smoothstep};
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error("no root: {0}")]
    NoRoot(String),
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("psi is too steep: Lip(psi) = {0:.4} >= 1")]
    PsiTooSteep(f64),
    #[error("Sobolev admissibility violated: kp = {kp} >= l + 1 with l = {ell}")]
    AdmissibilityViolation { kp: f64, ell: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("phase lift failed around {location:?}: {detail}")]
    LiftFailure { location: Vec<f64>, detail: String },
    #[error("stage {stage} failed ({params}): {source}")]
    Stage {
        stage: String,
        params: String,
        source: Box<PipelineError>,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Invariant(#[from] InvariantError),
}

impl PipelineError {
    /// Name of the failing stage when the error comes from the driver.
    pub fn stage(&self) -> Option<&str> {
        match self {
            PipelineError::Stage { stage, .. } => Some(stage),
            _ => None,
        }
    }
}

/// `u o Phi` at every node where `map` returns a point (a `NaN` point masks
/// the node); other nodes keep their value bit for bit. Mapped points are
/// interpolated from the unmasked corners of their cell and nodes mapped
/// into a fully masked cell become masked. Sphere-valued results are
/// renormalised, and masked where the interpolant nearly vanishes.
pub(crate) fn compose<F>(u: &GridField, map: F) -> Result<GridField, PipelineError>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    let grid = u.grid();
    let nu = u.nu();
    let sphere = matches!(u.target(), Target::Sphere(_));
    let rows: Vec<Option<Vec<f64>>> = (0..grid.len())
        .into_par_iter()
        .map(|node| {
            let x = grid.point(node);
            match map(&x) {
                None => (!u.is_masked(node)).then(|| u.value(node).to_vec()),
                Some(y) => {
                    if y.iter().any(|v| v.is_nan()) {
                        return None;
                    }
                    let mut v = u.interpolate_partial(&y)?;
                    if sphere {
                        let r = norm(&v);
                        if r < 1e-3 {
                            return None;
                        }
                        v.iter_mut().for_each(|c| *c /= r);
                    }
                    Some(v)
                }
            }
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
    Ok(u.with_values(values, Some(&mask), u.target())?)
}

/// Parameters of one pipeline run.
#[derive(Debug, Clone, Serialize)]
pub struct PipelineParams {
    pub eta: f64,
    pub rho: f64,
    pub alpha: f64,
    pub iota: f64,
    pub mu: f64,
    pub tau: f64,
    pub theta: f64,
    pub k: usize,
    pub p: f64,
    /// Translation samples per opened face.
    pub samples: usize,
    pub seed: u64,
    /// `C` in the smoothing scale `t = min(rho, 1/C) eta / 4`.
    pub smoothing_constant: f64,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            eta: 0.125,
            rho: 0.25,
            alpha: 0.1,
            iota: 0.2,
            mu: 0.25,
            tau: 0.0625,
            theta: 1.5,
            k: 1,
            p: 1.5,
            samples: 64,
            seed: 0,
            smoothing_constant: 1.0,
        }
    }
}

impl PipelineParams {
    pub fn validate(&self, m: usize) -> Result<(), PipelineError> {
        let kp = self.k as f64 * self.p;
        let ok = self.eta > 0.0
            && 0.0 < self.rho
            && self.rho < 0.5
            && 0.0 < self.tau
            && self.tau < self.mu
            && self.mu < 0.5
            && self.alpha > 0.0
            && 0.0 < self.iota
            && self.iota < 1.0
            && self.theta > 1.0
            && self.p >= 1.0
            && self.p.is_finite()
            && self.k == 1
            && self.smoothing_constant > 0.0;
        if !ok {
            return Err(PipelineError::InvalidArgument(format!(
                "parameters out of range: {self:?}"
            )));
        }
        if kp >= m as f64 {
            return Err(PipelineError::InvalidArgument(format!(
                "kp = {kp} must be below m = {m}"
            )));
        }
        Ok(())
    }

    fn record(&self) -> String {
        format!(
            "eta={} rho={} alpha={} iota={} mu={} tau={} p={} k={}",
            self.eta, self.rho, self.alpha, self.iota, self.mu, self.tau, self.p, self.k
        )
    }
}

/// One stage of the ledger. Distances are `W^{1,p}` norms over the cells
/// valid in every stage, so the triangle inequality holds exactly.
#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub stage: String,
    pub distance_to_input: f64,
    pub distance_to_previous: f64,
    pub masked_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum FinalClass {
    Smooth,
    /// Smooth away from finitely many points.
    R0 {
        singular_points: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct SmoothingStats {
    pub t: f64,
    pub s: f64,
    pub halvings: usize,
    /// `max |u_sm - u_op|` over unmasked nodes outside `U^m`.
    pub epsilon: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub params: PipelineParams,
    pub ell: usize,
    pub cubes: usize,
    pub bad_cubes: usize,
    pub u_cubes: usize,
    pub bad_volume: f64,
    pub u_volume: f64,
    pub volume_constant: f64,
    pub opening: OpeningStats,
    pub full_opening: OpeningStats,
    /// `max |u o Phi_U - u o Phi_S|` on unmasked nodes of `U^m + Q_{rho eta}`.
    pub full_opening_deviation: f64,
    pub smoothing: SmoothingStats,
    pub thickening_profile: RadialProfile,
    pub shrinking_profile: Option<RadialProfile>,
    pub thickening: ThickeningStats,
    pub extension: ExtensionStats,
    pub shrinking: ShrinkingStats,
    pub stages: Vec<StageRecord>,
    pub input_norm: f64,
    pub final_distance: f64,
    /// `final_distance <= sum of stage-to-stage distances` (up to rounding).
    pub ledger_consistent: bool,
    pub excluded_volume: f64,
    pub atoms_before: Vec<Atom>,
    pub atoms_after: Vec<Atom>,
    pub final_class: FinalClass,
}

/// Report together with the final field.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: PipelineReport,
    pub output: GridField,
}

fn staged<T>(stage: &str, params: &PipelineParams, r: Result<T, PipelineError>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage: stage.to_string(),
        params: params.record(),
        source: Box::new(e),
    })
}

/// Sup distance from every node to the union of the cubes in `U^m`
/// (`0` inside, `+inf` when no cube of `U^m` is adjacent to the node's cube).
fn distance_to_u(u: &GridField, cls: &Classification) -> Vec<f64> {
    let grid = u.grid();
    let cub = &cls.cubication;
    let eta = cls.eta;
    (0..grid.len())
        .into_par_iter()
        .map(|n| {
            let x = grid.point(n);
            let Some(q) = cub.locate(&x) else {
                return f64::INFINITY;
            };
            cub.vertex_neighbors(q)
                .into_iter()
                .filter(|&nb| cls.in_u[nb])
                .map(|nb| {
                    let c = cub.cube_center(nb);
                    x.iter()
                        .zip(&c)
                        .map(|(a, b)| ((a - b).abs() - eta).max(0.0))
                        .fold(0.0, f64::max)
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn smoothing_stage(
    u: &GridField,
    cls: &Classification,
    params: &PipelineParams,
) -> Result<(GridField, SmoothingStats), PipelineError> {
    let grid = u.grid();
    let m = grid.dim();
    let eta = cls.eta;
    let t = params.rho.min(1.0 / params.smoothing_constant) * eta / 4.0;
    let dist = distance_to_u(u, cls);
    let phi = Mollifier::new(m, 4);
    let outside: Vec<bool> = dist.iter().map(|&d| d > 0.0).collect();
    let mut s = t / 2.0;
    for halvings in 0..30 {
        let psi_values: Vec<f64> = (0..grid.len())
            .map(|n| {
                let zeta = if dist[n].is_infinite() {
                    1.0
                } else {
                    smoothstep(dist[n] / (params.rho * eta))
                };
                let raw = t * zeta + s * (1.0 - zeta);
                raw.min(0.5 * grid.bx().interior_margin(&grid.point(n)))
            })
            .collect();
        let psi = u.derived(1, psi_values, None, Target::Unconstrained)?;
        let lipschitz = discrete_lipschitz(&psi);
        let v = adaptive_smooth(u, &psi, &phi)?;
        let nu = u.nu();
        let inside_tube =
            (0..grid.len()).all(|n| !outside[n] || v.is_masked(n) || (norm(v.value(n)) - 1.0).abs() <= params.iota);
        if !inside_tube {
            s /= 2.0;
            continue;
        }
        let mut epsilon: f64 = 0.0;
        let mut values = v.values().to_vec();
        let mut mask = v.mask().to_vec();
        for n in 0..grid.len() {
            if mask[n] {
                continue;
            }
            let r = norm(v.value(n));
            if r < 1e-3 {
                mask[n] = true;
                continue;
            }
            for c in values[n * nu..(n + 1) * nu].iter_mut() {
                *c /= r;
            }
            if outside[n] && !u.is_masked(n) {
                let d: f64 = v
                    .value(n)
                    .iter()
                    .zip(u.value(n))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                epsilon = epsilon.max(d);
            }
        }
        let projected = u.with_values(values, Some(&mask), u.target())?;
        return Ok((
            projected,
            SmoothingStats {
                t,
                s,
                halvings,
                epsilon,
                lipschitz,
            },
        ));
    }
    Err(PipelineError::InvalidArgument(
        "tubular inclusion outside U^m fails for every tried s".into(),
    ))
}

/// Runs classification, opening, adaptive smoothing, projection,
/// thickening, extension (circle targets on `B^2`), shrinking and the final
/// projection, recording per-stage distances to the input.
pub fn run_pipeline(u: &GridField, params: &PipelineParams) -> Result<PipelineRun, PipelineError> {
    let m = u.dim();
    if u.target() != Target::Sphere(m - 1) || !(2..=3).contains(&m) {
        return Err(PipelineError::InvalidArgument(format!(
            "pipeline needs a field B^m -> S^(m-1) with m in 2..=3, got m = {m}, nu = {}",
            u.nu()
        )));
    }
    params.validate(m)?;
    let kp = params.k as f64 * params.p;
    let ell = kp.floor() as usize;
    if ell + 1 != m {
        return Err(PipelineError::Unsupported(format!(
            "floor(kp) = {ell} but only l = m - 1 = {} is supported",
            m - 1
        )));
    }
    let cub = staged(
        "classify",
        params,
        Cubication::new(u.grid().bx(), params.eta).map_err(Into::into),
    )?;
    let cls = staged(
        "classify",
        params,
        classify_cubes(u, &cub, params.alpha, params.iota, params.rho, params.k, params.p),
    )?;

    let w = staged("open", params, maximal_function_detector(u, kp).map_err(Into::into))?;
    let mut translations = BTreeMap::new();
    let (u_op, _, opening) = staged(
        "open",
        params,
        open_on_skeleton(
            u,
            &cls,
            OpeningTarget::UEll,
            ell,
            &w,
            params.samples,
            params.seed,
            &mut translations,
        ),
    )?;
    let (u_fop, _, full_opening) = staged(
        "open",
        params,
        open_on_skeleton(
            u,
            &cls,
            OpeningTarget::SEll,
            ell,
            &w,
            params.samples,
            params.seed,
            &mut translations,
        ),
    )?;
    let near_u = distance_to_u(u, &cls);
    let full_opening_deviation = (0..u.grid().len())
        .filter(|&n| near_u[n] <= params.rho * params.eta && !u_op.is_masked(n) && !u_fop.is_masked(n))
        .map(|n| {
            u_op.value(n)
                .iter()
                .zip(u_fop.value(n))
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);

    let (u_sm, smoothing) = staged("smooth", params, smoothing_stage(&u_op, &cls, params))?;

    // the band feeding the thickening lies in the constant region of the
    // opening of the l-faces, half its width away from the blending zone
    let r_th = 1.0 - params.rho / f64::powi(2.0, ell as i32 + 1);
    let rho_th = 1.0 - params.rho / f64::powi(2.0, ell as i32 + 2);
    let thickening_profile = staged("thicken", params, RadialProfile::thickening(r_th, rho_th, m))?;
    let (u_th, thickening) = staged(
        "thicken",
        params,
        apply_thickening(&u_sm, &cls, ell, &thickening_profile),
    )?;

    let (u_ext, extension) = if m == 2 {
        staged("extend", params, extend_or_keep(&u_th, &cls, params.mu))?
    } else {
        (u_th.clone(), ExtensionStats::default())
    };

    // certificate of the shrinking ansatz in units of Q_{2 mu eta}
    let theta = params.theta.min(0.5 * (1.0 + 0.9 / 0.5));
    let shrinking_profile = RadialProfile::shrinking(0.5, 0.9, params.tau / 2.0, theta, m).ok();
    let (u_sh, shrinking) = staged(
        "shrink",
        params,
        apply_shrinking(&u_ext, &cls, ell, params.mu, params.tau, &thickening.centers),
    )?;
    let u_fin = staged(
        "project",
        params,
        project_to_sphere(&u_sh, params.iota).map_err(Into::into),
    )?;

    let stages_fields = [
        ("open", &u_op),
        ("smooth", &u_sm),
        ("thicken", &u_th),
        ("extend", &u_ext),
        ("shrink", &u_sh),
        ("project", &u_fin),
    ];
    let mut union = u.mask().to_vec();
    for (_, f) in &stages_fields {
        for (a, b) in union.iter_mut().zip(f.mask()) {
            *a |= *b;
        }
    }
    let common = |f: &GridField| f.masked_with(&union);
    let base = staged("ledger", params, common(u).map_err(Into::into))?;
    let mut previous = base.clone();
    let mut stages = Vec::new();
    let mut sum = 0.0;
    let mut excluded_volume = 0.0;
    for (name, f) in &stages_fields {
        let g = staged("ledger", params, common(f).map_err(Into::into))?;
        let d_in = staged(
            "ledger",
            params,
            sobolev_distance(&base, &g, 1, params.p).map_err(Into::into),
        )?;
        let d_prev = staged(
            "ledger",
            params,
            sobolev_distance(&previous, &g, 1, params.p).map_err(Into::into),
        )?;
        excluded_volume = d_in.excluded_volume[1];
        sum += d_prev.norm;
        stages.push(StageRecord {
            stage: name.to_string(),
            distance_to_input: d_in.norm,
            distance_to_previous: d_prev.norm,
            masked_nodes: f.masked_count(),
        });
        previous = g;
    }
    let final_distance = stages.last().map(|s| s.distance_to_input).unwrap_or(0.0);
    let input_norm = staged("ledger", params, sobolev_norm(u, 1, params.p).map_err(Into::into))?.norm;
    let atoms_of = |f: &GridField| -> Result<Vec<Atom>, PipelineError> {
        if m == 2 {
            Ok(cell_degree_sweep(f)?.atoms)
        } else {
            Ok(Vec::new())
        }
    };
    let atoms_before = staged("ledger", params, atoms_of(u))?;
    let atoms_after = staged("ledger", params, atoms_of(&u_fin))?;
    let final_class = match u_fin.singular_set() {
        Some(s) if !s.is_empty() => FinalClass::R0 {
            singular_points: s
                .pieces()
                .iter()
                .map(|p| p.fixed.iter().map(|&(_, v)| v).collect())
                .collect(),
        },
        _ if u_fin.masked_count() == 0 => FinalClass::Smooth,
        _ => FinalClass::R0 {
            singular_points: Vec::new(),
        },
    };
    let report = PipelineReport {
        params: params.clone(),
        ell,
        cubes: cub.cubes().len(),
        bad_cubes: cls.bad_cubes().len(),
        u_cubes: cls.u_cubes().len(),
        bad_volume: cls.bad_volume,
        u_volume: cls.u_volume,
        volume_constant: cls.volume_constant,
        opening,
        full_opening,
        full_opening_deviation,
        smoothing,
        thickening_profile,
        shrinking_profile,
        thickening,
        extension,
        shrinking,
        ledger_consistent: final_distance <= sum * (1.0 + 1e-12) + 1e-12,
        stages,
        input_norm,
        final_distance,
        excluded_volume,
        atoms_before,
        atoms_after,
        final_class,
    };
    Ok(PipelineRun { report, output: u_fin })
}
