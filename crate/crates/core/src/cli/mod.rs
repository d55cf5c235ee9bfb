//! Command line: configuration, built-in example fields, experiment drivers
//! and report serialization.

mod builtins;
mod report;
mod sfld;

pub use builtins::{
    builtin_field, builtin_sphere_map, hopf_map, BuiltinError, BUILTINS, DIPOLE_NEGATIVE, DIPOLE_POSITIVE,
};
pub use report::{envelope, to_csv, REPORT_VERSION};
pub use sfld::{read_field, write_field, Encoding, SfldError};

use crate::detectors::maximal_function_detector;
use crate::fields::{fractional_seminorm, mean_oscillation, sobolev_norm, GridField, Target};
use crate::geometry::standard_disk_boundaries;
use crate::invariants::{
    cell_degree_sweep, extendability_oracle, hopf_linking_auto, hopf_whitehead, winding_degree, winding_number_raw,
    DecSphere3,
};
use crate::pipeline::{run_pipeline, PipelineError, PipelineParams};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use std::fmt::Display;
use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error(transparent)]
    Builtin(#[from] BuiltinError),
    #[error(transparent)]
    Sfld(#[from] SfldError),
    #[error("stage {stage} failed: {detail}")]
    Compute { stage: String, detail: String },
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    /// `2` for invalid input or configuration, `3` for failed computations.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) | CliError::Builtin(_) | CliError::Sfld(_) => 2,
            CliError::Compute { .. } | CliError::Output(_) => 3,
        }
    }
}

fn compute<E: Display>(stage: &'static str) -> impl Fn(E) -> CliError {
    move |e| CliError::Compute {
        stage: stage.to_string(),
        detail: e.to_string(),
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Stage { stage, params, source } => CliError::Compute {
                stage,
                detail: format!("{source} [{params}]"),
            },
            other => CliError::Validation(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetArg {
    S1,
    S2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Parameters shared by all commands; each command reads what it needs.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentConfig {
    /// Builtin field name or path to an SFLD file [default: hopf for the
    /// hopf command, radial otherwise].
    #[arg(long)]
    pub input: Option<String>,
    /// Target sphere of a field read from a file (inferred when omitted).
    #[arg(long, value_enum)]
    pub target: Option<TargetArg>,
    /// Dimension of builtin fields.
    #[arg(long, default_value_t = 2)]
    pub m: usize,
    /// Nodes per axis of builtin fields, one value or one per axis
    /// [default: 513 for pipeline, 128 otherwise].
    #[arg(long, value_delimiter = ',')]
    pub dims: Vec<usize>,
    #[arg(long, default_value_t = 1.5)]
    pub p: f64,
    #[arg(long, default_value_t = 1)]
    pub k: usize,
    /// Cube radius of the cubication.
    #[arg(long, default_value_t = 0.125)]
    pub eta: f64,
    #[arg(long, default_value_t = 0.25)]
    pub rho: f64,
    /// Scale factor of the good-cube criterion.
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Tubular neighbourhood radius of the target sphere.
    #[arg(long, default_value_t = 0.2)]
    pub iota: f64,
    #[arg(long, default_value_t = 0.25)]
    pub mu: f64,
    /// Shrinking ratio [default: mu / 4].
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 1.5)]
    pub theta: f64,
    /// Degree of the power_d builtin.
    #[arg(long, default_value_t = 2, allow_negative_numbers = true)]
    pub d: i64,
    /// Order of the fractional seminorm in the norms report.
    #[arg(long, default_value_t = 0.5)]
    pub s: f64,
    /// Refinement level of the triangulated S^3 used by hopf.
    #[arg(long, default_value_t = 4)]
    pub refinement: usize,
    /// Number of disks screened by detect.
    #[arg(long, default_value_t = 64)]
    pub disks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Write the field produced by pipeline to this SFLD file.
    #[arg(long)]
    pub dump: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Encoding::Bin64)]
    pub dump_encoding: Encoding,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Sobolev, mean-oscillation and fractional norms of a field.
    Norms(ExperimentConfig),
    /// Degrees, Jacobian pairings and atoms of a field.
    Invariants(ExperimentConfig),
    /// Extendability verdict from detector-screened disks.
    Detect(ExperimentConfig),
    /// Hopf invariant by Whitehead's formula and by linking of preimages.
    Hopf(ExperimentConfig),
    /// Good/bad cube approximation by maps with point singularities.
    Pipeline(ExperimentConfig),
    /// Runs the example corpus end to end.
    Demo(ExperimentConfig),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Norms(_) => "norms",
            Command::Invariants(_) => "invariants",
            Command::Detect(_) => "detect",
            Command::Hopf(_) => "hopf",
            Command::Pipeline(_) => "pipeline",
            Command::Demo(_) => "demo",
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        match self {
            Command::Norms(c)
            | Command::Invariants(c)
            | Command::Detect(c)
            | Command::Hopf(c)
            | Command::Pipeline(c)
            | Command::Demo(c) => c,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sobolev-topo",
    version,
    about = "Topological singularities of sampled sphere-valued Sobolev maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

impl ExperimentConfig {
    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(self.mu / 4.0)
    }

    pub fn input_name(&self, command: &str) -> String {
        self.input.clone().unwrap_or_else(|| {
            if command == "hopf" {
                "hopf".into()
            } else {
                "radial".into()
            }
        })
    }

    /// Nodes per axis for builtin fields of dimension `m`.
    pub fn resolved_dims(&self, command: &str, m: usize) -> Result<Vec<usize>, CliError> {
        let dims = match self.dims.len() {
            0 => vec![if command == "pipeline" { 513 } else { 128 }; m],
            1 => vec![self.dims[0]; m],
            n if n == m => self.dims.clone(),
            n => {
                return Err(CliError::Validation(format!("{n} dims given for m = {m}")));
            }
        };
        if dims.iter().any(|&d| !(4..=8193).contains(&d)) {
            return Err(CliError::Validation(format!("dims {dims:?} outside 4..=8193")));
        }
        Ok(dims)
    }

    /// Range checks made before any work is done.
    pub fn validate(&self, command: &str) -> Result<(), CliError> {
        let tau = self.tau();
        let checks = [
            (0.0 < self.rho && self.rho < 0.5, "0 < rho < 1/2"),
            (0.0 < tau && tau < self.mu && self.mu < 0.5, "0 < tau < mu < 1/2"),
            (self.p >= 1.0 && self.p.is_finite(), "1 <= p < inf"),
            ((1..=2).contains(&self.k), "k in {1, 2}"),
            (self.eta > 0.0 && self.eta.is_finite(), "eta > 0"),
            (0.0 < self.iota && self.iota < 1.0, "0 < iota < 1"),
            (self.alpha > 0.0 && self.alpha.is_finite(), "alpha > 0"),
            (self.theta > 1.0 && self.theta.is_finite(), "theta > 1"),
            (0.0 < self.s && self.s < 1.0, "0 < s < 1"),
            ((1..=3).contains(&self.m), "m in 1..=3"),
            ((1..=6).contains(&self.refinement), "refinement in 1..=6"),
            (self.disks >= 1, "disks >= 1"),
        ];
        for (ok, what) in checks {
            if !ok {
                return Err(CliError::Validation(format!("need {what}")));
            }
        }
        if command == "pipeline" {
            if self.k != 1 {
                return Err(CliError::Validation("the pipeline runs with k = 1".into()));
            }
            let kp = self.k as f64 * self.p;
            if kp >= self.m as f64 && self.input.as_deref().is_none_or(|i| BUILTINS.contains(&i)) {
                return Err(CliError::Validation(format!("kp = {kp} must be below m = {}", self.m)));
            }
        }
        Ok(())
    }

    pub fn pipeline_params(&self) -> PipelineParams {
        PipelineParams {
            eta: self.eta,
            rho: self.rho,
            alpha: self.alpha,
            iota: self.iota,
            mu: self.mu,
            tau: self.tau(),
            theta: self.theta,
            k: self.k,
            p: self.p,
            seed: self.seed,
            ..PipelineParams::default()
        }
    }

    fn load_field(&self, command: &str) -> Result<GridField, CliError> {
        let name = self.input_name(command);
        if BUILTINS.contains(&name.as_str()) {
            let dims = self.resolved_dims(command, self.m)?;
            return Ok(builtin_field(&name, &dims, self.d)?);
        }
        let file =
            std::fs::File::open(&name).map_err(|e| CliError::Validation(format!("cannot open input {name:?}: {e}")))?;
        let target = self.target.map(|t| match t {
            TargetArg::S1 => Target::Sphere(1),
            TargetArg::S2 => Target::Sphere(2),
        });
        Ok(read_field(std::io::BufReader::new(file), target)?)
    }

    /// Configuration echo with defaults resolved.
    fn echo(&self, command: &str) -> Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        v["input"] = json!(self.input_name(command));
        v["tau"] = json!(self.tau());
        if let Ok(d) = self.resolved_dims(command, self.m) {
            v["dims"] = json!(d);
        }
        v
    }
}

fn describe(u: &GridField) -> Value {
    let grid = u.grid();
    json!({
        "m": grid.dim(),
        "nu": u.nu(),
        "dims": grid.dims(),
        "lo": grid.bx().lo(),
        "hi": grid.bx().hi(),
        "target": match u.target() {
            Target::Sphere(n) => format!("S^{n}"),
            Target::Unconstrained => "unconstrained".into(),
        },
        "masked_nodes": u.masked_count(),
    })
}

fn norms(cfg: &ExperimentConfig, u: &GridField) -> Result<Value, CliError> {
    let sobolev = sobolev_norm(u, cfg.k, cfg.p).map_err(compute("norms"))?;
    let h = u.grid().h_max();
    let radii: Vec<f64> = [0.5, 0.25, 0.1, 0.05, 0.02, 0.01]
        .into_iter()
        .filter(|&r| r >= 2.0 * h)
        .collect();
    let oscillation = mean_oscillation(u, &radii, None).map_err(compute("norms"))?;
    let fractional = fractional_seminorm(u, cfg.s, cfg.p, cfg.seed).map_err(compute("norms"))?;
    Ok(json!({
        "field": describe(u),
        "sobolev": sobolev,
        "mean_oscillation": oscillation,
        "fractional": fractional,
    }))
}

/// Closed loop of a circle-valued field on a one-dimensional box; a final
/// node repeating the first is dropped.
fn loop_samples(u: &GridField) -> Result<Vec<[f64; 2]>, CliError> {
    if u.nu() != 2 || u.masked_count() > 0 {
        return Err(CliError::Validation(
            "a loop needs an unmasked field with two components".into(),
        ));
    }
    let mut s: Vec<[f64; 2]> = u.values().chunks(2).map(|v| [v[0], v[1]]).collect();
    if s.len() > 2 {
        let (a, b) = (s[0], s[s.len() - 1]);
        if (a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12 {
            s.pop();
        }
    }
    Ok(s)
}

fn invariants(u: &GridField) -> Result<Value, CliError> {
    if u.dim() == 1 {
        let s = loop_samples(u)?;
        let raw = winding_number_raw(&s).map_err(compute("invariants"))?;
        let degree = winding_degree(&s).map_err(compute("invariants"))?;
        return Ok(json!({
            "field": describe(u),
            "winding": raw,
            "degree": degree,
            "residual": (raw - degree as f64).abs(),
            "samples": s.len(),
        }));
    }
    let report = cell_degree_sweep(u).map_err(compute("invariants"))?;
    Ok(json!({ "field": describe(u), "current": report }))
}

fn detect(cfg: &ExperimentConfig, u: &GridField) -> Result<Value, CliError> {
    let Target::Sphere(n) = u.target() else {
        return Err(CliError::Validation("detect needs a sphere-valued field".into()));
    };
    let h = u.grid().h_max();
    let disks = standard_disk_boundaries(u.grid().bx(), n, cfg.disks, cfg.seed, 2.0 * h).map_err(compute("detect"))?;
    let w = maximal_function_detector(u, cfg.p).map_err(compute("detect"))?;
    let verdict = extendability_oracle(u, &disks, &w).map_err(compute("detect"))?;
    Ok(json!({
        "field": describe(u),
        "verdict": if verdict.extendable { "extendable" } else { "obstructed" },
        "detector_integral": w.integral(),
        "details": verdict,
    }))
}

fn hopf(cfg: &ExperimentConfig, name: &str) -> Result<Value, CliError> {
    let dec = DecSphere3::new(cfg.refinement).map_err(compute("hopf"))?;
    let v = builtin_sphere_map(name, dec.sphere.clone())?;
    let whitehead = hopf_whitehead(&dec, &v).map_err(compute("hopf"))?;
    let linking = hopf_linking_auto(&v, cfg.seed).map_err(compute("hopf"))?;
    Ok(json!({
        "map": name,
        "refinement": cfg.refinement,
        "vertices": dec.sphere.num_vertices(),
        "simplices": dec.sphere.num_simplices(),
        "whitehead": whitehead,
        "linking": linking,
    }))
}

fn pipeline(cfg: &ExperimentConfig, u: &GridField) -> Result<Value, CliError> {
    let params = cfg.pipeline_params();
    let kp = params.k as f64 * params.p;
    if kp >= u.dim() as f64 {
        return Err(CliError::Validation(format!("kp = {kp} must be below m = {}", u.dim())));
    }
    let run = run_pipeline(u, &params)?;
    if let Some(path) = &cfg.dump {
        let file = std::fs::File::create(path).map_err(|e| CliError::Output(e.to_string()))?;
        write_field(&run.output, cfg.dump_encoding, std::io::BufWriter::new(file))
            .map_err(|e| CliError::Output(e.to_string()))?;
    }
    Ok(json!({
        "field": describe(u),
        "report": serde_json::to_value(&run.report).map_err(compute("pipeline"))?,
    }))
}

fn demo(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let degrees: Vec<Value> = (-3..=3)
        .map(|d: i64| {
            let s: Vec<[f64; 2]> = (0..2048)
                .map(|i| {
                    let t = d as f64 * 2.0 * std::f64::consts::PI * i as f64 / 2048.0;
                    [t.cos(), t.sin()]
                })
                .collect();
            let raw = winding_number_raw(&s).map_err(compute("demo"))?;
            Ok(json!({ "d": d, "degree": winding_degree(&s).map_err(compute("demo"))?, "winding": raw }))
        })
        .collect::<Result<_, CliError>>()?;
    let mut atoms = serde_json::Map::new();
    for name in ["radial", "dipole", "smooth_bump", "homogeneous0"] {
        let u = builtin_field(name, &[128, 128], cfg.d)?;
        let r = cell_degree_sweep(&u).map_err(compute("demo"))?;
        atoms.insert(name.into(), json!({ "atoms": r.atoms, "residual": r.residual }));
    }
    let mut verdicts = serde_json::Map::new();
    for name in ["radial", "homogeneous0", "dipole"] {
        let u = builtin_field(name, &[128, 128], cfg.d)?;
        verdicts.insert(name.into(), detect(cfg, &u)?["verdict"].clone());
    }
    let hopf_report = hopf(
        &ExperimentConfig {
            refinement: 3,
            ..cfg.clone()
        },
        "hopf",
    )?;
    let radial = builtin_field("radial", &[257, 257], 0)?;
    let run = run_pipeline(
        &radial,
        &PipelineParams {
            eta: 0.25,
            ..cfg.pipeline_params()
        },
    )?;
    Ok(json!({
        "degrees": degrees,
        "invariants": atoms,
        "detect": verdicts,
        "hopf": hopf_report,
        "pipeline_radial": {
            "eta": 0.25,
            "final_distance": run.report.final_distance,
            "atoms_after": run.report.atoms_after,
            "final_class": run.report.final_class,
        },
    }))
}

/// Validates the configuration, runs the command and returns the
/// versioned report.
pub fn execute(command: &Command) -> Result<Value, CliError> {
    let name = command.name();
    let cfg = command.config();
    cfg.validate(name)?;
    let result = match command {
        Command::Norms(_) => norms(cfg, &cfg.load_field(name)?)?,
        Command::Invariants(_) => invariants(&cfg.load_field(name)?)?,
        Command::Detect(_) => detect(cfg, &cfg.load_field(name)?)?,
        Command::Hopf(_) => hopf(cfg, &cfg.input_name(name))?,
        Command::Pipeline(_) => pipeline(cfg, &cfg.load_field(name)?)?,
        Command::Demo(_) => demo(cfg)?,
    };
    Ok(envelope(name, cfg.echo(name), result))
}

/// Report text in the requested format.
pub fn render(report: &Value, format: Format) -> Result<String, CliError> {
    match format {
        Format::Json => serde_json::to_string_pretty(report)
            .map(|s| s + "\n")
            .map_err(|e| CliError::Output(e.to_string())),
        Format::Csv => to_csv(report).map_err(|e| CliError::Output(e.to_string())),
    }
}

fn run(command: &Command) -> Result<(), CliError> {
    let report = execute(command)?;
    let cfg = command.config();
    let text = render(&report, cfg.format)?;
    match &cfg.out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Output(e.to_string())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Parses the process arguments, runs the command and returns the exit
/// code: 0 on success, 2 on invalid input, 3 on a failed computation.
pub fn main_entry() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
