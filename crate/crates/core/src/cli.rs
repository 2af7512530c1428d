//! Command-line front end: configuration, dispatch and result files.
//!
//! Configuration is flat `key = value` text. Keys are dotted (`cloud.nu`); a
//! `[section]` line prefixes the keys that follow it. Precedence is defaults, then
//! the file, then `PLAB_*` environment variables (`cloud.nu` is `PLAB_CLOUD_NU`), then
//! command-line flags.

use crate::cloud::{
    analytic_bound_nonperiodic, periodic_stability_condition, spectral_bound_numeric, CloudCoefficients,
    CloudError, CloudModel,
};
use crate::exponents::{quasilinear_recipe, semilinear_recipe, ExponentError};
use crate::heat::{
    scaling_roundtrip_test, scaling_transform, Basis, Diffusivity, FourierBox, HeatError,
    QuasilinearHeatModel, ScalingKind, SemilinearHeatModel,
};
use crate::io::write_atomic;
use crate::lab::{
    prepare_contraction, run_fixed_point, verify_decay, FixedPointOptions, FixedPointProblem, LabError,
};
use crate::linalg::C64;
use crate::mild::{
    fit_decay_rate, picard_solve, run_simulation, EvolutionModel, Integrator, PicardConfig, SolverConfig,
    SolverError, TimeStep, WeightedTrajectory,
};
use crate::strip::{SpectralField, StripError, StripGeometry, StripSpace};
use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const VERSION: &str = concat!("parabolic-lab ", env!("CARGO_PKG_VERSION"));
pub const ENV_PREFIX: &str = "PLAB_";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("unknown key `{key}`{}", .line.map(|l| format!(" (line {l})")).unwrap_or_default())]
    UnknownKey { key: String, line: Option<usize> },
    #[error("`{key}`: {message}")]
    Value { key: String, message: String },
    #[error("constraint violated: {0}")]
    Constraint(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// `2` for infeasible or invalid input, `1` for numerical or i/o failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) | CliError::Io(_) => 1,
            _ => 2,
        }
    }
}

impl From<SolverError> for CliError {
    fn from(e: SolverError) -> Self {
        match e {
            SolverError::InvalidConfig(m) => CliError::Constraint(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<CloudError> for CliError {
    fn from(e: CloudError) -> Self {
        match e {
            CloudError::Viscosity(_) | CloudError::Mode { .. } | CloudError::Dimension { .. } => {
                CliError::Constraint(e.to_string())
            }
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<StripError> for CliError {
    fn from(e: StripError) -> Self {
        CliError::Constraint(e.to_string())
    }
}

impl From<ExponentError> for CliError {
    fn from(e: ExponentError) -> Self {
        CliError::Constraint(e.to_string())
    }
}

impl From<HeatError> for CliError {
    fn from(e: HeatError) -> Self {
        match e {
            HeatError::Solver(s) => s.into(),
            HeatError::Exponents(x) => x.into(),
            other => CliError::Constraint(other.to_string()),
        }
    }
}

impl From<LabError> for CliError {
    fn from(e: LabError) -> Self {
        match e {
            LabError::Solver(s) => s.into(),
            other => CliError::Constraint(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Cloud,
    SemilinearHeat,
    QuasilinearHeat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CloudParams {
    pub nu: f64,
    pub eta: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeometryParams {
    pub nx: usize,
    pub ny: usize,
    /// Half length; `None` means `pi` (periodic) or `8 pi` (truncated).
    pub lx: Option<f64>,
    pub periodic: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatParams {
    pub kappa: f64,
    pub n: usize,
    pub p: f64,
    pub tau: f64,
    /// Polynomial coefficients of `a(s)`, lowest degree first.
    pub diffusivity: Vec<f64>,
    pub floor: f64,
    pub modes: usize,
    pub length: f64,
    pub box_points: usize,
    pub box_half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverParams {
    pub integrator: Integrator,
    pub dt: f64,
    pub adaptive: bool,
    pub dt_max: f64,
    pub max_relative_change: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub snapshot_every: Option<usize>,
    pub blowup_threshold: Option<f64>,
    pub nonlinear: bool,
    pub picard_mesh: usize,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialParams {
    /// `zero`, `bump`, `random`, `sine`, `cosine` or `gaussian`.
    pub profile: String,
    pub amplitude: f64,
    /// Rescales the data to this `H^1` norm when set.
    pub h1_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingParams {
    pub lambdas: Vec<f64>,
    pub kind: ScalingKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabParams {
    pub dim: usize,
    pub varpi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelKind,
    pub cloud: CloudParams,
    pub geometry: GeometryParams,
    pub heat: HeatParams,
    pub solver: SolverParams,
    pub initial: InitialParams,
    pub scaling: ScalingParams,
    pub lab: LabParams,
    pub output: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelKind::Cloud,
            cloud: CloudParams {
                nu: 1.0,
                eta: 0.0,
                beta: 1.0,
            },
            geometry: GeometryParams {
                nx: 64,
                ny: 48,
                lx: None,
                periodic: true,
            },
            heat: HeatParams {
                kappa: 6.0,
                n: 1,
                p: 2.0,
                tau: 0.27,
                diffusivity: vec![1.0],
                floor: 0.0,
                modes: 64,
                length: 1.0,
                box_points: 512,
                box_half_width: 8.0 * PI,
            },
            solver: SolverParams {
                integrator: Integrator::Etdrk2,
                dt: 1e-3,
                adaptive: false,
                dt_max: 1e-2,
                max_relative_change: 0.05,
                t_end: 1.0,
                record_every: 10,
                snapshot_every: None,
                blowup_threshold: None,
                nonlinear: true,
                picard_mesh: 200,
                picard_tol: 1e-10,
                picard_max_iter: 50,
            },
            initial: InitialParams {
                profile: "bump".into(),
                amplitude: 1e-2,
                h1_norm: None,
            },
            scaling: ScalingParams {
                lambdas: vec![2.0, 4.0],
                kind: ScalingKind::Semilinear,
            },
            lab: LabParams { dim: 8, varpi: 0.5 },
            output: PathBuf::from("run"),
            seed: 0,
        }
    }
}

/// Every accepted key.
pub const KEYS: &[&str] = &[
    "model",
    "seed",
    "output.dir",
    "cloud.nu",
    "cloud.eta",
    "cloud.beta",
    "geometry.nx",
    "geometry.ny",
    "geometry.lx",
    "geometry.periodic",
    "heat.kappa",
    "heat.n",
    "heat.p",
    "heat.tau",
    "heat.diffusivity",
    "heat.floor",
    "heat.modes",
    "heat.length",
    "heat.box_points",
    "heat.box_half_width",
    "solver.integrator",
    "solver.dt",
    "solver.adaptive",
    "solver.dt_max",
    "solver.max_relative_change",
    "solver.t_end",
    "solver.record_every",
    "solver.snapshot_every",
    "solver.blowup_threshold",
    "solver.nonlinear",
    "solver.picard_mesh",
    "solver.picard_tol",
    "solver.picard_max_iter",
    "initial.profile",
    "initial.amplitude",
    "initial.h1_norm",
    "scaling.lambda",
    "scaling.kind",
    "lab.dim",
    "lab.varpi",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.parse().map_err(|_| CliError::Value {
        key: key.into(),
        message: format!("cannot parse `{v}`"),
    })
}

fn flag(key: &str, v: &str) -> Result<bool, CliError> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Value {
            key: key.into(),
            message: format!("expected a boolean, got `{v}`"),
        }),
    }
}

fn list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|s| num(key, s.trim())).collect()
}

fn optional<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>, CliError> {
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl RunConfig {
    /// Sets one key; `line` is used in error messages.
    pub fn set(&mut self, key: &str, value: &str, line: Option<usize>) -> Result<(), CliError> {
        let v = value.trim();
        match key {
            "model" => {
                self.model = match v {
                    "cloud" => ModelKind::Cloud,
                    "semilinear-heat" => ModelKind::SemilinearHeat,
                    "quasilinear-heat" => ModelKind::QuasilinearHeat,
                    _ => {
                        return Err(CliError::Value {
                            key: key.into(),
                            message: format!("unknown model `{v}`"),
                        })
                    }
                }
            }
            "seed" => self.seed = num(key, v)?,
            "output.dir" => self.output = PathBuf::from(v),
            "cloud.nu" => self.cloud.nu = num(key, v)?,
            "cloud.eta" => self.cloud.eta = num(key, v)?,
            "cloud.beta" => self.cloud.beta = num(key, v)?,
            "geometry.nx" => self.geometry.nx = num(key, v)?,
            "geometry.ny" => self.geometry.ny = num(key, v)?,
            "geometry.lx" => self.geometry.lx = optional(key, v)?,
            "geometry.periodic" => self.geometry.periodic = flag(key, v)?,
            "heat.kappa" => self.heat.kappa = num(key, v)?,
            "heat.n" => self.heat.n = num(key, v)?,
            "heat.p" => self.heat.p = num(key, v)?,
            "heat.tau" => self.heat.tau = num(key, v)?,
            "heat.diffusivity" => self.heat.diffusivity = list(key, v)?,
            "heat.floor" => self.heat.floor = num(key, v)?,
            "heat.modes" => self.heat.modes = num(key, v)?,
            "heat.length" => self.heat.length = num(key, v)?,
            "heat.box_points" => self.heat.box_points = num(key, v)?,
            "heat.box_half_width" => self.heat.box_half_width = num(key, v)?,
            "solver.integrator" => {
                self.solver.integrator = v.parse().map_err(|e: String| CliError::Value {
                    key: key.into(),
                    message: e,
                })?
            }
            "solver.dt" => self.solver.dt = num(key, v)?,
            "solver.adaptive" => self.solver.adaptive = flag(key, v)?,
            "solver.dt_max" => self.solver.dt_max = num(key, v)?,
            "solver.max_relative_change" => self.solver.max_relative_change = num(key, v)?,
            "solver.t_end" => self.solver.t_end = num(key, v)?,
            "solver.record_every" => self.solver.record_every = num(key, v)?,
            "solver.snapshot_every" => self.solver.snapshot_every = optional(key, v)?,
            "solver.blowup_threshold" => self.solver.blowup_threshold = optional(key, v)?,
            "solver.nonlinear" => self.solver.nonlinear = flag(key, v)?,
            "solver.picard_mesh" => self.solver.picard_mesh = num(key, v)?,
            "solver.picard_tol" => self.solver.picard_tol = num(key, v)?,
            "solver.picard_max_iter" => self.solver.picard_max_iter = num(key, v)?,
            "initial.profile" => {
                const PROFILES: [&str; 6] = ["zero", "bump", "random", "sine", "cosine", "gaussian"];
                if !PROFILES.contains(&v) {
                    return Err(CliError::Value {
                        key: key.into(),
                        message: format!("unknown profile `{v}`, expected one of {PROFILES:?}"),
                    });
                }
                self.initial.profile = v.into()
            }
            "initial.amplitude" => self.initial.amplitude = num(key, v)?,
            "initial.h1_norm" => self.initial.h1_norm = optional(key, v)?,
            "scaling.lambda" => self.scaling.lambdas = list(key, v)?,
            "scaling.kind" => {
                self.scaling.kind = match v {
                    "semilinear" => ScalingKind::Semilinear,
                    "quasilinear" => ScalingKind::Quasilinear,
                    _ => {
                        return Err(CliError::Value {
                            key: key.into(),
                            message: format!("unknown scaling kind `{v}`"),
                        })
                    }
                }
            }
            "lab.dim" => self.lab.dim = num(key, v)?,
            "lab.varpi" => self.lab.varpi = num(key, v)?,
            _ => {
                return Err(CliError::UnknownKey {
                    key: key.into(),
                    line,
                })
            }
        }
        Ok(())
    }

    /// Applies `PLAB_*` overrides from `vars`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
        let vars: Vec<(String, String)> = vars.into_iter().collect();
        for key in KEYS {
            let name = env_name(key);
            if let Some((_, v)) = vars.iter().find(|(k, _)| *k == name) {
                self.set(key, v, None)?;
            }
        }
        for (k, _) in &vars {
            if k.starts_with(ENV_PREFIX) && !KEYS.iter().any(|key| env_name(key) == *k) {
                return Err(CliError::UnknownKey {
                    key: k.clone(),
                    line: None,
                });
            }
        }
        Ok(())
    }

    /// Defaults of the heat examples: `kappa = 6`, `u0 = sin(pi x)` (semilinear) or
    /// `kappa = 4`, `p = 5/2`, `a(s) = 1 + s^2`, `u0 = 1 + A cos(pi x)` (quasilinear).
    pub fn heat_defaults(quasilinear: bool) -> Self {
        let mut cfg = RunConfig::default();
        cfg.initial.profile = "sine".into();
        cfg.initial.amplitude = 1.0;
        if quasilinear {
            cfg.model = ModelKind::QuasilinearHeat;
            cfg.heat.kappa = 4.0;
            cfg.heat.p = 2.5;
            cfg.heat.diffusivity = vec![1.0, 0.0, 1.0];
            cfg.initial.profile = "cosine".into();
            cfg.initial.amplitude = 0.1;
        } else {
            cfg.model = ModelKind::SemilinearHeat;
        }
        cfg
    }

    pub fn half_length(&self) -> f64 {
        match (self.geometry.lx, self.geometry.periodic) {
            (Some(l), _) => l,
            (None, true) => PI,
            (None, false) => 8.0 * PI,
        }
    }

    pub fn strip_geometry(&self) -> StripGeometry {
        let g = &self.geometry;
        if g.periodic {
            StripGeometry {
                half_length: self.half_length(),
                ..StripGeometry::periodic(g.nx, g.ny)
            }
        } else {
            StripGeometry::truncated(self.half_length(), g.nx, g.ny)
        }
    }

    pub fn coefficients(&self) -> Result<CloudCoefficients, CliError> {
        let c = &self.cloud;
        for (key, v) in [("cloud.nu", c.nu), ("cloud.eta", c.eta), ("cloud.beta", c.beta)] {
            if !v.is_finite() {
                return Err(CliError::Constraint(format!("{key} = {v} must be finite")));
            }
        }
        if c.nu <= 0.0 {
            return Err(CliError::Constraint(format!("cloud.nu = {} must be positive (nu > 0)", c.nu)));
        }
        Ok(CloudCoefficients::new(c.nu, c.eta, c.beta)?)
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig {
            integrator: s.integrator,
            time_step: if s.adaptive {
                TimeStep::Adaptive {
                    dt_max: s.dt_max,
                    max_relative_change: s.max_relative_change,
                }
            } else {
                TimeStep::Fixed(s.dt)
            },
            t_end: s.t_end,
            extra_orders: vec![],
            mu: None,
            blowup_threshold: s.blowup_threshold,
            source_threshold: None,
            record_every: s.record_every,
            snapshot_every: s.snapshot_every,
            picard: PicardConfig {
                mesh_points: s.picard_mesh,
                grading: None,
                tol: s.picard_tol,
                max_iter: s.picard_max_iter,
            },
        }
    }

    /// Re-validates the model-level constraints of the selected model.
    pub fn validate(&self) -> Result<(), CliError> {
        self.solver_config().validate()?;
        match self.model {
            ModelKind::Cloud => {
                self.coefficients()?;
                self.strip_geometry().validate()?;
            }
            ModelKind::SemilinearHeat => {
                self.heat_dimension()?;
                semilinear_recipe(self.heat.n, self.heat.p, self.heat.kappa)?;
            }
            ModelKind::QuasilinearHeat => {
                self.heat_dimension()?;
                quasilinear_recipe(self.heat.n, self.heat.p, self.heat.kappa, self.heat.tau)?;
                self.diffusivity()?;
            }
        }
        Ok(())
    }

    fn heat_dimension(&self) -> Result<(), CliError> {
        if self.heat.n != 1 {
            return Err(CliError::Constraint(format!(
                "heat.n = {}: only the one-dimensional heat models are discretised",
                self.heat.n
            )));
        }
        if self.heat.modes < 4 {
            return Err(CliError::Constraint("heat.modes must be at least 4".into()));
        }
        Ok(())
    }

    fn diffusivity(&self) -> Result<Diffusivity, CliError> {
        let d = Diffusivity {
            coeffs: self.heat.diffusivity.clone(),
            floor: self.heat.floor,
        };
        if d.coeffs.is_empty() || d.eval(0.0) <= d.floor {
            return Err(CliError::Constraint(format!(
                "heat.diffusivity: a(0) must exceed heat.floor = {}",
                d.floor
            )));
        }
        Ok(d)
    }
}

fn env_name(key: &str) -> String {
    format!("{ENV_PREFIX}{}", key.to_uppercase().replace('.', "_"))
}

/// Parses configuration text on top of the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    parse_config_onto(RunConfig::default(), text)
}

/// Parses configuration text on top of `cfg`.
pub fn parse_config_onto(mut cfg: RunConfig, text: &str) -> Result<RunConfig, CliError> {
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or_else(|| CliError::Parse {
                line,
                message: "unterminated section header".into(),
            })?;
            section = name.trim().to_string();
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| CliError::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let k = k.trim();
        if k.is_empty() {
            return Err(CliError::Parse {
                line,
                message: "empty key".into(),
            });
        }
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        cfg.set(&key, v, Some(line))?;
    }
    Ok(cfg)
}

/// Reads `path` (if any) on top of `base`, then applies the environment and the
/// `key=value` overrides.
pub fn load_config(
    base: RunConfig,
    path: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<RunConfig, CliError> {
    let mut cfg = match path {
        Some(p) => parse_config_onto(base, &std::fs::read_to_string(p)?)?,
        None => base,
    };
    cfg.apply_env(std::env::vars().filter(|(k, _)| k.starts_with(ENV_PREFIX)))?;
    for (k, v) in overrides {
        cfg.set(k, v, None)?;
    }
    Ok(cfg)
}

/// `{:.16e}`: 17 significant digits.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn order_label(s: f64) -> String {
    if s == 0.0 {
        "norm_L2".into()
    } else {
        format!("norm_H{s}")
    }
}

/// `t, norm_L2, norm_H1, norm_H{s}..., weighted, f_norm`.
pub fn series_csv(traj: &WeightedTrajectory) -> String {
    let mut idx: Vec<usize> = (0..traj.orders.len()).collect();
    idx.sort_by(|a, b| {
        let key = |i: usize| match traj.orders[i] {
            s if s == 0.0 => (0, 0.0),
            s if s == 1.0 => (1, 0.0),
            s => (2, s),
        };
        key(*a).partial_cmp(&key(*b)).expect("finite orders")
    });
    let mut out = String::from("t");
    for &i in &idx {
        out.push(',');
        out.push_str(&order_label(traj.orders[i]));
    }
    out.push_str(",weighted,f_norm\n");
    for r in &traj.records {
        out.push_str(&fmt_f64(r.t));
        for &i in &idx {
            out.push(',');
            out.push_str(&fmt_f64(r.norms[i]));
        }
        let _ = writeln!(out, ",{},{}", fmt_f64(r.weighted), fmt_f64(r.source_norm));
    }
    out
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serialisable");
    text.push('\n');
    write_atomic(path, text.as_bytes())?;
    Ok(())
}

fn summary(cfg: &RunConfig, command: &str, body: serde_json::Value) -> serde_json::Value {
    json!({
        "version": VERSION,
        "command": command,
        "config": cfg,
        "result": body,
    })
}

/// Smooth random cloud field: a few low modes with decaying random amplitudes.
fn random_cloud_field(space: &std::sync::Arc<StripSpace>, seed: u64) -> SpectralField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terms: Vec<(f64, f64, f64, f64)> = (0..12)
        .map(|_| {
            let n = rng.random_range(0..4) as f64;
            let k = rng.random_range(1..5) as f64;
            let amp = rng.random_range(-1.0..1.0) / (1.0 + n * n + k * k);
            let phase = rng.random_range(0.0..2.0 * PI);
            (n, k, amp, phase)
        })
        .collect();
    let scale = PI / space.geometry.half_length;
    SpectralField::from_fn(space, |x, y| {
        terms
            .iter()
            .map(|(n, k, a, p)| a * (n * scale * x + p).cos() * (k * PI * y).sin())
            .sum()
    })
}

fn cloud_initial(cfg: &RunConfig, model: &CloudModel) -> Result<Vec<C64>, CliError> {
    let space = model.space();
    let a = cfg.initial.amplitude;
    let scale = PI / space.geometry.half_length;
    let field = match cfg.initial.profile.as_str() {
        "zero" => SpectralField::zeros(space),
        "bump" | "sine" => SpectralField::from_fn(space, |x, y| {
            a * (PI * y).sin() * (1.0 + 0.5 * (scale * x).cos()) + 0.3 * a * (scale * x).sin() * (2.0 * PI * y).sin()
        }),
        "random" => &random_cloud_field(space, cfg.seed) * a,
        "gaussian" => SpectralField::from_fn(space, |x, y| a * (-x * x).exp() * (PI * y).sin()),
        other => {
            return Err(CliError::Constraint(format!(
                "initial.profile = {other} is not available for the cloud model"
            )))
        }
    };
    let mut state = model.from_field(&field);
    if let Some(target) = cfg.initial.h1_norm {
        let n = model.norms(&state, &[1.0])[0];
        if n > 0.0 {
            state.iter_mut().for_each(|v| *v *= target / n);
        }
    }
    Ok(state)
}

fn heat_profile(cfg: &RunConfig) -> Result<Box<dyn Fn(f64) -> f64>, CliError> {
    let a = cfg.initial.amplitude;
    let l = cfg.heat.length;
    Ok(match cfg.initial.profile.as_str() {
        "zero" => Box::new(|_| 0.0),
        "sine" | "bump" => Box::new(move |x| a * (PI * x / l).sin()),
        "cosine" => Box::new(move |x| 1.0 + a * (PI * x / l).cos()),
        "gaussian" => Box::new(move |x| a * (-x * x).exp()),
        other => {
            return Err(CliError::Constraint(format!(
                "initial.profile = {other} is not available for the heat models"
            )))
        }
    })
}

fn cloud_model(cfg: &RunConfig) -> Result<CloudModel, CliError> {
    let c = cfg.coefficients()?;
    let space = StripSpace::new(cfg.strip_geometry())?;
    let mut model = CloudModel::new(space, c)?;
    model.nonlinear = cfg.solver.nonlinear;
    Ok(model)
}

fn evolve<M: EvolutionModel>(model: &M, u0: &[C64], cfg: &RunConfig) -> Result<WeightedTrajectory, CliError> {
    let sc = cfg.solver_config();
    Ok(if sc.integrator == Integrator::Picard {
        picard_solve(model, u0, sc.t_end, &sc)?
    } else {
        run_simulation(model, u0, &sc)?
    })
}

fn trajectory_json(traj: &WeightedTrajectory) -> serde_json::Value {
    json!({
        "orders": traj.orders,
        "mu": traj.mu,
        "steps": traj.steps,
        "final_time": traj.final_time,
        "blowup": traj.blowup,
        "weighted_sup": traj.weighted_sup(),
        "picard": traj.picard,
    })
}

fn write_run(cfg: &RunConfig, command: &str, traj: &WeightedTrajectory, extra: serde_json::Value) -> Result<serde_json::Value, CliError> {
    let dir = &cfg.output;
    write_atomic(&dir.join("series.csv"), series_csv(traj).as_bytes())?;
    let mut body = trajectory_json(traj);
    if let (Some(obj), serde_json::Value::Object(more)) = (body.as_object_mut(), extra) {
        obj.extend(more);
    }
    let s = summary(cfg, command, body);
    write_json(&dir.join("summary.json"), &s)?;
    Ok(s)
}

/// `simulate`: evolves the configured model and writes the series and summary.
pub fn simulate(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    cfg.validate()?;
    match cfg.model {
        ModelKind::Cloud => {
            let model = cloud_model(cfg)?;
            let u0 = cloud_initial(cfg, &model)?;
            let traj = evolve(&model, &u0, cfg)?;
            for (k, (t, s)) in traj.snapshots.iter().enumerate() {
                let path = cfg.output.join("snapshots").join(format!("snap_{k:06}.bin"));
                model.to_field(s).save_snapshot(&path)?;
                let _ = t;
            }
            write_run(cfg, "simulate", &traj, json!({}))
        }
        ModelKind::SemilinearHeat => {
            let mut model = SemilinearHeatModel::dirichlet(cfg.heat.modes, cfg.heat.length, cfg.heat.kappa, cfg.heat.p)?;
            model.nonlinear = cfg.solver.nonlinear;
            let u0 = model.state_from_fn(heat_profile(cfg)?);
            let traj = evolve(&model, &u0, cfg)?;
            write_run(cfg, "simulate", &traj, json!({ "recipe": model.recipe }))
        }
        ModelKind::QuasilinearHeat => {
            let h = &cfg.heat;
            let mut model =
                QuasilinearHeatModel::neumann(h.modes, h.length, h.kappa, h.p, h.tau, cfg.diffusivity()?)?;
            model.nonlinear = cfg.solver.nonlinear;
            let u0 = model.state_from_fn(heat_profile(cfg)?);
            let traj = evolve(&model, &u0, cfg)?;
            let mass = (model.mass(&u0), model.mass(&traj.final_state));
            write_run(
                cfg,
                "simulate",
                &traj,
                json!({ "recipe": model.recipe, "mass_initial": mass.0, "mass_final": mass.1 }),
            )
        }
    }
}

/// `spectral-bound`: per-mode spectral abscissae plus the analytic comparison.
pub fn spectral_bound(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let c = cfg.coefficients()?;
    let geometry = cfg.strip_geometry();
    geometry.validate()?;
    let space = StripSpace::new(geometry)?;
    let report = spectral_bound_numeric(&space, &c, None)?;
    let mut csv = String::from("n,re_lambda_max,im_lambda_at_max\n");
    for m in &report.modes {
        let _ = writeln!(csv, "{},{},{}", m.n, fmt_f64(m.re_lambda_max), fmt_f64(m.im_lambda_at_max));
    }
    write_atomic(&cfg.output.join("spectrum.csv"), csv.as_bytes())?;
    let analytic = analytic_bound_nonperiodic(&c);
    let body = json!({
        "numeric_bound": report.bound,
        "argmax_mode": report.argmax_mode,
        "n_max": report.n_max,
        "analytic_bound": analytic,
        "numeric_below_analytic": report.bound <= analytic + 1e-6,
        "periodic_condition": periodic_stability_condition(&c),
        "periodic": geometry.periodic_x,
    });
    let s = summary(cfg, "spectral-bound", body);
    write_json(&cfg.output.join("summary.json"), &s)?;
    Ok(s)
}

/// Minimum number of samples past the initial transient used for the decay fit.
const DECAY_FIT_START: f64 = 0.2;

/// `decay-test`: periodic cloud run, fitted decay rate and weighted bound.
pub fn decay_test(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    if cfg.model != ModelKind::Cloud {
        return Err(CliError::Constraint("decay-test runs the cloud model".into()));
    }
    let c = cfg.coefficients()?;
    if !cfg.geometry.periodic {
        return Err(CliError::Constraint("decay-test needs geometry.periodic = true".into()));
    }
    if !periodic_stability_condition(&c) {
        return Err(CliError::Constraint(format!(
            "eta + beta^2/(16 nu) < pi^2 nu fails: {} >= {}",
            c.eta + c.beta * c.beta / (16.0 * c.nu),
            PI * PI * c.nu
        )));
    }
    cfg.validate()?;
    let model = cloud_model(cfg)?;
    let u0 = cloud_initial(cfg, &model)?;
    let h1_0 = model.norms(&u0, &[1.0])[0];
    let traj = evolve(&model, &u0, cfg)?;
    let h1 = traj.orders.iter().position(|s| *s == 1.0).expect("H1 recorded");
    let t_end = cfg.solver.t_end;
    let fit = fit_decay_rate(&traj.times(), &traj.series(h1), DECAY_FIT_START * t_end, t_end)?;
    let bound = traj.exp_weighted_sup(fit.rate / 2.0);
    let passed = fit.rate > 0.0 && bound.is_finite() && bound < 10.0 * h1_0;
    let s = write_run(
        cfg,
        "decay-test",
        &traj,
        json!({
            "h1_initial": h1_0,
            "fit": fit,
            "weighted_bound": bound,
            "bound_limit": 10.0 * h1_0,
            "passed": passed,
        }),
    )?;
    if !passed {
        return Err(CliError::Numerical(format!(
            "decay check failed: rate {}, weighted bound {bound}",
            fit.rate
        )));
    }
    Ok(s)
}

/// `scaling-test`: round trip through the scaling map on the free-space box, with
/// and without the nonlinearity, plus the critical seminorm comparison.
pub fn scaling_test(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    cfg.solver_config().validate()?;
    let h = &cfg.heat;
    let kind = cfg.scaling.kind;
    let boxed = FourierBox::new(h.box_points, h.box_half_width);
    let a = cfg.initial.amplitude;
    let u0 = boxed.from_grid(&boxed.nodes().iter().map(|x| a * (-x * x).exp()).collect::<Vec<_>>());
    let sc = cfg.solver_config();
    let (mut rows, s_c) = (Vec::new(), match kind {
        ScalingKind::Semilinear => crate::exponents::semilinear_scaling_index(1, 2.0, h.kappa),
        ScalingKind::Quasilinear => crate::exponents::quasilinear_scaling_index(1, 2.0, h.kappa),
    });
    let basis = Basis::Fourier(boxed.clone());
    for &lambda in &cfg.scaling.lambdas {
        let (nonlinear, control) = match kind {
            ScalingKind::Semilinear => {
                let mut m = SemilinearHeatModel::free_space(boxed.clone(), h.kappa)?;
                let r1 = scaling_roundtrip_test(&m, &boxed, &u0, lambda, kind, h.kappa, &sc)?;
                m.nonlinear = false;
                let r0 = scaling_roundtrip_test(&m, &boxed, &u0, lambda, kind, h.kappa, &sc)?;
                (r1, r0)
            }
            ScalingKind::Quasilinear => {
                let d = Diffusivity::constant(h.diffusivity.first().copied().unwrap_or(1.0));
                let mut m = QuasilinearHeatModel::free_space(boxed.clone(), h.kappa, d)?;
                let r1 = scaling_roundtrip_test(&m, &boxed, &u0, lambda, kind, h.kappa, &sc)?;
                m.nonlinear = false;
                let r0 = scaling_roundtrip_test(&m, &boxed, &u0, lambda, kind, h.kappa, &sc)?;
                (r1, r0)
            }
        };
        let scaled = scaling_transform(&boxed, &u0, lambda, kind, h.kappa)?;
        let before = basis.homogeneous_seminorm(&u0, s_c);
        let after = basis.homogeneous_seminorm(&scaled, s_c);
        rows.push(json!({
            "lambda": lambda,
            "discrepancy": nonlinear.relative_discrepancy,
            "linear_control": control.relative_discrepancy,
            "critical_seminorm_ratio": after / before,
        }));
    }
    let body = json!({ "kind": kind, "kappa": h.kappa, "critical_index": s_c, "runs": rows });
    let s = summary(cfg, "scaling-test", body);
    write_json(&cfg.output.join("summary.json"), &s)?;
    Ok(s)
}

/// `lab contraction`: random matrix problem, constants, parameters and ratios.
pub fn lab_contraction(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    if cfg.lab.dim == 0 {
        return Err(CliError::Constraint("lab.dim must be positive".into()));
    }
    let problem = FixedPointProblem::random(cfg.lab.dim, cfg.seed)?;
    let (constants, params) = prepare_contraction(&problem)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9);
    let dir: Vec<f64> = (0..problem.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u0 = problem.normalized(&dir, problem.exponents.alpha, 0.9 * params.r);
    let report = run_fixed_point(&problem, &params, &u0, &FixedPointOptions { seed: cfg.seed, ..Default::default() })?;
    let max_ratio = report
        .iterate_ratios
        .iter()
        .chain(&report.pair_ratios)
        .copied()
        .fold(0.0, f64::max);
    let body = json!({
        "dim": problem.dim(),
        "exponents": problem.exponents,
        "lipschitz": problem.lipschitz,
        "constants": constants,
        "parameters": params,
        "fixed_point": report,
        "max_ratio": max_ratio,
        "contraction_holds": max_ratio <= 0.5,
        "inequalities_hold": params.all_hold(),
    });
    let s = summary(cfg, "lab contraction", body);
    write_json(&cfg.output.join("summary.json"), &s)?;
    if max_ratio > 0.5 || !report.converged {
        return Err(CliError::Numerical(format!("observed contraction ratio {max_ratio}")));
    }
    Ok(s)
}

/// `lab decay`: weighted decay quotient over a sweep of data sizes.
pub fn lab_decay(cfg: &RunConfig) -> Result<serde_json::Value, CliError> {
    let problem = FixedPointProblem::random(cfg.lab.dim.max(1), cfg.seed)?;
    let scales = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0];
    let report = verify_decay(&problem, cfg.lab.varpi, &scales)?;
    let body = json!({
        "dim": problem.dim(),
        "lambda_min": problem.scale.lambda_min(),
        "report": report,
    });
    let s = summary(cfg, "lab decay", body);
    write_json(&cfg.output.join("summary.json"), &s)?;
    Ok(s)
}

/// `exponents semilinear|quasilinear`.
pub fn exponents_json(kind: &str, n: usize, p: f64, kappa: f64, tau: f64) -> Result<serde_json::Value, CliError> {
    let recipe = match kind {
        "semilinear" => semilinear_recipe(n, p, kappa)?,
        "quasilinear" => quasilinear_recipe(n, p, kappa, tau)?,
        other => return Err(CliError::Constraint(format!("unknown recipe `{other}`"))),
    };
    let betas = recipe.exponents.beta_constants()?;
    Ok(json!({ "version": VERSION, "recipe": recipe, "beta_constants": betas }))
}

#[derive(Debug, Parser)]
#[command(name = "parabolic-lab", version, about = "Critical-space parabolic solver and fixed-point lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct Common {
    /// Configuration file (`key = value` lines).
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Extra `key=value` settings, applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evolve the configured model.
    Simulate(#[command(flatten)] Common),
    /// Spectral bound of the linearised cloud operator.
    SpectralBound {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        #[arg(long)]
        nx: Option<usize>,
        #[arg(long)]
        ny: Option<usize>,
        #[arg(long)]
        lx: Option<f64>,
        #[arg(long)]
        truncated: bool,
    },
    /// Scaling round trip on the free-space box.
    ScalingTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
    },
    /// Decay check for the periodic cloud model.
    DecayTest(#[command(flatten)] Common),
    /// Matrix-scale fixed-point lab.
    Lab {
        #[command(subcommand)]
        command: LabCommand,
    },
    /// Critical exponents of the heat-equation recipes, as JSON.
    Exponents {
        #[arg(value_parser = ["semilinear", "quasilinear"])]
        kind: String,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        kappa: f64,
        #[arg(long, default_value_t = 0.27)]
        tau: f64,
    },
    /// Heat-equation examples.
    Heat {
        #[command(subcommand)]
        command: HeatCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum LabCommand {
    Contraction {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    Decay {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        varpi: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum HeatCommand {
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        quasilinear: bool,
    },
    ScalingTest {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long)]
        quasilinear: bool,
    },
}

fn split_sets(sets: &[String]) -> Result<Vec<(String, String)>, CliError> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .ok_or_else(|| CliError::Parse {
                    line: 0,
                    message: format!("--set expects KEY=VALUE, got `{s}`"),
                })
        })
        .collect()
}

fn config_with(common: &Common, extra: Vec<(String, String)>) -> Result<RunConfig, CliError> {
    config_onto(RunConfig::default(), common, extra)
}

fn config_onto(base: RunConfig, common: &Common, mut extra: Vec<(String, String)>) -> Result<RunConfig, CliError> {
    let mut sets = split_sets(&common.set)?;
    if let Some(out) = &common.out {
        sets.push(("output.dir".into(), out.display().to_string()));
    }
    // explicit flags win over --set
    sets.append(&mut extra);
    load_config(base, common.config.as_deref(), &sets)
}

fn push<T: ToString>(v: &mut Vec<(String, String)>, key: &str, value: Option<T>) {
    if let Some(x) = value {
        v.push((key.into(), x.to_string()));
    }
}

fn lambda_list(v: &[f64]) -> Option<String> {
    (!v.is_empty()).then(|| v.iter().map(f64::to_string).collect::<Vec<_>>().join(","))
}

/// Runs a parsed command and returns the JSON printed on stdout.
pub fn dispatch(cli: Cli) -> Result<serde_json::Value, CliError> {
    match cli.command {
        Command::Simulate(common) => simulate(&config_with(&common, vec![])?),
        Command::SpectralBound {
            common,
            nu,
            eta,
            beta,
            nx,
            ny,
            lx,
            truncated,
        } => {
            let mut e = vec![];
            push(&mut e, "cloud.nu", nu);
            push(&mut e, "cloud.eta", eta);
            push(&mut e, "cloud.beta", beta);
            push(&mut e, "geometry.nx", nx);
            push(&mut e, "geometry.ny", ny);
            push(&mut e, "geometry.lx", lx);
            if truncated {
                e.push(("geometry.periodic".into(), "false".into()));
            }
            spectral_bound(&config_with(&common, e)?)
        }
        Command::ScalingTest { common, lambda } => {
            let mut e = vec![];
            push(&mut e, "scaling.lambda", lambda_list(&lambda));
            scaling_test(&config_with(&common, e)?)
        }
        Command::DecayTest(common) => decay_test(&config_with(&common, vec![])?),
        Command::Lab { command } => match command {
            LabCommand::Contraction { common, dim, seed } => {
                let mut e = vec![];
                push(&mut e, "lab.dim", dim);
                push(&mut e, "seed", seed);
                lab_contraction(&config_with(&common, e)?)
            }
            LabCommand::Decay {
                common,
                varpi,
                dim,
                seed,
            } => {
                let mut e = vec![];
                push(&mut e, "lab.varpi", varpi);
                push(&mut e, "lab.dim", dim);
                push(&mut e, "seed", seed);
                lab_decay(&config_with(&common, e)?)
            }
        },
        Command::Exponents {
            kind,
            n,
            p,
            kappa,
            tau,
        } => exponents_json(&kind, n, p, kappa, tau),
        Command::Heat { command } => match command {
            HeatCommand::Simulate { common, quasilinear } => {
                simulate(&config_onto(RunConfig::heat_defaults(quasilinear), &common, vec![])?)
            }
            HeatCommand::ScalingTest {
                common,
                lambda,
                quasilinear,
            } => {
                let mut e = vec![];
                push(&mut e, "scaling.lambda", lambda_list(&lambda));
                if quasilinear {
                    e.push(("scaling.kind".into(), "quasilinear".into()));
                }
                scaling_test(&config_with(&common, e)?)
            }
        },
    }
}

/// Parses `args`, runs, prints the JSON result and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(v) => {
            use std::io::Write;
            // a closed pipe on stdout is not an error of the run
            let _ = writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&v).expect("serialisable"));
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_cloud_defaults() {
        let c = parse_config("model = cloud\n").unwrap();
        assert_eq!((c.cloud.nu, c.cloud.eta, c.cloud.beta), (1.0, 0.0, 1.0));
        assert_eq!((c.geometry.nx, c.geometry.ny), (64, 48));
        c.validate().unwrap();
    }

    #[test]
    fn sections_prefix_keys() {
        let c = parse_config("[cloud]\nnu = 2.5 # comment\n[geometry]\nnx = 32\n").unwrap();
        assert_eq!(c.cloud.nu, 2.5);
        assert_eq!(c.geometry.nx, 32);
    }

    #[test]
    fn errors_name_line_and_key() {
        let e = parse_config("cloud.nu = 1\ncloud.mu = 3\n").unwrap_err();
        assert!(e.to_string().contains("cloud.mu") && e.to_string().contains("line 2"), "{e}");
        let e = parse_config("cloud.nu 1\n").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        let e = parse_config("cloud.nu = abc\n").unwrap_err();
        assert!(e.to_string().contains("cloud.nu"), "{e}");
    }

    #[test]
    fn constraint_rejections() {
        let c = parse_config("cloud.nu = 0\n").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("nu"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let c = parse_config("model = semilinear-heat\nheat.kappa = 3\nheat.n = 1\n").unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().contains("kappa > 1 + 2/n"), "{e}");
    }

    #[test]
    fn environment_overrides_and_rejects_unknown() {
        let mut c = RunConfig::default();
        c.apply_env(vec![("PLAB_CLOUD_ETA".to_string(), "0.5".to_string())]).unwrap();
        assert_eq!(c.cloud.eta, 0.5);
        assert!(c.apply_env(vec![("PLAB_CLOUD_ZETA".to_string(), "1".to_string())]).is_err());
    }

    #[test]
    fn exponents_command_reports_critical_index() {
        let v = exponents_json("semilinear", 1, 2.0, 6.0, 0.0).unwrap();
        assert!((v["recipe"]["s_c"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    }

    #[test]
    fn keys_table_matches_setter() {
        let mut c = RunConfig::default();
        for k in KEYS {
            let r = c.set(k, "1", None);
            assert!(!matches!(r, Err(CliError::UnknownKey { .. })), "{k}");
        }
    }
}
