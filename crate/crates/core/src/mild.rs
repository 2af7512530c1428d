//! Mild solutions `u(t) = e^{tA} u0 + int_0^t e^{(t-s)A} f(u(s)) ds` and their
//! quasilinear analogue with a state-dependent generator.
//!
//! Three time integrators are provided: exponential Euler, the second-order
//! exponential Runge–Kutta scheme (ETDRK2), and Picard iteration of the mild map
//! on a graded time mesh. Every run records the weighted norms
//! `(|u|_{E_alpha}, t^mu |u|_{E_xi})` that the critical framework controls.

use crate::exponents::ExponentSet;
use crate::generator::{BlockGenerator, PreparedStep};
use crate::linalg::{phi, LinalgError, C64};
use serde::Serialize;
use std::borrow::Cow;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("diffusivity {value} at or below its floor {floor}")]
    Diffusivity { value: f64, floor: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{0}")]
    Invalid(String),
}

/// A spectrally discretised evolution `u' = A(u) u + f(u)`.
///
/// States are coefficient vectors; `norms` returns Sobolev-type norms of the
/// requested orders, and [`space_order`](Self::space_order) maps an interpolation
/// exponent `theta` to the Sobolev order of `E_theta`.
pub trait EvolutionModel: Sync {
    fn dim(&self) -> usize;
    fn exponents(&self) -> ExponentSet;
    fn space_order(&self, theta: f64) -> f64 {
        2.0 * theta
    }
    /// Generator at the zero state (the fixed generator for semilinear models).
    fn generator(&self) -> &BlockGenerator;
    fn is_quasilinear(&self) -> bool {
        false
    }
    /// Generator frozen at `state`.
    fn frozen_generator(&self, _state: &[C64]) -> Result<Cow<'_, BlockGenerator>, ModelError> {
        Ok(Cow::Borrowed(self.generator()))
    }
    fn nonlinearity(&self, state: &[C64]) -> Vec<C64>;
    fn norms(&self, state: &[C64], orders: &[f64]) -> Vec<f64>;
    /// Norm used for the source term `f(u)` in diagnostics and blow-up checks.
    fn source_norm(&self, source: &[C64]) -> f64 {
        self.norms(source, &[0.0])[0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    Etdrk2,
    ExponentialEuler,
    Picard,
}

impl std::str::FromStr for Integrator {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "etdrk2" => Ok(Integrator::Etdrk2),
            "exponential_euler" | "euler" => Ok(Integrator::ExponentialEuler),
            "picard" => Ok(Integrator::Picard),
            other => Err(format!("unknown integrator `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStep {
    Fixed(f64),
    /// `dt <= max_relative_change |u| / |f(u)|`, capped by `dt_max`.
    Adaptive { dt_max: f64, max_relative_change: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardConfig {
    pub mesh_points: usize,
    /// Mesh `t_k = T (k/K)^r`; defaults to `r = 2 / (1 - mu q)`.
    pub grading: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig {
            mesh_points: 200,
            grading: None,
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverConfig {
    pub integrator: Integrator,
    pub time_step: TimeStep,
    pub t_end: f64,
    /// Extra Sobolev orders to record besides those of `E_alpha` and `E_xi`.
    pub extra_orders: Vec<f64>,
    /// Time weight; defaults to the model's `mu`.
    pub mu: Option<f64>,
    /// Defaults to `1e6` times the initial `E_alpha` norm.
    pub blowup_threshold: Option<f64>,
    /// Defaults to `1e6` times the larger of the initial source and `E_alpha` norms.
    pub source_threshold: Option<f64>,
    pub record_every: usize,
    pub snapshot_every: Option<usize>,
    pub picard: PicardConfig,
}

impl SolverConfig {
    pub fn fixed(integrator: Integrator, dt: f64, t_end: f64) -> Self {
        SolverConfig {
            integrator,
            time_step: TimeStep::Fixed(dt),
            t_end,
            extra_orders: vec![],
            mu: None,
            blowup_threshold: None,
            source_threshold: None,
            record_every: 1,
            snapshot_every: None,
            picard: PicardConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidConfig(m));
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end = {} must be positive", self.t_end));
        }
        match self.time_step {
            TimeStep::Fixed(dt) if !(dt > 0.0 && dt.is_finite()) => {
                return bad(format!("dt = {dt} must be positive"))
            }
            TimeStep::Adaptive {
                dt_max,
                max_relative_change,
            } if !(dt_max > 0.0 && max_relative_change > 0.0) => {
                return bad("adaptive step parameters must be positive".into())
            }
            _ => {}
        }
        if self.record_every == 0 {
            return bad("record_every must be at least 1".into());
        }
        if self.integrator == Integrator::Picard {
            if self.picard.mesh_points < 2 {
                return bad("picard mesh needs at least two intervals".into());
            }
            if let Some(r) = self.picard.grading {
                if r < 1.0 {
                    return bad(format!("mesh grading {r} must be at least 1"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("non-finite value at t = {time}")]
    NonFinite {
        time: f64,
        trajectory: Box<WeightedTrajectory>,
    },
    #[error("Picard iteration did not converge after {iterations} sweeps (last distance {last_distance:e})")]
    PicardDiverged {
        iterations: usize,
        last_distance: f64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    /// Norms in the order of [`WeightedTrajectory::orders`].
    pub norms: Vec<f64>,
    /// `t^mu |u|_{E_xi}`.
    pub weighted: f64,
    pub source_norm: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupEvent {
    pub time: f64,
    pub quantity: String,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    pub converged: bool,
    pub mesh: Vec<f64>,
}

/// Time series of weighted norms from one run.
#[derive(Debug, Clone, Serialize)]
pub struct WeightedTrajectory {
    /// Sobolev orders; entry 0 is `E_alpha`, entry 1 is `E_xi`, then `L2`, `H^1` and
    /// any extra orders (without repeats).
    pub orders: Vec<f64>,
    pub mu: f64,
    pub records: Vec<TrajectoryRecord>,
    pub blowup: Option<BlowupEvent>,
    pub steps: usize,
    #[serde(skip)]
    pub final_state: Vec<C64>,
    pub final_time: f64,
    #[serde(skip)]
    pub snapshots: Vec<(f64, Vec<C64>)>,
    pub picard: Option<PicardReport>,
}

impl WeightedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn series(&self, index: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.norms[index]).collect()
    }

    /// `sup_t (|u|_{E_alpha} + t^mu |u|_{E_xi})`.
    pub fn weighted_sup(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.norms[0] + r.weighted)
            .fold(0.0, f64::max)
    }

    /// `sup_t e^{rate t} (|u|_{E_alpha} + t^mu |u|_{E_xi})`.
    pub fn exp_weighted_sup(&self, rate: f64) -> f64 {
        self.records
            .iter()
            .map(|r| (rate * r.t).exp() * (r.norms[0] + r.weighted))
            .fold(0.0, f64::max)
    }
}

/// Monitors norms, thresholds and finiteness during a run.
struct Monitor<'a, M: EvolutionModel + ?Sized> {
    model: &'a M,
    orders: Vec<f64>,
    mu: f64,
    norm_threshold: f64,
    source_threshold: f64,
    record_every: usize,
    snapshot_every: Option<usize>,
    traj: WeightedTrajectory,
}

enum Verdict {
    Continue,
    Blowup,
}

impl<'a, M: EvolutionModel + ?Sized> Monitor<'a, M> {
    fn new(
        model: &'a M,
        u0: &[C64],
        f0: &[C64],
        config: &SolverConfig,
    ) -> Result<Self, SolverError> {
        let e = model.exponents();
        let mut orders = vec![model.space_order(e.alpha), model.space_order(e.xi)];
        for s in [0.0, 1.0].iter().chain(&config.extra_orders) {
            if !orders.contains(s) {
                orders.push(*s);
            }
        }
        let mu = config.mu.unwrap_or(e.mu);
        let norms0 = model.norms(u0, &orders);
        let source0 = model.source_norm(f0);
        if norms0.iter().chain([&source0]).any(|v| !v.is_finite()) {
            return Err(SolverError::InvalidConfig("initial data is not finite".into()));
        }
        let norm_threshold = match config.blowup_threshold {
            Some(t) => t,
            None if norms0[0] > 0.0 => 1e6 * norms0[0],
            None => f64::INFINITY,
        };
        let source_threshold = match config.source_threshold {
            Some(t) => t,
            None if norms0[0].max(source0) > 0.0 => 1e6 * norms0[0].max(source0),
            None => f64::INFINITY,
        };
        if let Some(v) = norms0.iter().find(|&&v| v >= norm_threshold) {
            return Err(SolverError::InvalidConfig(format!(
                "blow-up threshold {norm_threshold} does not exceed initial norm {v}"
            )));
        }
        let mut monitor = Monitor {
            model,
            orders,
            mu,
            norm_threshold,
            source_threshold,
            record_every: config.record_every,
            snapshot_every: config.snapshot_every,
            traj: WeightedTrajectory {
                orders: vec![],
                mu,
                records: vec![],
                blowup: None,
                steps: 0,
                final_state: u0.to_vec(),
                final_time: 0.0,
                snapshots: vec![],
                picard: None,
            },
        };
        monitor.traj.orders = monitor.orders.clone();
        monitor.push(0.0, norms0, source0, 0.0);
        if monitor.snapshot_every.is_some() {
            monitor.traj.snapshots.push((0.0, u0.to_vec()));
        }
        Ok(monitor)
    }

    fn push(&mut self, t: f64, norms: Vec<f64>, source: f64, dt: f64) {
        let weighted = if t > 0.0 { t.powf(self.mu) * norms[1] } else { 0.0 };
        self.traj.records.push(TrajectoryRecord {
            t,
            norms,
            weighted,
            source_norm: source,
            dt,
        });
    }

    /// Inspects the state after `step` steps; `f` is `f(u)` at that state.
    fn observe(
        &mut self,
        step: usize,
        t: f64,
        dt: f64,
        u: &[C64],
        f: &[C64],
        last: bool,
    ) -> Result<Verdict, SolverError> {
        let norms = self.model.norms(u, &self.orders);
        let source = self.model.source_norm(f);
        if norms.iter().chain([&source]).any(|v| !v.is_finite()) {
            let mut traj = self.traj.clone();
            traj.steps = step - 1;
            return Err(SolverError::NonFinite {
                time: t,
                trajectory: Box::new(traj),
            });
        }
        let exceeded = norms
            .iter()
            .zip(&self.orders)
            .find(|(v, _)| **v > self.norm_threshold)
            .map(|(v, s)| (format!("H^{s} norm"), *v, self.norm_threshold))
            .or_else(|| {
                (source > self.source_threshold).then(|| {
                    ("source norm".to_string(), source, self.source_threshold)
                })
            });
        self.traj.final_state = u.to_vec();
        self.traj.final_time = t;
        self.traj.steps = step;
        let blowup = exceeded.is_some();
        if step % self.record_every == 0 || last || blowup {
            self.push(t, norms, source, dt);
        }
        if let Some(every) = self.snapshot_every {
            if step % every == 0 || last || blowup {
                self.traj.snapshots.push((t, u.to_vec()));
            }
        }
        if let Some((quantity, value, threshold)) = exceeded {
            self.traj.blowup = Some(BlowupEvent {
                time: t,
                quantity,
                value,
                threshold,
            });
            return Ok(Verdict::Blowup);
        }
        Ok(Verdict::Continue)
    }
}

fn axpy(a: &[C64], s: f64, b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(a, b)| a + b * s).collect()
}

fn sub(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(a, b)| a - b).collect()
}

/// Source of `phi_k(h A)` applications for one step.
enum Propagator<'a> {
    Prepared(&'a PreparedStep),
    Direct(&'a BlockGenerator, f64),
}

impl Propagator<'_> {
    fn phi(&self, k: usize, x: &[C64]) -> Vec<C64> {
        match self {
            Propagator::Prepared(p) => p.apply(k, x),
            Propagator::Direct(g, h) => g.apply_phi(k, *h, x),
        }
    }

    fn h(&self) -> f64 {
        match self {
            Propagator::Prepared(p) => p.h,
            Propagator::Direct(_, h) => *h,
        }
    }
}

/// `u+ = e^{hA} u + h phi_1(hA) f(u)`.
fn euler_step(p: &Propagator, u: &[C64], fu: &[C64]) -> Vec<C64> {
    axpy(&p.phi(0, u), p.h(), &p.phi(1, fu))
}

/// Cox–Matthews ETDRK2.
fn etdrk2_step<M: EvolutionModel + ?Sized>(
    model: &M,
    p: &Propagator,
    u: &[C64],
    fu: &[C64],
) -> Vec<C64> {
    let a = euler_step(p, u, fu);
    let fa = model.nonlinearity(&a);
    axpy(&a, p.h(), &p.phi(2, &sub(&fa, fu)))
}

/// One exponential Euler step on a fixed generator.
pub fn step_exponential<M: EvolutionModel + ?Sized>(
    model: &M,
    u: &[C64],
    dt: f64,
    integrator: Integrator,
) -> Vec<C64> {
    let fu = model.nonlinearity(u);
    let p = Propagator::Direct(model.generator(), dt);
    match integrator {
        Integrator::Etdrk2 => etdrk2_step(model, &p, u, &fu),
        _ => euler_step(&p, u, &fu),
    }
}

/// One step of the frozen-coefficient scheme: `A` is frozen at `u` and a single
/// exponential Euler step is taken.
pub fn step_quasilinear_frozen<M: EvolutionModel + ?Sized>(
    model: &M,
    u: &[C64],
    dt: f64,
) -> Result<Vec<C64>, ModelError> {
    let fu = model.nonlinearity(u);
    let g = model.frozen_generator(u)?;
    Ok(euler_step(&Propagator::Direct(&g, dt), u, &fu))
}

/// Exponential midpoint variant: an Euler predictor, then ETDRK2 with the
/// generator frozen at the average of the current and predicted states.
fn step_quasilinear_midpoint<M: EvolutionModel + ?Sized>(
    model: &M,
    u: &[C64],
    fu: &[C64],
    dt: f64,
) -> Result<Vec<C64>, ModelError> {
    let g0 = model.frozen_generator(u)?;
    let pred = euler_step(&Propagator::Direct(&g0, dt), u, fu);
    let mid: Vec<C64> = u.iter().zip(&pred).map(|(a, b)| (a + b) * 0.5).collect();
    let gm = model.frozen_generator(&mid)?;
    let p = Propagator::Direct(&gm, dt);
    let a = euler_step(&p, u, fu);
    let fa = model.nonlinearity(&a);
    Ok(axpy(&a, dt, &p.phi(2, &sub(&fa, fu))))
}

/// Integrates from `u0` to `config.t_end` and records the weighted norms.
pub fn run_simulation<M: EvolutionModel + ?Sized>(
    model: &M,
    u0: &[C64],
    config: &SolverConfig,
) -> Result<WeightedTrajectory, SolverError> {
    config.validate()?;
    if u0.len() != model.dim() {
        return Err(SolverError::InvalidConfig(format!(
            "initial state has {} entries, model expects {}",
            u0.len(),
            model.dim()
        )));
    }
    if config.integrator == Integrator::Picard {
        return picard_solve(model, u0, config.t_end, config);
    }
    let mut fu = model.nonlinearity(u0);
    let mut monitor = Monitor::new(model, u0, &fu, config)?;
    let mut u = u0.to_vec();
    let mut t = 0.0;
    let mut step = 0usize;
    let mut cache: Vec<PreparedStep> = Vec::new();
    let t_end = config.t_end;
    while t < t_end * (1.0 - 1e-14) {
        let remaining = t_end - t;
        let dt = match config.time_step {
            TimeStep::Fixed(dt) => {
                if remaining < dt * (1.0 + 1e-9) {
                    remaining
                } else {
                    dt
                }
            }
            TimeStep::Adaptive {
                dt_max,
                max_relative_change,
            } => {
                let un = model.norms(&u, &[0.0])[0];
                let fnorm = model.source_norm(&fu);
                let cap = if fnorm > 0.0 {
                    max_relative_change * un / fnorm
                } else {
                    dt_max
                };
                dt_max.min(cap).min(remaining)
            }
        };
        let next = if model.is_quasilinear() {
            match config.integrator {
                Integrator::Etdrk2 => step_quasilinear_midpoint(model, &u, &fu, dt)?,
                _ => {
                    let g = model.frozen_generator(&u)?;
                    euler_step(&Propagator::Direct(&g, dt), &u, &fu)
                }
            }
        } else {
            let fixed = matches!(config.time_step, TimeStep::Fixed(_));
            let prepared = if fixed {
                match cache.iter().position(|p| p.h == dt) {
                    Some(i) => Some(&cache[i]),
                    None => {
                        if cache.len() >= 2 {
                            cache.remove(0);
                        }
                        cache.push(model.generator().prepare(dt));
                        cache.last()
                    }
                }
            } else {
                None
            };
            let p = match prepared {
                Some(p) => Propagator::Prepared(p),
                None => Propagator::Direct(model.generator(), dt),
            };
            match config.integrator {
                Integrator::Etdrk2 => etdrk2_step(model, &p, &u, &fu),
                _ => euler_step(&p, &u, &fu),
            }
        };
        step += 1;
        t = if dt == remaining { t_end } else { t + dt };
        u = next;
        fu = model.nonlinearity(&u);
        let last = t >= t_end * (1.0 - 1e-14);
        if let Verdict::Blowup = monitor.observe(step, t, dt, &u, &fu, last)? {
            break;
        }
    }
    Ok(monitor.traj)
}

/// `t_k = T (k/K)^r`, `k = 0..=K`.
pub fn graded_mesh(t_end: f64, intervals: usize, grading: f64) -> Vec<f64> {
    (0..=intervals)
        .map(|k| t_end * (k as f64 / intervals as f64).powf(grading))
        .collect()
}

/// Default grading `2 / (1 - mu q)`, which balances the `s^{-mu q}` singularity.
pub fn default_grading(e: &ExponentSet) -> f64 {
    let d = 1.0 - e.mu * e.q;
    if d > 0.0 {
        (2.0 / d).max(1.0)
    } else {
        1.0
    }
}

/// One application of the mild map on a mesh: returns
/// `F(v)(t_k) = U_v(t_k, 0) u0 + int_0^{t_k} U_v(t_k, s) f(v(s)) ds` with the
/// integrand interpolated linearly on each interval. Quasilinear models freeze the
/// generator at the interval midpoint.
pub fn picard_map<M: EvolutionModel + ?Sized>(
    model: &M,
    u0: &[C64],
    mesh: &[f64],
    v: &[Vec<C64>],
) -> Result<Vec<Vec<C64>>, ModelError> {
    assert_eq!(mesh.len(), v.len());
    let sources: Vec<Vec<C64>> = v.iter().map(|s| model.nonlinearity(s)).collect();
    let mut out = Vec::with_capacity(mesh.len());
    out.push(u0.to_vec());
    let g = model.generator();
    if !model.is_quasilinear() && g.diagonalizable() {
        let lambda = g.eigenvalues().expect("diagonalizable");
        let hats: Vec<Vec<C64>> = sources.iter().map(|f| g.to_eigen(f)).collect();
        let mut acc = g.to_eigen(u0);
        for k in 1..mesh.len() {
            let h = mesh[k] - mesh[k - 1];
            for (i, a) in acc.iter_mut().enumerate() {
                let z = lambda[i] * h;
                let p1 = phi(1, z);
                let p2 = phi(2, z);
                *a = phi(0, z) * *a + (hats[k - 1][i] * (p1 - p2) + hats[k][i] * p2) * h;
            }
            out.push(g.from_eigen(&acc));
        }
        return Ok(out);
    }
    let mut acc = u0.to_vec();
    for k in 1..mesh.len() {
        let h = mesh[k] - mesh[k - 1];
        let gk = if model.is_quasilinear() {
            let mid: Vec<C64> = v[k - 1].iter().zip(&v[k]).map(|(a, b)| (a + b) * 0.5).collect();
            model.frozen_generator(&mid)?
        } else {
            Cow::Borrowed(g)
        };
        let e = gk.apply_phi(0, h, &acc);
        let p1 = gk.apply_phi(1, h, &sources[k - 1]);
        let p2 = gk.apply_phi(2, h, &sub(&sources[k], &sources[k - 1]));
        acc = e
            .iter()
            .zip(&p1)
            .zip(&p2)
            .map(|((e, a), b)| e + (a + b) * h)
            .collect();
        out.push(acc.clone());
    }
    Ok(out)
}

/// `sup_k |a_k - b_k|_{order_0} + sup_k t_k^mu |a_k - b_k|_{order_1}`.
pub fn weighted_distance<M: EvolutionModel + ?Sized>(
    model: &M,
    mesh: &[f64],
    a: &[Vec<C64>],
    b: &[Vec<C64>],
    orders: [f64; 2],
    mu: f64,
) -> f64 {
    let mut sup0 = 0.0f64;
    let mut sup1 = 0.0f64;
    for ((t, x), y) in mesh.iter().zip(a).zip(b) {
        let d = sub(x, y);
        let n = model.norms(&d, &orders);
        sup0 = sup0.max(n[0]);
        if *t > 0.0 {
            sup1 = sup1.max(t.powf(mu) * n[1]);
        }
    }
    sup0 + sup1
}

/// Picard iteration of the mild map on the graded mesh up to `t_end`.
pub fn picard_solve<M: EvolutionModel + ?Sized>(
    model: &M,
    u0: &[C64],
    t_end: f64,
    config: &SolverConfig,
) -> Result<WeightedTrajectory, SolverError> {
    let e = model.exponents();
    let mu = config.mu.unwrap_or(e.mu);
    let grading = config.picard.grading.unwrap_or_else(|| default_grading(&e));
    let mesh = graded_mesh(t_end, config.picard.mesh_points, grading);
    let orders = [
        model.space_order(e.metric_exponent()),
        model.space_order(e.xi),
    ];
    // linear evolution as the starting iterate
    let mut iterate: Vec<Vec<C64>> = if model.is_quasilinear() {
        vec![u0.to_vec(); mesh.len()]
    } else {
        mesh.iter().map(|&t| model.generator().apply_phi(0, t, u0)).collect()
    };
    let mut distances = Vec::new();
    let mut converged = false;
    for _ in 0..config.picard.max_iter {
        let next = picard_map(model, u0, &mesh, &iterate)?;
        let d = weighted_distance(model, &mesh, &next, &iterate, orders, mu);
        iterate = next;
        if !d.is_finite() {
            return Err(SolverError::PicardDiverged {
                iterations: distances.len() + 1,
                last_distance: d,
            });
        }
        distances.push(d);
        if d <= config.picard.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(SolverError::PicardDiverged {
            iterations: distances.len(),
            last_distance: distances.last().copied().unwrap_or(f64::NAN),
        });
    }
    let ratios = distances
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .collect();
    let f0 = model.nonlinearity(u0);
    let mut monitor = Monitor::new(model, u0, &f0, config)?;
    for k in 1..mesh.len() {
        let f = model.nonlinearity(&iterate[k]);
        let last = k + 1 == mesh.len();
        if let Verdict::Blowup =
            monitor.observe(k, mesh[k], mesh[k] - mesh[k - 1], &iterate[k], &f, last)?
        {
            break;
        }
    }
    monitor.traj.picard = Some(PicardReport {
        iterations: distances.len(),
        distances,
        ratios,
        converged,
        mesh,
    });
    Ok(monitor.traj)
}

/// Least-squares fit `value ~ C e^{-rate t}` over `t in [t_min, t_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// `C`.
    pub prefactor: f64,
    pub points: usize,
}

impl DecayFit {
    /// `M` in `value <= M e^{-rate t} value_0`.
    pub fn m_fit(&self, initial: f64) -> f64 {
        self.prefactor / initial
    }
}

pub const MIN_FIT_SAMPLES: usize = 10;

pub fn fit_decay_rate(
    times: &[f64],
    values: &[f64],
    t_min: f64,
    t_max: f64,
) -> Result<DecayFit, SolverError> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t_min && **t <= t_max && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < MIN_FIT_SAMPLES {
        return Err(SolverError::InvalidConfig(format!(
            "decay fit needs at least {MIN_FIT_SAMPLES} positive samples in [{t_min}, {t_max}], got {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let stt: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum::<f64>() / stt;
    Ok(DecayFit {
        rate: -slope,
        prefactor: (ml - slope * mt).exp(),
        points: pts.len(),
    })
}

/// Least-squares slope of `log err` against `log dt`.
pub fn convergence_order(dts: &[f64], errors: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = dts
        .iter()
        .zip(errors)
        .map(|(d, e)| (d.ln(), e.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exponents::validate_exponents;
    use crate::linalg::cvec_norm;

    /// Scalar-per-mode toy model `u_k' = -k u_k + eps u_k^2` with plain weighted norms.
    struct Toy {
        gen: BlockGenerator,
        eps: f64,
    }

    impl Toy {
        fn new(n: usize, eps: f64) -> Self {
            Toy {
                gen: BlockGenerator::diagonal((1..=n).map(|k| C64::new(-(k as f64), 0.0)).collect()),
                eps,
            }
        }
    }

    impl EvolutionModel for Toy {
        fn dim(&self) -> usize {
            self.gen.dim()
        }
        fn exponents(&self) -> ExponentSet {
            validate_exponents(0.0, None, 0.5, 0.75, 2.0).unwrap()
        }
        fn generator(&self) -> &BlockGenerator {
            &self.gen
        }
        fn nonlinearity(&self, u: &[C64]) -> Vec<C64> {
            u.iter().map(|v| v * v * self.eps).collect()
        }
        fn norms(&self, u: &[C64], orders: &[f64]) -> Vec<f64> {
            orders
                .iter()
                .map(|s| {
                    u.iter()
                        .enumerate()
                        .map(|(k, v)| (1.0 + (k + 1) as f64).powf(*s) * v.norm_sqr())
                        .sum::<f64>()
                        .sqrt()
                })
                .collect()
        }
    }

    /// Exact solution of `y' = -k y + eps y^2`.
    fn bernoulli(k: f64, eps: f64, y0: f64, t: f64) -> f64 {
        let inv = ((1.0 / y0) - eps / k) * (k * t).exp() + eps / k;
        1.0 / inv
    }

    #[test]
    fn linear_problem_is_exact() {
        let m = Toy::new(4, 0.0);
        let u0: Vec<C64> = (0..4).map(|i| C64::new(1.0 + i as f64, 0.0)).collect();
        let traj = run_simulation(&m, &u0, &SolverConfig::fixed(Integrator::Etdrk2, 0.1, 1.0)).unwrap();
        for (k, v) in traj.final_state.iter().enumerate() {
            let exact = u0[k].re * (-((k + 1) as f64)).exp();
            assert!((v.re - exact).abs() < 1e-14);
        }
        assert_eq!(traj.steps, 10);
    }

    #[test]
    fn etdrk2_matches_bernoulli_solution() {
        let m = Toy::new(3, 0.7);
        let u0 = vec![C64::new(0.5, 0.0); 3];
        let traj = run_simulation(&m, &u0, &SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 1.0)).unwrap();
        for (k, v) in traj.final_state.iter().enumerate() {
            let exact = bernoulli((k + 1) as f64, 0.7, 0.5, 1.0);
            assert!((v.re - exact).abs() < 1e-6, "{} vs {}", v.re, exact);
        }
    }

    #[test]
    fn integrator_orders() {
        let m = Toy::new(3, 0.7);
        let u0 = vec![C64::new(0.5, 0.0); 3];
        for (integ, expected) in [(Integrator::Etdrk2, 2.0), (Integrator::ExponentialEuler, 1.0)] {
            let dts = [0.1, 0.05, 0.025, 0.0125];
            let errs: Vec<f64> = dts
                .iter()
                .map(|&dt| {
                    let tr = run_simulation(&m, &u0, &SolverConfig::fixed(integ, dt, 1.0)).unwrap();
                    let err: Vec<C64> = tr
                        .final_state
                        .iter()
                        .enumerate()
                        .map(|(k, v)| v - bernoulli((k + 1) as f64, 0.7, 0.5, 1.0))
                        .collect();
                    cvec_norm(&err)
                })
                .collect();
            let order = convergence_order(&dts, &errs);
            assert!((order - expected).abs() < 0.15, "{integ:?}: {order}");
        }
    }

    #[test]
    fn picard_matches_etdrk2() {
        let m = Toy::new(3, 0.7);
        let u0 = vec![C64::new(0.5, 0.0); 3];
        let mut cfg = SolverConfig::fixed(Integrator::Picard, 0.0, 0.5);
        cfg.time_step = TimeStep::Fixed(1.0);
        cfg.picard.mesh_points = 400;
        cfg.picard.grading = Some(1.0);
        let tr = run_simulation(&m, &u0, &cfg).unwrap();
        let report = tr.picard.as_ref().unwrap();
        assert!(report.converged);
        for (k, v) in tr.final_state.iter().enumerate() {
            let exact = bernoulli((k + 1) as f64, 0.7, 0.5, 0.5);
            assert!((v.re - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = Toy::new(3, 0.7);
        let u0 = vec![C64::new(0.0, 0.0); 3];
        let tr = run_simulation(&m, &u0, &SolverConfig::fixed(Integrator::Etdrk2, 0.1, 1.0)).unwrap();
        assert!(tr.final_state.iter().all(|v| v.norm() == 0.0));
        assert!(tr.blowup.is_none());
    }

    #[test]
    fn blowup_is_flagged() {
        // y' = -y + y^2 blows up from y0 = 2 at t = ln 2
        let m = Toy::new(1, 1.0);
        let u0 = vec![C64::new(2.0, 0.0)];
        let mut cfg = SolverConfig::fixed(Integrator::Etdrk2, 0.0, 2.0);
        cfg.time_step = TimeStep::Adaptive {
            dt_max: 1e-2,
            max_relative_change: 0.02,
        };
        let tr = run_simulation(&m, &u0, &cfg).unwrap();
        let ev = tr.blowup.expect("blow-up flag");
        assert!((ev.time - 2f64.ln()).abs() < 1e-2, "{}", ev.time);
    }

    #[test]
    fn decay_fit_recovers_rate() {
        let t: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|t| 3.0 * (-1.7 * t).exp()).collect();
        let fit = fit_decay_rate(&t, &v, 1.0, 4.0).unwrap();
        assert!((fit.rate - 1.7).abs() < 1e-12);
        assert!((fit.m_fit(3.0) - 1.0).abs() < 1e-12);
        assert!(fit_decay_rate(&t[..5], &v[..5], 0.0, 1.0).is_err());
    }

    #[test]
    fn scalar_quadratic_reference_value() {
        // u' = -u + u^2, u0 = 0.1: u(1) = 0.1 e^{-1} / (1 - 0.1 (1 - e^{-1}))
        let m = Toy::new(1, 1.0);
        let tr = run_simulation(&m, &[C64::new(0.1, 0.0)], &SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 1.0)).unwrap();
        let exact = 0.1 * (-1f64).exp() / (1.0 - 0.1 * (1.0 - (-1f64).exp()));
        assert!((exact - 0.039271).abs() < 1e-6);
        assert!((tr.final_state[0].re - exact).abs() < 1e-6);
    }
}
