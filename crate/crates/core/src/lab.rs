//! Matrix-scale fixed-point laboratory.
//!
//! A symmetric negative-definite matrix `A` generates the interpolation scale
//! `|x|_theta = |(-A)^theta x|`. On it the lab estimates semigroup constants, picks
//! contraction parameters `(L, r, T)`, runs the mild-solution Picard map and checks
//! exponential decay near the zero equilibrium.

use crate::exponents::{beta_constant, ExponentError, ExponentSet};
use crate::generator::{Block, BlockGenerator};
use crate::linalg::{to_cmat, EigenDecomposition, C64};
use crate::mild::{
    picard_solve, picard_map, graded_mesh, default_grading, run_simulation, weighted_distance,
    EvolutionModel, Integrator, ModelError, PicardConfig, SolverConfig, SolverError,
};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::borrow::Cow;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("generator must be symmetric negative definite: {0}")]
    Generator(String),
    #[error("nonlinearity does not vanish at zero (|f(0)| = {0})")]
    NonzeroAtOrigin(f64),
    #[error("Lipschitz estimate violated by a sampled pair: {lhs} > {rhs}")]
    LipschitzViolated { lhs: f64, rhs: f64 },
    #[error("infeasible parameters: {constraint} binds ({detail})")]
    Infeasible {
        constraint: ContractionInequality,
        detail: String,
    },
    #[error("initial data |u0|_alpha = {norm} lies outside the ball of radius {radius}")]
    OutsideBall { norm: f64, radius: f64 },
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Exponents(#[from] ExponentError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Fractional powers of `-A` through a cached orthonormal eigenbasis.
#[derive(Debug, Clone)]
pub struct FractionalScale {
    /// Eigenvalues of `-A`, ascending.
    pub magnitudes: Vec<f64>,
    pub basis: DMatrix<f64>,
}

impl FractionalScale {
    pub fn new(generator: &DMatrix<f64>) -> Result<Self, LabError> {
        let m = generator.nrows();
        if m == 0 || generator.ncols() != m {
            return Err(LabError::Generator("matrix must be square and nonempty".into()));
        }
        let asym = (generator - generator.transpose()).amax();
        if asym > 1e-12 * generator.amax().max(1.0) {
            return Err(LabError::Generator(format!("asymmetry {asym:e}")));
        }
        let eig = SymmetricEigen::new(-generator.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|a, b| eig.eigenvalues[*a].total_cmp(&eig.eigenvalues[*b]));
        let magnitudes: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if magnitudes[0] <= 0.0 {
            return Err(LabError::Generator(format!("eigenvalue {} of -A", magnitudes[0])));
        }
        let basis = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        Ok(FractionalScale { magnitudes, basis })
    }

    pub fn dim(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn lambda_min(&self) -> f64 {
        self.magnitudes[0]
    }

    pub fn lambda_max(&self) -> f64 {
        self.magnitudes[self.dim() - 1]
    }

    /// Eigen-coordinates `Q^T x`.
    pub fn coordinates(&self, x: &[C64]) -> Vec<C64> {
        let m = self.dim();
        (0..m)
            .map(|k| (0..m).map(|i| x[i] * self.basis[(i, k)]).sum())
            .collect()
    }

    pub fn norm(&self, theta: f64, x: &[C64]) -> f64 {
        self.coordinates(x)
            .iter()
            .zip(&self.magnitudes)
            .map(|(c, l)| l.powf(2.0 * theta) * c.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// `(-A)^theta x`.
    pub fn power(&self, theta: f64, x: &[f64]) -> Vec<f64> {
        let m = self.dim();
        let c: Vec<f64> = (0..m)
            .map(|k| (0..m).map(|i| x[i] * self.basis[(i, k)]).sum::<f64>() * self.magnitudes[k].powf(theta))
            .collect();
        (0..m)
            .map(|i| (0..m).map(|k| self.basis[(i, k)] * c[k]).sum())
            .collect()
    }
}

/// `|(-A)^theta x|_2` for a symmetric negative-definite `A`.
pub fn fractional_norm(generator: &DMatrix<f64>, theta: f64, x: &[f64]) -> Result<f64, LabError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(LabError::Invalid(format!("theta = {theta} outside [0, 1]")));
    }
    let scale = FractionalScale::new(generator)?;
    let xc: Vec<C64> = x.iter().map(|v| C64::new(*v, 0.0)).collect();
    Ok(scale.norm(theta, &xc))
}

pub type NonlinearHook = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// Source term of the lab problem.
#[derive(Clone)]
pub enum LabNonlinearity {
    /// `f(u)_i = strength |u_i|^{q-1} u_i`.
    Power { strength: f64 },
    /// User map with its own growth constant.
    Hook { map: NonlinearHook, lipschitz: f64 },
}

impl fmt::Debug for LabNonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabNonlinearity::Power { strength } => write!(f, "Power {{ strength: {strength} }}"),
            LabNonlinearity::Hook { lipschitz, .. } => write!(f, "Hook {{ lipschitz: {lipschitz} }}"),
        }
    }
}

/// `u' = A(u) u + f(u)` with `A(u) = a(u) A_0`, `a(u) = 1 + coupling tanh(<e, (-A_0)^beta u>)`
/// and `e` the normalised all-ones vector. `coupling = 0` is the semilinear problem.
#[derive(Debug, Clone)]
pub struct FixedPointProblem {
    pub matrix: DMatrix<f64>,
    pub scale: FractionalScale,
    pub nonlinearity: LabNonlinearity,
    pub exponents: ExponentSet,
    pub ball_radius: f64,
    /// `N` in `|f(w) - f(v)|_gamma <= N (|w|_xi^{q-1} + |v|_xi^{q-1}) |w - v|_xi`.
    pub lipschitz: f64,
    pub coupling: f64,
    generator: BlockGenerator,
}

/// Sets `gamma = 1/10`, `beta = 1/5`, `alpha = 1/2` and `xi` from the critical identity.
pub fn lab_exponents(q: f64) -> Result<ExponentSet, LabError> {
    let (gamma, beta, alpha) = (0.1, 0.2, 0.5);
    let xi = alpha + (1.0 + gamma - alpha) / q;
    let e = crate::exponents::validate_exponents(gamma, Some(beta), alpha, xi, q)?;
    Ok(e)
}

impl FixedPointProblem {
    pub fn new(
        matrix: DMatrix<f64>,
        nonlinearity: LabNonlinearity,
        exponents: ExponentSet,
    ) -> Result<Self, LabError> {
        let scale = FractionalScale::new(&matrix)?;
        let lipschitz = match &nonlinearity {
            // componentwise |a|a^{q-1}-type growth, then |x|_inf <= |x|_2 <= lambda_min^{-xi}|x|_xi
            LabNonlinearity::Power { strength } => {
                strength.abs()
                    * exponents.q
                    * scale.lambda_max().powf(exponents.gamma)
                    * scale.lambda_min().powf(-exponents.xi * exponents.q)
            }
            LabNonlinearity::Hook { lipschitz, .. } => *lipschitz,
        };
        let eig = EigenDecomposition {
            values: scale.magnitudes.iter().map(|l| C64::new(-l, 0.0)).collect(),
            vectors: to_cmat(&scale.basis),
            inverse: to_cmat(&scale.basis.transpose()),
            condition: scale.dim() as f64,
        };
        let generator = BlockGenerator::new(vec![Block::Dense {
            matrix: to_cmat(&matrix),
            eig: Some(eig),
        }]);
        Ok(FixedPointProblem {
            matrix,
            scale,
            nonlinearity,
            exponents,
            ball_radius: 1.0,
            lipschitz,
            coupling: 0.0,
            generator,
        })
    }

    pub fn diagonal(magnitudes: &[f64], strength: f64, q: f64) -> Result<Self, LabError> {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            magnitudes.len(),
            magnitudes.iter().map(|l| -l),
        ));
        Self::new(m, LabNonlinearity::Power { strength }, lab_exponents(q)?)
    }

    /// Random problem: orthogonal conjugate of eigenvalues log-uniform in `[1, 20]`,
    /// `q` in `{2, 3}` and strength in `[0.1, 2]`.
    pub fn random(m: usize, seed: u64) -> Result<Self, LabError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = DMatrix::from_fn(m, m, |_, _| rng.random_range(-1.0..1.0));
        let q_mat = g.qr().q();
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_fn(m, |_, _| {
            -(20f64.ln() * rng.random::<f64>()).exp()
        }));
        let a = &q_mat * d * q_mat.transpose();
        let a = (&a + a.transpose()) * 0.5;
        let q = if rng.random::<bool>() { 2.0 } else { 3.0 };
        let strength = rng.random_range(0.1..2.0);
        Self::new(a, LabNonlinearity::Power { strength }, lab_exponents(q)?)
    }

    pub fn dim(&self) -> usize {
        self.scale.dim()
    }

    pub fn source(&self, u: &[f64]) -> Vec<f64> {
        match &self.nonlinearity {
            LabNonlinearity::Power { strength } => u
                .iter()
                .map(|v| strength * v.abs().powf(self.exponents.q - 1.0) * v)
                .collect(),
            LabNonlinearity::Hook { map, .. } => map(u),
        }
    }

    fn diffusivity_factor(&self, u: &[C64]) -> f64 {
        if self.coupling == 0.0 {
            return 1.0;
        }
        let re: Vec<f64> = u.iter().map(|v| v.re).collect();
        let p = self.scale.power(self.exponents.metric_exponent(), &re);
        let s = p.iter().sum::<f64>() / (self.dim() as f64).sqrt();
        1.0 + self.coupling * s.tanh()
    }

    /// Samples `f(0) = 0`.
    pub fn check_origin(&self) -> Result<(), LabError> {
        let f0 = self.source(&vec![0.0; self.dim()]);
        let n = f0.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n != 0.0 {
            return Err(LabError::NonzeroAtOrigin(n));
        }
        Ok(())
    }

    /// Samples the Lipschitz estimate on `samples` random pairs of the `E_xi` ball.
    pub fn check_lipschitz(&self, samples: usize, seed: u64) -> Result<(), LabError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = &self.exponents;
        for _ in 0..samples {
            let w = self.random_in_ball(&mut rng, e.xi, self.ball_radius);
            let v = self.random_in_ball(&mut rng, e.xi, self.ball_radius);
            let diff: Vec<C64> = self
                .source(&w)
                .iter()
                .zip(self.source(&v))
                .map(|(a, b)| C64::new(a - b, 0.0))
                .collect();
            let lhs = self.scale.norm(e.gamma, &diff);
            let nw = self.scale.norm(e.xi, &to_c(&w));
            let nv = self.scale.norm(e.xi, &to_c(&v));
            let d: Vec<C64> = w.iter().zip(&v).map(|(a, b)| C64::new(a - b, 0.0)).collect();
            let rhs = self.lipschitz
                * (nw.powf(e.q - 1.0) + nv.powf(e.q - 1.0))
                * self.scale.norm(e.xi, &d);
            if lhs > rhs * (1.0 + 1e-12) {
                return Err(LabError::LipschitzViolated { lhs, rhs });
            }
        }
        Ok(())
    }

    /// Uniform direction with `|x|_theta` uniform in `[0, radius]`.
    fn random_in_ball(&self, rng: &mut ChaCha8Rng, theta: f64, radius: f64) -> Vec<f64> {
        let x: Vec<f64> = (0..self.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = self.scale.norm(theta, &to_c(&x));
        let s = radius * rng.random::<f64>() / n.max(f64::MIN_POSITIVE);
        x.iter().map(|v| v * s).collect()
    }

    /// `x` rescaled to `|x|_theta = target`.
    pub fn normalized(&self, x: &[f64], theta: f64, target: f64) -> Vec<f64> {
        let n = self.scale.norm(theta, &to_c(x));
        x.iter().map(|v| v * target / n).collect()
    }
}

fn to_c(x: &[f64]) -> Vec<C64> {
    x.iter().map(|v| C64::new(*v, 0.0)).collect()
}

fn to_r(x: &[C64]) -> Vec<f64> {
    x.iter().map(|v| v.re).collect()
}

impl EvolutionModel for FixedPointProblem {
    fn dim(&self) -> usize {
        self.scale.dim()
    }
    fn exponents(&self) -> ExponentSet {
        self.exponents
    }
    fn generator(&self) -> &BlockGenerator {
        &self.generator
    }
    fn is_quasilinear(&self) -> bool {
        self.coupling != 0.0
    }
    fn frozen_generator(&self, state: &[C64]) -> Result<Cow<'_, BlockGenerator>, ModelError> {
        if self.coupling == 0.0 {
            return Ok(Cow::Borrowed(&self.generator));
        }
        Ok(Cow::Owned(self.generator.scaled(self.diffusivity_factor(state))))
    }
    fn nonlinearity(&self, state: &[C64]) -> Vec<C64> {
        to_c(&self.source(&to_r(state)))
    }
    fn norms(&self, state: &[C64], orders: &[f64]) -> Vec<f64> {
        orders.iter().map(|s| self.scale.norm(s / 2.0, state)).collect()
    }
}

/// `n` log-uniform times in `[t_min, t_max]`.
pub fn log_time_grid(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// Safety factor on sampled suprema.
pub const SAMPLING_SAFETY: f64 = 1.1;
/// Safety factor on `L` and `r` after closed-form inversion.
pub const PARAMETER_SAFETY: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairSup {
    pub theta: f64,
    pub vartheta: f64,
    /// `sup_t t^{theta - vartheta} |(-A)^theta e^{tA} (-A)^{-vartheta}|` before safety.
    pub sup: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemigroupConstants {
    pub omega0: f64,
    /// Zero for the semilinear problem.
    pub omega1: f64,
    pub omega2: f64,
    pub sampled_pairs: Vec<PairSup>,
}

/// All pairs `theta >= vartheta` drawn from `{gamma, beta, alpha, xi}`.
pub fn default_pairs(e: &ExponentSet) -> Vec<(f64, f64)> {
    let mut levels = vec![e.gamma, e.alpha, e.xi];
    if let Some(b) = e.beta_exp {
        levels.push(b);
    }
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut out = Vec::new();
    for (i, t) in levels.iter().enumerate() {
        for v in &levels[..=i] {
            out.push((*t, *v));
        }
    }
    out
}

/// `sup_t t^d max_k lambda_k^d e^{-t a lambda_k}` on the grid, with `d = theta - vartheta`.
fn pair_sup(scale: &FractionalScale, theta: f64, vartheta: f64, grid: &[f64]) -> f64 {
    let d = theta - vartheta;
    grid.iter()
        .map(|t| {
            scale
                .magnitudes
                .iter()
                .map(|l| (t * l).powf(d) * (-t * l).exp())
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Estimates `omega_0` (and, for coupled problems, the perturbation constants
/// `omega_1`, `omega_2` by sampling random pairs of the ball).
pub fn estimate_semigroup_constants(
    problem: &FixedPointProblem,
    theta_pairs: &[(f64, f64)],
    time_grid: &[f64],
) -> SemigroupConstants {
    let sampled: Vec<PairSup> = theta_pairs
        .iter()
        .map(|&(theta, vartheta)| PairSup {
            theta,
            vartheta,
            sup: pair_sup(&problem.scale, theta, vartheta, time_grid),
        })
        .collect();
    let omega0 = SAMPLING_SAFETY * sampled.iter().map(|p| p.sup).fold(0.0, f64::max);
    let (omega1, omega2) = if problem.coupling == 0.0 {
        (0.0, 0.0)
    } else {
        perturbation_constants(problem, theta_pairs, time_grid)
    };
    SemigroupConstants {
        omega0,
        omega1,
        omega2,
        sampled_pairs: sampled,
    }
}

fn perturbation_constants(
    problem: &FixedPointProblem,
    pairs: &[(f64, f64)],
    grid: &[f64],
) -> (f64, f64) {
    let e = &problem.exponents;
    let beta = e.metric_exponent();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let lam = &problem.scale.magnitudes;
    let mut omega1 = 1.0f64;
    for _ in 0..64 {
        let u = problem.random_in_ball(&mut rng, beta, problem.ball_radius);
        let v = problem.random_in_ball(&mut rng, beta, problem.ball_radius);
        let (au, av) = (
            problem.diffusivity_factor(&to_c(&u)),
            problem.diffusivity_factor(&to_c(&v)),
        );
        let d: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let dn = problem.scale.norm(beta, &to_c(&d));
        if dn == 0.0 {
            continue;
        }
        for &(theta, vartheta) in pairs {
            let diff = theta - vartheta;
            for t in grid {
                let s = lam
                    .iter()
                    .map(|l| (t * l).powf(diff) * ((-t * au * l).exp() - (-t * av * l).exp()).abs())
                    .fold(0.0, f64::max);
                omega1 = omega1.max(SAMPLING_SAFETY * s / dn);
            }
        }
    }
    // |U(t) - 1|_{L(E_alpha, E_beta)} / t^{alpha - beta}
    let mut omega2 = 1.0f64;
    let gap = e.alpha - beta;
    let a_max = 1.0 + problem.coupling.abs();
    for t in grid {
        let s = lam
            .iter()
            .map(|l| l.powf(beta - e.alpha) * (1.0 - (-t * a_max * l).exp()) / t.powf(gap))
            .fold(0.0, f64::max);
        omega2 = omega2.max(SAMPLING_SAFETY * s);
    }
    (omega1, omega2)
}

/// The inequalities constraining `(L, r, T)`, named by role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContractionInequality {
    /// `(2 omega0 + omega1) N (B_beta + B_xi) L^{q-1} <= 1/4`.
    NonlinearGain,
    /// `r (omega0 + 2 omega1 |u_ref|_alpha) <= L/4` and `4 omega1 r <= 1/8`.
    BallRadius,
    /// `M(T) <= L/4`, `T^rho <= r`, `omega1 |u_ref|_xi T^mu <= 1/16`.
    InitialLayer,
    /// `[omega2 (|u_ref|_alpha + r) + omega0 N (omega2 B_alpha + B_beta)] T^{alpha-beta-rho} <= 1`.
    HolderTime,
}

impl fmt::Display for ContractionInequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContractionInequality::NonlinearGain => "nonlinear-gain",
            ContractionInequality::BallRadius => "ball-radius",
            ContractionInequality::InitialLayer => "initial-layer",
            ContractionInequality::HolderTime => "holder-time",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct InequalityCheck {
    pub inequality: ContractionInequality,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// Inputs of the parameter selection besides the semigroup constants.
#[derive(Clone)]
pub struct SelectionInputs<'a> {
    pub exponents: ExponentSet,
    pub n_star: f64,
    pub ball_radius: f64,
    /// `|u_ref|_alpha` and `|u_ref|_xi` of the reference state (zero: the equilibrium).
    pub reference_alpha: f64,
    pub reference_xi: f64,
    /// `M(T) = sup_{t <= T} t^mu |e^{tA} u_ref|_xi`.
    pub profile: &'a dyn Fn(f64) -> f64,
    /// Whether the Hölder-in-time constraints apply (coupled problems only).
    pub quasilinear: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContractionParameters {
    pub l: f64,
    pub r: f64,
    pub t: f64,
    pub rho: f64,
    pub b_alpha: f64,
    pub b_beta: f64,
    pub b_xi: f64,
    pub n_star: f64,
    pub omega0: f64,
    pub omega1: f64,
    pub omega2: f64,
    pub checks: Vec<InequalityCheck>,
}

impl ContractionParameters {
    pub fn all_hold(&self) -> bool {
        self.checks.iter().all(|c| c.holds)
    }
}

/// Smallest admissible `T`.
pub const T_FLOOR: f64 = 1e-12;

/// Largest `L`, then `r`, then `T` (by bisection on the monotone constraints).
pub fn select_parameters(
    constants: &SemigroupConstants,
    inputs: &SelectionInputs<'_>,
) -> Result<ContractionParameters, LabError> {
    let e = &inputs.exponents;
    let (w0, w1, w2) = (constants.omega0, constants.omega1, constants.omega2);
    let n = inputs.n_star;
    if !(w0 > 0.0 && n > 0.0 && e.q > 1.0) {
        return Err(LabError::Invalid("constants must be positive and q > 1".into()));
    }
    let beta = e.metric_exponent();
    let b_beta = beta_constant(e.gamma, beta, e.mu, e.q)?;
    let b_xi = beta_constant(e.gamma, e.xi, e.mu, e.q)?;
    let b_alpha = beta_constant(e.gamma, e.alpha, e.mu, e.q)?;
    let gain = (2.0 * w0 + w1) * n * (b_beta + b_xi);
    let l = (1.0 / (4.0 * gain)).powf(1.0 / (e.q - 1.0)).min(1.0) * PARAMETER_SAFETY;
    let mut r = l / (4.0 * (w0 + 2.0 * w1 * inputs.reference_alpha));
    if w1 > 0.0 {
        r = r.min(1.0 / (32.0 * w1));
    }
    r = (r * PARAMETER_SAFETY).min(inputs.ball_radius * PARAMETER_SAFETY);
    let gap = e.alpha - beta;
    let holder_coeff = w2 * (inputs.reference_alpha + r) + w0 * n * (w2 * b_alpha + b_beta);
    // rho in (0, alpha - beta) balancing T <= r^{1/rho} against T <= c^{-1/(gap - rho)}
    let rho = if !inputs.quasilinear {
        0.0
    } else if holder_coeff <= 1.0 || r >= 1.0 {
        0.99 * gap
    } else {
        let (a, b) = (-r.ln(), holder_coeff.ln());
        (gap * a / (a + b)).clamp(0.01 * gap, 0.99 * gap)
    };
    let holder_gap = gap - rho;

    let layer_ok = |t: f64| {
        (inputs.profile)(t) <= l / 4.0
            && (!inputs.quasilinear || t.powf(rho) <= r)
            && w1 * inputs.reference_xi * t.powf(e.mu) <= 1.0 / 16.0
    };
    let holder_ok = |t: f64| !inputs.quasilinear || holder_coeff * t.powf(holder_gap) <= 1.0;

    // the first link of the chain L -> r -> T that alone forces T below the floor
    let implied = |bound: f64| if inputs.quasilinear { bound.powf(1.0 / rho) } else { bound };
    if inputs.quasilinear && implied(l) < T_FLOOR {
        return Err(LabError::Infeasible {
            constraint: ContractionInequality::NonlinearGain,
            detail: format!("L = {l:e} forces T <= {:e}", implied(l)),
        });
    }
    if inputs.quasilinear && implied(r) < T_FLOOR {
        return Err(LabError::Infeasible {
            constraint: ContractionInequality::BallRadius,
            detail: format!("r = {r:e} forces T <= {:e}", implied(r)),
        });
    }
    if !inputs.quasilinear && l < T_FLOOR {
        return Err(LabError::Infeasible {
            constraint: ContractionInequality::NonlinearGain,
            detail: format!("L = {l:e}"),
        });
    }
    for (ok, which) in [
        (&layer_ok as &dyn Fn(f64) -> bool, ContractionInequality::InitialLayer),
        (&holder_ok, ContractionInequality::HolderTime),
    ] {
        if !ok(T_FLOOR) {
            return Err(LabError::Infeasible {
                constraint: which,
                detail: format!("violated at T = {T_FLOOR:e}"),
            });
        }
    }
    let feasible = |t: f64| layer_ok(t) && holder_ok(t);
    let t_cap = 1.0 - 1e-9;
    let t = if feasible(t_cap) {
        t_cap
    } else {
        let (mut lo, mut hi) = (T_FLOOR.ln(), t_cap.ln());
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid.exp()) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo.exp()
    };

    let mut checks = vec![
        InequalityCheck {
            inequality: ContractionInequality::NonlinearGain,
            lhs: gain * l.powf(e.q - 1.0),
            rhs: 0.25,
            holds: gain * l.powf(e.q - 1.0) <= 0.25,
        },
        InequalityCheck {
            inequality: ContractionInequality::BallRadius,
            lhs: r * (w0 + 2.0 * w1 * inputs.reference_alpha),
            rhs: l / 4.0,
            holds: r * (w0 + 2.0 * w1 * inputs.reference_alpha) <= l / 4.0 && 4.0 * w1 * r <= 0.125,
        },
        InequalityCheck {
            inequality: ContractionInequality::InitialLayer,
            lhs: (inputs.profile)(t),
            rhs: l / 4.0,
            holds: layer_ok(t),
        },
    ];
    if inputs.quasilinear {
        let lhs = holder_coeff * t.powf(holder_gap);
        checks.push(InequalityCheck {
            inequality: ContractionInequality::HolderTime,
            lhs,
            rhs: 1.0,
            holds: lhs <= 1.0,
        });
    }
    Ok(ContractionParameters {
        l,
        r,
        t,
        rho,
        b_alpha,
        b_beta,
        b_xi,
        n_star: n,
        omega0: w0,
        omega1: w1,
        omega2: w2,
        checks,
    })
}

/// Constants and parameters for a problem around the zero equilibrium.
pub fn prepare_contraction(
    problem: &FixedPointProblem,
) -> Result<(SemigroupConstants, ContractionParameters), LabError> {
    problem.check_origin()?;
    problem.check_lipschitz(200, 11)?;
    let e = problem.exponents;
    let constants = estimate_semigroup_constants(problem, &default_pairs(&e), &log_time_grid(1e-6, 1.0, 241));
    let zero = |_: f64| 0.0;
    let inputs = SelectionInputs {
        exponents: e,
        n_star: problem.lipschitz,
        ball_radius: problem.ball_radius,
        reference_alpha: 0.0,
        reference_xi: 0.0,
        profile: &zero,
        quasilinear: problem.coupling != 0.0,
    };
    let params = select_parameters(&constants, &inputs)?;
    Ok((constants, params))
}

/// Iteration budget `ceil(log(tol) / log(1/2)) + 5`.
pub fn iteration_budget(tol: f64) -> usize {
    (tol.ln() / 0.5f64.ln()).ceil() as usize + 5
}

#[derive(Debug, Clone, Serialize)]
pub struct FixedPointReport {
    pub iterations: usize,
    pub iteration_budget: usize,
    pub converged: bool,
    pub distances: Vec<f64>,
    /// `d(F(u_{k+1}), F(u_k)) / d(u_{k+1}, u_k)` along the iteration.
    pub iterate_ratios: Vec<f64>,
    /// The same quotient for random pairs of the contraction set.
    pub pair_ratios: Vec<f64>,
    pub contraction_ratio: f64,
    pub mesh: Vec<f64>,
    #[serde(skip)]
    pub trajectory: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy)]
pub struct FixedPointOptions {
    pub mesh_points: usize,
    pub tol: f64,
    pub random_pairs: usize,
    pub seed: u64,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            mesh_points: 64,
            tol: 1e-12,
            random_pairs: 8,
            seed: 1,
        }
    }
}

/// Picard iteration of the mild map on `[0, T]`, plus contraction quotients of
/// random pairs `e^{tA} u0 + w(t)` with `|w|_beta <= r/2`, `t^mu |w|_xi <= L/2`.
pub fn run_fixed_point(
    problem: &FixedPointProblem,
    params: &ContractionParameters,
    u0: &[f64],
    options: &FixedPointOptions,
) -> Result<FixedPointReport, LabError> {
    problem.check_origin()?;
    let e = problem.exponents;
    let n0 = problem.scale.norm(e.alpha, &to_c(u0));
    let embed = problem.scale.lambda_min().powf(e.metric_exponent() - e.alpha).max(1.0);
    if n0 > params.r / embed * (1.0 + 1e-12) {
        return Err(LabError::OutsideBall {
            norm: n0,
            radius: params.r / embed,
        });
    }
    let budget = iteration_budget(options.tol);
    let mut config = SolverConfig::fixed(Integrator::Picard, params.t, params.t);
    config.picard = PicardConfig {
        mesh_points: options.mesh_points,
        grading: None,
        tol: options.tol,
        max_iter: budget,
    };
    let u0c = to_c(u0);
    let traj = picard_solve(problem, &u0c, params.t, &config)?;
    let report = traj.picard.clone().expect("picard report");
    let mesh = report.mesh.clone();

    let orders = [
        problem.space_order(e.metric_exponent()),
        problem.space_order(e.xi),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let base: Vec<Vec<C64>> = mesh
        .iter()
        .map(|&t| problem.generator.apply_phi(0, t, &u0c))
        .collect();
    let mut perturbed = || -> Vec<Vec<C64>> {
        base.iter()
            .zip(&mesh)
            .enumerate()
            .map(|(k, (b, &t))| {
                if k == 0 {
                    return b.clone();
                }
                let w = problem.random_in_ball(&mut rng, e.xi, 1.0);
                let nb = problem.scale.norm(e.metric_exponent(), &to_c(&w));
                let nx = problem.scale.norm(e.xi, &to_c(&w));
                let s = (params.r / 2.0 / nb).min(params.l / 2.0 / (t.powf(e.mu) * nx));
                b.iter().zip(&w).map(|(b, w)| b + w * s).collect()
            })
            .collect()
    };
    let mut pair_ratios = Vec::with_capacity(options.random_pairs);
    for _ in 0..options.random_pairs {
        let u = perturbed();
        let v = perturbed();
        let d = weighted_distance(problem, &mesh, &u, &v, orders, e.mu);
        let fu = picard_map(problem, &u0c, &mesh, &u).map_err(SolverError::from)?;
        let fv = picard_map(problem, &u0c, &mesh, &v).map_err(SolverError::from)?;
        let df = weighted_distance(problem, &mesh, &fu, &fv, orders, e.mu);
        if d > 0.0 {
            pair_ratios.push(df / d);
        }
    }
    let contraction_ratio = report.ratios.iter().copied().fold(0.0, f64::max);
    Ok(FixedPointReport {
        iterations: report.iterations,
        iteration_budget: budget,
        converged: report.converged,
        distances: report.distances,
        iterate_ratios: report.ratios,
        pair_ratios,
        contraction_ratio,
        mesh,
        trajectory: picard_trajectory(problem, &u0c, &config)?,
    })
}

/// Recomputes the converged iterate on the graded mesh (the solver keeps only
/// the final state).
fn picard_trajectory(
    problem: &FixedPointProblem,
    u0: &[C64],
    config: &SolverConfig,
) -> Result<Vec<Vec<f64>>, LabError> {
    let e = problem.exponents;
    let grading = config.picard.grading.unwrap_or_else(|| default_grading(&e));
    let mesh = graded_mesh(config.t_end, config.picard.mesh_points, grading);
    let mut v: Vec<Vec<C64>> = mesh.iter().map(|&t| problem.generator.apply_phi(0, t, u0)).collect();
    for _ in 0..config.picard.max_iter {
        let next = picard_map(problem, u0, &mesh, &v).map_err(SolverError::from)?;
        let done = next
            .iter()
            .zip(&v)
            .all(|(a, b)| a.iter().zip(b).all(|(x, y)| (x - y).norm() <= config.picard.tol));
        v = next;
        if done {
            break;
        }
    }
    Ok(v.iter().map(|s| to_r(s)).collect())
}

/// Solution of `y' = -lambda y + strength |y|^{q-1} y`, `y(0) = y0`.
pub fn bernoulli_solution(lambda: f64, strength: f64, q: f64, y0: f64, t: f64) -> f64 {
    if y0 == 0.0 {
        return 0.0;
    }
    let s = y0.signum();
    let a = y0.abs();
    let k = q - 1.0;
    // w = y^{-k} solves w' = k lambda w - k strength
    let ratio = strength / lambda;
    let w = ratio + (a.powf(-k) - ratio) * (k * lambda * t).exp();
    if w <= 0.0 {
        return f64::INFINITY * s;
    }
    s * w.powf(-1.0 / k)
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub scale: f64,
    /// `sup_t e^{varpi t}(|u|_alpha + t^{xi-alpha}|u|_xi) / |u0|_alpha`.
    pub quotient_sup: f64,
    pub bounded: bool,
    pub reason: Option<String>,
    #[serde(skip)]
    pub snapshots: Vec<(f64, Vec<f64>)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub varpi: f64,
    pub t_long: f64,
    /// Sampled sup of the linear quotient for `e^{t(A + varpi)}`.
    pub omega0: f64,
    /// Largest quotient over bounded entries.
    pub m_report: f64,
    pub largest_passing_scale: Option<f64>,
    pub entries: Vec<DecayEntry>,
}

/// `sup_t [max_k e^{(varpi - lambda_k) t} + max_k (t lambda_k)^{xi-alpha} e^{(varpi - lambda_k) t}]`,
/// which bounds the quotient of the linear flow.
pub fn linear_decay_constant(problem: &FixedPointProblem, varpi: f64, grid: &[f64]) -> f64 {
    let mu = problem.exponents.xi - problem.exponents.alpha;
    grid.iter()
        .map(|t| {
            let lam = &problem.scale.magnitudes;
            let a = lam.iter().map(|l| ((varpi - l) * t).exp()).fold(0.0, f64::max);
            let b = lam
                .iter()
                .map(|l| (t * l).powf(mu) * ((varpi - l) * t).exp())
                .fold(0.0, f64::max);
            a + b
        })
        .fold(1.0, f64::max)
}

/// Time step of the decay runs.
pub const DECAY_DT: f64 = 5e-3;

fn decay_entry(
    problem: &FixedPointProblem,
    varpi: f64,
    t_long: f64,
    direction: &[f64],
    scale: f64,
) -> DecayEntry {
    let e = problem.exponents;
    let u0 = problem.normalized(direction, e.alpha, scale);
    let mut config = SolverConfig::fixed(Integrator::Etdrk2, DECAY_DT, t_long);
    config.mu = Some(e.xi - e.alpha);
    config.snapshot_every = Some(20);
    let outside = |reason: String| DecayEntry {
        scale,
        quotient_sup: f64::INFINITY,
        bounded: false,
        reason: Some(reason),
        snapshots: vec![],
    };
    let traj = match run_simulation(problem, &to_c(&u0), &config) {
        Ok(t) => t,
        Err(SolverError::NonFinite { time, .. }) => return outside(format!("non-finite at t = {time}")),
        Err(err) => return outside(err.to_string()),
    };
    if let Some(b) = &traj.blowup {
        return outside(format!("{} exceeded at t = {}", b.quantity, b.time));
    }
    let quotients: Vec<(f64, f64)> = traj
        .records
        .iter()
        .map(|r| (r.t, (varpi * r.t).exp() * (r.norms[0] + r.weighted) / scale))
        .collect();
    let cut = 0.75 * t_long;
    let early = quotients.iter().filter(|(t, _)| *t < cut).map(|q| q.1).fold(1.0, f64::max);
    let late = quotients.iter().filter(|(t, _)| *t >= cut).map(|q| q.1).fold(0.0, f64::max);
    let sup = early.max(late);
    let bounded = sup.is_finite() && late <= early;
    DecayEntry {
        scale,
        quotient_sup: sup,
        bounded,
        reason: (!bounded).then(|| "weighted quotient still growing".to_string()),
        snapshots: traj.snapshots.iter().map(|(t, s)| (*t, to_r(s))).collect(),
    }
}

/// Evolves `s * d` (`d` the all-ones direction with `|d|_alpha = 1`) to `20 / varpi`
/// for every scale `s`, then bisects between the largest passing and smallest
/// failing scale.
pub fn verify_decay(problem: &FixedPointProblem, varpi: f64, scales: &[f64]) -> Result<DecayReport, LabError> {
    problem.check_origin()?;
    let lam_min = problem.scale.lambda_min();
    if !(varpi > 0.0 && varpi < lam_min) {
        return Err(LabError::Invalid(format!("varpi = {varpi} must lie in (0, {lam_min})")));
    }
    let t_long = 20.0 / varpi;
    let direction = vec![1.0; problem.dim()];
    let mut entries: Vec<DecayEntry> = scales
        .iter()
        .map(|&s| decay_entry(problem, varpi, t_long, &direction, s))
        .collect();
    let pass = entries.iter().filter(|e| e.bounded).map(|e| e.scale).fold(None, |m: Option<f64>, s| {
        Some(m.map_or(s, |m| m.max(s)))
    });
    let fail = entries
        .iter()
        .filter(|e| !e.bounded && pass.is_some_and(|p| e.scale > p))
        .map(|e| e.scale)
        .fold(None, |m: Option<f64>, s| Some(m.map_or(s, |m| m.min(s))));
    let mut largest = pass;
    if let (Some(mut lo), Some(mut hi)) = (pass, fail) {
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if decay_entry(problem, varpi, t_long, &direction, mid).bounded {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        largest = Some(lo);
    }
    let m_report = entries
        .iter()
        .filter(|e| e.bounded)
        .map(|e| e.quotient_sup)
        .fold(0.0, f64::max);
    entries.sort_by(|a, b| a.scale.total_cmp(&b.scale));
    Ok(DecayReport {
        varpi,
        t_long,
        omega0: linear_decay_constant(problem, varpi, &log_time_grid(1e-6, t_long, 801)),
        m_report,
        largest_passing_scale: largest,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_row_slice(v))
    }

    #[test]
    fn fractional_norm_examples() {
        let a = diag(&[-1.0, -4.0]);
        assert!((fractional_norm(&a, 0.5, &[1.0, 1.0]).unwrap() - 5f64.sqrt()).abs() < 1e-14);
        assert!((fractional_norm(&a, 0.0, &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-14);
        assert!(fractional_norm(&diag(&[-1.0, 1.0]), 0.5, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn semigroup_constant_examples() {
        let grid = log_time_grid(1e-6, 1.0, 241);
        let p = FixedPointProblem::diagonal(&[1.0], 1.0, 2.0).unwrap();
        let c = estimate_semigroup_constants(&p, &[(1.0, 0.0)], &grid);
        assert!((c.sampled_pairs[0].sup - (-1f64).exp()).abs() < 1e-12);
        assert!(c.omega0 >= (-1f64).exp());
        let c = estimate_semigroup_constants(&p, &[(0.0, 0.0)], &grid);
        assert!((c.sampled_pairs[0].sup - 1.0).abs() < 1e-5);
        let p = FixedPointProblem::diagonal(&[1.0, 10.0], 1.0, 2.0).unwrap();
        let c = estimate_semigroup_constants(&p, &[(0.5, 0.0)], &log_time_grid(1e-6, 1.0, 4001));
        assert!((c.sampled_pairs[0].sup - (2.0 * std::f64::consts::E).powf(-0.5)).abs() < 1e-5);
    }

    fn selection_example(n_star: f64, q: f64) -> Result<ContractionParameters, LabError> {
        let constants = SemigroupConstants {
            omega0: 1.0,
            omega1: 1.0,
            omega2: 1.0,
            sampled_pairs: vec![],
        };
        let e = ExponentSet {
            gamma: 0.1,
            beta_exp: Some(0.2),
            alpha: 0.5,
            xi: 0.8,
            q,
            mu: 0.3,
        };
        let zero = |_: f64| 0.0;
        select_parameters(
            &constants,
            &SelectionInputs {
                exponents: e,
                n_star,
                ball_radius: 1.0,
                reference_alpha: 0.0,
                reference_xi: 0.0,
                profile: &zero,
                quasilinear: true,
            },
        )
    }

    #[test]
    fn selection_examples() {
        let p = selection_example(1.0, 2.0).unwrap();
        assert!((p.b_beta + p.b_xi - 7.753_279_379_173_255).abs() < 1e-10);
        assert!((p.l / PARAMETER_SAFETY - 0.010_748).abs() < 1e-6);
        assert!(p.all_hold(), "{:?}", p.checks);
        let err = selection_example(1e9, 2.0).unwrap_err();
        assert!(matches!(
            err,
            LabError::Infeasible {
                constraint: ContractionInequality::NonlinearGain,
                ..
            }
        ));
    }

    #[test]
    fn large_exponent_caps_l() {
        let constants = SemigroupConstants {
            omega0: 1.0,
            omega1: 0.0,
            omega2: 0.0,
            sampled_pairs: vec![],
        };
        let zero = |_: f64| 0.0;
        let e = lab_exponents(400.0).unwrap();
        let p = select_parameters(
            &constants,
            &SelectionInputs {
                exponents: e,
                n_star: 1.0,
                ball_radius: 1.0,
                reference_alpha: 0.0,
                reference_xi: 0.0,
                profile: &zero,
                quasilinear: false,
            },
        )
        .unwrap();
        assert!(p.l / PARAMETER_SAFETY > 0.98 && p.l / PARAMETER_SAFETY <= 1.0);
    }

    #[test]
    fn zero_data_has_zero_ratio() {
        let p = FixedPointProblem::random(6, 3).unwrap();
        let (_, params) = prepare_contraction(&p).unwrap();
        let r = run_fixed_point(&p, &params, &[0.0; 6], &FixedPointOptions::default()).unwrap();
        assert_eq!(r.contraction_ratio, 0.0);
        assert!(r.trajectory.iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_logistic_matches_closed_form() {
        let p = FixedPointProblem::diagonal(&[1.0], 1.0, 2.0).unwrap();
        let (_, params) = prepare_contraction(&p).unwrap();
        let y0 = 0.1 * params.r;
        let r = run_fixed_point(&p, &params, &[y0], &FixedPointOptions::default()).unwrap();
        for (t, u) in r.mesh.iter().zip(&r.trajectory) {
            assert!((u[0] - bernoulli_solution(1.0, 1.0, 2.0, y0, *t)).abs() < 1e-8);
        }
    }

    #[test]
    fn random_problems_contract() {
        for seed in 0..4 {
            let p = FixedPointProblem::random(4 + 3 * seed as usize, seed).unwrap();
            let (_, params) = prepare_contraction(&p).unwrap();
            assert!(params.all_hold());
            let u0 = p.normalized(&vec![1.0; p.dim()], p.exponents.alpha, 0.9 * params.r);
            let r = run_fixed_point(&p, &params, &u0, &FixedPointOptions::default()).unwrap();
            assert!(r.converged && r.iterations <= r.iteration_budget);
            assert!(r.iterate_ratios.iter().chain(&r.pair_ratios).all(|q| *q <= 0.5));
        }
    }

    #[test]
    fn linear_decay_is_bounded_by_its_constant() {
        let p = FixedPointProblem::diagonal(&[1.0, 3.0], 0.0, 2.0).unwrap();
        let rep = verify_decay(&p, 0.5, &[1.0]).unwrap();
        assert!(rep.entries[0].bounded);
        assert!(rep.m_report <= rep.omega0 * 1.01, "{} {}", rep.m_report, rep.omega0);
    }

    #[test]
    fn large_data_leaves_the_neighbourhood() {
        let p = FixedPointProblem::diagonal(&[1.0], 1.0, 2.0).unwrap();
        let rep = verify_decay(&p, 0.5, &[1e-3, 2.0]).unwrap();
        assert!(rep.entries[0].bounded);
        assert!(!rep.entries[1].bounded);
        let s = rep.largest_passing_scale.unwrap();
        assert!(s > 0.5 && s < 2.0, "{s}");
    }

    #[test]
    fn coupled_problem_has_perturbation_constants() {
        let mut p = FixedPointProblem::diagonal(&[1.0, 2.0, 4.0], 0.5, 2.0).unwrap();
        p.coupling = 0.2;
        let c = estimate_semigroup_constants(&p, &default_pairs(&p.exponents), &log_time_grid(1e-4, 1.0, 61));
        assert!(c.omega1 >= 1.0 && c.omega2 >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn interpolation_inequality(x in prop::collection::vec(-5.0f64..5.0, 5), theta in 0.0f64..1.0, seed in 0u64..20) {
            let p = FixedPointProblem::random(5, seed).unwrap();
            let xc = to_c(&x);
            let lhs = p.scale.norm(theta, &xc);
            let rhs = p.scale.norm(0.0, &xc).powf(1.0 - theta) * p.scale.norm(1.0, &xc).powf(theta);
            prop_assert!(lhs <= rhs * (1.0 + 1e-12));
        }

        #[test]
        fn log_convexity(x in prop::collection::vec(-5.0f64..5.0, 4), a in 0.0f64..1.0, b in 0.0f64..1.0, s in 0.0f64..1.0) {
            let p = FixedPointProblem::diagonal(&[1.0, 2.5, 7.0, 30.0], 1.0, 2.0).unwrap();
            let xc = to_c(&x);
            let mid = s * a + (1.0 - s) * b;
            let l = |t: f64| p.scale.norm(t, &xc).ln();
            prop_assert!(l(mid) <= s * l(a) + (1.0 - s) * l(b) + 1e-10);
        }
    }
}
