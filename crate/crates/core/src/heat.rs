//! One-dimensional heat-equation examples.
//!
//! * semilinear: `u_t = u_xx + |u|^{kappa-1} u`, Dirichlet sine basis on `(0, l)`;
//! * quasilinear: `u_t = (a(u) u_x)_x + |u_x|^kappa`, Neumann cosine basis on `(0, l)`;
//! * both on a large periodic box as a free-space surrogate, with the scaling maps
//!   under which the equations are invariant.
//!
//! Sine and cosine coefficients are synthesised on the midpoint grid
//! `x_m = (m + 1/2) l / N`.

use crate::exponents::{quasilinear_recipe, semilinear_recipe, CriticalRecipe, ExponentError, ExponentSet};
use crate::generator::{Block, BlockGenerator};
use crate::linalg::{to_cmat, C64};
use crate::mild::{run_simulation, EvolutionModel, ModelError, SolverConfig, SolverError};
use nalgebra::DMatrix;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;
use std::borrow::Cow;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HeatError {
    #[error(transparent)]
    Exponents(#[from] ExponentError),
    #[error("invalid model: {0}")]
    Invalid(String),
    #[error("rescaled support radius {radius} exits the box of half width {half_width}")]
    SupportExitsBox { radius: f64, half_width: f64 },
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Sine series on `(0, l)` with modes `1..=N`.
#[derive(Debug, Clone)]
pub struct SineBasis {
    pub length: f64,
    synth: DMatrix<f64>,
    analysis: DMatrix<f64>,
}

/// Cosine series on `(0, l)` with modes `0..N`.
#[derive(Debug, Clone)]
pub struct CosineBasis {
    pub length: f64,
    synth: DMatrix<f64>,
    analysis: DMatrix<f64>,
    /// Derivative of each cosine mode sampled on the grid.
    gradient: DMatrix<f64>,
    /// Sine analysis for fluxes (modes `1..=N`).
    sine_analysis: DMatrix<f64>,
}

/// Fourier series on `[-L, L)` with `N` grid points.
#[derive(Clone)]
pub struct FourierBox {
    pub half_width: f64,
    pub points: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for FourierBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierBox")
            .field("half_width", &self.half_width)
            .field("points", &self.points)
            .finish()
    }
}

fn midpoints(n: usize, length: f64) -> Vec<f64> {
    (0..n).map(|m| (m as f64 + 0.5) * length / n as f64).collect()
}

fn invert(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("trigonometric synthesis matrix is invertible")
}

impl SineBasis {
    pub fn new(n: usize, length: f64) -> Self {
        let x = midpoints(n, length);
        let synth = DMatrix::from_fn(n, n, |m, k| ((k + 1) as f64 * PI * x[m] / length).sin());
        let analysis = invert(&synth);
        SineBasis {
            length,
            synth,
            analysis,
        }
    }

    pub fn wavenumber(&self, k: usize) -> f64 {
        (k + 1) as f64 * PI / self.length
    }
}

impl CosineBasis {
    pub fn new(n: usize, length: f64) -> Self {
        let x = midpoints(n, length);
        let synth = DMatrix::from_fn(n, n, |m, k| (k as f64 * PI * x[m] / length).cos());
        let analysis = invert(&synth);
        let gradient = DMatrix::from_fn(n, n, |m, k| {
            let w = k as f64 * PI / length;
            -w * (w * x[m]).sin()
        });
        let sine = DMatrix::from_fn(n, n, |m, k| ((k + 1) as f64 * PI * x[m] / length).sin());
        CosineBasis {
            length,
            synth,
            analysis,
            gradient,
            sine_analysis: invert(&sine),
        }
    }

    pub fn wavenumber(&self, k: usize) -> f64 {
        k as f64 * PI / self.length
    }

    /// Matrix of `v -> (a v_x)_x` on cosine coefficients for grid diffusivity `a`.
    /// Row 0 vanishes, so the mean is conserved.
    fn divergence_form(&self, a: &[f64]) -> DMatrix<f64> {
        let n = a.len();
        let mut flux = self.gradient.clone();
        for (m, am) in a.iter().enumerate() {
            flux.row_mut(m).scale_mut(*am);
        }
        let sine_coeffs = &self.sine_analysis * flux;
        DMatrix::from_fn(n, n, |j, k| {
            if j == 0 {
                0.0
            } else {
                // d/dx sin(j w x) = j w cos(j w x), sine index j - 1
                self.wavenumber(j) * sine_coeffs[(j - 1, k)]
            }
        })
    }
}

impl FourierBox {
    pub fn new(points: usize, half_width: f64) -> Self {
        let mut planner = FftPlanner::new();
        FourierBox {
            half_width,
            points,
            forward: planner.plan_fft_forward(points),
            inverse: planner.plan_fft_inverse(points),
        }
    }

    /// The default free-space surrogate: `[-8 pi, 8 pi)` with 512 points.
    pub fn free_space() -> Self {
        Self::new(512, 8.0 * PI)
    }

    pub fn mode_index(&self, slot: usize) -> i64 {
        if slot < self.points / 2 {
            slot as i64
        } else {
            slot as i64 - self.points as i64
        }
    }

    pub fn wavenumber(&self, slot: usize) -> f64 {
        self.mode_index(slot) as f64 * PI / self.half_width
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = 2.0 * self.half_width / self.points as f64;
        (0..self.points).map(|i| -self.half_width + i as f64 * h).collect()
    }

    fn sign(&self, slot: usize) -> f64 {
        if self.mode_index(slot).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn to_grid(&self, c: &[C64]) -> Vec<f64> {
        let mut buf: Vec<C64> = c.iter().enumerate().map(|(s, v)| v * self.sign(s)).collect();
        self.inverse.process(&mut buf);
        buf.iter().map(|v| v.re).collect()
    }

    pub fn from_grid(&self, g: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = g.iter().map(|v| C64::new(*v, 0.0)).collect();
        self.forward.process(&mut buf);
        let scale = 1.0 / self.points as f64;
        buf.iter().enumerate().map(|(s, v)| v * (scale * self.sign(s))).collect()
    }

    /// Evaluates the Fourier series at arbitrary `x` inside the box; zero outside.
    pub fn evaluate(&self, c: &[C64], x: f64) -> f64 {
        if x < -self.half_width || x >= self.half_width {
            return 0.0;
        }
        c.iter()
            .enumerate()
            .map(|(s, v)| {
                let k = self.wavenumber(s);
                // the Nyquist slot is evaluated as a cosine to keep the result real
                if s == self.points / 2 {
                    v.re * (k * x).cos()
                } else {
                    (v * C64::new(0.0, k * x).exp()).re
                }
            })
            .sum()
    }
}

/// Discretisation used by a heat model.
#[derive(Debug, Clone)]
pub enum Basis {
    Sine(SineBasis),
    Cosine(CosineBasis),
    Fourier(FourierBox),
}

impl Basis {
    pub fn dim(&self) -> usize {
        match self {
            Basis::Sine(b) => b.synth.ncols(),
            Basis::Cosine(b) => b.synth.ncols(),
            Basis::Fourier(b) => b.points,
        }
    }

    fn wavenumbers(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|k| match self {
                Basis::Sine(b) => b.wavenumber(k),
                Basis::Cosine(b) => b.wavenumber(k),
                Basis::Fourier(b) => b.wavenumber(k),
            })
            .collect()
    }

    pub fn nodes(&self) -> Vec<f64> {
        match self {
            Basis::Sine(b) => midpoints(b.synth.nrows(), b.length),
            Basis::Cosine(b) => midpoints(b.synth.nrows(), b.length),
            Basis::Fourier(b) => b.nodes(),
        }
    }

    pub fn to_grid(&self, c: &[C64]) -> Vec<f64> {
        match self {
            Basis::Sine(b) => real_matvec(&b.synth, c),
            Basis::Cosine(b) => real_matvec(&b.synth, c),
            Basis::Fourier(b) => b.to_grid(c),
        }
    }

    pub fn from_grid(&self, g: &[f64]) -> Vec<C64> {
        match self {
            Basis::Sine(b) => real_matvec_grid(&b.analysis, g),
            Basis::Cosine(b) => real_matvec_grid(&b.analysis, g),
            Basis::Fourier(b) => b.from_grid(g),
        }
    }

    /// `u_x` on the grid.
    pub fn gradient_grid(&self, c: &[C64]) -> Vec<f64> {
        match self {
            Basis::Sine(b) => {
                let d: Vec<C64> = c.iter().enumerate().map(|(k, v)| v * b.wavenumber(k)).collect();
                let n = d.len();
                let x = midpoints(n, b.length);
                (0..n)
                    .map(|m| {
                        d.iter()
                            .enumerate()
                            .map(|(k, v)| v.re * ((k + 1) as f64 * PI * x[m] / b.length).cos())
                            .sum()
                    })
                    .collect()
            }
            Basis::Cosine(b) => real_matvec(&b.gradient, c),
            Basis::Fourier(b) => {
                let d: Vec<C64> = c
                    .iter()
                    .enumerate()
                    .map(|(s, v)| {
                        if s == b.points / 2 {
                            C64::new(0.0, 0.0)
                        } else {
                            v * C64::new(0.0, b.wavenumber(s))
                        }
                    })
                    .collect();
                b.to_grid(&d)
            }
        }
    }

    /// Zeroes modes above two thirds of the resolved range.
    pub fn dealias(&self, c: &mut [C64]) {
        let n = self.dim();
        match self {
            Basis::Fourier(b) => {
                for (s, v) in c.iter_mut().enumerate() {
                    if 3 * b.mode_index(s).unsigned_abs() as usize > n {
                        *v = C64::new(0.0, 0.0);
                    }
                }
            }
            _ => {
                let keep = (2 * n).div_ceil(3);
                for v in c.iter_mut().skip(keep) {
                    *v = C64::new(0.0, 0.0);
                }
            }
        }
    }

    /// `sum (1 + k^2)^sigma |c_k|^2` weighted so that `sigma = 0` is the `L2` norm.
    pub fn norms(&self, c: &[C64], orders: &[f64]) -> Vec<f64> {
        let ks = self.wavenumbers();
        orders
            .iter()
            .map(|s| {
                let total: f64 = c
                    .iter()
                    .zip(&ks)
                    .enumerate()
                    .map(|(i, (v, k))| {
                        let w = match self {
                            Basis::Sine(b) => b.length / 2.0,
                            Basis::Cosine(b) if i == 0 => b.length,
                            Basis::Cosine(b) => b.length / 2.0,
                            Basis::Fourier(b) => 2.0 * b.half_width,
                        };
                        w * (1.0 + k * k).powf(*s) * v.norm_sqr()
                    })
                    .sum();
                total.sqrt()
            })
            .collect()
    }

    /// Homogeneous `|k|^s` seminorm; the zero mode counts only at `s = 0`.
    pub fn homogeneous_seminorm(&self, c: &[C64], s: f64) -> f64 {
        let ks = self.wavenumbers();
        let w = match self {
            Basis::Fourier(b) => 2.0 * b.half_width,
            Basis::Sine(b) => b.length / 2.0,
            Basis::Cosine(b) => b.length / 2.0,
        };
        c.iter()
            .zip(&ks)
            .filter(|(_, k)| **k != 0.0 || s == 0.0)
            .map(|(v, k)| w * if s == 0.0 { 1.0 } else { k.abs().powf(2.0 * s) } * v.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}

fn real_matvec(m: &DMatrix<f64>, c: &[C64]) -> Vec<f64> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * c[j].re).sum())
        .collect()
}

fn real_matvec_grid(m: &DMatrix<f64>, g: &[f64]) -> Vec<C64> {
    (0..m.nrows())
        .map(|i| C64::new((0..m.ncols()).map(|j| m[(i, j)] * g[j]).sum(), 0.0))
        .collect()
}

/// `|u|^{kappa-1} u`.
pub fn power_nonlinearity(u: f64, kappa: f64) -> f64 {
    u.abs().powf(kappa - 1.0) * u
}

/// Pointwise `|u|^{kappa-1} u` of the field, dealiased.
pub fn nonlinearity_semilinear(basis: &Basis, c: &[C64], kappa: f64) -> Vec<C64> {
    let mut input = c.to_vec();
    basis.dealias(&mut input);
    let grid: Vec<f64> = basis
        .to_grid(&input)
        .into_iter()
        .map(|u| power_nonlinearity(u, kappa))
        .collect();
    let mut out = basis.from_grid(&grid);
    basis.dealias(&mut out);
    out
}

/// Pointwise `|u_x|^kappa` via the spectral gradient, dealiased.
pub fn nonlinearity_gradient(basis: &Basis, c: &[C64], kappa: f64) -> Vec<C64> {
    let mut input = c.to_vec();
    basis.dealias(&mut input);
    let grid: Vec<f64> = basis
        .gradient_grid(&input)
        .into_iter()
        .map(|g| g.abs().powf(kappa))
        .collect();
    let mut out = basis.from_grid(&grid);
    basis.dealias(&mut out);
    out
}

/// `u_t = u_xx + |u|^{kappa-1} u`.
#[derive(Debug, Clone)]
pub struct SemilinearHeatModel {
    pub basis: Basis,
    pub kappa: f64,
    pub recipe: Option<CriticalRecipe>,
    exponents: ExponentSet,
    generator: BlockGenerator,
    /// `false` switches the nonlinearity off.
    pub nonlinear: bool,
}

impl SemilinearHeatModel {
    /// Dirichlet problem on `(0, length)` with `modes` sine modes and the critical
    /// exponents of the `H^{s_c}_p` recipe (`n = 1`).
    pub fn dirichlet(modes: usize, length: f64, kappa: f64, p: f64) -> Result<Self, HeatError> {
        let recipe = semilinear_recipe(1, p, kappa)?;
        let basis = Basis::Sine(SineBasis::new(modes, length));
        Ok(Self::build(basis, kappa, Some(recipe.clone()), recipe.exponents))
    }

    /// Free-space surrogate on a periodic box. The recipe need not be admissible
    /// here; the exponents only select the monitored orders (`s_c/2`, `s/2` at `p = 2`).
    pub fn free_space(basis: FourierBox, kappa: f64) -> Result<Self, HeatError> {
        if kappa <= 1.0 {
            return Err(HeatError::Invalid(format!("kappa = {kappa} must exceed 1")));
        }
        let s_c = 0.5 - 2.0 / (kappa - 1.0);
        let s = (kappa - 1.0) / (2.0 * kappa);
        let (alpha, xi) = (s_c / 2.0, s / 2.0);
        let exponents = ExponentSet {
            gamma: 0.0,
            beta_exp: None,
            alpha,
            xi,
            q: kappa,
            mu: xi - alpha,
        };
        Ok(Self::build(Basis::Fourier(basis), kappa, None, exponents))
    }

    fn build(basis: Basis, kappa: f64, recipe: Option<CriticalRecipe>, exponents: ExponentSet) -> Self {
        let generator = BlockGenerator::diagonal(
            basis.wavenumbers().iter().map(|k| C64::new(-k * k, 0.0)).collect(),
        );
        SemilinearHeatModel {
            basis,
            kappa,
            recipe,
            exponents,
            generator,
            nonlinear: true,
        }
    }

    pub fn state_from_fn(&self, f: impl Fn(f64) -> f64) -> Vec<C64> {
        let g: Vec<f64> = self.basis.nodes().into_iter().map(f).collect();
        self.basis.from_grid(&g)
    }
}

impl EvolutionModel for SemilinearHeatModel {
    fn dim(&self) -> usize {
        self.basis.dim()
    }
    fn exponents(&self) -> ExponentSet {
        self.exponents
    }
    fn generator(&self) -> &BlockGenerator {
        &self.generator
    }
    fn nonlinearity(&self, state: &[C64]) -> Vec<C64> {
        if !self.nonlinear {
            return vec![C64::new(0.0, 0.0); state.len()];
        }
        nonlinearity_semilinear(&self.basis, state, self.kappa)
    }
    fn norms(&self, state: &[C64], orders: &[f64]) -> Vec<f64> {
        self.basis.norms(state, orders)
    }
}

/// `a(s) = sum_i c_i s^i`, required to stay above `floor`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diffusivity {
    pub coeffs: Vec<f64>,
    pub floor: f64,
}

impl Diffusivity {
    pub fn constant(a: f64) -> Self {
        Diffusivity {
            coeffs: vec![a],
            floor: 0.0,
        }
    }

    /// `1 + s^2`.
    pub fn one_plus_square() -> Self {
        Diffusivity {
            coeffs: vec![1.0, 0.0, 1.0],
            floor: 0.0,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.iter().skip(1).all(|c| *c == 0.0)
    }
}

/// `u_t = (a(u) u_x)_x + |u_x|^kappa` with the operator realised on the shifted
/// scale `E_theta = H^{2 theta - 2 tau}`.
#[derive(Debug, Clone)]
pub struct QuasilinearHeatModel {
    pub basis: Basis,
    pub kappa: f64,
    pub tau: f64,
    pub diffusivity: Diffusivity,
    pub recipe: Option<CriticalRecipe>,
    exponents: ExponentSet,
    generator: BlockGenerator,
    laplacian: BlockGenerator,
    pub nonlinear: bool,
}

impl QuasilinearHeatModel {
    /// Neumann problem on `(0, length)` with the recipe exponents at `(p, tau)`.
    pub fn neumann(
        modes: usize,
        length: f64,
        kappa: f64,
        p: f64,
        tau: f64,
        diffusivity: Diffusivity,
    ) -> Result<Self, HeatError> {
        let recipe = quasilinear_recipe(1, p, kappa, tau)?;
        let basis = Basis::Cosine(CosineBasis::new(modes, length));
        Self::build(basis, kappa, tau, diffusivity, Some(recipe.clone()), recipe.exponents)
    }

    /// Free-space surrogate; only constant diffusivities are supported. As for the
    /// semilinear surrogate the exponents (`p = 2`, no shift) only select monitored orders.
    pub fn free_space(basis: FourierBox, kappa: f64, diffusivity: Diffusivity) -> Result<Self, HeatError> {
        if !diffusivity.is_constant() {
            return Err(HeatError::Invalid(
                "the periodic box supports constant diffusivity only".into(),
            ));
        }
        if kappa <= 2.0 {
            return Err(HeatError::Invalid(format!("kappa = {kappa} must exceed 2")));
        }
        let s_c = 0.5 + (kappa - 2.0) / (kappa - 1.0);
        let s = 1.0 + (kappa - 1.0) / (2.0 * kappa);
        let exponents = ExponentSet {
            gamma: 0.0,
            beta_exp: None,
            alpha: s_c / 2.0,
            xi: s / 2.0,
            q: kappa,
            mu: (s - s_c) / 2.0,
        };
        Self::build(Basis::Fourier(basis), kappa, 0.0, diffusivity, None, exponents)
    }

    fn build(
        basis: Basis,
        kappa: f64,
        tau: f64,
        diffusivity: Diffusivity,
        recipe: Option<CriticalRecipe>,
        exponents: ExponentSet,
    ) -> Result<Self, HeatError> {
        let a0 = diffusivity.eval(0.0);
        if a0 <= diffusivity.floor {
            return Err(HeatError::Invalid(format!(
                "a(0) = {a0} must exceed the floor {}",
                diffusivity.floor
            )));
        }
        let laplacian = BlockGenerator::diagonal(
            basis.wavenumbers().iter().map(|k| C64::new(-k * k, 0.0)).collect(),
        );
        let generator = laplacian.scaled(a0);
        Ok(QuasilinearHeatModel {
            basis,
            kappa,
            tau,
            diffusivity,
            recipe,
            exponents,
            generator,
            laplacian,
            nonlinear: true,
        })
    }

    pub fn state_from_fn(&self, f: impl Fn(f64) -> f64) -> Vec<C64> {
        let g: Vec<f64> = self.basis.nodes().into_iter().map(f).collect();
        self.basis.from_grid(&g)
    }

    /// `int u dx` (cosine basis: `l` times the mean coefficient).
    pub fn mass(&self, state: &[C64]) -> f64 {
        match &self.basis {
            Basis::Cosine(b) => b.length * state[0].re,
            Basis::Fourier(b) => 2.0 * b.half_width * state[0].re,
            Basis::Sine(_) => f64::NAN,
        }
    }
}

impl EvolutionModel for QuasilinearHeatModel {
    fn dim(&self) -> usize {
        self.basis.dim()
    }
    fn exponents(&self) -> ExponentSet {
        self.exponents
    }
    fn space_order(&self, theta: f64) -> f64 {
        2.0 * theta - 2.0 * self.tau
    }
    fn generator(&self) -> &BlockGenerator {
        &self.generator
    }
    fn is_quasilinear(&self) -> bool {
        !self.diffusivity.is_constant()
    }
    fn frozen_generator(&self, state: &[C64]) -> Result<Cow<'_, BlockGenerator>, ModelError> {
        if self.diffusivity.is_constant() {
            return Ok(Cow::Borrowed(&self.generator));
        }
        let Basis::Cosine(b) = &self.basis else {
            return Err(ModelError::Invalid("variable diffusivity needs the cosine basis".into()));
        };
        let a: Vec<f64> = self
            .basis
            .to_grid(state)
            .into_iter()
            .map(|u| self.diffusivity.eval(u))
            .collect();
        if let Some(v) = a.iter().copied().find(|v| !(*v > self.diffusivity.floor)) {
            return Err(ModelError::Diffusivity {
                value: v,
                floor: self.diffusivity.floor,
            });
        }
        let m = b.divergence_form(&a);
        Ok(Cow::Owned(BlockGenerator::new(vec![Block::dense(to_cmat(&m))])))
    }
    fn nonlinearity(&self, state: &[C64]) -> Vec<C64> {
        if !self.nonlinear {
            return vec![C64::new(0.0, 0.0); state.len()];
        }
        nonlinearity_gradient(&self.basis, state, self.kappa)
    }
    fn norms(&self, state: &[C64], orders: &[f64]) -> Vec<f64> {
        self.basis.norms(state, orders)
    }
}

impl QuasilinearHeatModel {
    /// Neumann Laplacian (unit diffusivity).
    pub fn laplacian(&self) -> &BlockGenerator {
        &self.laplacian
    }
}

/// Which scaling law to apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalingKind {
    Semilinear,
    Quasilinear,
}

/// Amplitude factor of the scaling map.
pub fn scaling_amplitude(kind: ScalingKind, lambda: f64, kappa: f64) -> f64 {
    match kind {
        ScalingKind::Semilinear => lambda.powf(1.0 / (kappa - 1.0)),
        ScalingKind::Quasilinear => lambda.powf(-(kappa - 2.0) / (2.0 * (kappa - 1.0))),
    }
}

/// Radius outside of which `|u|` stays below `rel_tol` times its maximum.
fn support_radius(nodes: &[f64], grid: &[f64], rel_tol: f64) -> f64 {
    let max = grid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    nodes
        .iter()
        .zip(grid)
        .filter(|(_, v)| v.abs() > rel_tol * max)
        .map(|(x, _)| x.abs())
        .fold(0.0, f64::max)
}

/// Relative size below which a field counts as outside its support.
pub const SUPPORT_TOL: f64 = 1e-12;

/// `x -> A u(sqrt(lambda) x)` with `A` from [`scaling_amplitude`], resampled by
/// evaluating the Fourier series of `u` (zero outside the box).
pub fn scaling_transform(
    basis: &FourierBox,
    c: &[C64],
    lambda: f64,
    kind: ScalingKind,
    kappa: f64,
) -> Result<Vec<C64>, HeatError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(HeatError::Invalid(format!("lambda = {lambda} must be positive")));
    }
    if lambda == 1.0 {
        return Ok(c.to_vec());
    }
    let nodes = basis.nodes();
    let grid = basis.to_grid(c);
    let radius = support_radius(&nodes, &grid, SUPPORT_TOL) / lambda.sqrt();
    if radius >= basis.half_width {
        return Err(HeatError::SupportExitsBox {
            radius,
            half_width: basis.half_width,
        });
    }
    let amp = scaling_amplitude(kind, lambda, kappa);
    let root = lambda.sqrt();
    let scaled: Vec<f64> = nodes
        .iter()
        .map(|x| amp * basis.evaluate(c, root * x))
        .collect();
    Ok(basis.from_grid(&scaled))
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub lambda: f64,
    pub amplitude: f64,
    pub t_end: f64,
    /// `|S(u(T)) - v(T/lambda)|_{L2} / |v(T/lambda)|_{L2}`.
    pub relative_discrepancy: f64,
}

/// Evolves `u0` to `T`, rescales, and compares with the evolution of the rescaled
/// data to `T / lambda` (step `dt / lambda`).
pub fn scaling_roundtrip_test<M: EvolutionModel>(
    model: &M,
    basis: &FourierBox,
    u0: &[C64],
    lambda: f64,
    kind: ScalingKind,
    kappa: f64,
    config: &SolverConfig,
) -> Result<ScalingReport, HeatError> {
    let direct = run_simulation(model, u0, config)?;
    let transformed = scaling_transform(basis, &direct.final_state, lambda, kind, kappa)?;
    let v0 = scaling_transform(basis, u0, lambda, kind, kappa)?;
    let mut scaled_cfg = config.clone();
    scaled_cfg.t_end = config.t_end / lambda;
    scaled_cfg.time_step = match config.time_step {
        crate::mild::TimeStep::Fixed(dt) => crate::mild::TimeStep::Fixed(dt / lambda),
        other => other,
    };
    let scaled = run_simulation(model, &v0, &scaled_cfg)?;
    let diff: Vec<C64> = transformed
        .iter()
        .zip(&scaled.final_state)
        .map(|(a, b)| a - b)
        .collect();
    let num = model.norms(&diff, &[0.0])[0];
    let den = model.norms(&scaled.final_state, &[0.0])[0];
    Ok(ScalingReport {
        lambda,
        amplitude: scaling_amplitude(kind, lambda, kappa),
        t_end: config.t_end,
        relative_discrepancy: num / den,
    })
}
