//! The linearised cloud-layer operator `A = nu Delta_D + eta - beta T d/dx` on the strip
//! and the full nonlinear model `u' = A u + u_y T u_x - u u_x`.
//!
//! After a Fourier transform in `x`, mode `n` obeys
//! `nu (D_yy - k_n^2) + eta - i beta k_n F` on the interior Chebyshev rows, where
//! `F` integrates from `y = 0`. Modes are independent blocks of one generator.

use crate::exponents::{validate_exponents, ExponentSet};
use crate::generator::{Block, BlockGenerator};
use crate::linalg::{eigen_decompose, eigenvalues, expm, matvec, CMat, EigenDecomposition, LinalgError, C64};
use crate::mild::EvolutionModel;
use crate::strip::{SpectralField, StripSpace};
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CloudError {
    #[error("nu = {0} must be positive")]
    Viscosity(f64),
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("mode {n} outside |n| <= {max}")]
    Mode { n: i64, max: i64 },
    #[error("negative time {0}")]
    NegativeTime(f64),
    #[error("eigensolver failed on mode {mode}: {source}")]
    Eigensolver { mode: i64, source: LinalgError },
    #[error("vector has length {got}, mode operator has dimension {expected}")]
    Dimension { expected: usize, got: usize },
}

/// `(nu, eta, beta)` with `nu > 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloudCoefficients {
    pub nu: f64,
    pub eta: f64,
    pub beta: f64,
}

impl CloudCoefficients {
    pub fn new(nu: f64, eta: f64, beta: f64) -> Result<Self, CloudError> {
        let c = CloudCoefficients { nu, eta, beta };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), CloudError> {
        if !(self.nu.is_finite() && self.eta.is_finite() && self.beta.is_finite()) {
            return Err(CloudError::NonFinite);
        }
        if self.nu <= 0.0 {
            return Err(CloudError::Viscosity(self.nu));
        }
        Ok(())
    }
}

/// Energy-estimate upper bound for the spectral bound on the non-periodic strip:
/// `eta + |beta| pi/2 + max{|beta|/(2 nu), pi} (|beta|/2 - pi nu)`.
pub fn analytic_bound_nonperiodic(c: &CloudCoefficients) -> f64 {
    let b = c.beta.abs();
    c.eta + b * PI / 2.0 + (b / (2.0 * c.nu)).max(PI) * (b / 2.0 - PI * c.nu)
}

/// `eta + beta^2 / (16 nu) < pi^2 nu`, which forces a negative spectral bound on the
/// periodic strip.
pub fn periodic_stability_condition(c: &CloudCoefficients) -> bool {
    c.eta + c.beta * c.beta / (16.0 * c.nu) < PI * PI * c.nu
}

/// One Fourier mode of the generator on the interior rows.
#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub mode: i64,
    pub wavenumber: f64,
    pub matrix: CMat,
    /// `None` when the eigensolver failed; see `eig_error`.
    pub eig: Option<EigenDecomposition>,
    pub eig_error: Option<LinalgError>,
}

fn mode_matrix(space: &StripSpace, c: &CloudCoefficients, n: i64) -> CMat {
    let g = space.geometry;
    let k = g.wavenumber(n);
    let m = g.ny - 2;
    let cheb = &space.cheb;
    CMat::from_fn(m, m, |i, j| {
        let (r, s) = (i + 1, j + 1);
        let mut v = C64::new(c.nu * cheb.d2[(r, s)], -c.beta * k * cheb.cumulative[(r, s)]);
        if i == j {
            v += C64::new(c.eta - c.nu * k * k, 0.0);
        }
        v
    })
}

/// Assembles and eigendecomposes mode `n`.
pub fn assemble_mode(
    space: &StripSpace,
    c: &CloudCoefficients,
    n: i64,
) -> Result<ModeOperator, CloudError> {
    c.validate()?;
    let max = (space.geometry.nx / 2) as i64;
    if n.abs() > max {
        return Err(CloudError::Mode { n, max });
    }
    let matrix = mode_matrix(space, c, n);
    let (eig, eig_error) = match eigen_decompose(&matrix) {
        Ok(e) => (Some(e), None),
        Err(e) => (None, Some(e)),
    };
    Ok(ModeOperator {
        mode: n,
        wavenumber: space.geometry.wavenumber(n),
        matrix,
        eig,
        eig_error,
    })
}

impl ModeOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    /// `e^{tA_n} v`; ill-conditioned or failed eigendecompositions use the Pade exponential.
    pub fn semigroup_apply(&self, t: f64, v: &[C64]) -> Result<Vec<C64>, CloudError> {
        if t < 0.0 || t.is_nan() {
            return Err(CloudError::NegativeTime(t));
        }
        if v.len() != self.dim() {
            return Err(CloudError::Dimension {
                expected: self.dim(),
                got: v.len(),
            });
        }
        if t == 0.0 {
            return Ok(v.to_vec());
        }
        match &self.eig {
            Some(e) if e.is_well_conditioned() => Ok(e.apply_function(|l| (l * t).exp(), v)),
            _ => Ok(matvec(&expm(&self.matrix.scale(t)), v)),
        }
    }

    /// Eigenvalue with the largest real part.
    pub fn top_eigenvalue(&self) -> Option<C64> {
        self.eig.as_ref().map(|e| {
            e.values
                .iter()
                .copied()
                .fold(C64::new(f64::NEG_INFINITY, 0.0), |a, b| if b.re > a.re { b } else { a })
        })
    }
}

pub fn semigroup_apply(op: &ModeOperator, t: f64, v: &[C64]) -> Result<Vec<C64>, CloudError> {
    op.semigroup_apply(t, v)
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeBound {
    pub n: i64,
    pub re_lambda_max: f64,
    pub im_lambda_at_max: f64,
}

/// Largest real part over the modes `0 <= n <= n_max`. Coefficients are real, so mode
/// `-n` has the conjugate spectrum of mode `n`. The value is a truncation of the
/// bound of the continuous operator.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralBoundReport {
    pub bound: f64,
    pub n_max: i64,
    pub argmax_mode: i64,
    pub modes: Vec<ModeBound>,
}

pub fn spectral_bound_numeric(
    space: &StripSpace,
    c: &CloudCoefficients,
    n_max: Option<usize>,
) -> Result<SpectralBoundReport, CloudError> {
    c.validate()?;
    let max = space.geometry.nx / 2;
    let n_max = n_max.unwrap_or(space.geometry.nx / 3);
    if n_max > max {
        return Err(CloudError::Mode {
            n: n_max as i64,
            max: max as i64,
        });
    }
    let modes: Vec<ModeBound> = (0..=n_max as i64)
        .into_par_iter()
        .map(|n| {
            let values = eigenvalues(&mode_matrix(space, c, n))
                .map_err(|source| CloudError::Eigensolver { mode: n, source })?;
            let top = values
                .iter()
                .copied()
                .fold(C64::new(f64::NEG_INFINITY, 0.0), |a, b| if b.re > a.re { b } else { a });
            Ok(ModeBound {
                n,
                re_lambda_max: top.re,
                im_lambda_at_max: top.im,
            })
        })
        .collect::<Result<_, CloudError>>()?;
    let (argmax_mode, bound) = modes
        .iter()
        .map(|m| (m.n, m.re_lambda_max))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    Ok(SpectralBoundReport {
        bound,
        n_max: n_max as i64,
        argmax_mode,
        modes,
    })
}

/// `u_y T u_x - u u_x` on the full grid, products formed on the collocation grid
/// from inputs and outputs truncated to `|n| <= nx/3`.
pub fn nonlinearity_cloud(u: &SpectralField) -> SpectralField {
    let space = u.space().clone();
    let coeffs = cloud_source(&space, &u.coeffs, true);
    SpectralField::from_coeffs(&space, coeffs).expect("same grid")
}

fn dealias(space: &StripSpace, coeffs: &mut [C64]) {
    let g = space.geometry;
    for s in 0..g.nx {
        if !g.dealiased(g.mode_index(s)) {
            for v in &mut coeffs[s * g.ny..(s + 1) * g.ny] {
                *v = C64::new(0.0, 0.0);
            }
        }
    }
}

fn cloud_source(space: &StripSpace, coeffs: &[C64], truncate: bool) -> Vec<C64> {
    let mut c = coeffs.to_vec();
    if truncate {
        dealias(space, &mut c);
    }
    let ux = space.derivative_x(&c);
    let uy = space.derivative_y(&c);
    let tux = space.cumulative_y(&ux);
    let [u, ux, uy, tux] = [&c, &ux, &uy, &tux].map(|v| space.synthesize(v));
    let prod: Vec<f64> = (0..u.len())
        .map(|i| uy[i] * tux[i] - u[i] * ux[i])
        .collect();
    let mut out = space.analyze(&prod);
    if truncate {
        dealias(space, &mut out);
    }
    out
}

/// The nonlinear cloud model on a strip grid.
pub struct CloudModel {
    space: Arc<StripSpace>,
    pub coefficients: CloudCoefficients,
    generator: BlockGenerator,
    /// `false` switches the nonlinearity off.
    pub nonlinear: bool,
    pub dealias: bool,
}

impl CloudModel {
    pub fn new(space: Arc<StripSpace>, c: CloudCoefficients) -> Result<Self, CloudError> {
        c.validate()?;
        let g = space.geometry;
        let half = g.nx / 2;
        // modes 0..=nx/2 assembled; negative modes are conjugates
        let positive: Vec<Block> = (0..=half as i64)
            .into_par_iter()
            .map(|n| Block::dense(mode_matrix(&space, &c, n)))
            .collect();
        let blocks = (0..g.nx)
            .map(|s| {
                let n = g.mode_index(s);
                if n >= 0 {
                    positive[n as usize].clone()
                } else if n == -(half as i64) {
                    Block::dense(mode_matrix(&space, &c, n))
                } else {
                    conjugate_block(&positive[(-n) as usize])
                }
            })
            .collect();
        Ok(CloudModel {
            space,
            coefficients: c,
            generator: BlockGenerator::new(blocks),
            nonlinear: true,
            dealias: true,
        })
    }

    pub fn space(&self) -> &Arc<StripSpace> {
        &self.space
    }

    fn interior(&self) -> usize {
        self.space.geometry.ny - 2
    }

    /// Full coefficient field with zero boundary rows.
    pub fn to_field(&self, state: &[C64]) -> SpectralField {
        let g = self.space.geometry;
        let m = self.interior();
        let mut coeffs = vec![C64::new(0.0, 0.0); g.nx * g.ny];
        for s in 0..g.nx {
            coeffs[s * g.ny + 1..s * g.ny + 1 + m].copy_from_slice(&state[s * m..(s + 1) * m]);
        }
        SpectralField::from_coeffs(&self.space, coeffs).expect("same grid")
    }

    /// Interior rows of a field; boundary values are discarded.
    pub fn from_field(&self, field: &SpectralField) -> Vec<C64> {
        let g = self.space.geometry;
        let m = self.interior();
        (0..g.nx)
            .flat_map(|s| field.coeffs[s * g.ny + 1..s * g.ny + 1 + m].iter().copied())
            .collect()
    }

    pub fn state_from_fn(&self, f: impl Fn(f64, f64) -> f64) -> Vec<C64> {
        self.from_field(&SpectralField::from_fn(&self.space, f))
    }
}

fn conjugate_block(b: &Block) -> Block {
    match b {
        Block::Diagonal(d) => Block::Diagonal(d.iter().map(|z| z.conj()).collect()),
        Block::Dense { matrix, eig } => Block::Dense {
            matrix: matrix.map(|z| z.conj()),
            eig: eig.as_ref().map(|e| EigenDecomposition {
                values: e.values.iter().map(|z| z.conj()).collect(),
                vectors: e.vectors.map(|z| z.conj()),
                inverse: e.inverse.map(|z| z.conj()),
                condition: e.condition,
            }),
        },
    }
}

impl EvolutionModel for CloudModel {
    fn dim(&self) -> usize {
        self.space.geometry.nx * self.interior()
    }

    /// `E_theta = H^{2 theta}`, `alpha = 1/2`, `xi = 3/4`, `q = 2`.
    fn exponents(&self) -> ExponentSet {
        validate_exponents(0.0, None, 0.5, 0.75, 2.0).expect("cloud exponents are critical")
    }

    fn generator(&self) -> &BlockGenerator {
        &self.generator
    }

    fn nonlinearity(&self, state: &[C64]) -> Vec<C64> {
        if !self.nonlinear {
            return vec![C64::new(0.0, 0.0); state.len()];
        }
        let field = self.to_field(state);
        let src = cloud_source(&self.space, &field.coeffs, self.dealias);
        let full = SpectralField::from_coeffs(&self.space, src).expect("same grid");
        self.from_field(&full)
    }

    fn norms(&self, state: &[C64], orders: &[f64]) -> Vec<f64> {
        let field = self.to_field(state);
        self.space
            .sobolev_norms_squared(&field.coeffs, orders)
            .into_iter()
            .map(f64::sqrt)
            .collect()
    }
}
