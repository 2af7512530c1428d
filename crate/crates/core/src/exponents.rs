//! Exponent arithmetic for the critical fixed-point framework.
//!
//! An [`ExponentSet`] collects the interpolation exponents `gamma < (beta) < alpha < xi`
//! together with the superlinearity exponent `q` and the time weight `mu = xi - alpha`.
//! The critical identity `q (xi - alpha) = 1 + gamma - alpha` ties them together; the
//! recipes below derive admissible sets for the semilinear (Dirichlet) and quasilinear
//! (Neumann) heat equations from the integrability index `p` and the power `kappa`.

use serde::Serialize;
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Tolerance for identities that hold exactly in real arithmetic.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExponentError {
    #[error("exponent ordering violated: {0}")]
    Ordering(&'static str),
    #[error("q = {0} is not superlinear (q > 1 required)")]
    NotSuperlinear(f64),
    #[error("critical identity q(xi-alpha) = 1+gamma-alpha violated, residual {residual:e}")]
    CriticalIdentity { residual: f64 },
    #[error("Beta arguments must be positive, got B({a}, {b})")]
    BetaArgument { a: f64, b: f64 },
    #[error("constraint `{name}` violated: {detail}")]
    Constraint { name: &'static str, detail: String },
    #[error("Sobolev index {name} = {value} hits the excluded value {excluded}")]
    ExcludedIndex {
        name: &'static str,
        value: f64,
        excluded: f64,
    },
}

/// Validated exponents `(gamma, beta_exp, alpha, xi, q, mu)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExponentSet {
    pub gamma: f64,
    pub beta_exp: Option<f64>,
    pub alpha: f64,
    pub xi: f64,
    pub q: f64,
    pub mu: f64,
}

impl ExponentSet {
    /// Residual `q(xi - alpha) - (1 + gamma - alpha)`.
    pub fn residual(&self) -> f64 {
        critical_residual(self.gamma, self.alpha, self.xi, self.q)
    }

    /// Exponent used by the Hölder/`C([0,T], E_beta)` part of the metric; the
    /// semilinear framework measures that part in `E_alpha`.
    pub fn metric_exponent(&self) -> f64 {
        self.beta_exp.unwrap_or(self.alpha)
    }

    /// Builds the set whose `q` is fixed by the critical identity.
    pub fn critical(
        gamma: f64,
        beta_exp: Option<f64>,
        alpha: f64,
        xi: f64,
    ) -> Result<Self, ExponentError> {
        if xi <= alpha {
            return Err(ExponentError::Ordering("alpha < xi"));
        }
        validate_exponents(gamma, beta_exp, alpha, xi, (1.0 + gamma - alpha) / (xi - alpha))
    }

    pub fn beta_constants(&self) -> Result<BetaConstants, ExponentError> {
        let mut b_theta = BTreeMap::new();
        let mut thetas = vec![("gamma", self.gamma), ("alpha", self.alpha), ("xi", self.xi)];
        if let Some(b) = self.beta_exp {
            thetas.push(("beta", b));
        }
        for (name, theta) in thetas {
            b_theta.insert(
                name.to_string(),
                beta_constant(self.gamma, theta, self.mu, self.q)?,
            );
        }
        Ok(BetaConstants { b_theta })
    }
}

fn critical_residual(gamma: f64, alpha: f64, xi: f64, q: f64) -> f64 {
    q * (xi - alpha) - (1.0 + gamma - alpha)
}

/// Checks ordering, superlinearity and the critical identity.
///
/// Without `beta_exp` the semilinear ordering `0 <= gamma < alpha < xi <= 1` applies;
/// with it, the quasilinear ordering `0 < gamma < beta < alpha < xi < 1`.
pub fn validate_exponents(
    gamma: f64,
    beta_exp: Option<f64>,
    alpha: f64,
    xi: f64,
    q: f64,
) -> Result<ExponentSet, ExponentError> {
    let all = [Some(gamma), beta_exp, Some(alpha), Some(xi), Some(q)];
    if all.iter().flatten().any(|v| !v.is_finite()) {
        return Err(ExponentError::Ordering("exponents must be finite"));
    }
    match beta_exp {
        None => {
            if gamma < 0.0 {
                return Err(ExponentError::Ordering("0 <= gamma"));
            }
            if gamma >= alpha {
                return Err(ExponentError::Ordering("gamma < alpha"));
            }
            if alpha >= xi {
                return Err(ExponentError::Ordering("alpha < xi"));
            }
            if xi > 1.0 {
                return Err(ExponentError::Ordering("xi <= 1"));
            }
        }
        Some(beta) => {
            if gamma <= 0.0 {
                return Err(ExponentError::Ordering("0 < gamma"));
            }
            if gamma >= beta {
                return Err(ExponentError::Ordering("gamma < beta"));
            }
            if beta >= alpha {
                return Err(ExponentError::Ordering("beta < alpha"));
            }
            if alpha >= xi {
                return Err(ExponentError::Ordering("alpha < xi"));
            }
            if xi >= 1.0 {
                return Err(ExponentError::Ordering("xi < 1"));
            }
        }
    }
    if q <= 1.0 {
        return Err(ExponentError::NotSuperlinear(q));
    }
    let residual = critical_residual(gamma, alpha, xi, q);
    if residual.abs() > IDENTITY_TOL {
        return Err(ExponentError::CriticalIdentity { residual });
    }
    Ok(ExponentSet {
        gamma,
        beta_exp,
        alpha,
        xi,
        q,
        mu: xi - alpha,
    })
}

/// `B_theta` values keyed by exponent name (`gamma`, `beta`, `alpha`, `xi`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaConstants {
    pub b_theta: BTreeMap<String, f64>,
}

impl BetaConstants {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.b_theta.get(name).copied()
    }
}

/// `B(1 + gamma - theta, 1 - mu q)`, the exact value of
/// `t^{theta - gamma - 1 + mu q} int_0^t (t - s)^{gamma - theta} s^{-mu q} ds`.
pub fn beta_constant(gamma: f64, theta: f64, mu: f64, q: f64) -> Result<f64, ExponentError> {
    beta_function(1.0 + gamma - theta, 1.0 - mu * q)
}

/// Euler Beta function via log-Gamma.
pub fn beta_function(a: f64, b: f64) -> Result<f64, ExponentError> {
    if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(ExponentError::BetaArgument { a, b });
    }
    Ok((ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp())
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Gamma(x)` for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Which heat-equation example a recipe belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RecipeKind {
    Semilinear,
    Quasilinear,
}

/// Critical-space data for the heat-equation examples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriticalRecipe {
    pub kind: RecipeKind,
    pub n: usize,
    pub p: f64,
    pub kappa_exp: f64,
    pub tau: Option<f64>,
    /// Critical scaling-invariant Sobolev index.
    pub s_c: f64,
    /// Sobolev index of the nonlinearity's domain.
    pub s: f64,
    /// `2 tau + n/p` (quasilinear only).
    pub s_bar: Option<f64>,
    pub mu: f64,
    /// Hölder exponent in time (quasilinear only).
    pub theta_holder: Option<f64>,
    pub exponents: ExponentSet,
}

fn constraint(ok: bool, name: &'static str, detail: String) -> Result<(), ExponentError> {
    if ok {
        Ok(())
    } else {
        Err(ExponentError::Constraint { name, detail })
    }
}

fn excluded(name: &'static str, value: f64, excluded: f64) -> Result<(), ExponentError> {
    if (value - excluded).abs() <= IDENTITY_TOL {
        Err(ExponentError::ExcludedIndex {
            name,
            value,
            excluded,
        })
    } else {
        Ok(())
    }
}

/// Exponents for `u_t = Delta u + |u|^{kappa-1} u` with Dirichlet data in `H^{s_c}_p`.
pub fn semilinear_recipe(n: usize, p: f64, kappa: f64) -> Result<CriticalRecipe, ExponentError> {
    constraint(n >= 1, "n >= 1", format!("n = {n}"))?;
    let nf = n as f64;
    constraint(
        kappa > 1.0 + 2.0 / nf,
        "kappa > 1 + 2/n",
        format!("kappa = {kappa}, 1 + 2/n = {}", 1.0 + 2.0 / nf),
    )?;
    let lower = 1f64.max(nf * (kappa - 1.0) / (2.0 * kappa));
    constraint(
        p > lower,
        "p > max{1, n(kappa-1)/(2 kappa)}",
        format!("p = {p}, bound = {lower}"),
    )?;
    let upper = nf * (kappa - 1.0) / 2.0;
    constraint(
        p < upper,
        "p < n(kappa-1)/2",
        format!("p = {p}, bound = {upper}"),
    )?;
    let s_c = nf / p - 2.0 / (kappa - 1.0);
    let s = nf * (kappa - 1.0) / (p * kappa);
    // p = (n-1)(kappa-1)/2 is exactly s_c = 1/p
    excluded("s_c", s_c, 1.0 / p)?;
    excluded("s", s, 1.0 / p)?;
    let mu = 1.0 / (kappa - 1.0) - nf / (2.0 * p * kappa);
    let exponents = validate_exponents(0.0, None, s_c / 2.0, s / 2.0, kappa)?;
    Ok(CriticalRecipe {
        kind: RecipeKind::Semilinear,
        n,
        p,
        kappa_exp: kappa,
        tau: None,
        s_c,
        s,
        s_bar: None,
        mu,
        theta_holder: None,
        exponents,
    })
}

/// Exponents for `u_t = div(a(u) grad u) + |grad u|^kappa` with Neumann data in
/// `H^{s_c}_p`, realised on the shifted scale `E_theta = H^{2 theta - 2 tau}`.
pub fn quasilinear_recipe(
    n: usize,
    p: f64,
    kappa: f64,
    tau: f64,
) -> Result<CriticalRecipe, ExponentError> {
    constraint(n >= 1, "n >= 1", format!("n = {n}"))?;
    let nf = n as f64;
    constraint(kappa > 3.0, "kappa > 3", format!("kappa = {kappa}"))?;
    constraint(p > 2.0 * nf, "p > 2n", format!("p = {p}, bound = {}", 2.0 * nf))?;
    constraint(
        p < (kappa - 1.0) * nf,
        "p < (kappa-1)n",
        format!("p = {p}, bound = {}", (kappa - 1.0) * nf),
    )?;
    constraint(
        0.5 < 2.0 * tau,
        "1/2 < 2 tau",
        format!("2 tau = {}", 2.0 * tau),
    )?;
    constraint(
        2.0 * tau < 1.0 - nf / p,
        "2 tau < 1 - n/p",
        format!("2 tau = {}, bound = {}", 2.0 * tau, 1.0 - nf / p),
    )?;
    let s_bar = 2.0 * tau + nf / p;
    let s_c = nf / p + (kappa - 2.0) / (kappa - 1.0);
    let s = 1.0 + nf * (kappa - 1.0) / (p * kappa);
    // p = (n-1)(kappa-1) is exactly s_c = 1 + 1/p
    excluded("s_c", s_c, 1.0 + 1.0 / p)?;
    excluded("s", s, 1.0 + 1.0 / p)?;
    excluded("s_bar", s_bar, 1.0 + 1.0 / p)?;
    let mu = 1.0 / (2.0 * (kappa - 1.0)) - nf / (2.0 * p * kappa);
    let theta_holder = (kappa - 2.0) / (2.0 * (kappa - 1.0)) - tau;
    let exponents = validate_exponents(
        tau,
        Some(tau + s_bar / 2.0),
        tau + s_c / 2.0,
        tau + s / 2.0,
        kappa,
    )?;
    Ok(CriticalRecipe {
        kind: RecipeKind::Quasilinear,
        n,
        p,
        kappa_exp: kappa,
        tau: Some(tau),
        s_c,
        s,
        s_bar: Some(s_bar),
        mu,
        theta_holder: Some(theta_holder),
        exponents,
    })
}

/// Homogeneous Sobolev index left invariant by the semilinear scaling at `p`.
pub fn semilinear_scaling_index(n: usize, p: f64, kappa: f64) -> f64 {
    n as f64 / p - 2.0 / (kappa - 1.0)
}

/// Homogeneous Sobolev index left invariant by the quasilinear scaling at `p`.
pub fn quasilinear_scaling_index(n: usize, p: f64, kappa: f64) -> f64 {
    n as f64 / p + (kappa - 2.0) / (kappa - 1.0)
}
