//! Dense complex linear algebra used by the spectral operators: eigendecomposition of
//! non-normal matrices through the complex Schur form, a scaling-and-squaring matrix
//! exponential, and the exponential-integrator functions `phi_k`.

use nalgebra::{DMatrix, DVector, Schur};
use num_complex::Complex64;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

/// Eigenvector condition numbers above this switch propagators to the matrix exponential.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("Schur iteration did not converge for a {0}x{0} matrix")]
    SchurFailed(usize),
    #[error("eigenvector matrix is singular")]
    SingularEigenvectors,
    #[error("non-finite entries in {0}")]
    NonFinite(&'static str),
}

/// `A = V diag(values) V^{-1}`.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<C64>,
    pub vectors: CMat,
    pub inverse: CMat,
    /// Frobenius-norm estimate `|V|_F |V^{-1}|_F`, an upper bound of the 2-norm condition.
    pub condition: f64,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_well_conditioned(&self) -> bool {
        self.condition.is_finite() && self.condition <= DEFECTIVE_CONDITION
    }

    /// `V diag(g(values)) V^{-1}` as a dense matrix.
    pub fn function_matrix(&self, g: impl Fn(C64) -> C64) -> CMat {
        let n = self.dim();
        let mut scaled = self.vectors.clone();
        for j in 0..n {
            let gj = g(self.values[j]);
            for i in 0..n {
                scaled[(i, j)] *= gj;
            }
        }
        scaled * &self.inverse
    }

    /// `V diag(g(values)) V^{-1} x` without forming the matrix.
    pub fn apply_function(&self, g: impl Fn(C64) -> C64, x: &[C64]) -> Vec<C64> {
        let n = self.dim();
        let mut coeff = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..n {
                acc += self.inverse[(i, j)] * x[j];
            }
            coeff[i] = acc * g(self.values[i]);
        }
        let mut out = vec![C64::new(0.0, 0.0); n];
        for j in 0..n {
            let c = coeff[j];
            for (i, o) in out.iter_mut().enumerate() {
                *o += self.vectors[(i, j)] * c;
            }
        }
        out
    }

    /// `max_j |A v_j - lambda_j v_j|` over unit-norm eigenvectors.
    pub fn residual(&self, a: &CMat) -> f64 {
        let av = a * &self.vectors;
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            let col_norm = self.vectors.column(j).norm();
            let r = (av.column(j) - self.vectors.column(j) * self.values[j]).norm() / col_norm;
            worst = worst.max(r);
        }
        worst
    }
}

/// Eigenvalues and eigenvectors of a general complex matrix.
///
/// The matrix is reduced to complex Schur form `A = Q T Q^*`; eigenvectors of the
/// triangular factor are obtained by back substitution and mapped back through `Q`.
pub fn eigen_decompose(a: &CMat) -> Result<EigenDecomposition, LinalgError> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigen_decompose needs a square matrix");
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite("matrix"));
    }
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: CMat::zeros(0, 0),
            inverse: CMat::zeros(0, 0),
            condition: 1.0,
        });
    }
    let schur = Schur::try_new(a.clone(), 1e-15, 10_000).ok_or(LinalgError::SchurFailed(n))?;
    let (q, t) = schur.unpack();
    let values: Vec<C64> = (0..n).map(|i| t[(i, i)]).collect();

    let scale = t.iter().map(|z| z.norm()).fold(0.0f64, f64::max).max(f64::MIN_POSITIVE);
    let small = scale * f64::EPSILON;
    let mut y = CMat::zeros(n, n);
    for k in 0..n {
        let lambda = values[k];
        y[(k, k)] = C64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = t[(i, k)];
            for j in (i + 1)..k {
                acc += t[(i, j)] * y[(j, k)];
            }
            let mut pivot = t[(i, i)] - lambda;
            if pivot.norm() < small {
                pivot = C64::new(small, 0.0);
            }
            y[(i, k)] = -acc / pivot;
        }
    }
    let mut vectors = q * y;
    for j in 0..n {
        let norm = vectors.column(j).norm();
        if norm > 0.0 {
            vectors.column_mut(j).unscale_mut(norm);
        }
    }
    let inverse = vectors.clone().try_inverse().ok_or(LinalgError::SingularEigenvectors)?;
    if inverse.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::SingularEigenvectors);
    }
    let condition = vectors.norm() * inverse.norm();
    Ok(EigenDecomposition {
        values,
        vectors,
        inverse,
        condition,
    })
}

/// Eigenvalues only, read off the complex Schur form.
pub fn eigenvalues(a: &CMat) -> Result<Vec<C64>, LinalgError> {
    let n = a.nrows();
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(LinalgError::NonFinite("matrix"));
    }
    if n == 0 {
        return Ok(vec![]);
    }
    let schur = Schur::try_new(a.clone(), 1e-15, 10_000).ok_or(LinalgError::SchurFailed(n))?;
    let t = schur.unpack().1;
    Ok((0..n).map(|i| t[(i, i)]).collect())
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with the degree-13 Pade approximant.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    let id = CMat::identity(n, n);
    let norm = one_norm(a);
    let theta13 = 5.371920351148152;
    let s = if norm > theta13 {
        (norm / theta13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = a.unscale(2f64.powi(s));
    let b = &PADE13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.scale(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.scale(b[0]);
    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .unwrap_or_else(|| CMat::from_element(n, n, C64::new(f64::NAN, f64::NAN)));
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// `[phi_0(A), phi_1(A), phi_2(A)]` from one exponential of the block matrix
/// `[[A, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn phi_matrices_expm(a: &CMat) -> [CMat; 3] {
    let n = a.nrows();
    let mut big = CMat::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    for i in 0..n {
        big[(i, n + i)] = C64::new(1.0, 0.0);
        big[(n + i, 2 * n + i)] = C64::new(1.0, 0.0);
    }
    let e = expm(&big);
    [
        e.view((0, 0), (n, n)).into_owned(),
        e.view((0, n), (n, n)).into_owned(),
        e.view((0, 2 * n), (n, n)).into_owned(),
    ]
}

/// `phi_k(z)` for `k = 0, 1, 2`; small arguments use the Taylor series.
pub fn phi(k: usize, z: C64) -> C64 {
    match k {
        0 => z.exp(),
        1 => {
            if z.norm() < 1.0 {
                series(z, 1)
            } else {
                (z.exp() - 1.0) / z
            }
        }
        2 => {
            if z.norm() < 1.0 {
                series(z, 2)
            } else {
                (z.exp() - 1.0 - z) / (z * z)
            }
        }
        _ => panic!("phi_{k} is not provided"),
    }
}

/// `sum_j z^j / (j + k)!`
fn series(z: C64, k: usize) -> C64 {
    let mut fact = 1.0;
    for i in 2..=k {
        fact *= i as f64;
    }
    let mut term = C64::new(1.0 / fact, 0.0);
    let mut sum = term;
    for j in 1..30 {
        term = term * z / (j + k) as f64;
        sum += term;
        if term.norm() < 1e-18 * sum.norm() {
            break;
        }
    }
    sum
}

pub fn phi_real(k: usize, z: f64) -> f64 {
    phi(k, C64::new(z, 0.0)).re
}

pub fn matvec(a: &CMat, x: &[C64]) -> Vec<C64> {
    let n = a.nrows();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj.re == 0.0 && xj.im == 0.0 {
            continue;
        }
        for (i, o) in out.iter_mut().enumerate() {
            *o += a[(i, j)] * xj;
        }
    }
    out
}

pub fn to_cmat(a: &DMatrix<f64>) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

pub fn cvec_norm(x: &[C64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn to_dvector(x: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmat(n: usize, seed: u64) -> CMat {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        CMat::from_fn(n, n, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    #[test]
    fn eigen_residual_small_on_random_matrices() {
        for seed in 0..5 {
            let a = random_cmat(30, seed);
            let eig = eigen_decompose(&a).unwrap();
            assert!(eig.residual(&a) < 1e-10 * a.norm(), "seed {seed}");
            let back = eig.function_matrix(|z| z);
            assert!((back - &a).norm() < 1e-9 * a.norm());
        }
    }

    #[test]
    fn expm_of_diagonal_matches_scalar_exponentials() {
        let a = CMat::from_diagonal(&DVector::from_vec(vec![
            C64::new(-3.0, 1.0),
            C64::new(0.5, 0.0),
            C64::new(-40.0, 2.0),
        ]));
        let e = expm(&a);
        for i in 0..3 {
            assert!((e[(i, i)] - a[(i, i)].exp()).norm() < 1e-13 * a[(i, i)].exp().norm().max(1.0));
        }
    }

    #[test]
    fn expm_agrees_with_eigendecomposition() {
        let a = random_cmat(12, 7) * C64::new(3.0, 0.0);
        let eig = eigen_decompose(&a).unwrap();
        let via_eig = eig.function_matrix(|z| z.exp());
        let via_pade = expm(&a);
        assert!((via_eig - &via_pade).norm() < 1e-9 * via_pade.norm());
    }

    #[test]
    fn phi_series_and_closed_form_agree_near_switch() {
        for &r in &[0.999, 1.001] {
            for k in 1..=2 {
                let z = C64::new(-r, 0.0);
                let closed = match k {
                    1 => (z.exp() - 1.0) / z,
                    _ => (z.exp() - 1.0 - z) / (z * z),
                };
                assert!((phi(k, z) - closed).norm() < 1e-14);
            }
        }
        assert_eq!(phi(1, C64::new(0.0, 0.0)), C64::new(1.0, 0.0));
        assert_eq!(phi(2, C64::new(0.0, 0.0)), C64::new(0.5, 0.0));
    }

    #[test]
    fn augmented_exponential_gives_phi_functions() {
        let a = random_cmat(6, 3);
        let eig = eigen_decompose(&a).unwrap();
        let [p0, p1, p2] = phi_matrices_expm(&a);
        assert!((p0 - eig.function_matrix(|z| phi(0, z))).norm() < 1e-10);
        assert!((p1 - eig.function_matrix(|z| phi(1, z))).norm() < 1e-10);
        assert!((p2 - eig.function_matrix(|z| phi(2, z))).norm() < 1e-10);
    }
}
