//! Spectral representation of fields on the strip `S x (0, 1)`.
//!
//! `x` is resolved by a Fourier series on `[-L, L)` (for the periodic strip `L = pi`;
//! otherwise the real line is truncated to a large periodic box). `y` is resolved by
//! Chebyshev–Gauss–Lobatto collocation, boundary rows included. Coefficients are
//! stored slot-major in FFT order: `coeffs[slot * ny + j]`.

use crate::cheb::Chebyshev;
use crate::linalg::C64;
use crate::quadrature::gauss_legendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StripError {
    #[error("invalid strip geometry: {0}")]
    Geometry(String),
    #[error("expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("snapshot format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Discretisation of the strip.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StripGeometry {
    /// `true` for `S = T` (period `2 pi`), `false` for a truncation of `S = R`.
    pub periodic_x: bool,
    /// The `x` box is `[-half_length, half_length)`.
    pub half_length: f64,
    pub nx: usize,
    pub ny: usize,
}

impl StripGeometry {
    pub fn periodic(nx: usize, ny: usize) -> Self {
        StripGeometry {
            periodic_x: true,
            half_length: PI,
            nx,
            ny,
        }
    }

    /// Truncated line, default box `[-8 pi, 8 pi)`.
    pub fn truncated(half_length: f64, nx: usize, ny: usize) -> Self {
        StripGeometry {
            periodic_x: false,
            half_length,
            nx,
            ny,
        }
    }

    pub fn validate(&self) -> Result<(), StripError> {
        if self.nx < 8 || self.nx % 2 != 0 {
            return Err(StripError::Geometry(format!(
                "nx = {} must be even and at least 8",
                self.nx
            )));
        }
        if self.ny < 8 {
            return Err(StripError::Geometry(format!("ny = {} must be at least 8", self.ny)));
        }
        if !(self.half_length.is_finite() && self.half_length > 0.0) {
            return Err(StripError::Geometry(format!(
                "half length {} must be positive",
                self.half_length
            )));
        }
        if self.periodic_x && (self.half_length - PI).abs() > 1e-14 {
            return Err(StripError::Geometry(
                "the periodic strip has half length pi".into(),
            ));
        }
        Ok(())
    }

    /// Signed Fourier index stored in `slot`.
    pub fn mode_index(&self, slot: usize) -> i64 {
        let half = self.nx / 2;
        if slot < half {
            slot as i64
        } else {
            slot as i64 - self.nx as i64
        }
    }

    pub fn slot_of(&self, n: i64) -> Option<usize> {
        let half = (self.nx / 2) as i64;
        if n >= 0 && n < half {
            Some(n as usize)
        } else if n < 0 && n >= -half {
            Some((n + self.nx as i64) as usize)
        } else {
            None
        }
    }

    /// `k_n = n pi / L`.
    pub fn wavenumber(&self, n: i64) -> f64 {
        n as f64 * PI / self.half_length
    }

    /// Modes kept by the 2/3 rule.
    pub fn dealiased(&self, n: i64) -> bool {
        3 * n.unsigned_abs() as usize <= self.nx
    }

    pub fn x_nodes(&self) -> Vec<f64> {
        let h = 2.0 * self.half_length / self.nx as f64;
        (0..self.nx).map(|i| -self.half_length + i as f64 * h).collect()
    }
}

/// Geometry plus the matrices and FFT plans shared by all fields on it.
pub struct StripSpace {
    pub geometry: StripGeometry,
    pub cheb: Chebyshev,
    /// `P[k-1][j] = 2 int_0^1 l_j(y) sin(k pi y) dy`.
    sine_projection: DMatrix<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for StripSpace {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StripSpace")
            .field("geometry", &self.geometry)
            .finish_non_exhaustive()
    }
}

impl StripSpace {
    pub fn new(geometry: StripGeometry) -> Result<Arc<Self>, StripError> {
        geometry.validate()?;
        let cheb = Chebyshev::new(geometry.ny);
        let sine_modes = 4 * (geometry.ny - 1);
        let quad_points = 2 * sine_modes + geometry.ny + 32;
        let (gy, gw) = gauss_legendre(quad_points, 0.0, 1.0);
        let mut interp = DMatrix::<f64>::zeros(quad_points, geometry.ny);
        for (m, &y) in gy.iter().enumerate() {
            for (j, v) in cheb.interpolation_row(y).into_iter().enumerate() {
                interp[(m, j)] = v * gw[m];
            }
        }
        let sines = DMatrix::from_fn(sine_modes, quad_points, |k, m| {
            2.0 * ((k + 1) as f64 * PI * gy[m]).sin()
        });
        let sine_projection = sines * interp;
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(geometry.nx);
        let inverse = planner.plan_fft_inverse(geometry.nx);
        Ok(Arc::new(StripSpace {
            geometry,
            cheb,
            sine_projection,
            forward,
            inverse,
        }))
    }

    pub fn len(&self) -> usize {
        self.geometry.nx * self.geometry.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sine_modes(&self) -> usize {
        self.sine_projection.nrows()
    }

    fn parity(n: i64) -> f64 {
        if n.rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Real grid values `u(x_i, y_j)` at index `i * ny + j`.
    pub fn synthesize(&self, coeffs: &[C64]) -> Vec<f64> {
        let StripGeometry { nx, ny, .. } = self.geometry;
        let mut grid = vec![0.0; nx * ny];
        let rows: Vec<Vec<C64>> = (0..ny)
            .into_par_iter()
            .map(|j| {
                let mut row: Vec<C64> = (0..nx)
                    .map(|s| coeffs[s * ny + j] * Self::parity(self.geometry.mode_index(s)))
                    .collect();
                self.inverse.process(&mut row);
                row
            })
            .collect();
        for (j, row) in rows.iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                grid[i * ny + j] = v.re;
            }
        }
        grid
    }

    /// Inverse of [`synthesize`](Self::synthesize) on real grid data.
    pub fn analyze(&self, grid: &[f64]) -> Vec<C64> {
        let StripGeometry { nx, ny, .. } = self.geometry;
        let scale = 1.0 / nx as f64;
        let rows: Vec<Vec<C64>> = (0..ny)
            .into_par_iter()
            .map(|j| {
                let mut row: Vec<C64> = (0..nx).map(|i| C64::new(grid[i * ny + j], 0.0)).collect();
                self.forward.process(&mut row);
                row
            })
            .collect();
        let mut coeffs = vec![C64::new(0.0, 0.0); nx * ny];
        for (j, row) in rows.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                coeffs[s * ny + j] = v * (scale * Self::parity(self.geometry.mode_index(s)));
            }
        }
        coeffs
    }

    /// Squared `H^sigma` norms (one per order) of coefficients vanishing on `y = 0, 1`.
    ///
    /// Each `y` profile is expanded in `sin(k pi y)`; with
    /// `u = sum_n sum_k b_{n,k} e^{i k_n x} sin(k pi y)` the norm is
    /// `2L sum (1 + k_n^2 + k^2 pi^2)^sigma |b_{n,k}|^2 / 2`.
    pub fn sobolev_norms_squared(&self, coeffs: &[C64], orders: &[f64]) -> Vec<f64> {
        let StripGeometry { nx, ny, .. } = self.geometry;
        let big_k = self.sine_modes();
        let lx = self.geometry.half_length;
        let partial: Vec<Vec<f64>> = (0..nx)
            .into_par_iter()
            .map(|s| {
                let kn = self.geometry.wavenumber(self.geometry.mode_index(s));
                let profile = &coeffs[s * ny..(s + 1) * ny];
                let mut sums = vec![0.0; orders.len()];
                for k in 0..big_k {
                    let mut b = C64::new(0.0, 0.0);
                    for (j, c) in profile.iter().enumerate() {
                        b += c * self.sine_projection[(k, j)];
                    }
                    let mag = b.norm_sqr();
                    if mag == 0.0 {
                        continue;
                    }
                    let base = 1.0 + kn * kn + ((k + 1) as f64 * PI).powi(2);
                    for (acc, sigma) in sums.iter_mut().zip(orders) {
                        *acc += base.powf(*sigma) * mag;
                    }
                }
                sums
            })
            .collect();
        let mut total = vec![0.0; orders.len()];
        for sums in partial {
            for (t, v) in total.iter_mut().zip(sums) {
                *t += v;
            }
        }
        total.into_iter().map(|v| v * lx).collect()
    }

    /// `(T w)(x, y) = int_0^y w(x, s) ds`, applied mode by mode.
    pub fn cumulative_y(&self, coeffs: &[C64]) -> Vec<C64> {
        self.apply_y_matrix(&self.cheb.cumulative, coeffs)
    }

    pub fn derivative_y(&self, coeffs: &[C64]) -> Vec<C64> {
        self.apply_y_matrix(&self.cheb.d1, coeffs)
    }

    /// `d/dx`; the Nyquist slot has no real derivative and is zeroed.
    pub fn derivative_x(&self, coeffs: &[C64]) -> Vec<C64> {
        let StripGeometry { nx, ny, .. } = self.geometry;
        let mut out = coeffs.to_vec();
        for s in 0..nx {
            let n = self.geometry.mode_index(s);
            let factor = if s == nx / 2 {
                C64::new(0.0, 0.0)
            } else {
                C64::new(0.0, self.geometry.wavenumber(n))
            };
            for v in &mut out[s * ny..(s + 1) * ny] {
                *v *= factor;
            }
        }
        out
    }

    fn apply_y_matrix(&self, m: &DMatrix<f64>, coeffs: &[C64]) -> Vec<C64> {
        let ny = self.geometry.ny;
        coeffs
            .par_chunks(ny)
            .flat_map_iter(|profile| {
                (0..ny).map(move |i| {
                    let mut acc = C64::new(0.0, 0.0);
                    for (j, c) in profile.iter().enumerate() {
                        acc += c * m[(i, j)];
                    }
                    acc
                })
            })
            .collect()
    }
}

/// A real field on the strip, held by its Fourier–Chebyshev coefficients.
#[derive(Debug, Clone)]
pub struct SpectralField {
    space: Arc<StripSpace>,
    pub coeffs: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(space: &Arc<StripSpace>) -> Self {
        SpectralField {
            space: space.clone(),
            coeffs: vec![C64::new(0.0, 0.0); space.len()],
        }
    }

    pub fn from_coeffs(space: &Arc<StripSpace>, coeffs: Vec<C64>) -> Result<Self, StripError> {
        if coeffs.len() != space.len() {
            return Err(StripError::Shape {
                expected: space.len(),
                got: coeffs.len(),
            });
        }
        Ok(SpectralField {
            space: space.clone(),
            coeffs,
        })
    }

    /// Grid values at index `i * ny + j`.
    pub fn from_grid(space: &Arc<StripSpace>, values: &[f64]) -> Result<Self, StripError> {
        if values.len() != space.len() {
            return Err(StripError::Shape {
                expected: space.len(),
                got: values.len(),
            });
        }
        Ok(SpectralField {
            space: space.clone(),
            coeffs: space.analyze(values),
        })
    }

    pub fn from_fn(space: &Arc<StripSpace>, f: impl Fn(f64, f64) -> f64) -> Self {
        let xs = space.geometry.x_nodes();
        let ys = &space.cheb.nodes;
        let values: Vec<f64> = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        SpectralField {
            space: space.clone(),
            coeffs: space.analyze(&values),
        }
    }

    pub fn space(&self) -> &Arc<StripSpace> {
        &self.space
    }

    pub fn geometry(&self) -> &StripGeometry {
        &self.space.geometry
    }

    pub fn to_grid(&self) -> Vec<f64> {
        self.space.synthesize(&self.coeffs)
    }

    /// Coefficients of the `y` profile of Fourier mode `n`.
    pub fn mode(&self, n: i64) -> Option<&[C64]> {
        let ny = self.geometry().ny;
        self.geometry()
            .slot_of(n)
            .map(|s| &self.coeffs[s * ny..(s + 1) * ny])
    }

    pub fn sobolev_norm(&self, sigma: f64) -> f64 {
        self.space.sobolev_norms_squared(&self.coeffs, &[sigma])[0].sqrt()
    }

    /// Trapezoid in `x`, Clenshaw–Curtis in `y`.
    pub fn l2_norm_quadrature(&self) -> f64 {
        let grid = self.to_grid();
        let g = self.geometry();
        let hx = 2.0 * g.half_length / g.nx as f64;
        let w = &self.space.cheb.weights;
        let total: f64 = grid
            .chunks(g.ny)
            .map(|col| col.iter().zip(w).map(|(u, w)| w * u * u).sum::<f64>())
            .sum();
        (hx * total).sqrt()
    }

    fn with(&self, coeffs: Vec<C64>) -> Self {
        SpectralField {
            space: self.space.clone(),
            coeffs,
        }
    }

    /// `int_0^y u(x, s) ds`.
    pub fn apply_t(&self) -> Self {
        self.with(self.space.cumulative_y(&self.coeffs))
    }

    pub fn derivative_x(&self) -> Self {
        self.with(self.space.derivative_x(&self.coeffs))
    }

    pub fn derivative_y(&self) -> Self {
        self.with(self.space.derivative_y(&self.coeffs))
    }

    /// Largest absolute grid value.
    pub fn sup_norm(&self) -> f64 {
        self.to_grid().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_snapshot(&self, mut w: impl Write) -> Result<(), StripError> {
        let g = self.geometry();
        w.write_all(&(g.nx as u64).to_le_bytes())?;
        w.write_all(&(g.ny as u64).to_le_bytes())?;
        w.write_all(&g.half_length.to_le_bytes())?;
        w.write_all(&(g.periodic_x as u64).to_le_bytes())?;
        for v in self.to_grid() {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads grid values written by [`write_snapshot`](Self::write_snapshot) onto `space`.
    pub fn read_snapshot(space: &Arc<StripSpace>, r: impl Read) -> Result<Self, StripError> {
        let (g, values) = read_snapshot_values(r)?;
        let s = space.geometry;
        if g.nx != s.nx || g.ny != s.ny || g.half_length != s.half_length || g.periodic_x != s.periodic_x {
            return Err(StripError::Format(format!(
                "snapshot grid {}x{} (L = {}) does not match {}x{} (L = {})",
                g.nx, g.ny, g.half_length, s.nx, s.ny, s.half_length
            )));
        }
        Self::from_grid(space, &values)
    }

    /// `x,y,u` rows with 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> Result<(), StripError> {
        let xs = self.geometry().x_nodes();
        let ys = &self.space.cheb.nodes;
        let grid = self.to_grid();
        writeln!(w, "x,y,u")?;
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                writeln!(w, "{x:.16e},{y:.16e},{:.16e}", grid[i * ys.len() + j])?;
            }
        }
        Ok(())
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<(), StripError> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf)?;
        crate::io::write_atomic(path, &buf)?;
        Ok(())
    }
}

/// Header and raw grid values of a binary snapshot.
pub fn read_snapshot_values(mut r: impl Read) -> Result<(StripGeometry, Vec<f64>), StripError> {
    let mut word = [0u8; 8];
    let mut next = |r: &mut dyn Read| -> Result<[u8; 8], StripError> {
        r.read_exact(&mut word)?;
        Ok(word)
    };
    let nx = u64::from_le_bytes(next(&mut r)?) as usize;
    let ny = u64::from_le_bytes(next(&mut r)?) as usize;
    let half_length = f64::from_le_bytes(next(&mut r)?);
    let flags = u64::from_le_bytes(next(&mut r)?);
    let geometry = StripGeometry {
        periodic_x: flags & 1 == 1,
        half_length,
        nx,
        ny,
    };
    geometry
        .validate()
        .map_err(|e| StripError::Format(e.to_string()))?;
    let mut values = Vec::with_capacity(nx * ny);
    for _ in 0..nx * ny {
        values.push(f64::from_le_bytes(next(&mut r)?));
    }
    Ok((geometry, values))
}

impl std::ops::Add for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        assert!(Arc::ptr_eq(&self.space, &rhs.space), "fields on different grids");
        self.with(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a + b).collect())
    }
}

impl std::ops::Sub for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        assert!(Arc::ptr_eq(&self.space, &rhs.space), "fields on different grids");
        self.with(self.coeffs.iter().zip(&rhs.coeffs).map(|(a, b)| a - b).collect())
    }
}

impl std::ops::Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, rhs: f64) -> SpectralField {
        self.with(self.coeffs.iter().map(|a| a * rhs).collect())
    }
}
