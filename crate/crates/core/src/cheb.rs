//! Chebyshev–Gauss–Lobatto collocation on `[0, 1]`.
//!
//! Nodes are `y_j = (1 - cos(j pi / N)) / 2`, `j = 0..=N`, so `y_0 = 0` and `y_N = 1`.

use nalgebra::DMatrix;
use std::f64::consts::PI;

/// Collocation matrices on `N + 1` Lobatto nodes.
#[derive(Debug, Clone)]
pub struct Chebyshev {
    pub nodes: Vec<f64>,
    /// First derivative.
    pub d1: DMatrix<f64>,
    /// Second derivative.
    pub d2: DMatrix<f64>,
    /// `(F u)_i = int_0^{y_i} p(s) ds` for the interpolant `p` of `u`.
    pub cumulative: DMatrix<f64>,
    /// Clenshaw–Curtis weights for `int_0^1`.
    pub weights: Vec<f64>,
    bary: Vec<f64>,
}

impl Chebyshev {
    /// `points` counts all nodes including both boundary nodes.
    pub fn new(points: usize) -> Self {
        assert!(points >= 3, "need at least three collocation points");
        let n = points - 1;
        let nf = n as f64;
        let x: Vec<f64> = (0..=n).map(|j| (j as f64 * PI / nf).cos()).collect();
        let nodes: Vec<f64> = x.iter().map(|x| 0.5 * (1.0 - x)).collect();

        let c = |j: usize| if j == 0 || j == n { 2.0 } else { 1.0 };
        let mut dx = DMatrix::<f64>::zeros(points, points);
        for i in 0..=n {
            for j in 0..=n {
                if i != j {
                    let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
                    dx[(i, j)] = c(i) / c(j) * sign / (x[i] - x[j]);
                }
            }
        }
        for i in 0..=n {
            let s: f64 = (0..=n).filter(|&j| j != i).map(|j| dx[(i, j)]).sum();
            dx[(i, i)] = -s;
        }
        // y = (1 - x)/2  =>  d/dy = -2 d/dx
        let d1 = dx * -2.0;
        let d2 = &d1 * &d1;

        let cumulative = cumulative_matrix(n);
        let weights = (0..=n).map(|j| cumulative[(n, j)]).collect();
        let bary = (0..=n)
            .map(|j| {
                let s = if j % 2 == 0 { 1.0 } else { -1.0 };
                if j == 0 || j == n {
                    0.5 * s
                } else {
                    s
                }
            })
            .collect();
        Chebyshev {
            nodes,
            d1,
            d2,
            cumulative,
            weights,
            bary,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Row of barycentric interpolation weights for evaluating the interpolant at `y`.
    pub fn interpolation_row(&self, y: f64) -> Vec<f64> {
        let m = self.len();
        if let Some(j) = self.nodes.iter().position(|&n| (n - y).abs() < 1e-15) {
            let mut row = vec![0.0; m];
            row[j] = 1.0;
            return row;
        }
        let terms: Vec<f64> = (0..m).map(|j| self.bary[j] / (y - self.nodes[j])).collect();
        let total: f64 = terms.iter().sum();
        terms.into_iter().map(|t| t / total).collect()
    }

    /// Interpolant value at `y`.
    pub fn interpolate(&self, values: &[f64], y: f64) -> f64 {
        self.interpolation_row(y)
            .iter()
            .zip(values)
            .map(|(w, v)| w * v)
            .sum()
    }
}

/// Values -> Chebyshev coefficients -> antiderivative coefficients -> values.
fn cumulative_matrix(n: usize) -> DMatrix<f64> {
    let nf = n as f64;
    let points = n + 1;
    let cos_table = |k: usize, j: usize| ((k * j) as f64 * PI / nf).cos();
    let mut out = DMatrix::<f64>::zeros(points, points);
    for col in 0..points {
        // coefficients a_k of the interpolant of the unit vector e_col
        let mut a = vec![0.0; n + 3];
        for (k, ak) in a.iter_mut().enumerate().take(n + 1) {
            let half = if col == 0 || col == n { 0.5 } else { 1.0 };
            let ck = if k == 0 || k == n { 2.0 } else { 1.0 };
            *ak = 2.0 / (nf * ck) * half * cos_table(k, col);
        }
        // integral in x of sum a_k T_k
        let mut b = vec![0.0; n + 2];
        b[1] = a[0] - 0.5 * a[2];
        for k in 2..=n + 1 {
            b[k] = (a[k - 1] - a[k + 1]) / (2.0 * k as f64);
        }
        let at_one: f64 = b.iter().sum();
        for row in 0..points {
            let at_x: f64 = b
                .iter()
                .enumerate()
                .map(|(k, bk)| bk * cos_table(k, row))
                .sum();
            // int_0^y p ds = (1/2) int_x^1 p dx'
            out[(row, col)] = 0.5 * (at_one - at_x);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn apply(m: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum())
            .collect()
    }

    #[test]
    fn derivative_of_sine_is_accurate() {
        let c = Chebyshev::new(32);
        let u: Vec<f64> = c.nodes.iter().map(|y| (PI * y).sin()).collect();
        let du = apply(&c.d1, &u);
        for (y, d) in c.nodes.iter().zip(du) {
            assert!((d - PI * (PI * y).cos()).abs() < 1e-8);
        }
    }

    #[test]
    fn cumulative_integral_of_constant_and_sine() {
        let c = Chebyshev::new(24);
        let one = vec![1.0; c.len()];
        for (y, v) in c.nodes.iter().zip(apply(&c.cumulative, &one)) {
            assert!((v - y).abs() < 1e-14);
        }
        let s: Vec<f64> = c.nodes.iter().map(|y| (PI * y).sin()).collect();
        for (y, v) in c.nodes.iter().zip(apply(&c.cumulative, &s)) {
            assert!((v - (1.0 - (PI * y).cos()) / PI).abs() < 1e-13);
        }
    }

    #[test]
    fn clenshaw_curtis_weights_sum_to_one() {
        let c = Chebyshev::new(17);
        let total: f64 = c.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        let cubic: f64 = c.weights.iter().zip(&c.nodes).map(|(w, y)| w * y.powi(3)).sum();
        assert!((cubic - 0.25).abs() < 1e-14);
    }

    #[test]
    fn barycentric_interpolation_reproduces_polynomials() {
        let c = Chebyshev::new(12);
        let vals: Vec<f64> = c.nodes.iter().map(|y| y.powi(5) - 2.0 * y).collect();
        let y = 0.3141;
        assert!((c.interpolate(&vals, y) - (y.powi(5) - 2.0 * y)).abs() < 1e-13);
    }
}
