//! Block-diagonal linear generators and their exponential-integrator functions.
//!
//! A spectral discretisation decouples into independent blocks (one per Fourier mode,
//! or a single dense block). Each block is either diagonal or dense; dense blocks are
//! eigendecomposed once and fall back to the Pade exponential when the eigenvector
//! basis is ill conditioned.

use crate::linalg::{eigen_decompose, matvec, phi, phi_matrices_expm, CMat, EigenDecomposition, C64};
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub enum Block {
    Diagonal(Vec<C64>),
    Dense {
        matrix: CMat,
        /// `None` when the eigensolver failed or the basis is too ill conditioned.
        eig: Option<EigenDecomposition>,
    },
}

impl Block {
    pub fn dense(matrix: CMat) -> Self {
        let eig = eigen_decompose(&matrix)
            .ok()
            .filter(EigenDecomposition::is_well_conditioned);
        Block::Dense { matrix, eig }
    }

    pub fn dim(&self) -> usize {
        match self {
            Block::Diagonal(d) => d.len(),
            Block::Dense { matrix, .. } => matrix.nrows(),
        }
    }

    fn apply_phi(&self, k: usize, h: f64, x: &[C64]) -> Vec<C64> {
        match self {
            Block::Diagonal(d) => d.iter().zip(x).map(|(l, v)| phi(k, *l * h) * v).collect(),
            Block::Dense { eig: Some(e), .. } => e.apply_function(|l| phi(k, l * h), x),
            Block::Dense { matrix, eig: None } => {
                let m = phi_matrices_expm(&matrix.scale(h));
                matvec(&m[k], x)
            }
        }
    }

    fn prepare(&self, h: f64) -> PreparedBlock {
        match self {
            Block::Diagonal(d) => PreparedBlock::Diagonal(
                [0, 1, 2].map(|k| d.iter().map(|l| phi(k, *l * h)).collect()),
            ),
            Block::Dense { eig: Some(e), .. } => {
                PreparedBlock::Dense([0, 1, 2].map(|k| e.function_matrix(|l| phi(k, l * h))))
            }
            Block::Dense { matrix, eig: None } => {
                PreparedBlock::Dense(phi_matrices_expm(&matrix.scale(h)))
            }
        }
    }
}

/// A generator `A` acting on the concatenation of its blocks.
#[derive(Debug, Clone)]
pub struct BlockGenerator {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    dim: usize,
}

impl BlockGenerator {
    pub fn new(blocks: Vec<Block>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut dim = 0;
        for b in &blocks {
            offsets.push(dim);
            dim += b.dim();
        }
        BlockGenerator {
            blocks,
            offsets,
            dim,
        }
    }

    pub fn diagonal(values: Vec<C64>) -> Self {
        Self::new(vec![Block::Diagonal(values)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Blocks without a usable eigenbasis.
    pub fn defective_blocks(&self) -> usize {
        self.blocks
            .iter()
            .filter(|b| matches!(b, Block::Dense { eig: None, .. }))
            .count()
    }

    fn map_blocks(&self, x: &[C64], f: impl Fn(&Block, &[C64]) -> Vec<C64> + Sync) -> Vec<C64> {
        assert_eq!(x.len(), self.dim, "state length does not match generator");
        let parts: Vec<Vec<C64>> = self
            .blocks
            .par_iter()
            .zip(self.offsets.par_iter())
            .map(|(b, &o)| f(b, &x[o..o + b.dim()]))
            .collect();
        parts.concat()
    }

    /// `A x`.
    pub fn apply(&self, x: &[C64]) -> Vec<C64> {
        self.map_blocks(x, |b, x| match b {
            Block::Diagonal(d) => d.iter().zip(x).map(|(l, v)| l * v).collect(),
            Block::Dense { matrix, .. } => matvec(matrix, x),
        })
    }

    /// `phi_k(h A) x`; `phi_0` is the semigroup.
    pub fn apply_phi(&self, k: usize, h: f64, x: &[C64]) -> Vec<C64> {
        if h == 0.0 {
            let c = [1.0, 1.0, 0.5][k];
            return x.iter().map(|v| v * c).collect();
        }
        self.map_blocks(x, |b, x| b.apply_phi(k, h, x))
    }

    /// Caches `phi_0, phi_1, phi_2` of `h A` for repeated fixed-step use.
    pub fn prepare(&self, h: f64) -> PreparedStep {
        PreparedStep {
            h,
            blocks: self.blocks.par_iter().map(|b| b.prepare(h)).collect(),
            offsets: self.offsets.clone(),
            dim: self.dim,
        }
    }

    /// `c A`, reusing the eigendecompositions.
    pub fn scaled(&self, c: f64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| match b {
                Block::Diagonal(d) => Block::Diagonal(d.iter().map(|l| l * c).collect()),
                Block::Dense { matrix, eig } => Block::Dense {
                    matrix: matrix.scale(c),
                    eig: eig.as_ref().map(|e| EigenDecomposition {
                        values: e.values.iter().map(|l| l * c).collect(),
                        ..e.clone()
                    }),
                },
            })
            .collect();
        Self::new(blocks)
    }

    /// Whether every block has an eigenbasis, so the integrators may work in
    /// eigen-coordinates.
    pub fn diagonalizable(&self) -> bool {
        self.defective_blocks() == 0
    }

    /// Eigenvalues block by block; dense blocks without eigenbasis report `None`.
    pub fn eigenvalues(&self) -> Option<Vec<C64>> {
        let mut out = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            match b {
                Block::Diagonal(d) => out.extend_from_slice(d),
                Block::Dense { eig: Some(e), .. } => out.extend_from_slice(&e.values),
                Block::Dense { eig: None, .. } => return None,
            }
        }
        Some(out)
    }

    /// `V^{-1} x`.
    pub fn to_eigen(&self, x: &[C64]) -> Vec<C64> {
        self.map_blocks(x, |b, x| match b {
            Block::Diagonal(_) => x.to_vec(),
            Block::Dense { eig: Some(e), .. } => matvec(&e.inverse, x),
            Block::Dense { eig: None, .. } => panic!("block has no eigenbasis"),
        })
    }

    /// `V x`.
    pub fn from_eigen(&self, x: &[C64]) -> Vec<C64> {
        self.map_blocks(x, |b, x| match b {
            Block::Diagonal(_) => x.to_vec(),
            Block::Dense { eig: Some(e), .. } => matvec(&e.vectors, x),
            Block::Dense { eig: None, .. } => panic!("block has no eigenbasis"),
        })
    }

    /// Largest real part over all eigenvalues, when available.
    pub fn spectral_abscissa(&self) -> Option<f64> {
        self.eigenvalues()
            .map(|v| v.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max))
    }
}

#[derive(Debug, Clone)]
enum PreparedBlock {
    Diagonal([Vec<C64>; 3]),
    Dense([CMat; 3]),
}

/// `phi_k(h A)` for `k = 0, 1, 2` at a fixed step `h`.
#[derive(Debug, Clone)]
pub struct PreparedStep {
    pub h: f64,
    blocks: Vec<PreparedBlock>,
    offsets: Vec<usize>,
    dim: usize,
}

impl PreparedStep {
    pub fn apply(&self, k: usize, x: &[C64]) -> Vec<C64> {
        assert_eq!(x.len(), self.dim);
        let parts: Vec<Vec<C64>> = self
            .blocks
            .par_iter()
            .zip(self.offsets.par_iter())
            .map(|(b, &o)| match b {
                PreparedBlock::Diagonal(d) => {
                    let n = d[k].len();
                    d[k].iter().zip(&x[o..o + n]).map(|(p, v)| p * v).collect()
                }
                PreparedBlock::Dense(m) => {
                    let n = m[k].nrows();
                    matvec(&m[k], &x[o..o + n])
                }
            })
            .collect();
        parts.concat()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::cvec_norm;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn mixed() -> BlockGenerator {
        let m = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(3.0, 0.0), c(0.0, 0.0), c(-2.0, 0.5)]);
        // Jordan block: no eigenbasis
        let j = CMat::from_row_slice(2, 2, &[c(-1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]);
        BlockGenerator::new(vec![
            Block::Diagonal(vec![c(-4.0, 0.0), c(-0.5, 1.0)]),
            Block::dense(m),
            Block::dense(j),
        ])
    }

    #[test]
    fn jordan_block_uses_exponential_fallback() {
        let g = mixed();
        assert_eq!(g.defective_blocks(), 1);
        let x = vec![c(0.0, 0.0); 4]
            .into_iter()
            .chain([c(0.0, 0.0), c(1.0, 0.0)])
            .collect::<Vec<_>>();
        let y = g.apply_phi(0, 2.0, &x);
        // exp(2 J) e_2 = e^{-2} (2, 1)
        assert!((y[4] - c(2.0 * (-2f64).exp(), 0.0)).norm() < 1e-13);
        assert!((y[5] - c((-2f64).exp(), 0.0)).norm() < 1e-13);
    }

    #[test]
    fn prepared_step_matches_direct_application() {
        let g = mixed();
        let x: Vec<C64> = (0..6).map(|i| c(i as f64 - 2.0, 0.3 * i as f64)).collect();
        let p = g.prepare(0.37);
        for k in 0..3 {
            let a = p.apply(k, &x);
            let b = g.apply_phi(k, 0.37, &x);
            let diff: Vec<C64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
            assert!(cvec_norm(&diff) < 1e-13 * cvec_norm(&b));
        }
    }

    #[test]
    fn phi_one_solves_forced_linear_problem() {
        // h phi_1(hA) b = int_0^h e^{sA} b ds, and A (h phi_1) b = (e^{hA} - I) b
        let g = mixed();
        let b: Vec<C64> = (0..6).map(|i| c(1.0, -(i as f64))).collect();
        let h = 0.8;
        let p1: Vec<C64> = g.apply_phi(1, h, &b).iter().map(|v| v * h).collect();
        let lhs = g.apply(&p1);
        let rhs: Vec<C64> = g.apply_phi(0, h, &b).iter().zip(&b).map(|(e, b)| e - b).collect();
        let diff: Vec<C64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
        assert!(cvec_norm(&diff) < 1e-12);
    }

    #[test]
    fn scaled_generator_reuses_eigenbasis() {
        let g = mixed();
        let s = g.scaled(2.5);
        let x: Vec<C64> = (0..6).map(|i| c(0.5 * i as f64, 1.0)).collect();
        let a = s.apply_phi(0, 0.2, &x);
        let b = g.apply_phi(0, 0.5, &x);
        let diff: Vec<C64> = a.iter().zip(&b).map(|(a, b)| a - b).collect();
        assert!(cvec_norm(&diff) < 1e-12);
    }
}
