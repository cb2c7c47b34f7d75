//! Block-decomposed least-squares objectives.
//!
//! Every objective here is `F(w) = (1/2m)‖y − A w‖²` over `m` measurement rows,
//! split into `M = ceil(m/b)` contiguous blocks. Block `i` owns rows `b_i` and
//!
//! ```text
//! f_i(w) = (M/2m) ‖y_{b_i} − A_{b_i} w‖²,     F(w) = (1/M) Σ f_i(w).
//! ```
//!
//! When `b` divides `m` this is `(1/2b)‖y_{b_i} − A_{b_i} w‖²`. Matrix recovery
//! uses the same machinery with rows `vec(A_j)ᵀ`, so `⟨A_j, W⟩ = vec(A_j)ᵀ vec(W)`.

mod constants;
mod snapshot;

pub use constants::{estimate_constants, ConstantEstimates, RestrictedConstants, EXHAUSTIVE_MAX_EVALUATIONS};
pub use snapshot::{read_snapshot, write_snapshot, Snapshot};

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::atoms::AtomModel;

/// Tolerance on `Σ p(i) = 1`.
pub const SAMPLING_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("objective needs at least one measurement and one unknown")]
    Empty,
    #[error("block size must be positive")]
    ZeroBlock,
    #[error("block size {b} exceeds the {m} measurements")]
    BlockTooLarge { b: usize, m: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("block index {index} out of range for {blocks} blocks")]
    BlockOutOfRange { index: usize, blocks: usize },
    #[error("invalid sampling distribution: {0}")]
    InvalidSampling(String),
    #[error("malformed problem file: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Whether the unknown is a vector or a column-major matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalShape {
    Vector { n: usize },
    Matrix { rows: usize, cols: usize },
}

impl SignalShape {
    pub fn dim(&self) -> usize {
        match *self {
            SignalShape::Vector { n } => n,
            SignalShape::Matrix { rows, cols } => rows * cols,
        }
    }

    /// The atom model whose sparsity matches this shape: coordinates for
    /// vectors, rank-one atoms for matrices.
    pub fn natural_model(&self) -> AtomModel {
        match *self {
            SignalShape::Vector { n } => AtomModel::coordinate(n),
            SignalShape::Matrix { rows, cols } => AtomModel::rank_one(rows, cols),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlockObjective {
    design: DMatrix<f64>,
    observations: DVector<f64>,
    blocks: Vec<Range<usize>>,
    block_size: usize,
    sampling: Vec<f64>,
    shape: SignalShape,
}

impl BlockObjective {
    /// Sparse linear regression with design `a` (`m × n`) and observations `y`.
    pub fn sparse_regression(a: DMatrix<f64>, y: DVector<f64>, b: usize) -> Result<Self, ObjectiveError> {
        let n = a.ncols();
        Self::from_design(a, y, b, SignalShape::Vector { n })
    }

    /// Matrix recovery from measurements `y_j = ⟨A_j, W⟩`.
    pub fn matrix_recovery(measurements: &[DMatrix<f64>], y: DVector<f64>, b: usize) -> Result<Self, ObjectiveError> {
        let Some(first) = measurements.first() else {
            return Err(ObjectiveError::Empty);
        };
        let (rows, cols) = first.shape();
        let dim = rows * cols;
        let mut design = DMatrix::zeros(measurements.len(), dim);
        for (j, a) in measurements.iter().enumerate() {
            if a.shape() != (rows, cols) {
                return Err(ObjectiveError::DimensionMismatch { expected: dim, actual: a.len() });
            }
            for (c, &x) in a.as_slice().iter().enumerate() {
                design[(j, c)] = x;
            }
        }
        Self::from_design(design, y, b, SignalShape::Matrix { rows, cols })
    }

    /// Generic constructor: rows of `design` act on the vectorized unknown.
    pub fn from_design(
        design: DMatrix<f64>,
        observations: DVector<f64>,
        b: usize,
        shape: SignalShape,
    ) -> Result<Self, ObjectiveError> {
        let (m, dim) = design.shape();
        if m == 0 || dim == 0 {
            return Err(ObjectiveError::Empty);
        }
        if dim != shape.dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: shape.dim(), actual: dim });
        }
        if observations.len() != m {
            return Err(ObjectiveError::DimensionMismatch { expected: m, actual: observations.len() });
        }
        if b == 0 {
            return Err(ObjectiveError::ZeroBlock);
        }
        if b > m {
            return Err(ObjectiveError::BlockTooLarge { b, m });
        }
        let blocks: Vec<Range<usize>> = (0..m).step_by(b).map(|s| s..(s + b).min(m)).collect();
        let sampling = blocks.iter().map(|r| r.len() as f64 / m as f64).collect();
        Ok(Self { design, observations, blocks, block_size: b, sampling, shape })
    }

    /// Replaces the sampling distribution. Entries must be positive and sum to
    /// one within [`SAMPLING_SUM_TOL`].
    pub fn with_sampling(mut self, p: Vec<f64>) -> Result<Self, ObjectiveError> {
        validate_sampling(&p, self.blocks.len())?;
        self.sampling = p;
        Ok(self)
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn observations(&self) -> &DVector<f64> {
        &self.observations
    }

    pub fn shape(&self) -> SignalShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.design.ncols()
    }

    /// Number of measurement rows `m`.
    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    /// Number of blocks `M`.
    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    /// Nominal block size `b` (the last block may be smaller).
    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn block_range(&self, i: usize) -> Result<Range<usize>, ObjectiveError> {
        self.blocks.get(i).cloned().ok_or(ObjectiveError::BlockOutOfRange { index: i, blocks: self.blocks.len() })
    }

    pub fn sampling(&self) -> &[f64] {
        &self.sampling
    }

    /// `M/m`, the weight in front of each block's squared residual (times 2).
    fn block_weight(&self) -> f64 {
        self.blocks.len() as f64 / self.rows() as f64
    }

    fn check_dim(&self, w: &DVector<f64>) -> Result<(), ObjectiveError> {
        if w.len() != self.dim() {
            return Err(ObjectiveError::DimensionMismatch { expected: self.dim(), actual: w.len() });
        }
        Ok(())
    }

    fn block_residual(&self, w: &DVector<f64>, r: &Range<usize>) -> DVector<f64> {
        let a = self.design.rows(r.start, r.len());
        a * w - self.observations.rows(r.start, r.len())
    }

    pub fn block_value(&self, w: &DVector<f64>, i: usize) -> Result<f64, ObjectiveError> {
        self.check_dim(w)?;
        let r = self.block_range(i)?;
        Ok(0.5 * self.block_weight() * self.block_residual(w, &r).norm_squared())
    }

    /// `∇f_i(w) = (M/m) A_{b_i}ᵀ (A_{b_i} w − y_{b_i})`.
    pub fn block_gradient(&self, w: &DVector<f64>, i: usize) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(w)?;
        let r = self.block_range(i)?;
        let resid = self.block_residual(w, &r);
        let mut g = self.design.rows(r.start, r.len()).tr_mul(&resid);
        g *= self.block_weight();
        Ok(g)
    }

    /// `F(w) = (1/2m)‖y − A w‖²`.
    pub fn full_value(&self, w: &DVector<f64>) -> Result<f64, ObjectiveError> {
        self.check_dim(w)?;
        Ok(0.5 * (&self.design * w - &self.observations).norm_squared() / self.rows() as f64)
    }

    /// `∇F(w) = (1/m) Aᵀ (A w − y)`.
    pub fn full_gradient(&self, w: &DVector<f64>) -> Result<DVector<f64>, ObjectiveError> {
        self.check_dim(w)?;
        let resid = &self.design * w - &self.observations;
        Ok(self.design.tr_mul(&resid) / self.rows() as f64)
    }
}

pub(crate) fn validate_sampling(p: &[f64], blocks: usize) -> Result<(), ObjectiveError> {
    if p.len() != blocks {
        return Err(ObjectiveError::InvalidSampling(format!("{} weights for {blocks} blocks", p.len())));
    }
    if let Some(x) = p.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(ObjectiveError::InvalidSampling(format!("weight {x} is not a positive number")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SAMPLING_SUM_TOL {
        return Err(ObjectiveError::InvalidSampling(format!("weights sum to {sum}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gaussian_vector};
    use crate::oracle::finite_difference_gradient;
    use crate::rng::stream;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn identity_single_block() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(4, 4), dv(&[1.0, 2.0, 3.0, 4.0]), 4).unwrap();
        assert_eq!(obj.block_count(), 1);
        let w = dv(&[0.0, 1.0, 1.0, 1.0]);
        let expected = (1.0 + 1.0 + 4.0 + 9.0) / 8.0;
        assert!((obj.full_value(&w).unwrap() - expected).abs() < 1e-15);
        assert!((obj.block_value(&w, 0).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn identity_two_blocks() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(4, 4), dv(&[1.0, 2.0, 3.0, 4.0]), 2).unwrap();
        assert_eq!(obj.block_count(), 2);
        let w = dv(&[0.0, 0.0, 5.0, 5.0]);
        assert!((obj.block_value(&w, 0).unwrap() - (1.0 + 4.0) / 4.0).abs() < 1e-15);
    }

    #[test]
    fn half_w_gradient() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(2, 2), dv(&[0.0, 0.0]), 2).unwrap();
        assert_eq!(obj.block_gradient(&dv(&[2.0, 4.0]), 0).unwrap(), dv(&[1.0, 2.0]));
        let y = dv(&[3.0, -1.0]);
        let obj = BlockObjective::sparse_regression(DMatrix::identity(2, 2), y.clone(), 1).unwrap();
        assert_eq!(obj.block_gradient(&y, 1).unwrap(), DVector::zeros(2));
    }

    #[test]
    fn single_matrix_measurement() {
        let mut e11 = DMatrix::zeros(2, 3);
        e11[(0, 0)] = 1.0;
        let obj = BlockObjective::matrix_recovery(&[e11], dv(&[5.0]), 1).unwrap();
        let g = obj.block_gradient(&DVector::zeros(6), 0).unwrap();
        let mut expected = DVector::zeros(6);
        expected[0] = -5.0;
        assert_eq!(g, expected);
    }

    #[test]
    fn matrix_blocks_counted() {
        let mut rng = stream(1, &[]);
        let probes: Vec<_> = (0..4).map(|_| gaussian_vector(3, &mut rng) * gaussian_vector(3, &mut rng).transpose()).collect();
        let obj = BlockObjective::matrix_recovery(&probes, DVector::zeros(4), 2).unwrap();
        assert_eq!(obj.block_count(), 2);
    }

    #[test]
    fn full_value_is_half_mean_square_residual() {
        let mut rng = stream(2, &[]);
        let a = gaussian_matrix(8, 4, &mut rng);
        let y = gaussian_vector(8, &mut rng);
        let w = gaussian_vector(4, &mut rng);
        let direct = (&y - &a * &w).norm_squared() / 16.0;
        for b in [1, 2, 3, 8] {
            let obj = BlockObjective::sparse_regression(a.clone(), y.clone(), b).unwrap();
            assert!((obj.full_value(&w).unwrap() - direct).abs() < 1e-12 * direct.max(1.0));
            let mean: f64 = (0..obj.block_count()).map(|i| obj.block_value(&w, i).unwrap()).sum::<f64>()
                / obj.block_count() as f64;
            assert!((mean - direct).abs() < 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn remainder_block_and_default_weights() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(5, 5), DVector::zeros(5), 2).unwrap();
        assert_eq!(obj.block_count(), 3);
        assert_eq!(obj.block_range(2).unwrap(), 4..5);
        assert_eq!(obj.sampling(), &[0.4, 0.4, 0.2]);
    }

    #[test]
    fn constructor_errors() {
        let a = DMatrix::identity(3, 3);
        assert!(matches!(
            BlockObjective::sparse_regression(a.clone(), DVector::zeros(3), 4),
            Err(ObjectiveError::BlockTooLarge { b: 4, m: 3 })
        ));
        assert!(matches!(BlockObjective::sparse_regression(a.clone(), DVector::zeros(3), 0), Err(ObjectiveError::ZeroBlock)));
        assert!(matches!(
            BlockObjective::sparse_regression(DMatrix::zeros(0, 3), DVector::zeros(0), 1),
            Err(ObjectiveError::Empty)
        ));
        let obj = BlockObjective::sparse_regression(a, DVector::zeros(3), 1).unwrap();
        assert!(matches!(obj.block_gradient(&DVector::zeros(3), 3), Err(ObjectiveError::BlockOutOfRange { .. })));
        assert!(obj.clone().with_sampling(vec![0.5, 0.5, 0.0]).is_err());
        assert!(obj.clone().with_sampling(vec![0.5, 0.5]).is_err());
        assert!(obj.with_sampling(vec![0.2, 0.3, 0.5]).is_ok());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = stream(3, &[]);
        let a = gaussian_matrix(10, 6, &mut rng);
        let y = gaussian_vector(10, &mut rng);
        let obj = BlockObjective::sparse_regression(a, y, 3).unwrap();
        for _ in 0..20 {
            let w = gaussian_vector(6, &mut rng);
            for i in 0..obj.block_count() {
                let g = obj.block_gradient(&w, i).unwrap();
                let fd = finite_difference_gradient(&obj, &w, i, 1e-6).unwrap();
                assert!((&g - fd).norm() <= 1e-5 * g.norm().max(1e-3));
            }
        }
    }

    #[test]
    fn zero_gradient_at_consistent_solution() {
        let mut rng = stream(4, &[]);
        let a = gaussian_matrix(12, 5, &mut rng);
        let w = gaussian_vector(5, &mut rng);
        let obj = BlockObjective::sparse_regression(a.clone(), &a * &w, 4).unwrap();
        assert!(obj.full_gradient(&w).unwrap().norm() < 1e-10);
        assert!(obj.full_value(&w).unwrap() < 1e-20);
    }
}
