//! Small dense kernels shared by the atom models and the restricted solver.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Modified Gram-Schmidt with one re-orthogonalization pass. Columns whose
/// residual norm falls below `drop_tol` (relative to their original norm) are
/// skipped. Returns the orthonormal basis and the indices of accepted columns.
pub(crate) fn orthonormalize_columns(
    columns: impl IntoIterator<Item = DVector<f64>>,
    nrows: usize,
    drop_tol: f64,
) -> (DMatrix<f64>, Vec<usize>) {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut kept = Vec::new();
    for (idx, mut col) in columns.into_iter().enumerate() {
        let original = col.norm();
        if original == 0.0 || !original.is_finite() {
            continue;
        }
        for _pass in 0..2 {
            for q in &basis {
                let c = q.dot(&col);
                col.axpy(-c, q, 1.0);
            }
        }
        let norm = col.norm();
        if norm > drop_tol * original {
            col /= norm;
            basis.push(col);
            kept.push(idx);
        }
    }
    let mat = if basis.is_empty() {
        DMatrix::zeros(nrows, 0)
    } else {
        DMatrix::from_columns(&basis)
    };
    (mat, kept)
}

/// An `n`-vector with i.i.d. standard normal entries.
pub(crate) fn gaussian_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// An `r × c` matrix with i.i.d. standard normal entries, filled column by column.
pub(crate) fn gaussian_matrix<R: Rng + ?Sized>(r: usize, c: usize, rng: &mut R) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// Largest entry of a probability-like slice after scaling by `len`.
pub(crate) fn max_scaled(p: &[f64]) -> f64 {
    let m = p.len() as f64;
    p.iter().map(|&x| m * x).fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn min_scaled(p: &[f64]) -> f64 {
    let m = p.len() as f64;
    p.iter().map(|&x| m * x).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gram_schmidt_drops_dependent_columns() {
        let a = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![2.0, 0.0, 0.0]);
        let c = DVector::from_vec(vec![1.0, 1.0, 0.0]);
        let (q, kept) = orthonormalize_columns([a, b, c], 3, 1e-10);
        assert_eq!(kept, vec![0, 2]);
        let gram = q.transpose() * &q;
        assert!((gram - DMatrix::<f64>::identity(2, 2)).norm() < 1e-14);
    }
}
