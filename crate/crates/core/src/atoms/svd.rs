//! Exact and randomized truncated SVD.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::AtomError;
use crate::linalg::{gaussian_matrix, orthonormalize_columns};

/// Rank-`r` factors `U diag(σ) Vᵀ` with singular values in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v: DMatrix<f64>,
}

impl TruncatedSvd {
    pub fn rank(&self) -> usize {
        self.singular_values.len()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, &s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(s);
        }
        us * self.v.transpose()
    }
}

/// Full SVD sorted by descending singular value, ties broken by original
/// position, keeping at most `rank` components above the numerical-rank
/// threshold `σ_max · max(rows, cols) · ε`.
pub fn truncated_svd(w: &DMatrix<f64>, rank: usize) -> TruncatedSvd {
    let (rows, cols) = w.shape();
    let svd = w.clone().svd_unordered(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    select_components(&u, &svd.singular_values, &v_t.transpose(), rank, rows.max(cols))
}

fn select_components(
    u: &DMatrix<f64>,
    sigma: &DVector<f64>,
    v: &DMatrix<f64>,
    rank: usize,
    dim: usize,
) -> TruncatedSvd {
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));
    let sigma_max = order.first().map(|&i| sigma[i]).unwrap_or(0.0);
    let tol = sigma_max * dim as f64 * f64::EPSILON;
    let keep: Vec<usize> = order.into_iter().take(rank).filter(|&i| sigma[i] > tol && sigma[i] > 0.0).collect();
    TruncatedSvd {
        u: DMatrix::from_fn(u.nrows(), keep.len(), |r, c| u[(r, keep[c])]),
        singular_values: DVector::from_fn(keep.len(), |c, _| sigma[keep[c]]),
        v: DMatrix::from_fn(v.nrows(), keep.len(), |r, c| v[(r, keep[c])]),
    }
}

fn orthonormal_range(y: &DMatrix<f64>) -> DMatrix<f64> {
    let cols = y.column_iter().map(|c| c.into_owned());
    orthonormalize_columns(cols, y.nrows(), 1e-12).0
}

/// Randomized rank-`rank` SVD with `oversampling` extra sketch columns and
/// `power_iters` subspace iterations.
///
/// Draws a Gaussian `cols × (rank + oversampling)` test matrix Ω, forms an
/// orthonormal basis `Q` of the range of `W Ω` (optionally refined by power
/// iterations), takes the SVD of `B = QᵀW`, and returns the leading `rank`
/// components of `(QU_B) Σ V_Bᵀ`.
pub fn randomized_svd<R: Rng + ?Sized>(
    w: &DMatrix<f64>,
    rank: usize,
    oversampling: usize,
    power_iters: usize,
    rng: &mut R,
) -> Result<TruncatedSvd, AtomError> {
    let (rows, cols) = w.shape();
    if rank == 0 {
        return Err(AtomError::ZeroSparsity);
    }
    let sketch = rank + oversampling;
    let dim = rows.min(cols);
    if sketch > dim {
        return Err(AtomError::SketchTooLarge { sketch, dim });
    }
    let omega = gaussian_matrix(cols, sketch, rng);
    let mut q = orthonormal_range(&(w * omega));
    for _ in 0..power_iters {
        let z = orthonormal_range(&w.tr_mul(&q));
        q = orthonormal_range(&(w * z));
    }
    if q.ncols() == 0 {
        return Ok(TruncatedSvd {
            u: DMatrix::zeros(rows, 0),
            singular_values: DVector::zeros(0),
            v: DMatrix::zeros(cols, 0),
        });
    }
    let b = q.tr_mul(w);
    let svd = b.svd_unordered(true, true);
    let ub = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested Vᵀ").transpose();
    let mut out = select_components(&ub, &svd.singular_values, &v, rank, rows.max(cols));
    out.u = &q * out.u;
    Ok(out)
}
