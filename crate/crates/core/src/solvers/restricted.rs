//! Least squares restricted to the span of a support.

use nalgebra::{DMatrix, DVector};

use super::SolverError;
use crate::atoms::{span_basis, AtomKind, AtomModel, SupportSet};
use crate::objectives::BlockObjective;

/// Ridge added when the plain restricted solve breaks down or stalls.
pub const RIDGE: f64 = 1e-10;
/// Inner iteration cap, as a multiple of the restricted dimension.
pub const INNER_ITERS_PER_DIM: usize = 10;
/// Floor on the stopping rule relative to the gradient at zero.
const RELATIVE_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedSolution {
    /// Minimizer estimate, exactly in the span of the support.
    pub b: DVector<f64>,
    /// `‖P ∇F(b)‖` at the returned point (without any ridge term).
    pub gradient_norm: f64,
    pub iterations: usize,
    /// False when the returned point misses the requested tolerance.
    pub converged: bool,
    pub ridge_used: bool,
}

/// `argmin F(w)` over `w ∈ span(support)` by conjugate gradients on the
/// restricted normal equations.
///
/// Stops once `‖P ∇F(b)‖ ≤ max(tolerance, 1e-13·‖P ∇F(0)‖)` or after
/// `10·dim` iterations. A breakdown or a miss triggers one retry with a
/// `1e-10` ridge; if that also misses, the best iterate seen is returned with
/// `converged = false`.
pub fn restricted_minimize(
    obj: &BlockObjective,
    model: &AtomModel,
    support: &SupportSet,
    tolerance: f64,
) -> Result<RestrictedSolution, SolverError> {
    let dim = obj.dim();
    if model.ambient_dim() != dim {
        return Err(crate::atoms::AtomError::DimensionMismatch { expected: dim, actual: model.ambient_dim() }.into());
    }
    let basis = restricted_basis(model, support)?;
    let restricted_design = match &basis {
        Basis::Columns(ix) => obj.design().select_columns(ix),
        Basis::Dense(q) => obj.design() * q,
    };
    let p = restricted_design.ncols();
    if p == 0 {
        let zero = DVector::zeros(dim);
        return Ok(RestrictedSolution { b: zero, gradient_norm: 0.0, iterations: 0, converged: true, ridge_used: false });
    }
    let m = obj.rows() as f64;
    let y = obj.observations();
    let g0 = restricted_design.tr_mul(y).norm() / m;
    let tol = tolerance.max(RELATIVE_FLOOR * g0);
    let max_iters = INNER_ITERS_PER_DIM * p;

    let mut out = cgls(&restricted_design, y, 0.0, tol, max_iters);
    let mut ridge_used = false;
    if !out.converged {
        let retry = cgls(&restricted_design, y, RIDGE * m, tol, max_iters);
        ridge_used = true;
        let iterations = out.iterations + retry.iterations;
        out = if retry.gradient_norm <= out.gradient_norm { retry } else { out };
        out.iterations = iterations;
    }
    let b = match &basis {
        Basis::Columns(ix) => {
            let mut b = DVector::zeros(dim);
            for (c, &i) in ix.iter().enumerate() {
                b[i] = out.z[c];
            }
            b
        }
        Basis::Dense(q) => q * &out.z,
    };
    Ok(RestrictedSolution {
        b,
        gradient_norm: out.gradient_norm,
        iterations: out.iterations,
        converged: out.converged,
        ridge_used,
    })
}

enum Basis {
    /// Coordinate supports: the basis is a column selection.
    Columns(Vec<usize>),
    Dense(DMatrix<f64>),
}

fn restricted_basis(model: &AtomModel, support: &SupportSet) -> Result<Basis, SolverError> {
    if let (AtomKind::Coordinate { .. }, SupportSet::Indices(ix)) = (model.kind(), support) {
        if let Some(&index) = ix.iter().find(|&&i| i >= model.ambient_dim()) {
            return Err(crate::atoms::AtomError::IndexOutOfRange { index, atoms: model.ambient_dim() }.into());
        }
        return Ok(Basis::Columns(ix.clone()));
    }
    Ok(Basis::Dense(span_basis(model, support)?))
}

struct CglsOutcome {
    z: DVector<f64>,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

/// CGLS for `min (1/2m)‖y − B z‖² + (shift/2m)‖z‖²`. Convergence is judged on
/// the unshifted gradient `(1/m) Bᵀ(B z − y)`.
fn cgls(b: &DMatrix<f64>, y: &DVector<f64>, shift: f64, tol: f64, max_iters: usize) -> CglsOutcome {
    let m = b.nrows() as f64;
    let p = b.ncols();
    let mut z = DVector::zeros(p);
    let mut r = y.clone();
    let mut s = b.tr_mul(&r);
    let mut d = s.clone();
    let mut gamma = s.norm_squared();
    let plain_grad = |r: &DVector<f64>| b.tr_mul(r).norm() / m;
    let mut best = (plain_grad(&r), z.clone());
    if best.0 <= tol {
        return CglsOutcome { z, gradient_norm: best.0, iterations: 0, converged: true };
    }
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let q = b * &d;
        let curvature = q.norm_squared() + shift * d.norm_squared();
        if !(curvature > 0.0) || !curvature.is_finite() {
            break;
        }
        let step = gamma / curvature;
        z.axpy(step, &d, 1.0);
        r.axpy(-step, &q, 1.0);
        if iterations % 50 == 0 {
            r = y - b * &z;
        }
        s = b.tr_mul(&r);
        s.axpy(-shift, &z, 1.0);
        let g = plain_grad(&r);
        if g < best.0 {
            best = (g, z.clone());
        }
        if g <= tol {
            return CglsOutcome { z, gradient_norm: g, iterations, converged: true };
        }
        let gamma_next = s.norm_squared();
        if !(gamma_next > 0.0) {
            break;
        }
        d = &s + (gamma_next / gamma) * &d;
        gamma = gamma_next;
    }
    CglsOutcome { z: best.1, gradient_norm: best.0, iterations, converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{gaussian_matrix, gaussian_vector};
    use crate::rng::stream;

    #[test]
    fn identity_design_restricted() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(3, 3), DVector::from_vec(vec![1.0, 2.0, 3.0]), 3)
            .unwrap();
        let sol =
            restricted_minimize(&obj, &AtomModel::coordinate(3), &SupportSet::Indices(vec![0, 2]), 0.0).unwrap();
        assert!((sol.b - DVector::from_vec(vec![1.0, 0.0, 3.0])).norm() < 1e-14);
        assert!(sol.converged);
    }

    #[test]
    fn overdetermined_matches_normal_equations() {
        let mut rng = stream(11, &[]);
        let a = gaussian_matrix(30, 12, &mut rng);
        let y = gaussian_vector(30, &mut rng);
        let obj = BlockObjective::sparse_regression(a.clone(), y.clone(), 5).unwrap();
        let support = SupportSet::Indices(vec![1, 4, 5, 9]);
        let sol = restricted_minimize(&obj, &AtomModel::coordinate(12), &support, 0.0).unwrap();
        let sub = a.select_columns(&[1, 4, 5, 9]);
        let normal = (sub.transpose() * &sub).lu().solve(&(sub.transpose() * &y)).unwrap();
        let got = DVector::from_vec(vec![sol.b[1], sol.b[4], sol.b[5], sol.b[9]]);
        assert!((got - normal).norm() < 1e-10);
        let g = obj.full_gradient(&sol.b).unwrap();
        let restricted: f64 = [1, 4, 5, 9].iter().map(|&i| g[i] * g[i]).sum::<f64>().sqrt();
        assert!(restricted <= 1e-10);
        assert_eq!(sol.b[0], 0.0);
    }

    #[test]
    fn rank_one_true_subspaces_recover_matrix() {
        let mut rng = stream(12, &[]);
        let (n1, n2, r, m) = (6, 5, 2, 40);
        let w = gaussian_matrix(n1, r, &mut rng) * gaussian_matrix(r, n2, &mut rng);
        let probes: Vec<_> = (0..m).map(|_| gaussian_matrix(n1, n2, &mut rng)).collect();
        let y = DVector::from_iterator(m, probes.iter().map(|a| a.dot(&w)));
        let obj = BlockObjective::matrix_recovery(&probes, y, 4).unwrap();
        let svd = crate::atoms::truncated_svd(&w, r);
        let support = SupportSet::from_subspaces(svd.u.clone(), svd.v.clone()).unwrap();
        let sol = restricted_minimize(&obj, &AtomModel::rank_one(n1, n2), &support, 0.0).unwrap();
        let wv = DVector::from_column_slice(w.as_slice());
        assert!((sol.b - &wv).norm() < 1e-8 * wv.norm());
    }

    #[test]
    fn singular_restricted_system_still_returns() {
        // duplicated column: the restricted normal equations are singular
        let mut a = DMatrix::identity(4, 3);
        a[(3, 2)] = 0.0;
        let col = a.column(0).into_owned();
        a.set_column(2, &col);
        let obj = BlockObjective::sparse_regression(a, DVector::from_vec(vec![1.0, 2.0, 0.0, 0.0]), 4).unwrap();
        let sol = restricted_minimize(&obj, &AtomModel::coordinate(3), &SupportSet::Indices(vec![0, 1, 2]), 0.0).unwrap();
        assert!(sol.b.iter().all(|x| x.is_finite()));
        assert!(sol.gradient_norm < 1e-10);
    }

    #[test]
    fn empty_support_gives_zero() {
        let obj = BlockObjective::sparse_regression(DMatrix::identity(3, 3), DVector::from_element(3, 1.0), 3).unwrap();
        let sol = restricted_minimize(&obj, &AtomModel::coordinate(3), &SupportSet::Indices(vec![]), 0.0).unwrap();
        assert_eq!(sol.b, DVector::zeros(3));
    }
}
