use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::svd::{randomized_svd, truncated_svd};
use super::{
    oversampling_for_eta, randomized_eta_bound, AtomError, AtomKind, AtomModel, ProjectionConfig, ProjectionMode,
    SupportSet, GREEDY_CERTIFY_MAX_ATOMS,
};
use crate::linalg::orthonormalize_columns;
use crate::oracle::{best_support_bruteforce, OracleBudget};

/// What is known about `‖v − P_Γ v‖ / ‖v − P_Γ* v‖` for a returned support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EtaCertificate {
    /// Optimal support (η = 1).
    Exact,
    /// Holds with high probability, not deterministically.
    Bound(f64),
    /// Ratio measured against the brute-force optimum.
    Achieved(f64),
    /// No certificate available.
    Uncertified,
}

impl EtaCertificate {
    pub fn value(&self) -> Option<f64> {
        match *self {
            EtaCertificate::Exact => Some(1.0),
            EtaCertificate::Bound(e) | EtaCertificate::Achieved(e) => Some(e),
            EtaCertificate::Uncertified => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub support: SupportSet,
    pub certificate: EtaCertificate,
}

/// A support of size at most `k` whose projection residual is within the
/// configured tolerance of the best `k`-atom residual.
///
/// Atoms with zero correlation are never selected, so the support may be
/// smaller than `k`; `v = 0` yields the empty support.
pub fn identify<R: Rng + ?Sized>(
    model: &AtomModel,
    v: &DVector<f64>,
    k: usize,
    cfg: &ProjectionConfig,
    rng: &mut R,
) -> Result<SupportSet, AtomError> {
    identify_with_certificate(model, v, k, cfg, rng).map(|id| id.support)
}

/// [`identify`] plus the η certificate of the returned support.
pub fn identify_with_certificate<R: Rng + ?Sized>(
    model: &AtomModel,
    v: &DVector<f64>,
    k: usize,
    cfg: &ProjectionConfig,
    rng: &mut R,
) -> Result<Identification, AtomError> {
    model.check_dim(v.len())?;
    if k == 0 {
        return Err(AtomError::ZeroSparsity);
    }
    if let Some(atoms) = model.atom_count() {
        if k > atoms {
            return Err(AtomError::SparsityTooLarge { k, atoms });
        }
    }
    match (model.kind(), cfg.mode()) {
        (AtomKind::Coordinate { .. }, ProjectionMode::Exact | ProjectionMode::Greedy) => Ok(Identification {
            support: SupportSet::Indices(top_k_indices(v.as_slice(), k)),
            certificate: EtaCertificate::Exact,
        }),
        (AtomKind::RankOne { rows, cols }, ProjectionMode::Exact) => {
            let w = DMatrix::from_column_slice(*rows, *cols, v.as_slice());
            let t = truncated_svd(&w, k);
            Ok(Identification { support: SupportSet::Subspace { u: t.u, v: t.v }, certificate: EtaCertificate::Exact })
        }
        (AtomKind::RankOne { rows, cols }, ProjectionMode::Randomized { oversampling, power_iters }) => {
            let dim = (*rows).min(*cols);
            let s = k.min(dim);
            let wanted = match cfg.eta_target() {
                Some(eta) => oversampling_for_eta(s, eta).unwrap_or(dim - s),
                None => oversampling,
            };
            let d = wanted.min(dim - s);
            let w = DMatrix::from_column_slice(*rows, *cols, v.as_slice());
            let t = randomized_svd(&w, s, d, power_iters, rng)?;
            Ok(Identification {
                support: SupportSet::Subspace { u: t.u, v: t.v },
                certificate: EtaCertificate::Bound(randomized_eta_bound(s, d)),
            })
        }
        (AtomKind::FiniteDictionary { atoms }, ProjectionMode::Greedy) => {
            let support = SupportSet::Indices(greedy_select(atoms, v, k));
            let certificate = if atoms.ncols() <= GREEDY_CERTIFY_MAX_ATOMS {
                certify(model, v, k, &support)
            } else {
                EtaCertificate::Uncertified
            };
            Ok(Identification { support, certificate })
        }
        (_, mode) => Err(AtomError::UnsupportedMode {
            mode: match mode {
                ProjectionMode::Exact => "exact",
                ProjectionMode::Randomized { .. } => "randomized",
                ProjectionMode::Greedy => "greedy",
            },
            model: model.name(),
        }),
    }
}

fn certify(model: &AtomModel, v: &DVector<f64>, k: usize, support: &SupportSet) -> EtaCertificate {
    let Ok(best) = best_support_bruteforce(model, v, k, &OracleBudget::default()) else {
        return EtaCertificate::Uncertified;
    };
    let Ok(p) = project(model, v, support) else {
        return EtaCertificate::Uncertified;
    };
    let ours = (v - p).norm();
    let scale = v.norm().max(f64::MIN_POSITIVE);
    let ratio = if ours <= 1e-12 * scale {
        1.0
    } else if best.residual <= 1e-12 * scale {
        f64::INFINITY
    } else {
        (ours / best.residual).max(1.0)
    };
    EtaCertificate::Achieved(ratio)
}

/// Indices of the `k` largest-magnitude nonzero entries, sorted ascending.
/// Equal magnitudes are resolved in favour of the lower index.
pub(crate) fn top_k_indices(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).filter(|&i| v[i] != 0.0).collect();
    if idx.len() > k {
        let order = |a: &usize, b: &usize| v[*b].abs().total_cmp(&v[*a].abs()).then(a.cmp(b));
        idx.select_nth_unstable_by(k, order);
        idx.truncate(k);
    }
    idx.sort_unstable();
    idx
}

/// Orthogonal greedy selection: repeatedly add the atom most correlated with
/// the current residual, then re-project onto all selected atoms.
fn greedy_select(atoms: &DMatrix<f64>, v: &DVector<f64>, k: usize) -> Vec<usize> {
    let n = atoms.nrows();
    let scale = v.norm();
    let mut selected: Vec<usize> = Vec::with_capacity(k);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut residual = v.clone();
    while selected.len() < k {
        if residual.norm() <= 1e-13 * scale || scale == 0.0 {
            break;
        }
        let corr = atoms.tr_mul(&residual);
        let best = (0..atoms.ncols())
            .filter(|j| !selected.contains(j))
            .max_by(|&a, &b| corr[a].abs().total_cmp(&corr[b].abs()).then(b.cmp(&a)));
        let Some(j) = best else { break };
        if corr[j] == 0.0 {
            break;
        }
        selected.push(j);
        let mut q = atoms.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&q);
                q.axpy(-c, b, 1.0);
            }
        }
        let qn = q.norm();
        if qn > 1e-12 {
            q /= qn;
            let c = q.dot(&residual);
            residual.axpy(-c, &q, 1.0);
            basis.push(q);
        }
        debug_assert_eq!(residual.len(), n);
    }
    selected.sort_unstable();
    selected
}

/// Orthogonal projection of `v` onto the span of the support's atoms.
pub fn project(model: &AtomModel, v: &DVector<f64>, support: &SupportSet) -> Result<DVector<f64>, AtomError> {
    model.check_dim(v.len())?;
    support.check_model(model)?;
    match (model.kind(), support) {
        (AtomKind::Coordinate { .. }, SupportSet::Indices(ix)) => {
            let mut out = DVector::zeros(v.len());
            for &i in ix {
                out[i] = v[i];
            }
            Ok(out)
        }
        (AtomKind::FiniteDictionary { atoms }, SupportSet::Indices(ix)) => {
            let q = dictionary_basis(atoms, ix);
            Ok(&q * q.tr_mul(v))
        }
        (AtomKind::RankOne { rows, cols }, SupportSet::Subspace { u, v: vb }) => {
            let w = DMatrix::from_column_slice(*rows, *cols, v.as_slice());
            let core = u.tr_mul(&w) * vb;
            let p = u * core * vb.transpose();
            Ok(DVector::from_column_slice(p.as_slice()))
        }
        _ => unreachable!("check_model rejects mismatched supports"),
    }
}

fn dictionary_basis(atoms: &DMatrix<f64>, ix: &[usize]) -> DMatrix<f64> {
    orthonormalize_columns(ix.iter().map(|&j| atoms.column(j).into_owned()), atoms.nrows(), 1e-10).0
}

/// Orthonormal basis (ambient dim × p) of the span of a support.
pub fn span_basis(model: &AtomModel, support: &SupportSet) -> Result<DMatrix<f64>, AtomError> {
    support.check_model(model)?;
    let dim = model.ambient_dim();
    Ok(match (model.kind(), support) {
        (AtomKind::Coordinate { .. }, SupportSet::Indices(ix)) => {
            let mut b = DMatrix::zeros(dim, ix.len());
            for (c, &i) in ix.iter().enumerate() {
                b[(i, c)] = 1.0;
            }
            b
        }
        (AtomKind::FiniteDictionary { atoms }, SupportSet::Indices(ix)) => dictionary_basis(atoms, ix),
        // vec(u_a v_bᵀ) = v_b ⊗ u_a, orthonormal because U and V are.
        (AtomKind::RankOne { .. }, SupportSet::Subspace { u, v }) => v.kronecker(u),
        _ => unreachable!("check_model rejects mismatched supports"),
    })
}

/// Union of two supports: set union for index supports, an orthonormal basis
/// of the summed column and row subspaces for rank-one supports.
pub fn merge(model: &AtomModel, a: &SupportSet, b: &SupportSet) -> Result<SupportSet, AtomError> {
    a.check_model(model)?;
    b.check_model(model)?;
    match (a, b) {
        (SupportSet::Indices(x), SupportSet::Indices(y)) => {
            let mut out = Vec::with_capacity(x.len() + y.len());
            let (mut i, mut j) = (0, 0);
            while i < x.len() || j < y.len() {
                let next = match (x.get(i), y.get(j)) {
                    (Some(&p), Some(&q)) if p == q => {
                        i += 1;
                        j += 1;
                        p
                    }
                    (Some(&p), Some(&q)) if p < q => {
                        i += 1;
                        p
                    }
                    (Some(_), Some(&q)) => {
                        j += 1;
                        q
                    }
                    (Some(&p), None) => {
                        i += 1;
                        p
                    }
                    (None, Some(&q)) => {
                        j += 1;
                        q
                    }
                    (None, None) => unreachable!(),
                };
                out.push(next);
            }
            Ok(SupportSet::Indices(out))
        }
        (SupportSet::Subspace { u: u1, v: v1 }, SupportSet::Subspace { u: u2, v: v2 }) => {
            if u2.ncols() == 0 && v2.ncols() == 0 {
                return Ok(a.clone());
            }
            if u1.ncols() == 0 && v1.ncols() == 0 {
                return Ok(b.clone());
            }
            let stack = |p: &DMatrix<f64>, q: &DMatrix<f64>| {
                let cols = p.column_iter().chain(q.column_iter()).map(|c| c.into_owned());
                orthonormalize_columns(cols, p.nrows(), 1e-10).0
            };
            Ok(SupportSet::Subspace { u: stack(u1, u2), v: stack(v1, v2) })
        }
        _ => unreachable!("check_model rejects mismatched supports"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn coordinate_picks_largest_magnitude() {
        let mut rng = stream(0, &[]);
        let m = AtomModel::coordinate(3);
        let s = identify(&m, &dv(&[3.0, -5.0, 1.0]), 1, &ProjectionConfig::exact(), &mut rng).unwrap();
        assert_eq!(s, SupportSet::Indices(vec![1]));
    }

    #[test]
    fn coordinate_ties_prefer_lowest_index() {
        let mut rng = stream(0, &[]);
        let m = AtomModel::coordinate(3);
        let s = identify(&m, &dv(&[2.0, -2.0, 0.0]), 1, &ProjectionConfig::exact(), &mut rng).unwrap();
        assert_eq!(s, SupportSet::Indices(vec![0]));
    }

    #[test]
    fn zero_vector_gives_empty_support() {
        let mut rng = stream(0, &[]);
        let cfg = ProjectionConfig::exact();
        let s = identify(&AtomModel::coordinate(4), &DVector::zeros(4), 2, &cfg, &mut rng).unwrap();
        assert!(s.is_empty());
        let s = identify(&AtomModel::rank_one(2, 2), &DVector::zeros(4), 1, &cfg, &mut rng).unwrap();
        assert!(s.is_empty());
        assert_eq!(project(&AtomModel::rank_one(2, 2), &DVector::zeros(4), &s).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn fewer_nonzeros_than_k() {
        let mut rng = stream(0, &[]);
        let s = identify(&AtomModel::coordinate(4), &dv(&[0.0, 3.0, 0.0, 0.0]), 3, &ProjectionConfig::exact(), &mut rng)
            .unwrap();
        assert_eq!(s, SupportSet::Indices(vec![1]));
    }

    #[test]
    fn rank_one_diag_top_two() {
        let mut rng = stream(0, &[]);
        let m = AtomModel::rank_one(4, 4);
        let w = DMatrix::from_diagonal(&dv(&[3.0, 2.0, 1.0, 0.0]));
        let v = DVector::from_column_slice(w.as_slice());
        let s = identify(&m, &v, 2, &ProjectionConfig::exact(), &mut rng).unwrap();
        assert_eq!(s.len(), 2);
        let p = project(&m, &v, &s).unwrap();
        assert!(((&v - p).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_paths() {
        let mut rng = stream(0, &[]);
        let m = AtomModel::coordinate(3);
        let cfg = ProjectionConfig::exact();
        assert!(matches!(identify(&m, &dv(&[1.0, 2.0]), 1, &cfg, &mut rng), Err(AtomError::DimensionMismatch { .. })));
        assert!(matches!(identify(&m, &dv(&[1.0, 2.0, 3.0]), 4, &cfg, &mut rng), Err(AtomError::SparsityTooLarge { .. })));
        let rcfg = ProjectionConfig::randomized(2, 0);
        assert!(matches!(
            identify(&m, &dv(&[1.0, 2.0, 3.0]), 1, &rcfg, &mut rng),
            Err(AtomError::UnsupportedMode { mode: "randomized", .. })
        ));
        assert!(project(&m, &dv(&[1.0]), &SupportSet::Indices(vec![0])).is_err());
    }

    #[test]
    fn project_coordinate() {
        let m = AtomModel::coordinate(3);
        let p = project(&m, &dv(&[3.0, -5.0, 1.0]), &SupportSet::Indices(vec![1])).unwrap();
        assert_eq!(p, dv(&[0.0, -5.0, 0.0]));
        let full = project(&m, &dv(&[3.0, -5.0, 1.0]), &SupportSet::full(&m)).unwrap();
        assert_eq!(full, dv(&[3.0, -5.0, 1.0]));
    }

    #[test]
    fn merge_indices() {
        let m = AtomModel::coordinate(6);
        let a = SupportSet::Indices(vec![1, 3]);
        let b = SupportSet::Indices(vec![3, 5]);
        assert_eq!(merge(&m, &a, &b).unwrap(), SupportSet::Indices(vec![1, 3, 5]));
        assert_eq!(merge(&m, &a, &SupportSet::empty(&m)).unwrap(), a);
    }

    #[test]
    fn merge_orthogonal_rank_one_subspaces() {
        let m = AtomModel::rank_one(3, 3);
        let e = |i: usize| DMatrix::from_fn(3, 1, |r, _| if r == i { 1.0 } else { 0.0 });
        let a = SupportSet::from_subspaces(e(0), e(1)).unwrap();
        let b = SupportSet::from_subspaces(e(2), e(0)).unwrap();
        let merged = merge(&m, &a, &b).unwrap();
        let SupportSet::Subspace { u, v } = &merged else { panic!() };
        assert_eq!((u.ncols(), v.ncols()), (2, 2));
        assert!((u.tr_mul(u) - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!((v.tr_mul(v) - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
    }

    #[test]
    fn greedy_on_orthonormal_dictionary_is_top_k() {
        let mut rng = stream(0, &[]);
        let m = AtomModel::dictionary(DMatrix::identity(4, 4)).unwrap();
        let id = identify_with_certificate(&m, &dv(&[0.1, -4.0, 2.0, 0.5]), 2, &ProjectionConfig::greedy(1.0).unwrap(), &mut rng)
            .unwrap();
        assert_eq!(id.support, SupportSet::Indices(vec![1, 2]));
        assert_eq!(id.certificate, EtaCertificate::Achieved(1.0));
    }

    #[test]
    fn span_basis_is_orthonormal() {
        let m = AtomModel::rank_one(3, 2);
        let u = DMatrix::from_column_slice(3, 1, &[0.6, 0.8, 0.0]);
        let v = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let b = span_basis(&m, &SupportSet::from_subspaces(u, v).unwrap()).unwrap();
        assert_eq!(b.shape(), (6, 1));
        // u vᵀ has its nonzeros in column 1: entries (0,1), (1,1) → vec positions 3, 4
        assert!((b[(3, 0)] - 0.6).abs() < 1e-15 && (b[(4, 0)] - 0.8).abs() < 1e-15);
    }
}
