//! Brute-force references for tests and diagnostics.
//!
//! Nothing here calls into the projection or solver code of the other
//! modules: supports are enumerated directly, projections go through
//! nalgebra's dense factorizations, and the full-gradient iterations are
//! written out from scratch. Every exhaustive routine checks an
//! [`OracleBudget`] first and fails rather than approximating.

use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};
use thiserror::Error;

use crate::atoms::{AtomError, AtomKind, AtomModel, SupportSet, SupportSnapshot};
use crate::objectives::{BlockObjective, ObjectiveError};
use crate::solvers::{IterationRecord, RunStatus, RunTrace};

/// Candidates that count as ties with the incumbent, relative to `‖v‖`.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleBudget {
    /// Largest number of candidate supports an exhaustive search may visit.
    pub max_subsets: u64,
    /// Largest ambient dimension for finite differences.
    pub max_dim: usize,
}

impl Default for OracleBudget {
    fn default() -> Self {
        Self { max_subsets: 2_000_000, max_dim: 4096 }
    }
}

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("oracle budget exceeded: {needed} candidates, {allowed} allowed")]
    BudgetExceeded { needed: u64, allowed: u64 },
    #[error("oracle does not support {0}")]
    Unsupported(String),
    #[error("invalid oracle input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BestSupport {
    pub support: SupportSet,
    /// `‖v − P_Γ* v‖`.
    pub residual: f64,
}

/// `C(n, k)`, saturating at `u64::MAX`.
pub fn choose(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

/// Globally optimal support of size at most `k`.
///
/// Finite atom sets: every subset of size `0..=k` is visited in order of size,
/// then lexicographically; a candidate replaces the incumbent only if it is
/// better by more than `1e-12·‖v‖`. Rank-one atoms: the top right singular
/// subspace from the eigendecomposition of `WᵀW` (or `WWᵀ`).
pub fn best_support_bruteforce(
    model: &AtomModel,
    v: &DVector<f64>,
    k: usize,
    budget: &OracleBudget,
) -> Result<BestSupport, OracleError> {
    if v.len() != model.ambient_dim() {
        return Err(AtomError::DimensionMismatch { expected: model.ambient_dim(), actual: v.len() }.into());
    }
    match model.kind() {
        AtomKind::RankOne { rows, cols } => Ok(best_rank_support(&DMatrix::from_column_slice(*rows, *cols, v.as_slice()), k)),
        AtomKind::Coordinate { n } => {
            let atoms = *n;
            // sum the dropped entries directly; ‖v‖² − kept cancels badly
            enumerate(atoms, k, budget, v.norm(), |s| {
                let dropped: f64 = (0..atoms).filter(|i| s.binary_search(i).is_err()).map(|i| v[i] * v[i]).sum();
                dropped.sqrt()
            })
        }
        AtomKind::FiniteDictionary { atoms } => {
            enumerate(atoms.ncols(), k, budget, v.norm(), |s| dictionary_residual(atoms, v, s))
        }
    }
}

fn enumerate(
    atoms: usize,
    k: usize,
    budget: &OracleBudget,
    scale: f64,
    mut residual: impl FnMut(&[usize]) -> f64,
) -> Result<BestSupport, OracleError> {
    let k = k.min(atoms);
    let needed = (0..=k).fold(0u64, |acc, s| acc.saturating_add(choose(atoms, s)));
    if needed > budget.max_subsets {
        return Err(OracleError::BudgetExceeded { needed, allowed: budget.max_subsets });
    }
    let mut best: (Vec<usize>, f64) = (Vec::new(), residual(&[]));
    for size in 1..=k {
        let mut subset: Vec<usize> = (0..size).collect();
        loop {
            let r = residual(&subset);
            if r < best.1 - TIE_TOL * scale {
                best = (subset.clone(), r);
            }
            if !advance(&mut subset, atoms) {
                break;
            }
        }
    }
    Ok(BestSupport { support: SupportSet::Indices(best.0), residual: best.1 })
}

/// Next subset in lexicographic order; false after the last one.
fn advance(subset: &mut [usize], n: usize) -> bool {
    let k = subset.len();
    for pos in (0..k).rev() {
        if subset[pos] < n - k + pos {
            subset[pos] += 1;
            for j in pos + 1..k {
                subset[j] = subset[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

fn dictionary_residual(atoms: &DMatrix<f64>, v: &DVector<f64>, subset: &[usize]) -> f64 {
    if subset.is_empty() {
        return v.norm();
    }
    let sub = atoms.select_columns(subset);
    (v - &sub * least_squares(&sub, v)).norm()
}

/// Minimum-norm least squares through a full SVD.
fn least_squares(a: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let svd = SVD::new(a.clone(), true, true);
    let cutoff = 1e-12 * svd.singular_values.max();
    svd.solve(y, cutoff).expect("both factors were computed")
}

/// Leading right singular vectors of `w`, sorted by decreasing singular value.
fn leading_right_vectors(w: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(w.transpose() * w);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let cols: Vec<_> = order.iter().take(k).map(|&j| eig.eigenvectors.column(j).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(w.ncols(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Best rank-`s` approximation of `w`, built from an eigendecomposition of the
/// smaller Gram matrix.
pub fn exact_truncation(w: &DMatrix<f64>, s: usize) -> DMatrix<f64> {
    if w.ncols() <= w.nrows() {
        let v = leading_right_vectors(w, s.min(w.ncols()));
        w * &v * v.transpose()
    } else {
        let u = leading_right_vectors(&w.transpose(), s.min(w.nrows()));
        &u * u.transpose() * w
    }
}

fn best_rank_support(w: &DMatrix<f64>, k: usize) -> BestSupport {
    let r = k.min(w.nrows().min(w.ncols()));
    let v = leading_right_vectors(w, r);
    let wv = w * &v;
    let mut us = Vec::new();
    let mut vs = Vec::new();
    let scale = w.norm();
    for j in 0..v.ncols() {
        let sigma = wv.column(j).norm();
        if sigma > 1e-13 * scale {
            us.push(wv.column(j) / sigma);
            vs.push(v.column(j).into_owned());
        }
    }
    let residual = (w - exact_truncation(w, r)).norm();
    let support = if us.is_empty() {
        SupportSet::Subspace { u: DMatrix::zeros(w.nrows(), 0), v: DMatrix::zeros(w.ncols(), 0) }
    } else {
        SupportSet::Subspace { u: DMatrix::from_columns(&us), v: DMatrix::from_columns(&vs) }
    };
    BestSupport { support, residual }
}

/// `‖v − P_Γ v‖`, computed without the main projection code.
pub fn support_residual(model: &AtomModel, v: &DVector<f64>, support: &SupportSet) -> Result<f64, OracleError> {
    match (model.kind(), support) {
        (AtomKind::Coordinate { n }, SupportSet::Indices(ix)) => {
            if ix.iter().any(|&i| i >= *n) {
                return Err(OracleError::InvalidInput("support index out of range".into()));
            }
            let mut r = v.clone();
            for &i in ix {
                r[i] = 0.0;
            }
            Ok(r.norm())
        }
        (AtomKind::FiniteDictionary { atoms }, SupportSet::Indices(ix)) => {
            if ix.iter().any(|&i| i >= atoms.ncols()) {
                return Err(OracleError::InvalidInput("support index out of range".into()));
            }
            Ok(dictionary_residual(atoms, v, ix))
        }
        (AtomKind::RankOne { rows, cols }, SupportSet::Subspace { u, v: right }) => {
            let w = DMatrix::from_column_slice(*rows, *cols, v.as_slice());
            let pu = projector(u);
            let pv = projector(right);
            Ok((&w - &pu * &w * &pv).norm())
        }
        _ => Err(OracleError::Unsupported(format!("this support for the {} model", model.name()))),
    }
}

fn projector(basis: &DMatrix<f64>) -> DMatrix<f64> {
    if basis.ncols() == 0 {
        return DMatrix::zeros(basis.nrows(), basis.nrows());
    }
    let svd = SVD::new(basis.clone(), true, false);
    let u = svd.u.expect("requested");
    let tol = 1e-12 * svd.singular_values.max();
    let cols: Vec<_> = (0..svd.singular_values.len())
        .filter(|&j| svd.singular_values[j] > tol)
        .map(|j| u.column(j).into_owned())
        .collect();
    if cols.is_empty() {
        return DMatrix::zeros(basis.nrows(), basis.nrows());
    }
    let q = DMatrix::from_columns(&cols);
    &q * q.transpose()
}

/// `‖v − P_Γ v‖ / ‖v − P_Γ* v‖`, with `1` when both residuals vanish and
/// infinity when only the optimal one does.
pub fn achieved_eta(
    model: &AtomModel,
    v: &DVector<f64>,
    k: usize,
    support: &SupportSet,
    budget: &OracleBudget,
) -> Result<f64, OracleError> {
    let best = best_support_bruteforce(model, v, k, budget)?;
    let ours = support_residual(model, v, support)?;
    let floor = TIE_TOL * v.norm();
    Ok(if ours <= floor {
        1.0
    } else if best.residual <= floor {
        f64::INFINITY
    } else {
        (ours / best.residual).max(1.0)
    })
}

/// Whether `‖v − P_Γ v‖ ≤ η‖v − P_Γ* v‖` holds (up to `1e-12·‖v‖`).
pub fn verify_eta(
    model: &AtomModel,
    v: &DVector<f64>,
    k: usize,
    support: &SupportSet,
    eta: f64,
    budget: &OracleBudget,
) -> Result<bool, OracleError> {
    if support.len() > k {
        return Ok(false);
    }
    let best = best_support_bruteforce(model, v, k, budget)?;
    let ours = support_residual(model, v, support)?;
    Ok(ours <= eta * best.residual + TIE_TOL * v.norm())
}

/// Keeps the `k` largest-magnitude nonzero entries (lower index on ties) by a
/// full sort.
fn hard_threshold(x: &DVector<f64>, k: usize) -> (DVector<f64>, Vec<usize>) {
    let mut order: Vec<usize> = (0..x.len()).filter(|&i| x[i] != 0.0).collect();
    order.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    order.truncate(k);
    order.sort_unstable();
    let mut out = DVector::zeros(x.len());
    for &i in &order {
        out[i] = x[i];
    }
    (out, order)
}

fn coordinate_only(obj: &BlockObjective) -> Result<(), OracleError> {
    match obj.shape() {
        crate::objectives::SignalShape::Vector { .. } => Ok(()),
        _ => Err(OracleError::Unsupported("matrix-shaped objectives in the reference iterations".into())),
    }
}

/// `(1/m) Aᵀ(Aw − y)`.
fn full_gradient(a: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    a.tr_mul(&(a * w - y)) / a.nrows() as f64
}

fn objective(a: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>) -> f64 {
    (y - a * w).norm_squared() / (2.0 * a.nrows() as f64)
}

struct Recorder {
    start: Instant,
    records: Vec<IterationRecord>,
    iterates: Vec<DVector<f64>>,
}

impl Recorder {
    fn new() -> Self {
        Self { start: Instant::now(), records: Vec::new(), iterates: Vec::new() }
    }

    fn push(&mut self, t: usize, a: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, support: Vec<usize>) {
        self.records.push(IterationRecord {
            iteration: t,
            epoch: t as f64,
            block: (t > 0).then_some(0),
            error: None,
            objective: Some(objective(a, y, w)),
            support: SupportSnapshot::Indices(support),
            wall_time_s: self.start.elapsed().as_secs_f64(),
        });
        self.iterates.push(w.clone());
    }

    fn finish(self) -> RunTrace {
        let final_iterate = self.iterates.last().cloned().unwrap_or_default();
        RunTrace {
            records: self.records,
            status: RunStatus::MaxEpochs,
            final_iterate,
            iterates: self.iterates,
            inner_misses: 0,
            ridge_fallbacks: 0,
        }
    }
}

/// Full-gradient IHT from zero: `w ← H_k(w − γ ∇F(w))` for `max_iters` steps.
/// Every iterate is kept.
pub fn reference_iht(obj: &BlockObjective, k: usize, gamma: f64, max_iters: usize) -> Result<RunTrace, OracleError> {
    coordinate_only(obj)?;
    let (a, y) = (obj.design(), obj.observations());
    let mut w = DVector::zeros(obj.dim());
    let mut rec = Recorder::new();
    rec.push(0, a, y, &w, Vec::new());
    for t in 1..=max_iters {
        let b = &w - gamma * full_gradient(a, y, &w);
        let (next, support) = hard_threshold(&b, k);
        w = next;
        rec.push(t, a, y, &w, support);
    }
    Ok(rec.finish())
}

/// Full-gradient GradMP from zero: add the `2k` largest gradient entries to
/// the current support, solve least squares on the union, keep the `k`
/// largest entries.
pub fn reference_gradmp(obj: &BlockObjective, k: usize, max_iters: usize) -> Result<RunTrace, OracleError> {
    coordinate_only(obj)?;
    let (a, y) = (obj.design(), obj.observations());
    let n = obj.dim();
    let mut w = DVector::zeros(n);
    let mut lambda: Vec<usize> = Vec::new();
    let mut rec = Recorder::new();
    rec.push(0, a, y, &w, Vec::new());
    for t in 1..=max_iters {
        let (_, gamma) = hard_threshold(&full_gradient(a, y, &w), (2 * k).min(n));
        let mut merged: Vec<usize> = gamma.into_iter().chain(lambda.iter().copied()).collect();
        merged.sort_unstable();
        merged.dedup();
        let mut b = DVector::zeros(n);
        if !merged.is_empty() {
            let coef = least_squares(&a.select_columns(&merged), y);
            for (c, &i) in merged.iter().enumerate() {
                b[i] = coef[c];
            }
        }
        let (next, kept) = hard_threshold(&b, k);
        w = next;
        lambda = kept.clone();
        rec.push(t, a, y, &w, kept);
    }
    Ok(rec.finish())
}

/// Central differences of `f_i` at `w`, one coordinate at a time.
pub fn finite_difference_gradient(
    obj: &BlockObjective,
    w: &DVector<f64>,
    i: usize,
    h: f64,
) -> Result<DVector<f64>, OracleError> {
    finite_difference_gradient_with(obj, w, i, h, &OracleBudget::default())
}

pub fn finite_difference_gradient_with(
    obj: &BlockObjective,
    w: &DVector<f64>,
    i: usize,
    h: f64,
    budget: &OracleBudget,
) -> Result<DVector<f64>, OracleError> {
    let n = w.len();
    if n > budget.max_dim {
        return Err(OracleError::BudgetExceeded { needed: n as u64, allowed: budget.max_dim as u64 });
    }
    if !(h > 0.0) {
        return Err(OracleError::InvalidInput(format!("step must be positive, got {h}")));
    }
    let mut err = None;
    let g = central_difference(
        |x| {
            obj.block_value(x, i).unwrap_or_else(|e| {
                err.get_or_insert(e);
                f64::NAN
            })
        },
        w,
        h,
    );
    match err {
        Some(e) => Err(e.into()),
        None => Ok(g),
    }
}

/// Component-wise central differences `(f(w + h e_j) − f(w − h e_j)) / 2h`.
pub fn central_difference(mut f: impl FnMut(&DVector<f64>) -> f64, w: &DVector<f64>, h: f64) -> DVector<f64> {
    let mut g = DVector::zeros(w.len());
    let mut x = w.clone();
    for j in 0..w.len() {
        let orig = x[j];
        x[j] = orig + h;
        let up = f(&x);
        x[j] = orig - h;
        let down = f(&x);
        x[j] = orig;
        g[j] = (up - down) / (2.0 * h);
    }
    g
}
