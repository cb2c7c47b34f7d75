//! Empirical restricted convexity/smoothness constants.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::Rng;

use super::{BlockObjective, ObjectiveError};
use crate::atoms::{span_basis, AtomKind, AtomModel, SupportSet};
use crate::linalg::{gaussian_matrix, gaussian_vector, orthonormalize_columns};

/// Exhaustive evaluation is attempted only when `C(n, k) · (M + 1)` restricted
/// eigenproblems fit in this budget.
pub const EXHAUSTIVE_MAX_EVALUATIONS: u128 = 2_000_000;

/// Per-block smoothness `ρ⁺(i)`, restricted convexity `ρ⁻`, and the derived
/// `α = max_i ρ⁺(i)/(M p(i))`, `ρ⁺ = max_i ρ⁺(i)`, `ρ̄⁺ = mean_i ρ⁺(i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedConstants {
    k: usize,
    rho_plus_per_block: Vec<f64>,
    rho_minus: f64,
    sampling: Vec<f64>,
    alpha: f64,
    rho_plus_max: f64,
    rho_plus_bar: f64,
}

impl RestrictedConstants {
    /// Panics if the two vectors differ in length or are empty.
    pub fn from_parts(k: usize, rho_plus_per_block: Vec<f64>, rho_minus: f64, sampling: Vec<f64>) -> Self {
        assert_eq!(rho_plus_per_block.len(), sampling.len(), "one smoothness constant per block");
        assert!(!sampling.is_empty(), "at least one block");
        let m = sampling.len() as f64;
        let alpha = rho_plus_per_block.iter().zip(&sampling).map(|(r, p)| r / (m * p)).fold(f64::NEG_INFINITY, f64::max);
        let rho_plus_max = rho_plus_per_block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rho_plus_bar = rho_plus_per_block.iter().sum::<f64>() / m;
        Self { k, rho_plus_per_block, rho_minus, sampling, alpha, rho_plus_max, rho_plus_bar }
    }

    /// Identical blocks sampled uniformly.
    pub fn uniform(k: usize, blocks: usize, rho_plus: f64, rho_minus: f64) -> Self {
        Self::from_parts(k, vec![rho_plus; blocks], rho_minus, vec![1.0 / blocks as f64; blocks])
    }

    /// Same per-block constants under a different sampling distribution.
    pub fn with_sampling(&self, sampling: Vec<f64>) -> Self {
        Self::from_parts(self.k, self.rho_plus_per_block.clone(), self.rho_minus, sampling)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rho_plus_per_block(&self) -> &[f64] {
        &self.rho_plus_per_block
    }

    pub fn rho_minus(&self) -> f64 {
        self.rho_minus
    }

    pub fn sampling(&self) -> &[f64] {
        &self.sampling
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho_plus_max(&self) -> f64 {
        self.rho_plus_max
    }

    pub fn rho_plus_bar(&self) -> f64 {
        self.rho_plus_bar
    }
}

/// Monte Carlo bracket plus, when affordable, the exact values.
///
/// The Monte Carlo `ρ⁺(i)` are maxima of observed ratios and therefore lower
/// bounds of the true constants; the Monte Carlo `ρ⁻` is a minimum of observed
/// curvatures and therefore an upper bound.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantEstimates {
    pub monte_carlo: RestrictedConstants,
    pub exhaustive: Option<RestrictedConstants>,
}

impl ConstantEstimates {
    /// Exact values when available, otherwise the Monte Carlo estimates.
    pub fn best(&self) -> &RestrictedConstants {
        self.exhaustive.as_ref().unwrap_or(&self.monte_carlo)
    }
}

/// Estimates the level-`k` constants of `obj` with respect to `model`.
///
/// Each of the `trials` draws picks a random support of size `min(k, max
/// support)`, a random point `w` and direction `h` in its span, and records
/// `‖P_S(∇f_i(w+h) − ∇f_i(w))‖/‖h‖` for every block and
/// `2(F(w+h) − F(w) − ⟨∇F(w), h⟩)/‖h‖²`. Coordinate models with few enough
/// supports are additionally evaluated exactly from the extremal eigenvalues of
/// the restricted block and full Hessians.
pub fn estimate_constants<R: Rng + ?Sized>(
    obj: &BlockObjective,
    model: &AtomModel,
    k: usize,
    trials: usize,
    rng: &mut R,
) -> Result<ConstantEstimates, ObjectiveError> {
    if model.ambient_dim() != obj.dim() {
        return Err(ObjectiveError::DimensionMismatch { expected: obj.dim(), actual: model.ambient_dim() });
    }
    let s = k.min(model.max_support()).max(1);
    let blocks = obj.block_count();
    let mut rho_plus = vec![0.0f64; blocks];
    let mut rho_minus = f64::INFINITY;
    for _ in 0..trials.max(1) {
        let support = random_support(model, s, rng);
        let q = span_basis(model, &support).expect("support drawn from this model");
        let w = &q * gaussian_vector(q.ncols(), rng);
        let h = &q * gaussian_vector(q.ncols(), rng);
        let hn = h.norm();
        if hn == 0.0 {
            continue;
        }
        let w2 = &w + &h;
        for (i, rp) in rho_plus.iter_mut().enumerate() {
            let d = obj.block_gradient(&w2, i)? - obj.block_gradient(&w, i)?;
            *rp = rp.max(q.tr_mul(&d).norm() / hn);
        }
        let curv = obj.full_value(&w2)? - obj.full_value(&w)? - obj.full_gradient(&w)?.dot(&h);
        rho_minus = rho_minus.min(2.0 * curv / (hn * hn));
    }
    let monte_carlo = RestrictedConstants::from_parts(k, rho_plus, rho_minus, obj.sampling().to_vec());
    let exhaustive = match model.kind() {
        AtomKind::Coordinate { n } => exhaustive_coordinate(obj, *n, k),
        _ => None,
    };
    Ok(ConstantEstimates { monte_carlo, exhaustive })
}

fn random_support<R: Rng + ?Sized>(model: &AtomModel, s: usize, rng: &mut R) -> SupportSet {
    match model.kind() {
        AtomKind::RankOne { rows, cols } => {
            let basis = |d: usize, rng: &mut R| {
                let g = gaussian_matrix(d, s, rng);
                orthonormalize_columns(g.column_iter().map(|c| c.into_owned()), d, 1e-10).0
            };
            let u = basis(*rows, rng);
            let v = basis(*cols, rng);
            SupportSet::Subspace { u, v }
        }
        _ => {
            let atoms = model.atom_count().unwrap_or(0);
            let mut ix = sample(rng, atoms, s.min(atoms)).into_vec();
            ix.sort_unstable();
            SupportSet::Indices(ix)
        }
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for j in 0..k {
        c = c * (n - j) as u128 / (j + 1) as u128;
        if c > u64::MAX as u128 {
            return u128::MAX;
        }
    }
    c
}

fn exhaustive_coordinate(obj: &BlockObjective, n: usize, k: usize) -> Option<RestrictedConstants> {
    let s = k.min(n).max(1);
    let blocks = obj.block_count();
    let count = binomial(n, s);
    if count.saturating_mul(blocks as u128 + 1) > EXHAUSTIVE_MAX_EVALUATIONS {
        return None;
    }
    let a = obj.design();
    let m = obj.rows() as f64;
    let full = a.tr_mul(a) / m;
    let per_block: Vec<DMatrix<f64>> = (0..blocks)
        .map(|i| {
            let r = obj.block_range(i).expect("index below block count");
            let ai = a.rows(r.start, r.len());
            ai.tr_mul(&ai) * (blocks as f64 / m)
        })
        .collect();
    let mut rho_plus = vec![f64::NEG_INFINITY; blocks];
    let mut rho_minus = f64::INFINITY;
    let mut subset: Vec<usize> = (0..s).collect();
    loop {
        let (lo, _) = extremal_eigenvalues(&full, &subset);
        rho_minus = rho_minus.min(lo);
        for (rp, h) in rho_plus.iter_mut().zip(&per_block) {
            *rp = rp.max(extremal_eigenvalues(h, &subset).1);
        }
        if !next_combination(&mut subset, n) {
            break;
        }
    }
    Some(RestrictedConstants::from_parts(k, rho_plus, rho_minus, obj.sampling().to_vec()))
}

fn extremal_eigenvalues(h: &DMatrix<f64>, subset: &[usize]) -> (f64, f64) {
    if subset.len() == 1 {
        let d = h[(subset[0], subset[0])];
        return (d, d);
    }
    let sub = h.select_rows(subset).select_columns(subset);
    let eig = sub.symmetric_eigenvalues();
    (eig.min(), eig.max())
}

/// Advances `c` to the next `k`-subset of `0..n` in lexicographic order.
fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    let Some(i) = (0..k).rev().find(|&i| c[i] < n - k + i) else {
        return false;
    };
    c[i] += 1;
    for j in i + 1..k {
        c[j] = c[j - 1] + 1;
    }
    true
}
