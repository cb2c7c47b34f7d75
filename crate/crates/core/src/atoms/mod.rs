//! Atom sets, supports, and the projection/identification operators.
//!
//! A signal is sparse with respect to an [`AtomModel`] when it is a linear
//! combination of a few atoms. Three models are supported:
//!
//! - `Coordinate`: the standard basis of `R^n` (ordinary sparsity),
//! - `RankOne`: all unit-norm rank-one `n1 × n2` matrices (low rank),
//! - `FiniteDictionary`: the unit-norm columns of an `n × N` matrix.
//!
//! [`identify`] picks a near-best support of size at most `k`, [`project`] is
//! the orthogonal projection onto the span of a support, and [`merge`] unions two
//! supports. Coordinate and dictionary supports are sorted index lists; rank-one
//! supports are pairs of orthonormal column/row subspace bases.

mod identify;
mod support;
mod svd;

pub use identify::{identify, identify_with_certificate, merge, project, span_basis, EtaCertificate, Identification};
pub use support::{SupportSet, SupportSnapshot};
pub use svd::{randomized_svd, truncated_svd, TruncatedSvd};

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance on the unit norm of dictionary columns.
pub const DICTIONARY_NORM_TOL: f64 = 1e-12;
/// Tolerance on `UᵀU = I` for rank-one supports.
pub const ORTHONORMAL_TOL: f64 = 1e-10;
/// Greedy identification reports an achieved η only for dictionaries this small.
pub const GREEDY_CERTIFY_MAX_ATOMS: usize = 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AtomError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("sparsity {k} exceeds the {atoms} available atoms")]
    SparsityTooLarge { k: usize, atoms: usize },
    #[error("sparsity must be at least 1")]
    ZeroSparsity,
    #[error("{mode} projection is not supported for the {model} model")]
    UnsupportedMode { mode: &'static str, model: &'static str },
    #[error("support does not belong to this model: {0}")]
    SupportMismatch(String),
    #[error("dictionary column {index} has norm {norm}, expected 1")]
    NonUnitAtom { index: usize, norm: f64 },
    #[error("index {index} out of range for {atoms} atoms")]
    IndexOutOfRange { index: usize, atoms: usize },
    #[error("basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),
    #[error("sketch size {sketch} exceeds matrix dimension {dim}")]
    SketchTooLarge { sketch: usize, dim: usize },
    #[error("invalid projection configuration: {0}")]
    InvalidConfig(String),
}

/// Which atom set sparsity is measured against.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomKind {
    Coordinate { n: usize },
    RankOne { rows: usize, cols: usize },
    FiniteDictionary { atoms: DMatrix<f64> },
}

/// An atom set together with its ambient dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomModel {
    kind: AtomKind,
}

impl AtomModel {
    pub fn coordinate(n: usize) -> Self {
        Self { kind: AtomKind::Coordinate { n } }
    }

    /// Rank-one atoms over `rows × cols` matrices. Ambient vectors are `vec(W)`
    /// in column-major order.
    pub fn rank_one(rows: usize, cols: usize) -> Self {
        Self { kind: AtomKind::RankOne { rows, cols } }
    }

    /// A finite dictionary whose columns must already have unit norm.
    pub fn dictionary(atoms: DMatrix<f64>) -> Result<Self, AtomError> {
        for (index, col) in atoms.column_iter().enumerate() {
            let norm = col.norm();
            if (norm - 1.0).abs() > DICTIONARY_NORM_TOL {
                return Err(AtomError::NonUnitAtom { index, norm });
            }
        }
        Ok(Self { kind: AtomKind::FiniteDictionary { atoms } })
    }

    /// A finite dictionary built by normalizing each column.
    pub fn dictionary_normalized(mut atoms: DMatrix<f64>) -> Result<Self, AtomError> {
        for (index, mut col) in atoms.column_iter_mut().enumerate() {
            let norm = col.norm();
            if norm == 0.0 || !norm.is_finite() {
                return Err(AtomError::NonUnitAtom { index, norm });
            }
            col /= norm;
        }
        Self::dictionary(atoms)
    }

    pub fn kind(&self) -> &AtomKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            AtomKind::Coordinate { n } => *n,
            AtomKind::RankOne { rows, cols } => rows * cols,
            AtomKind::FiniteDictionary { atoms } => atoms.nrows(),
        }
    }

    /// Number of atoms, or `None` for the infinite rank-one set.
    pub fn atom_count(&self) -> Option<usize> {
        match &self.kind {
            AtomKind::Coordinate { n } => Some(*n),
            AtomKind::RankOne { .. } => None,
            AtomKind::FiniteDictionary { atoms } => Some(atoms.ncols()),
        }
    }

    /// Largest support size that can ever be returned: the atom count, or
    /// `min(rows, cols)` for rank-one.
    pub fn max_support(&self) -> usize {
        match &self.kind {
            AtomKind::RankOne { rows, cols } => (*rows).min(*cols),
            _ => self.atom_count().unwrap_or(0),
        }
    }

    pub(crate) fn name(&self) -> &'static str {
        match self.kind {
            AtomKind::Coordinate { .. } => "coordinate",
            AtomKind::RankOne { .. } => "rank-one",
            AtomKind::FiniteDictionary { .. } => "finite dictionary",
        }
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<(), AtomError> {
        let expected = self.ambient_dim();
        if len != expected {
            return Err(AtomError::DimensionMismatch { expected, actual: len });
        }
        Ok(())
    }
}

/// How `identify` computes a support.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProjectionMode {
    /// Top-k magnitudes (coordinate) or truncated SVD (rank-one).
    Exact,
    /// Randomized range finder with `oversampling` extra columns and
    /// `power_iters` subspace iterations (rank-one only).
    Randomized { oversampling: usize, power_iters: usize },
    /// Orthogonal greedy selection (finite dictionary only).
    Greedy,
}

/// A projection mode plus the tolerance η it is declared to satisfy.
///
/// `certified_eta` is what the contraction diagnostics assume for this
/// operator. Exact projections always declare η = 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionConfig {
    mode: ProjectionMode,
    certified_eta: f64,
    eta_target: Option<f64>,
}

impl Default for ProjectionConfig {
    fn default() -> Self {
        Self::exact()
    }
}

impl ProjectionConfig {
    pub fn exact() -> Self {
        Self { mode: ProjectionMode::Exact, certified_eta: 1.0, eta_target: None }
    }

    /// Randomized SVD projection. The declared η defaults to the worst case
    /// over sketch sizes, `1 + sqrt(1/(1+d))` at rank one; use
    /// [`ProjectionConfig::with_eta`] to override.
    pub fn randomized(oversampling: usize, power_iters: usize) -> Self {
        let eta = 1.0 + (1.0 / (1.0 + oversampling as f64)).sqrt();
        Self { mode: ProjectionMode::Randomized { oversampling, power_iters }, certified_eta: eta, eta_target: None }
    }

    /// Greedy dictionary selection declared to satisfy tolerance `eta`.
    pub fn greedy(eta: f64) -> Result<Self, AtomError> {
        Self { mode: ProjectionMode::Greedy, certified_eta: 1.0, eta_target: None }.with_eta(eta)
    }

    pub fn with_eta(mut self, eta: f64) -> Result<Self, AtomError> {
        if !(eta >= 1.0) || !eta.is_finite() {
            return Err(AtomError::InvalidConfig(format!("eta must be a finite value >= 1, got {eta}")));
        }
        if self.mode == ProjectionMode::Exact && eta != 1.0 {
            return Err(AtomError::InvalidConfig("exact projection has eta = 1".into()));
        }
        self.certified_eta = eta;
        Ok(self)
    }

    /// Per-iteration tolerance request. Randomized projections pick the
    /// smallest oversampling whose bound meets it; other modes only record it.
    pub fn with_eta_target(mut self, eta: f64) -> Result<Self, AtomError> {
        if !(eta >= 1.0) || !eta.is_finite() {
            return Err(AtomError::InvalidConfig(format!("eta must be a finite value >= 1, got {eta}")));
        }
        self.eta_target = Some(eta);
        if !self.is_exact() {
            self.certified_eta = eta;
        }
        Ok(self)
    }

    pub fn eta_target(&self) -> Option<f64> {
        self.eta_target
    }

    pub fn mode(&self) -> ProjectionMode {
        self.mode
    }

    pub fn certified_eta(&self) -> f64 {
        self.certified_eta
    }

    pub fn is_exact(&self) -> bool {
        self.mode == ProjectionMode::Exact
    }

    /// Short label used in experiment output, e.g. `exact` or `rsvd(d=5,q=0)`.
    pub fn label(&self) -> String {
        match self.mode {
            ProjectionMode::Exact => "exact".into(),
            ProjectionMode::Randomized { oversampling, power_iters } => {
                format!("rsvd(d={oversampling},q={power_iters})")
            }
            ProjectionMode::Greedy => "greedy".into(),
        }
    }
}

/// The multiplicative error bound `1 + sqrt(s/(s+d))` of a rank-`s` randomized
/// SVD with oversampling `d`.
pub fn randomized_eta_bound(rank: usize, oversampling: usize) -> f64 {
    let s = rank as f64;
    1.0 + (s / (s + oversampling as f64)).sqrt()
}

/// Smallest oversampling `d` whose bound `1 + sqrt(s/(s+d))` does not exceed
/// `eta`, or `None` when no finite `d` achieves it (`eta <= 1`).
pub fn oversampling_for_eta(rank: usize, eta: f64) -> Option<usize> {
    if eta <= 1.0 || rank == 0 {
        return None;
    }
    let t = eta - 1.0;
    if t >= 1.0 {
        return Some(0);
    }
    // s/(s+d) <= t^2  <=>  d >= s (1/t^2 - 1)
    let d = (rank as f64 * (1.0 / (t * t) - 1.0)).ceil();
    let mut d = d.max(0.0) as usize;
    while d > 0 && randomized_eta_bound(rank, d - 1) <= eta {
        d -= 1;
    }
    while randomized_eta_bound(rank, d) > eta {
        d += 1;
    }
    Some(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dictionary_requires_unit_columns() {
        let d = DMatrix::from_column_slice(2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(AtomModel::dictionary(d.clone()), Err(AtomError::NonUnitAtom { index: 1, .. })));
        let m = AtomModel::dictionary_normalized(d).unwrap();
        assert_eq!(m.atom_count(), Some(2));
    }

    #[test]
    fn exact_config_declares_unit_eta() {
        assert_eq!(ProjectionConfig::exact().certified_eta(), 1.0);
        assert!(ProjectionConfig::exact().with_eta(1.2).is_err());
        assert!(ProjectionConfig::greedy(0.5).is_err());
    }

    #[test]
    fn oversampling_inverse_of_bound() {
        for s in 1..8 {
            for &eta in &[1.05, 1.2, 1.5, 1.7, 2.0] {
                let d = oversampling_for_eta(s, eta).unwrap();
                assert!(randomized_eta_bound(s, d) <= eta);
                if d > 0 {
                    assert!(randomized_eta_bound(s, d - 1) > eta);
                }
            }
        }
        assert_eq!(oversampling_for_eta(3, 1.0), None);
    }
}
