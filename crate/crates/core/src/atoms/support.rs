use nalgebra::DMatrix;

use super::{AtomError, AtomKind, AtomModel, ORTHONORMAL_TOL};

/// The set of atoms a signal is supported on.
///
/// Index supports are kept sorted and duplicate-free. Subspace supports hold
/// orthonormal bases `U` (`rows × r_u`) and `V` (`cols × r_v`); the span is
/// `{ U X Vᵀ }`.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportSet {
    Indices(Vec<usize>),
    Subspace { u: DMatrix<f64>, v: DMatrix<f64> },
}

impl SupportSet {
    /// Index support from arbitrary indices; sorts and removes duplicates.
    pub fn from_indices(mut indices: Vec<usize>, atom_count: usize) -> Result<Self, AtomError> {
        indices.sort_unstable();
        indices.dedup();
        if let Some(&index) = indices.iter().find(|&&i| i >= atom_count) {
            return Err(AtomError::IndexOutOfRange { index, atoms: atom_count });
        }
        Ok(SupportSet::Indices(indices))
    }

    /// Subspace support; both bases must be orthonormal.
    pub fn from_subspaces(u: DMatrix<f64>, v: DMatrix<f64>) -> Result<Self, AtomError> {
        for basis in [&u, &v] {
            let dev = orthonormal_deviation(basis);
            if dev > ORTHONORMAL_TOL {
                return Err(AtomError::NotOrthonormal(dev));
            }
        }
        Ok(SupportSet::Subspace { u, v })
    }

    /// The empty support of a model.
    pub fn empty(model: &AtomModel) -> Self {
        match model.kind() {
            AtomKind::RankOne { rows, cols } => {
                SupportSet::Subspace { u: DMatrix::zeros(*rows, 0), v: DMatrix::zeros(*cols, 0) }
            }
            _ => SupportSet::Indices(Vec::new()),
        }
    }

    /// The support spanning the whole ambient space.
    pub fn full(model: &AtomModel) -> Self {
        match model.kind() {
            AtomKind::RankOne { rows, cols } => SupportSet::Subspace {
                u: DMatrix::identity(*rows, *rows),
                v: DMatrix::identity(*cols, *cols),
            },
            _ => SupportSet::Indices((0..model.atom_count().unwrap_or(0)).collect()),
        }
    }

    /// Number of atoms, or the larger subspace rank for subspace supports.
    pub fn len(&self) -> usize {
        match self {
            SupportSet::Indices(ix) => ix.len(),
            SupportSet::Subspace { u, v } => u.ncols().max(v.ncols()),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn indices(&self) -> Option<&[usize]> {
        match self {
            SupportSet::Indices(ix) => Some(ix),
            SupportSet::Subspace { .. } => None,
        }
    }

    pub fn snapshot(&self) -> SupportSnapshot {
        match self {
            SupportSet::Indices(ix) => SupportSnapshot::Indices(ix.clone()),
            SupportSet::Subspace { .. } => SupportSnapshot::Rank(self.len()),
        }
    }

    pub(crate) fn check_model(&self, model: &AtomModel) -> Result<(), AtomError> {
        match (self, model.kind()) {
            (SupportSet::Indices(ix), AtomKind::Coordinate { .. } | AtomKind::FiniteDictionary { .. }) => {
                let atoms = model.atom_count().unwrap_or(0);
                match ix.iter().find(|&&i| i >= atoms) {
                    Some(&index) => Err(AtomError::IndexOutOfRange { index, atoms }),
                    None => Ok(()),
                }
            }
            (SupportSet::Subspace { u, v }, AtomKind::RankOne { rows, cols }) => {
                if u.nrows() != *rows || v.nrows() != *cols {
                    return Err(AtomError::SupportMismatch(format!(
                        "subspace bases are {}×_ and {}×_, model is {rows}×{cols}",
                        u.nrows(),
                        v.nrows()
                    )));
                }
                Ok(())
            }
            (SupportSet::Indices(_), _) => {
                Err(AtomError::SupportMismatch(format!("index support used with the {} model", model.name())))
            }
            (SupportSet::Subspace { .. }, _) => {
                Err(AtomError::SupportMismatch(format!("subspace support used with the {} model", model.name())))
            }
        }
    }
}

/// What a run trace records about a support.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SupportSnapshot {
    Indices(Vec<usize>),
    Rank(usize),
}

impl SupportSnapshot {
    pub fn len(&self) -> usize {
        match self {
            SupportSnapshot::Indices(ix) => ix.len(),
            SupportSnapshot::Rank(r) => *r,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `max |UᵀU − I|` entrywise.
pub(crate) fn orthonormal_deviation(basis: &DMatrix<f64>) -> f64 {
    let r = basis.ncols();
    if r == 0 {
        return 0.0;
    }
    let gram = basis.transpose() * basis;
    (gram - DMatrix::<f64>::identity(r, r)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_sorted_and_deduplicated() {
        let s = SupportSet::from_indices(vec![5, 1, 3, 1], 6).unwrap();
        assert_eq!(s.indices().unwrap(), &[1, 3, 5]);
        assert!(SupportSet::from_indices(vec![6], 6).is_err());
    }

    #[test]
    fn subspace_must_be_orthonormal() {
        let u = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let v = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        assert!(matches!(SupportSet::from_subspaces(u, v), Err(AtomError::NotOrthonormal(_))));
    }

    #[test]
    fn model_mismatch_detected() {
        let s = SupportSet::Indices(vec![0]);
        assert!(s.check_model(&AtomModel::rank_one(2, 2)).is_err());
        assert!(SupportSet::empty(&AtomModel::rank_one(2, 2)).check_model(&AtomModel::coordinate(4)).is_err());
    }
}
