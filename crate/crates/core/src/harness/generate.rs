//! Synthetic problem generation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;

use super::spec::{Ensemble, SignalKind};
use super::HarnessError;
use crate::atoms::AtomModel;
use crate::linalg::{gaussian_matrix, gaussian_vector};
use crate::objectives::{BlockObjective, SignalShape};

/// Everything random about one problem instance. The block size and noise
/// level are applied afterwards, so all grid points of a trial share the
/// same design, signal, and noise direction.
#[derive(Debug, Clone)]
pub struct ProblemDraw {
    pub design: DMatrix<f64>,
    pub w_star: DVector<f64>,
    /// Unit-norm measurement noise direction.
    pub noise_direction: DVector<f64>,
    pub shape: SignalShape,
}

impl ProblemDraw {
    /// `y = A w★ + noise_norm · direction`, split into blocks of `b` rows.
    pub fn objective(&self, b: usize, noise_norm: f64) -> Result<BlockObjective, HarnessError> {
        let mut y = &self.design * &self.w_star;
        if noise_norm > 0.0 {
            y.axpy(noise_norm, &self.noise_direction, 1.0);
        }
        Ok(BlockObjective::from_design(self.design.clone(), y, b, self.shape)?)
    }

    pub fn model(&self) -> AtomModel {
        self.shape.natural_model()
    }
}

/// Draws a design with `m` rows and a planted signal of sparsity (or rank)
/// `k0`.
pub fn draw_problem<R: Rng + ?Sized>(
    signal: SignalKind,
    dims: (usize, usize),
    k0: usize,
    m: usize,
    ensemble: Ensemble,
    rng: &mut R,
) -> Result<ProblemDraw, HarnessError> {
    let (shape, w_star) = match signal {
        SignalKind::Vector => {
            let n = dims.0;
            let mut w = DVector::zeros(n);
            for i in sample(rng, n, k0).iter() {
                w[i] = gaussian_vector(1, rng)[0];
            }
            (SignalShape::Vector { n }, w)
        }
        SignalKind::Matrix => {
            let (rows, cols) = dims;
            let w = gaussian_matrix(rows, k0, rng) * gaussian_matrix(k0, cols, rng);
            (SignalShape::Matrix { rows, cols }, DVector::from_column_slice(w.as_slice()))
        }
    };
    let dim = shape.dim();
    if ensemble != Ensemble::Gaussian && m > dim {
        return Err(HarnessError::InvalidSpec(format!("m = {m} exceeds the {dim} available rows")));
    }
    let design = match ensemble {
        Ensemble::Gaussian => gaussian_matrix(m, dim, rng),
        Ensemble::SubsampledFourier => dct_rows(dim, &sample(rng, dim, m).into_vec()),
        Ensemble::Identity => {
            let rows = sample(rng, dim, m).into_vec();
            DMatrix::from_fn(m, dim, |r, c| if rows[r] == c { 1.0 } else { 0.0 })
        }
    };
    let mut noise_direction = gaussian_vector(m, rng);
    let norm = noise_direction.norm();
    if norm > 0.0 {
        noise_direction /= norm;
    }
    Ok(ProblemDraw { design, w_star, noise_direction, shape })
}

/// Rows `frequencies` of the orthonormal DCT-II of size `n`, scaled by `√n`
/// so entries have unit mean square.
pub fn dct_rows(n: usize, frequencies: &[usize]) -> DMatrix<f64> {
    let nf = n as f64;
    DMatrix::from_fn(frequencies.len(), n, |r, j| {
        let k = frequencies[r] as f64;
        let scale = if frequencies[r] == 0 { 1.0 } else { 2f64.sqrt() };
        scale * (PI * (j as f64 + 0.5) * k / nf).cos()
    })
}
