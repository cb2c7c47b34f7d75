//! Contraction coefficients, tolerance parameters, and the resulting error
//! bounds for both solvers.
//!
//! StoIHT quantities use constants at level `3k`, StoGradMP quantities at
//! level `4k`; callers choose the level when estimating the constants.

use nalgebra::DVector;
use thiserror::Error;

use crate::atoms::{identify, project, AtomError, AtomKind, AtomModel, ProjectionConfig};
use crate::linalg::{max_scaled, min_scaled};
use crate::objectives::{BlockObjective, ObjectiveError, RestrictedConstants};
use crate::rng::stream;

/// Radicands down to this negative value are treated as rounding noise.
const RADICAND_SLACK: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DiagnosticError {
    #[error("{term} is negative ({value:e}); the formula is outside its regime")]
    OutOfRegime { term: &'static str, value: f64 },
    #[error("invalid diagnostic input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Constants plus the algorithm parameters the formulas need.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticInputs {
    pub constants: RestrictedConstants,
    /// Step size γ (StoIHT).
    pub gamma: f64,
    /// η for StoIHT, η₁ for StoGradMP.
    pub eta: f64,
    /// η₂ for StoGradMP.
    pub eta_prune: f64,
}

impl DiagnosticInputs {
    pub fn stoiht(constants: RestrictedConstants, gamma: f64, eta: f64) -> Self {
        Self { constants, gamma, eta, eta_prune: 1.0 }
    }

    pub fn stogradmp(constants: RestrictedConstants, eta1: f64, eta2: f64) -> Self {
        Self { constants, gamma: 1.0, eta: eta1, eta_prune: eta2 }
    }

    /// Checks the constants were estimated at `multiple · k`.
    pub fn check_level(&self, k: usize, multiple: usize) -> Result<(), DiagnosticError> {
        if self.constants.k() != multiple * k {
            return Err(DiagnosticError::InvalidInput(format!(
                "constants are at level {}, expected {multiple}k = {}",
                self.constants.k(),
                multiple * k
            )));
        }
        Ok(())
    }
}

fn root(term: &'static str, value: f64) -> Result<f64, DiagnosticError> {
    if value < -RADICAND_SLACK || value.is_nan() {
        return Err(DiagnosticError::OutOfRegime { term, value });
    }
    Ok(value.max(0.0).sqrt())
}

fn check_eta(eta: f64) -> Result<(), DiagnosticError> {
    if !(eta >= 1.0) {
        return Err(DiagnosticError::InvalidInput(format!("eta must be >= 1, got {eta}")));
    }
    Ok(())
}

/// `κ = 2√(1 − γ(2 − γα)ρ⁻) + √((η² − 1)(1 + γ²αρ̄⁺ − 2γρ⁻))`.
pub fn kappa_stoiht(d: &DiagnosticInputs) -> Result<f64, DiagnosticError> {
    check_eta(d.eta)?;
    let c = &d.constants;
    let (g, a, rm) = (d.gamma, c.alpha(), c.rho_minus());
    let first = root("1 - gamma(2 - gamma alpha) rho_minus", 1.0 - g * (2.0 - g * a) * rm)?;
    let second = if d.eta == 1.0 {
        0.0
    } else {
        root("(eta^2 - 1)(1 + gamma^2 alpha rho_bar - 2 gamma rho_minus)", (d.eta * d.eta - 1.0) * (1.0 + g * g * a * c.rho_plus_bar() - 2.0 * g * rm))?
    };
    Ok(2.0 * first + second)
}

/// `κ = (1 + η₂)√(α/ρ⁻)(max_i √(Mp(i)) √((((2η₁² − 1)/η₁²)ρ⁺ − ρ⁻)/ρ⁻) + √(η₁² − 1)/η₁)`.
pub fn kappa_stogradmp(d: &DiagnosticInputs) -> Result<f64, DiagnosticError> {
    check_eta(d.eta)?;
    check_eta(d.eta_prune)?;
    let c = &d.constants;
    let rm = c.rho_minus();
    if !(rm > 0.0) {
        return Err(DiagnosticError::InvalidInput(format!("rho_minus must be positive, got {rm}")));
    }
    let e1 = d.eta * d.eta;
    let inner = root("((2 eta1^2 - 1)/eta1^2) rho_plus - rho_minus", ((2.0 * e1 - 1.0) / e1 * c.rho_plus_max() - rm) / rm)?;
    let spread = max_scaled(c.sampling()).sqrt();
    let approx = (e1 - 1.0).sqrt() / d.eta;
    Ok((1.0 + d.eta_prune) * (c.alpha() / rm).sqrt() * (spread * inner + approx))
}

/// `κ_j` for each scheduled `η^j`.
pub fn kappa_stoiht_schedule(d: &DiagnosticInputs, etas: &[f64]) -> Result<Vec<f64>, DiagnosticError> {
    etas.iter().map(|&eta| kappa_stoiht(&DiagnosticInputs { eta, ..d.clone() })).collect()
}

/// `κ_j` for each scheduled pair `(η₁^j, η₂^j)`.
pub fn kappa_stogradmp_schedule(d: &DiagnosticInputs, etas: &[(f64, f64)]) -> Result<Vec<f64>, DiagnosticError> {
    etas.iter()
        .map(|&(eta, eta_prune)| kappa_stogradmp(&DiagnosticInputs { eta, eta_prune, ..d.clone() }))
        .collect()
}

/// Ratio `ρ⁺/ρ⁻` at which the StoGradMP coefficient reaches 1 with unit
/// tolerances and uniform sampling: the positive root of `4r² − 4r − 1`.
pub fn stogradmp_unit_ratio() -> f64 {
    (1.0 + 2f64.sqrt()) / 2.0
}

/// `max_{|Ω| ≤ level} ‖P_Ω g‖`: the norm of the `level` largest entries, or
/// of the `level` largest singular values.
pub fn top_level_norm(model: &AtomModel, g: &DVector<f64>, level: usize) -> Result<f64, DiagnosticError> {
    if let AtomKind::FiniteDictionary { .. } = model.kind() {
        return Err(DiagnosticError::InvalidInput("tolerance parameters need a coordinate or rank-one model".into()));
    }
    let level = level.min(model.max_support());
    if level == 0 {
        return Ok(0.0);
    }
    let mut rng = stream(0, &[]);
    let support = identify(model, g, level, &ProjectionConfig::exact(), &mut rng)?;
    Ok(project(model, g, &support)?.norm())
}

fn block_gradients(obj: &BlockObjective, w_star: &DVector<f64>) -> Result<Vec<DVector<f64>>, DiagnosticError> {
    (0..obj.block_count()).map(|i| Ok(obj.block_gradient(w_star, i)?)).collect()
}

fn check_sampling(obj: &BlockObjective, p: &[f64]) -> Result<(), DiagnosticError> {
    if p.len() != obj.block_count() {
        return Err(DiagnosticError::InvalidInput(format!("{} weights for {} blocks", p.len(), obj.block_count())));
    }
    Ok(())
}

/// `σ = γ/min_i Mp(i) · (2 E_i max_{|Ω|≤level} ‖P_Ω ∇f_i(w★)‖ + √(η² − 1) E_i ‖∇f_i(w★)‖)`,
/// with expectations weighted by `p`.
pub fn sigma_stoiht(
    obj: &BlockObjective,
    model: &AtomModel,
    w_star: &DVector<f64>,
    gamma: f64,
    eta: f64,
    p: &[f64],
    level: usize,
) -> Result<f64, DiagnosticError> {
    check_eta(eta)?;
    check_sampling(obj, p)?;
    let grads = block_gradients(obj, w_star)?;
    let mut e_top = 0.0;
    let mut e_norm = 0.0;
    for (g, &pi) in grads.iter().zip(p) {
        e_top += pi * top_level_norm(model, g, level)?;
        e_norm += pi * g.norm();
    }
    Ok(gamma / min_scaled(p) * (2.0 * e_top + (eta * eta - 1.0).sqrt() * e_norm))
}

/// `σ = C(1 + η₂)/min_i Mp(i) · max_{i, |Ω|≤level} ‖P_Ω ∇f_i(w★)‖` with
/// `C = (1/ρ⁻)(2 max_i Mp(i) √(α/ρ⁻) + 3)`.
pub fn sigma_stogradmp(
    obj: &BlockObjective,
    model: &AtomModel,
    w_star: &DVector<f64>,
    d: &DiagnosticInputs,
    level: usize,
) -> Result<f64, DiagnosticError> {
    check_eta(d.eta_prune)?;
    let c = &d.constants;
    check_sampling(obj, c.sampling())?;
    let rm = c.rho_minus();
    if !(rm > 0.0) {
        return Err(DiagnosticError::InvalidInput(format!("rho_minus must be positive, got {rm}")));
    }
    let p = c.sampling();
    let big_c = (2.0 * max_scaled(p) * (c.alpha() / rm).sqrt() + 3.0) / rm;
    let mut worst: f64 = 0.0;
    for g in block_gradients(obj, w_star)? {
        worst = worst.max(top_level_norm(model, &g, level)?);
    }
    Ok(big_c * (1.0 + d.eta_prune) / min_scaled(p) * worst)
}

/// Gradient-noise tolerance for StoIHT:
/// `γ/min_i Mp(i) · max_j (2 max_{|Ω|≤level} ‖P_Ω e^j‖ + √(η² − 1)‖e^j‖)`.
pub fn sigma_noise_stoiht(
    model: &AtomModel,
    noise: &[DVector<f64>],
    gamma: f64,
    eta: f64,
    p: &[f64],
    level: usize,
) -> Result<f64, DiagnosticError> {
    check_eta(eta)?;
    let mut worst: f64 = 0.0;
    for e in noise {
        worst = worst.max(2.0 * top_level_norm(model, e, level)? + (eta * eta - 1.0).sqrt() * e.norm());
    }
    Ok(gamma / min_scaled(p) * worst)
}

/// Gradient-noise tolerance for StoGradMP: `max p / (ρ⁻ min p) · max_j ‖e^j‖`.
pub fn sigma_noise_stogradmp(max_noise_norm: f64, p: &[f64], rho_minus: f64) -> f64 {
    let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
    hi / (rho_minus * lo) * max_noise_norm
}

/// Estimation tolerance: `max_j ε^j`.
pub fn sigma_estimation(eps: &[f64]) -> f64 {
    eps.iter().copied().fold(0.0, f64::max)
}

/// `κ^t e0 + σ/(1 − κ)`; infinite when `κ ≥ 1`.
pub fn error_bound(kappa: f64, e0: f64, sigma: f64, t: usize) -> f64 {
    if kappa >= 1.0 {
        return f64::INFINITY;
    }
    kappa.powi(t as i32) * e0 + sigma / (1.0 - kappa)
}

/// Bounds after 0, 1, ..., `kappas.len()` iterations under the recursion
/// `e_{j+1} ≤ κ_j e_j + σ`, starting from `e_0 = e0`.
pub fn error_bound_schedule(kappas: &[f64], e0: f64, sigma: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kappas.len() + 1);
    let mut e = e0;
    out.push(e);
    for &k in kappas {
        e = k * e + sigma;
        out.push(e);
    }
    out
}
