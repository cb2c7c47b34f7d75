use thiserror::Error;

use crate::atoms::{AtomError, ProjectionConfig};
use crate::objectives::ObjectiveError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Atom(#[from] AtomError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
}

/// Additive perturbation `e^t` of the sampled block gradient.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum GradientNoise {
    #[default]
    None,
    /// Uniformly random direction with `‖e^t‖ = ν`.
    ConstantNorm(f64),
    /// Uniformly random direction with `‖e^t‖ = ν/(t+1)`.
    Decaying(f64),
}

impl GradientNoise {
    pub fn norm_at(&self, t: usize) -> f64 {
        match *self {
            GradientNoise::None => 0.0,
            GradientNoise::ConstantNorm(nu) => nu,
            GradientNoise::Decaying(nu) => nu / (t as f64 + 1.0),
        }
    }
}

/// Per-iteration projection tolerances. Iteration `j` uses entry
/// `min(j, len − 1)`; an empty list leaves the configured tolerance alone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EtaSchedule {
    /// `η^j` for StoIHT, `η₁^j` for StoGradMP.
    pub identify: Vec<f64>,
    /// `η₂^j` for StoGradMP.
    pub prune: Vec<f64>,
}

pub(crate) fn schedule_at(values: &[f64], j: usize) -> Option<f64> {
    values.get(j.min(values.len().saturating_sub(1))).copied()
}

/// Accuracy of the StoGradMP estimation step: `‖b^t − b^t_opt‖ ≤ ε^t`.
///
/// The solver enforces it through the restricted gradient norm, stopping the
/// inner solve once `‖P ∇F(b)‖ ≤ ρ⁻ ε^t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Estimation {
    pub epsilon: f64,
    /// Optional `ε^t` overrides, indexed like [`EtaSchedule`].
    pub schedule: Vec<f64>,
    /// Restricted convexity used in the mapping. When absent and some `ε^t`
    /// is positive, it is estimated from the objective at level `3k`.
    pub rho_minus: Option<f64>,
}

impl Estimation {
    pub fn epsilon_at(&self, t: usize) -> f64 {
        schedule_at(&self.schedule, t).unwrap_or(self.epsilon)
    }

    fn any_positive(&self) -> bool {
        self.epsilon > 0.0 || self.schedule.iter().any(|&e| e > 0.0)
    }

    pub(crate) fn needs_rho_minus(&self) -> bool {
        self.rho_minus.is_none() && self.any_positive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Halting {
    /// Iteration budget in epochs; one epoch is `m/b` iterations.
    pub max_epochs: f64,
    /// Stop once `‖w − w★‖ <` this, when a reference is supplied.
    pub error_tolerance: Option<f64>,
    /// Stop once `‖w^t − w^{t−1}‖ / max(1, ‖w^t‖) <` this.
    pub step_tolerance: Option<f64>,
    /// Stop when the objective has not decreased over this many iterations.
    pub objective_stall: Option<usize>,
}

impl Default for Halting {
    fn default() -> Self {
        Self { max_epochs: 500.0, error_tolerance: None, step_tolerance: Some(1e-9), objective_stall: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Sparsity level.
    pub k: usize,
    /// Step size γ (StoIHT only).
    pub gamma: f64,
    /// Identification projection (η for StoIHT, η₁ for StoGradMP).
    pub proj_identify: ProjectionConfig,
    /// Pruning projection (η₂, StoGradMP only).
    pub proj_prune: ProjectionConfig,
    /// Sampling distribution over blocks; defaults to the objective's.
    pub sampling: Option<Vec<f64>>,
    pub eta_schedule: EtaSchedule,
    pub noise: GradientNoise,
    pub estimation: Estimation,
    pub halting: Halting,
    pub seed: u64,
    /// Evaluate `F(w^t)` for every record (costs one full residual).
    pub record_objective: bool,
    /// Keep every iterate in the trace.
    pub keep_iterates: bool,
}

impl SolverConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            gamma: 1.0,
            proj_identify: ProjectionConfig::exact(),
            proj_prune: ProjectionConfig::exact(),
            sampling: None,
            eta_schedule: EtaSchedule::default(),
            noise: GradientNoise::None,
            estimation: Estimation::default(),
            halting: Halting::default(),
            seed: 0,
            record_objective: true,
            keep_iterates: false,
        }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |msg: String| Err(SolverError::InvalidConfig(msg));
        if self.k == 0 {
            return bad("sparsity k must be at least 1".into());
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return bad(format!("step size must be positive, got {}", self.gamma));
        }
        if !(self.halting.max_epochs >= 1.0) || !self.halting.max_epochs.is_finite() {
            return bad(format!("max_epochs must be at least 1, got {}", self.halting.max_epochs));
        }
        let eps_ok = |e: f64| e >= 0.0 && e.is_finite();
        if !eps_ok(self.estimation.epsilon) || !self.estimation.schedule.iter().all(|&e| eps_ok(e)) {
            return bad("estimation tolerance must be a nonnegative number".into());
        }
        if let Some(r) = self.estimation.rho_minus {
            if !(r > 0.0) {
                return bad(format!("rho_minus must be positive, got {r}"));
            }
        }
        for &eta in self.eta_schedule.identify.iter().chain(&self.eta_schedule.prune) {
            if !(eta >= 1.0) || !eta.is_finite() {
                return bad(format!("scheduled eta must be >= 1, got {eta}"));
            }
        }
        match self.noise {
            GradientNoise::ConstantNorm(nu) | GradientNoise::Decaying(nu) if !(nu >= 0.0) || !nu.is_finite() => {
                return bad(format!("noise norm must be nonnegative, got {nu}"));
            }
            _ => {}
        }
        Ok(())
    }
}
