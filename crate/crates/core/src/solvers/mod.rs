//! StoIHT and StoGradMP, the restricted sub-solver, block sampling, and the
//! contraction/tolerance diagnostics.
//!
//! Both solvers run from `w0` until the [`Halting`] rule fires and return a
//! [`RunTrace`]. Iteration `t` samples a block `i_t` with probability `p(i_t)`
//! and touches only `f_{i_t}`:
//!
//! ```text
//! StoIHT     b = w − γ/(M p(i)) (∇f_i(w) + e)      Γ = approx_k(b, η)        w = P_Γ b
//! StoGradMP  r = ∇f_i(w) + e    Γ = approx_2k(r, η₁)   Γ̂ = Γ ∪ Λ
//!            b = argmin_{span Γ̂} F                Λ = approx_k(b, η₂)       w = P_Λ b
//! ```

mod config;
pub mod diagnostics;
mod restricted;
mod sampling;

pub use config::{EtaSchedule, Estimation, GradientNoise, Halting, SolverConfig, SolverError};
pub use diagnostics::DiagnosticInputs;
pub use restricted::{restricted_minimize, RestrictedSolution, INNER_ITERS_PER_DIM, RIDGE};
pub use sampling::{sample_index, BlockSampler};

use std::time::Instant;

use nalgebra::DVector;

use crate::atoms::{identify, merge, project, AtomModel, ProjectionConfig, SupportSet, SupportSnapshot};
use crate::linalg::gaussian_vector;
use crate::objectives::{estimate_constants, validate_sampling, BlockObjective};
use crate::rng::{solver_stream, SolverStream, StreamRng};
use config::schedule_at;

/// Iterate norm, relative to the initial scale, that counts as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e12;
/// Monte Carlo draws used when the solver has to estimate ρ⁻ itself.
pub const RHO_MINUS_TRIALS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    MaxEpochs,
    Diverged,
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Converged => "converged",
            RunStatus::MaxEpochs => "max_epochs",
            RunStatus::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    /// 0 for the starting point.
    pub iteration: usize,
    /// `iteration · b / m`.
    pub epoch: f64,
    /// Sampled block; `None` for the starting point.
    pub block: Option<usize>,
    /// `‖w^t − w★‖` when a reference was given.
    pub error: Option<f64>,
    /// `F(w^t)` when recording is enabled.
    pub objective: Option<f64>,
    pub support: SupportSnapshot,
    /// Seconds since the run started.
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub records: Vec<IterationRecord>,
    pub status: RunStatus,
    pub final_iterate: DVector<f64>,
    /// Every iterate including `w0`, when requested.
    pub iterates: Vec<DVector<f64>>,
    /// Restricted solves that missed their tolerance.
    pub inner_misses: usize,
    /// Restricted solves that fell back to the ridge.
    pub ridge_fallbacks: usize,
}

impl RunTrace {
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iteration)
    }

    pub fn final_error(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.error)
    }

    pub fn errors(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.error).collect()
    }

    pub fn wall_time_s(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.wall_time_s)
    }
}

/// Loop scaffolding shared by both solvers: recording, halting, divergence.
struct Driver<'a> {
    obj: &'a BlockObjective,
    cfg: &'a SolverConfig,
    w_star: Option<&'a DVector<f64>>,
    start: Instant,
    epoch_per_iter: f64,
    max_iters: usize,
    scale: Option<f64>,
    records: Vec<IterationRecord>,
    iterates: Vec<DVector<f64>>,
    best_objective: f64,
    best_at: usize,
    inner_misses: usize,
    ridge_fallbacks: usize,
}

impl<'a> Driver<'a> {
    fn new(
        obj: &'a BlockObjective,
        cfg: &'a SolverConfig,
        w0: &DVector<f64>,
        w_star: Option<&'a DVector<f64>>,
        empty: SupportSnapshot,
    ) -> Self {
        let epoch_per_iter = obj.block_size() as f64 / obj.rows() as f64;
        let max_iters = (cfg.halting.max_epochs / epoch_per_iter - 1e-9).ceil().max(1.0) as usize;
        let mut d = Self {
            obj,
            cfg,
            w_star,
            start: Instant::now(),
            epoch_per_iter,
            max_iters,
            scale: None,
            records: Vec::new(),
            iterates: Vec::new(),
            best_objective: f64::INFINITY,
            best_at: 0,
            inner_misses: 0,
            ridge_fallbacks: 0,
        };
        d.record(0, None, w0, empty);
        d
    }

    fn wants_objective(&self) -> bool {
        self.cfg.record_objective || self.cfg.halting.objective_stall.is_some()
    }

    fn record(&mut self, t: usize, block: Option<usize>, w: &DVector<f64>, support: SupportSnapshot) -> Option<f64> {
        let objective = if self.wants_objective() { self.obj.full_value(w).ok() } else { None };
        self.records.push(IterationRecord {
            iteration: t,
            epoch: t as f64 * self.epoch_per_iter,
            block,
            error: self.w_star.map(|ws| (w - ws).norm()),
            objective: objective.filter(|_| self.cfg.record_objective),
            support,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        });
        if self.cfg.keep_iterates {
            self.iterates.push(w.clone());
        }
        objective
    }

    /// Sets the divergence scale from the first proxy.
    fn set_scale(&mut self, w0: &DVector<f64>, proxy: &DVector<f64>) {
        if self.scale.is_none() {
            let s = (w0 - proxy).norm();
            self.scale = Some(if s > 0.0 && s.is_finite() { s } else { w0.norm().max(1.0) });
        }
    }

    /// Records iteration `t` and decides whether to stop.
    fn step(
        &mut self,
        t: usize,
        block: usize,
        w: &DVector<f64>,
        w_prev: &DVector<f64>,
        support: SupportSnapshot,
    ) -> Option<RunStatus> {
        let objective = self.record(t, Some(block), w, support);
        let norm = w.norm();
        if !norm.is_finite() || norm > DIVERGENCE_FACTOR * self.scale.unwrap_or(1.0) {
            return Some(RunStatus::Diverged);
        }
        let h = &self.cfg.halting;
        if let (Some(tol), Some(err)) = (h.error_tolerance, self.records.last().and_then(|r| r.error)) {
            if err < tol {
                return Some(RunStatus::Converged);
            }
        }
        if let Some(tol) = h.step_tolerance {
            if (w - w_prev).norm() / norm.max(1.0) < tol {
                return Some(RunStatus::Converged);
            }
        }
        if let (Some(window), Some(f)) = (h.objective_stall, objective) {
            if f < self.best_objective {
                self.best_objective = f;
                self.best_at = t;
            } else if t - self.best_at >= window {
                return Some(RunStatus::Converged);
            }
        }
        (t >= self.max_iters).then_some(RunStatus::MaxEpochs)
    }

    fn finish(self, status: RunStatus, w: DVector<f64>) -> RunTrace {
        RunTrace {
            records: self.records,
            status,
            final_iterate: w,
            iterates: self.iterates,
            inner_misses: self.inner_misses,
            ridge_fallbacks: self.ridge_fallbacks,
        }
    }
}

fn check_inputs(
    obj: &BlockObjective,
    model: &AtomModel,
    cfg: &SolverConfig,
    w0: &DVector<f64>,
    w_star: Option<&DVector<f64>>,
) -> Result<BlockSampler, SolverError> {
    cfg.validate()?;
    let dim = obj.dim();
    for (what, len) in [("model", model.ambient_dim()), ("w0", w0.len())].into_iter().chain(w_star.map(|w| ("w_star", w.len())))
    {
        if len != dim {
            return Err(SolverError::InvalidConfig(format!("{what} has dimension {len}, objective has {dim}")));
        }
    }
    if cfg.k > model.max_support() {
        return Err(SolverError::InvalidConfig(format!(
            "sparsity {} exceeds the largest support {}",
            cfg.k,
            model.max_support()
        )));
    }
    let p = cfg.sampling.as_deref().unwrap_or(obj.sampling());
    validate_sampling(p, obj.block_count())?;
    BlockSampler::new(p)
}

fn noise_vector(cfg: &SolverConfig, t: usize, dim: usize, rng: &mut StreamRng) -> Option<DVector<f64>> {
    let nu = cfg.noise.norm_at(t);
    if nu == 0.0 {
        return None;
    }
    let mut e = gaussian_vector(dim, rng);
    let n = e.norm();
    if n == 0.0 {
        return None;
    }
    e *= nu / n;
    Some(e)
}

fn scheduled(base: &ProjectionConfig, values: &[f64], t: usize) -> Result<ProjectionConfig, SolverError> {
    Ok(match schedule_at(values, t) {
        Some(eta) => base.with_eta_target(eta)?,
        None => *base,
    })
}

/// Stochastic iterative hard thresholding.
pub fn stoiht(
    obj: &BlockObjective,
    model: &AtomModel,
    cfg: &SolverConfig,
    w0: &DVector<f64>,
    w_star: Option<&DVector<f64>>,
) -> Result<RunTrace, SolverError> {
    let sampler = check_inputs(obj, model, cfg, w0, w_star)?;
    let p = cfg.sampling.as_deref().unwrap_or(obj.sampling()).to_vec();
    let blocks = obj.block_count() as f64;
    let mut rng_sample = solver_stream(cfg.seed, SolverStream::Sampling);
    let mut rng_noise = solver_stream(cfg.seed, SolverStream::GradientNoise);
    let mut rng_proj = solver_stream(cfg.seed, SolverStream::Projection);

    let mut driver = Driver::new(obj, cfg, w0, w_star, SupportSet::empty(model).snapshot());
    let mut w = w0.clone();
    let mut t = 0;
    let status = loop {
        let i = sampler.sample(&mut rng_sample);
        let mut g = obj.block_gradient(&w, i)?;
        if let Some(e) = noise_vector(cfg, t, w.len(), &mut rng_noise) {
            g += e;
        }
        let mut proxy = w.clone();
        proxy.axpy(-cfg.gamma / (blocks * p[i]), &g, 1.0);
        driver.set_scale(w0, &proxy);
        let proj = scheduled(&cfg.proj_identify, &cfg.eta_schedule.identify, t)?;
        let support = identify(model, &proxy, cfg.k, &proj, &mut rng_proj)?;
        assert!(support.len() <= cfg.k, "iterate support {} exceeds k = {}", support.len(), cfg.k);
        let next = project(model, &proxy, &support)?;
        t += 1;
        let prev = std::mem::replace(&mut w, next);
        if let Some(status) = driver.step(t, i, &w, &prev, support.snapshot()) {
            break status;
        }
    };
    Ok(driver.finish(status, w))
}

/// Stochastic gradient matching pursuit.
pub fn stogradmp(
    obj: &BlockObjective,
    model: &AtomModel,
    cfg: &SolverConfig,
    w0: &DVector<f64>,
    w_star: Option<&DVector<f64>>,
) -> Result<RunTrace, SolverError> {
    let sampler = check_inputs(obj, model, cfg, w0, w_star)?;
    let mut rng_sample = solver_stream(cfg.seed, SolverStream::Sampling);
    let mut rng_noise = solver_stream(cfg.seed, SolverStream::GradientNoise);
    let mut rng_proj = solver_stream(cfg.seed, SolverStream::Projection);
    let k = cfg.k;
    let k_identify = (2 * k).min(model.max_support());
    let rho_minus = match cfg.estimation.rho_minus {
        Some(r) => r,
        None if cfg.estimation.needs_rho_minus() => {
            let mut rng = solver_stream(cfg.seed, SolverStream::Constants);
            let level = (3 * k).min(model.max_support());
            estimate_constants(obj, model, level, RHO_MINUS_TRIALS, &mut rng)?.best().rho_minus()
        }
        None => 0.0,
    };

    let mut driver = Driver::new(obj, cfg, w0, w_star, SupportSet::empty(model).snapshot());
    let mut w = w0.clone();
    let mut lambda = SupportSet::empty(model);
    let mut t = 0;
    let status = loop {
        let i = sampler.sample(&mut rng_sample);
        let mut r = obj.block_gradient(&w, i)?;
        if let Some(e) = noise_vector(cfg, t, w.len(), &mut rng_noise) {
            r += e;
        }
        let proj1 = scheduled(&cfg.proj_identify, &cfg.eta_schedule.identify, t)?;
        let gamma_set = identify(model, &r, k_identify, &proj1, &mut rng_proj)?;
        let merged = merge(model, &gamma_set, &lambda)?;
        assert!(merged.len() <= 3 * k, "merged support {} exceeds 3k = {}", merged.len(), 3 * k);
        let tol = rho_minus * cfg.estimation.epsilon_at(t);
        let sol = restricted_minimize(obj, model, &merged, tol)?;
        driver.inner_misses += usize::from(!sol.converged);
        driver.ridge_fallbacks += usize::from(sol.ridge_used);
        driver.set_scale(w0, &sol.b);
        let proj2 = scheduled(&cfg.proj_prune, &cfg.eta_schedule.prune, t)?;
        lambda = identify(model, &sol.b, k, &proj2, &mut rng_proj)?;
        assert!(lambda.len() <= k, "iterate support {} exceeds k = {}", lambda.len(), k);
        let next = project(model, &sol.b, &lambda)?;
        t += 1;
        let prev = std::mem::replace(&mut w, next);
        if let Some(status) = driver.step(t, i, &w, &prev, lambda.snapshot()) {
            break status;
        }
    };
    Ok(driver.finish(status, w))
}
