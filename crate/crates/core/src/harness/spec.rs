//! Experiment spec files (TOML, schema version 1) and grid expansion.
//!
//! ```toml
//! schema_version = 1
//! kind = "error_vs_epoch"        # phase_transition | error_vs_epoch | block_sweep
//!                                # | stepsize_sweep | noise_robustness | svd_oversampling
//! trials = 50
//! seed = 7
//! solvers = ["stogradmp"]        # stoiht | stogradmp | iht | gradmp
//! # success_threshold = 1e-6     # default: 1e-6 noiseless, the noise norm otherwise
//! # trim_fraction = 0.10
//!
//! [problem]
//! signal = "vector"              # or "matrix" with rows/cols instead of n
//! n = 256
//! k0 = 8                         # scalar or list
//! m = [80]                       # scalar or list (increasing)
//! b = [8]
//! noise_norm = 0.0
//! ensemble = "gaussian"          # gaussian | subsampled_fourier | identity
//!
//! [solver]
//! gamma = 1.0
//! max_epochs = 100
//!
//! [output]
//! timing = false
//! ```
//!
//! `iht` and `gradmp` are the single-block (`b = m`) versions of the two
//! solvers and ignore the `b` list.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use super::HarnessError;

pub const SCHEMA_VERSION: u32 = 1;
/// Largest dense design (`m × dim` entries) a spec may ask for.
pub const MAX_DESIGN_ENTRIES: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    PhaseTransition,
    ErrorVsEpoch,
    BlockSweep,
    StepsizeSweep,
    NoiseRobustness,
    SvdOversampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ensemble {
    /// i.i.d. standard normal entries.
    Gaussian,
    /// Randomly chosen rows of the orthonormal DCT-II, scaled by `√dim`.
    SubsampledFourier,
    /// Randomly chosen rows of the identity.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Stoiht,
    Stogradmp,
    /// StoIHT with one block.
    Iht,
    /// StoGradMP with one block.
    Gradmp,
}

impl SolverKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverKind::Stoiht => "stoiht",
            SolverKind::Stogradmp => "stogradmp",
            SolverKind::Iht => "iht",
            SolverKind::Gradmp => "gradmp",
        }
    }

    pub fn is_deterministic(&self) -> bool {
        matches!(self, SolverKind::Iht | SolverKind::Gradmp)
    }

    pub fn uses_step_size(&self) -> bool {
        matches!(self, SolverKind::Stoiht | SolverKind::Iht)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    #[default]
    Vector,
    Matrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionKind {
    #[default]
    Exact,
    Randomized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingKind {
    /// `p(i) = b_i / m`.
    #[default]
    BlockSize,
    /// `p(i) = 1 / M`.
    Uniform,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

fn one_or_many<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<Vec<T>, D::Error> {
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(x) => vec![x],
        OneOrMany::Many(v) => v,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    #[serde(default)]
    pub signal: SignalKind,
    pub n: Option<usize>,
    pub rows: Option<usize>,
    pub cols: Option<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub k0: Vec<usize>,
    #[serde(deserialize_with = "one_or_many")]
    pub m: Vec<usize>,
    #[serde(default = "default_b", deserialize_with = "one_or_many")]
    pub b: Vec<usize>,
    #[serde(default = "default_zero", deserialize_with = "one_or_many")]
    pub noise_norm: Vec<f64>,
    #[serde(default = "default_ensemble")]
    pub ensemble: Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    /// Sparsity target; defaults to `k0`.
    pub k: Option<usize>,
    #[serde(default = "default_gamma", deserialize_with = "one_or_many")]
    pub gamma: Vec<f64>,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: f64,
    /// Stop once the error drops below this. Defaults to a tenth of the
    /// success threshold on noiseless runs and to never on noisy ones.
    pub stop_error: Option<f64>,
    /// Relative step tolerance; 0 disables it.
    #[serde(default = "default_step_tolerance")]
    pub step_tolerance: f64,
    pub objective_stall: Option<usize>,
    #[serde(default)]
    pub projection: ProjectionKind,
    #[serde(default = "default_oversampling", deserialize_with = "one_or_many")]
    pub oversampling: Vec<usize>,
    #[serde(default)]
    pub power_iters: usize,
    /// Target tolerance for randomized projections.
    pub eta: Option<f64>,
    #[serde(default)]
    pub eta_schedule: Vec<f64>,
    #[serde(default)]
    pub eta_prune_schedule: Vec<f64>,
    /// Norm of the injected gradient perturbation.
    #[serde(default = "default_zero", deserialize_with = "one_or_many")]
    pub gradient_noise: Vec<f64>,
    /// Shrink the perturbation as `ν/(t+1)` instead of keeping it constant.
    #[serde(default)]
    pub gradient_noise_decay: bool,
    #[serde(default)]
    pub estimation_epsilon: f64,
    #[serde(default)]
    pub sampling: SamplingKind,
    /// Solver repetitions per generated problem.
    #[serde(default = "default_one")]
    pub sub_trials: usize,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            k: None,
            gamma: default_gamma(),
            max_epochs: default_max_epochs(),
            stop_error: None,
            step_tolerance: default_step_tolerance(),
            objective_stall: None,
            projection: ProjectionKind::Exact,
            oversampling: default_oversampling(),
            power_iters: 0,
            eta: None,
            eta_schedule: Vec::new(),
            eta_prune_schedule: Vec::new(),
            gradient_noise: default_zero(),
            gradient_noise_decay: false,
            estimation_epsilon: 0.0,
            sampling: SamplingKind::BlockSize,
            sub_trials: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// Add wall-clock columns (these differ between runs).
    #[serde(default)]
    pub timing: bool,
    /// Evaluate `F(w^t)` at every iteration.
    #[serde(default)]
    pub record_objective: bool,
    /// Keep every `raw_every`-th iteration in the raw file (plus the last).
    #[serde(default = "default_one")]
    pub raw_every: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { timing: false, record_objective: false, raw_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    pub success_threshold: Option<f64>,
    #[serde(default = "default_trim")]
    pub trim_fraction: f64,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    pub problem: ProblemSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_b() -> Vec<usize> {
    vec![8]
}
fn default_zero() -> Vec<f64> {
    vec![0.0]
}
fn default_ensemble() -> Ensemble {
    Ensemble::Gaussian
}
fn default_gamma() -> Vec<f64> {
    vec![1.0]
}
fn default_max_epochs() -> f64 {
    500.0
}
fn default_step_tolerance() -> f64 {
    1e-9
}
fn default_oversampling() -> Vec<usize> {
    vec![5]
}
fn default_one() -> usize {
    1
}
fn default_trials() -> usize {
    50
}
fn default_trim() -> f64 {
    0.10
}
fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Stoiht, SolverKind::Stogradmp]
}

/// One cell of the parameter grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub index: usize,
    pub solver: SolverKind,
    pub k0: usize,
    pub m: usize,
    pub b: usize,
    /// Block size as listed in the spec; `None` for single-block solvers.
    pub requested_b: Option<usize>,
    /// `None` for solvers without a step size.
    pub gamma: Option<f64>,
    /// `None` for exact projections.
    pub oversampling: Option<usize>,
    pub noise_norm: f64,
    pub gradient_noise: f64,
}

impl GridPoint {
    /// Error below which a run counts as a recovery.
    pub fn success_threshold(&self, spec: &ExperimentSpec) -> f64 {
        spec.success_threshold.unwrap_or(if self.noise_norm > 0.0 { self.noise_norm } else { 1e-6 })
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidSpec(msg.into())
}

impl ExperimentSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<toml::Value>,
        }
        let v: Version = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        match v.schema_version {
            None => return Err(invalid("missing schema_version")),
            Some(toml::Value::Integer(1)) => {}
            Some(other) => {
                return Err(invalid(format!("unsupported schema_version {other}; this build reads {SCHEMA_VERSION}")))
            }
        }
        let spec: ExperimentSpec = toml::from_str(text).map_err(|e| invalid(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    /// `(rows, cols)` for matrix signals, `(n, 1)` for vectors.
    pub fn signal_dims(&self) -> (usize, usize) {
        match self.problem.signal {
            SignalKind::Vector => (self.problem.n.unwrap_or(0), 1),
            SignalKind::Matrix => (self.problem.rows.unwrap_or(0), self.problem.cols.unwrap_or(0)),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        let (r, c) = self.signal_dims();
        r * c
    }

    /// Largest sparsity the signal admits.
    fn max_sparsity(&self) -> usize {
        let (r, c) = self.signal_dims();
        match self.problem.signal {
            SignalKind::Vector => r,
            SignalKind::Matrix => r.min(c),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(format!("unsupported schema_version {}", self.schema_version)));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if !(0.0..0.5).contains(&self.trim_fraction) {
            return Err(invalid(format!("trim_fraction must lie in [0, 0.5), got {}", self.trim_fraction)));
        }
        if self.solvers.is_empty() {
            return Err(invalid("no solvers selected"));
        }
        if let Some(t) = self.success_threshold {
            if !(t > 0.0) {
                return Err(invalid("success_threshold must be positive"));
            }
        }
        let p = &self.problem;
        match p.signal {
            SignalKind::Vector => {
                if p.rows.is_some() || p.cols.is_some() {
                    return Err(invalid("vector signals take n, not rows/cols"));
                }
                if p.n.unwrap_or(0) == 0 {
                    return Err(invalid("vector signals need n >= 1"));
                }
            }
            SignalKind::Matrix => {
                if p.n.is_some() {
                    return Err(invalid("matrix signals take rows/cols, not n"));
                }
                if p.rows.unwrap_or(0) == 0 || p.cols.unwrap_or(0) == 0 {
                    return Err(invalid("matrix signals need rows >= 1 and cols >= 1"));
                }
            }
        }
        let dim = self.ambient_dim();
        for (name, empty) in [
            ("k0", p.k0.is_empty()),
            ("m", p.m.is_empty()),
            ("b", p.b.is_empty()),
            ("noise_norm", p.noise_norm.is_empty()),
            ("gamma", self.solver.gamma.is_empty()),
            ("oversampling", self.solver.oversampling.is_empty()),
            ("gradient_noise", self.solver.gradient_noise.is_empty()),
        ] {
            if empty {
                return Err(invalid(format!("{name} list is empty")));
            }
        }
        for &k0 in &p.k0 {
            if k0 == 0 || k0 > self.max_sparsity() {
                return Err(invalid(format!("k0 = {k0} is infeasible for a signal of this size")));
            }
        }
        if p.m.contains(&0) {
            return Err(invalid("m must be at least 1"));
        }
        if p.m.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("m values must be strictly increasing"));
        }
        if p.ensemble != Ensemble::Gaussian {
            if let Some(&m) = p.m.iter().find(|&&m| m > dim) {
                return Err(invalid(format!("m = {m} exceeds the {dim} rows available in this ensemble")));
            }
        }
        if let Some(&m) = p.m.iter().find(|&&m| m.saturating_mul(dim) > MAX_DESIGN_ENTRIES) {
            return Err(invalid(format!("an m = {m} by {dim} dense design is too large")));
        }
        if p.b.contains(&0) {
            return Err(invalid("block sizes must be at least 1"));
        }
        if p.noise_norm.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(invalid("noise_norm must be nonnegative"));
        }
        let s = &self.solver;
        if s.gamma.iter().any(|&g| !(g > 0.0) || !g.is_finite()) {
            return Err(invalid("gamma must be positive"));
        }
        if !(s.max_epochs >= 1.0) || !s.max_epochs.is_finite() {
            return Err(invalid("max_epochs must be at least 1"));
        }
        if let Some(k) = s.k {
            if k == 0 || k > self.max_sparsity() {
                return Err(invalid(format!("k = {k} is infeasible for a signal of this size")));
            }
        }
        if !(s.step_tolerance >= 0.0) || s.stop_error.is_some_and(|e| !(e > 0.0)) {
            return Err(invalid("tolerances must be nonnegative"));
        }
        if s.gradient_noise.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
            return Err(invalid("gradient_noise must be nonnegative"));
        }
        if !(s.estimation_epsilon >= 0.0) {
            return Err(invalid("estimation_epsilon must be nonnegative"));
        }
        if s.eta.is_some_and(|e| !(e >= 1.0)) || s.eta_schedule.iter().chain(&s.eta_prune_schedule).any(|&e| !(e >= 1.0)) {
            return Err(invalid("eta values must be at least 1"));
        }
        if s.projection == ProjectionKind::Randomized && p.signal != SignalKind::Matrix {
            return Err(invalid("randomized projections need a matrix signal"));
        }
        if s.sub_trials == 0 || self.output.raw_every == 0 {
            return Err(invalid("sub_trials and raw_every must be at least 1"));
        }
        Ok(())
    }

    /// Every parameter list holds a single value (solvers may still differ).
    pub fn is_single_point(&self) -> bool {
        let p = &self.problem;
        let s = &self.solver;
        [p.k0.len(), p.m.len(), p.b.len(), p.noise_norm.len(), s.gamma.len(), s.gradient_noise.len()]
            .iter()
            .all(|&l| l == 1)
            && (s.projection == ProjectionKind::Exact || s.oversampling.len() == 1)
    }

    /// Expands the parameter lists into grid points, in a fixed order.
    ///
    /// Block sizes above `m` run as `m`; single-block solvers get one
    /// point per `m` regardless of the `b` list.
    pub fn grid(&self) -> Vec<GridPoint> {
        let p = &self.problem;
        let s = &self.solver;
        let oversampling: Vec<Option<usize>> = match s.projection {
            ProjectionKind::Exact => vec![None],
            ProjectionKind::Randomized => s.oversampling.iter().map(|&d| Some(d)).collect(),
        };
        let mut out = Vec::new();
        for &solver in &self.solvers {
            let gammas: Vec<Option<f64>> =
                if solver.uses_step_size() { s.gamma.iter().map(|&g| Some(g)).collect() } else { vec![None] };
            for &k0 in &p.k0 {
                for &m in &p.m {
                    let blocks: Vec<(usize, Option<usize>)> = if solver.is_deterministic() {
                        vec![(m, None)]
                    } else {
                        p.b.iter().map(|&b| (b.min(m), Some(b))).collect()
                    };
                    for &(b, requested_b) in &blocks {
                        for &gamma in &gammas {
                            for &d in &oversampling {
                                for &noise_norm in &p.noise_norm {
                                    for &gradient_noise in &s.gradient_noise {
                                        out.push(GridPoint {
                                            index: out.len(),
                                            solver,
                                            k0,
                                            m,
                                            b,
                                            requested_b,
                                            gamma,
                                            oversampling: d,
                                            noise_norm,
                                            gradient_noise,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}
