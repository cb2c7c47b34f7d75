//! Trial execution.

use nalgebra::DVector;

use super::generate::{draw_problem, ProblemDraw};
use super::spec::{ExperimentSpec, GridPoint, ProjectionKind, SamplingKind, SolverKind};
use super::HarnessError;
use crate::atoms::ProjectionConfig;
use crate::objectives::BlockObjective;
use crate::par::{IntoParallelIterator, ParallelIterator, PARALLEL_ENABLED};
use crate::rng::{derive_seed, stream};
use crate::solvers::{stogradmp, stoiht, EtaSchedule, GradientNoise, RunStatus, RunTrace, SolverConfig};

/// Stream tags keeping problem draws apart from solver seeds.
const PROBLEM_STREAM: u64 = 1;
const SOLVER_STREAM: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// Trials on the rayon pool (sequential when built without `parallel`).
    Parallel,
    Sequential,
}

impl Default for Execution {
    fn default() -> Self {
        if PARALLEL_ENABLED {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub iteration: usize,
    pub epoch: f64,
    pub error: f64,
    pub objective: Option<f64>,
    pub wall_time_s: f64,
}

/// One solver run on one generated problem.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    /// Index into [`TrialSet::grid`].
    pub point: usize,
    pub trial: usize,
    pub sub_trial: usize,
    pub status: RunStatus,
    pub iterations: usize,
    pub epochs: f64,
    pub final_error: f64,
    pub success: bool,
    pub wall_time_s: f64,
    pub curve: Vec<CurvePoint>,
}

#[derive(Debug, Clone)]
pub struct TrialSet {
    pub spec: ExperimentSpec,
    pub grid: Vec<GridPoint>,
    /// Ordered by grid point, then trial, then sub-trial.
    pub trials: Vec<TrialSummary>,
}

impl TrialSet {
    /// Runs belonging to one grid point.
    pub fn runs(&self, point: usize) -> impl Iterator<Item = &TrialSummary> {
        self.trials.iter().filter(move |t| t.point == point)
    }
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<TrialSet, HarnessError> {
    run_experiment_with(spec, Execution::default())
}

/// Runs every (grid point, trial, sub-trial) combination. Results come back
/// in that order whatever the execution mode.
pub fn run_experiment_with(spec: &ExperimentSpec, exec: Execution) -> Result<TrialSet, HarnessError> {
    spec.validate()?;
    let grid = spec.grid();
    let subs = spec.solver.sub_trials;
    let jobs: Vec<(usize, usize, usize)> = (0..grid.len())
        .flat_map(|p| (0..spec.trials).flat_map(move |t| (0..subs).map(move |s| (p, t, s))))
        .collect();
    let run = |&(p, t, s): &(usize, usize, usize)| run_one(spec, &grid[p], t, s);
    let results: Vec<Result<TrialSummary, HarnessError>> = match exec {
        Execution::Parallel => jobs.into_par_iter().map(|j| run(&j)).collect(),
        Execution::Sequential => jobs.iter().map(run).collect(),
    };
    let trials = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(TrialSet { spec: spec.clone(), grid, trials })
}

/// Solver configuration for a grid point.
pub fn solver_config(spec: &ExperimentSpec, point: &GridPoint, blocks: usize, seed: u64) -> Result<SolverConfig, HarnessError> {
    let s = &spec.solver;
    let mut cfg = SolverConfig::new(s.k.unwrap_or(point.k0));
    cfg.gamma = point.gamma.unwrap_or(1.0);
    let proj = match (s.projection, point.oversampling) {
        (ProjectionKind::Randomized, Some(d)) => {
            let p = ProjectionConfig::randomized(d, s.power_iters);
            match s.eta {
                Some(eta) => p.with_eta_target(eta)?,
                None => p,
            }
        }
        _ => ProjectionConfig::exact(),
    };
    cfg.proj_identify = proj;
    cfg.proj_prune = proj;
    if s.sampling == SamplingKind::Uniform {
        cfg.sampling = Some(vec![1.0 / blocks as f64; blocks]);
    }
    cfg.eta_schedule = EtaSchedule { identify: s.eta_schedule.clone(), prune: s.eta_prune_schedule.clone() };
    cfg.noise = match (point.gradient_noise > 0.0, s.gradient_noise_decay) {
        (false, _) => GradientNoise::None,
        (true, false) => GradientNoise::ConstantNorm(point.gradient_noise),
        (true, true) => GradientNoise::Decaying(point.gradient_noise),
    };
    cfg.estimation.epsilon = s.estimation_epsilon;
    cfg.halting.max_epochs = s.max_epochs;
    cfg.halting.step_tolerance = (s.step_tolerance > 0.0).then_some(s.step_tolerance);
    cfg.halting.objective_stall = s.objective_stall;
    let noiseless = point.noise_norm == 0.0 && point.gradient_noise == 0.0;
    cfg.halting.error_tolerance = s.stop_error.or(noiseless.then(|| point.success_threshold(spec) / 10.0));
    cfg.seed = seed;
    cfg.record_objective = spec.output.record_objective;
    Ok(cfg)
}

/// The problem trial `trial` of `point` runs on: the draw and its objective.
pub fn trial_problem(
    spec: &ExperimentSpec,
    point: &GridPoint,
    trial: usize,
) -> Result<(ProblemDraw, BlockObjective), HarnessError> {
    let mut rng = stream(spec.seed, &[PROBLEM_STREAM, trial as u64, point.k0 as u64, point.m as u64]);
    let draw = draw_problem(spec.problem.signal, spec.signal_dims(), point.k0, point.m, spec.problem.ensemble, &mut rng)?;
    let obj = draw.objective(point.b, point.noise_norm)?;
    Ok((draw, obj))
}

fn run_one(spec: &ExperimentSpec, point: &GridPoint, trial: usize, sub: usize) -> Result<TrialSummary, HarnessError> {
    let (draw, obj) = trial_problem(spec, point, trial)?;
    let model = draw.model();
    let seed = derive_seed(spec.seed, &[SOLVER_STREAM, point.index as u64, trial as u64, sub as u64]);
    let cfg = solver_config(spec, point, obj.block_count(), seed)?;
    let w0 = DVector::zeros(obj.dim());
    let trace = match point.solver {
        SolverKind::Stoiht | SolverKind::Iht => stoiht(&obj, &model, &cfg, &w0, Some(&draw.w_star))?,
        SolverKind::Stogradmp | SolverKind::Gradmp => stogradmp(&obj, &model, &cfg, &w0, Some(&draw.w_star))?,
    };
    Ok(summarize(spec, point, trial, sub, &trace))
}

fn summarize(spec: &ExperimentSpec, point: &GridPoint, trial: usize, sub_trial: usize, trace: &RunTrace) -> TrialSummary {
    let curve: Vec<CurvePoint> = trace
        .records
        .iter()
        .map(|r| CurvePoint {
            iteration: r.iteration,
            epoch: r.epoch,
            error: r.error.unwrap_or(f64::NAN),
            objective: r.objective,
            wall_time_s: r.wall_time_s,
        })
        .collect();
    let last = curve.last().expect("a trace always holds the starting point");
    let final_error = last.error;
    TrialSummary {
        point: point.index,
        trial,
        sub_trial,
        status: trace.status,
        iterations: last.iteration,
        epochs: last.epoch,
        final_error,
        success: trace.status != RunStatus::Diverged && final_error < point.success_threshold(spec),
        wall_time_s: last.wall_time_s,
        curve,
    }
}
