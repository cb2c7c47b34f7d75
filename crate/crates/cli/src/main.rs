//! `stogreedy`: run experiment specs, inspect problem files.
//!
//! Exit codes: 0 success, 2 invalid spec or input file, 3 runtime failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stogreedy::harness::{
    export_csv, recovery_table, run_experiment_with, trial_problem, Execution, ExperimentSpec, HarnessError,
};
use stogreedy::objectives::{estimate_constants, ObjectiveError, Snapshot};
use stogreedy::rng::stream;
use stogreedy::solvers::diagnostics::{
    kappa_stogradmp, kappa_stoiht, sigma_stogradmp, sigma_stoiht, DiagnosticError, DiagnosticInputs,
};

/// Overrides the default output directory.
const OUTPUT_ENV: &str = "STOGREEDY_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "stogreedy-out";

#[derive(Parser)]
#[command(name = "stogreedy", version, about = "Stochastic greedy sparse recovery experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a spec whose parameter lists each hold one value.
    Run(RunArgs),
    /// Run every point of a spec's parameter grid.
    Sweep(RunArgs),
    /// Estimate restricted constants of a problem file and print the
    /// contraction coefficients and tolerances.
    Diag(DiagArgs),
    /// Write the problem one trial of a spec would solve to a problem file.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    /// Output directory. Defaults to $STOGREEDY_OUTPUT_DIR, then
    /// ./stogreedy-out/<spec name>.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run trials one after another instead of on the thread pool.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct DiagArgs {
    problem: PathBuf,
    /// Sparsity level of the solvers.
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// η for StoIHT and η₁ for StoGradMP.
    #[arg(long, default_value_t = 1.0)]
    eta: f64,
    /// η₂ for StoGradMP.
    #[arg(long, default_value_t = 1.0)]
    eta_prune: f64,
    /// Monte Carlo draws per constant.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenerateArgs {
    spec: PathBuf,
    /// Problem file to write.
    #[arg(long)]
    out: PathBuf,
    /// Grid point index.
    #[arg(long, default_value_t = 0)]
    point: usize,
    #[arg(long, default_value_t = 0)]
    trial: usize,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Invalid(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Invalid(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::InvalidSpec(_) => Failure::Invalid(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<ObjectiveError> for Failure {
    fn from(e: ObjectiveError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<DiagnosticError> for Failure {
    fn from(e: DiagnosticError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn load_spec(path: &Path) -> Result<ExperimentSpec, Failure> {
    let spec = ExperimentSpec::load(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    spec.validate().map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

fn output_dir(args: &RunArgs) -> PathBuf {
    if let Some(dir) = &args.out {
        return dir.clone();
    }
    if let Some(dir) = std::env::var_os(OUTPUT_ENV).filter(|d| !d.is_empty()) {
        return PathBuf::from(dir);
    }
    let stem = args.spec.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned());
    Path::new(DEFAULT_OUTPUT).join(stem)
}

fn run(args: &RunArgs, single: bool) -> Result<(), Failure> {
    let spec = load_spec(&args.spec)?;
    if single && !spec.is_single_point() {
        return Err(Failure::Invalid(format!(
            "{}: parameter lists hold several values; use `stogreedy sweep`",
            args.spec.display()
        )));
    }
    let exec = if args.sequential { Execution::Sequential } else { Execution::default() };
    let ts = run_experiment_with(&spec, exec)?;
    let dir = output_dir(args);
    let files = export_csv(&ts, &dir)?;

    println!("{:>5} {:>10} {:>4} {:>6} {:>5} {:>10} {:>14}", "point", "solver", "k0", "m", "b", "recovered", "trimmed_error");
    for row in recovery_table(&ts)? {
        let p = &ts.grid[row.point];
        println!(
            "{:>5} {:>10} {:>4} {:>6} {:>5} {:>10} {:>14.3e}",
            p.index,
            p.solver.as_str(),
            p.k0,
            p.m,
            p.b,
            format!("{}/{}", row.successes, row.runs),
            row.trimmed_mean_final_error
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn print_kappa(name: &str, k: Result<f64, DiagnosticError>) {
    match k {
        Ok(v) => println!("{name} = {v:.6}"),
        Err(e) => println!("{name} = n/a ({e})"),
    }
}

fn diag(args: &DiagArgs) -> Result<(), Failure> {
    if args.k == 0 {
        return Err(Failure::Invalid("--k must be positive".into()));
    }
    let snap = Snapshot::load(&args.problem).map_err(|e| match e {
        ObjectiveError::Snapshot(_) => Failure::Invalid(format!("{}: {e}", args.problem.display())),
        e => Failure::Runtime(format!("{}: {e}", args.problem.display())),
    })?;
    let obj = &snap.objective;
    let model = obj.shape().natural_model();
    println!("problem: dim = {}, rows = {}, blocks = {}, block_size = {}", obj.dim(), obj.rows(), obj.block_count(), obj.block_size());

    let mut rng = stream(args.seed, &[]);
    let mut at_level = |multiple: usize| -> Result<_, Failure> {
        let est = estimate_constants(obj, &model, multiple * args.k, args.trials, &mut rng)?;
        let source = if est.exhaustive.is_some() { "exhaustive" } else { "monte carlo" };
        let c = est.best().clone();
        println!(
            "level {}k = {} ({source}): rho_plus_max = {:.6}, rho_plus_bar = {:.6}, rho_minus = {:.6}, alpha = {:.6}",
            multiple,
            c.k(),
            c.rho_plus_max(),
            c.rho_plus_bar(),
            c.rho_minus(),
            c.alpha()
        );
        Ok(c)
    };
    let c3 = at_level(3)?;
    let c4 = at_level(4)?;

    let iht = DiagnosticInputs::stoiht(c3, args.gamma, args.eta);
    let gmp = DiagnosticInputs::stogradmp(c4, args.eta, args.eta_prune);
    print_kappa("kappa_stoiht", kappa_stoiht(&iht));
    print_kappa("kappa_stogradmp", kappa_stogradmp(&gmp));

    if let Some(w_star) = &snap.w_star {
        let p = iht.constants.sampling().to_vec();
        let s1 = sigma_stoiht(obj, &model, w_star, args.gamma, args.eta, &p, 3 * args.k)?;
        let s2 = sigma_stogradmp(obj, &model, w_star, &gmp, 4 * args.k)?;
        println!("sigma_stoiht = {s1:.6e}");
        println!("sigma_stogradmp = {s2:.6e}");
    }
    Ok(())
}

fn generate(args: &GenerateArgs) -> Result<(), Failure> {
    let spec = load_spec(&args.spec)?;
    let grid = spec.grid();
    let point = grid
        .get(args.point)
        .ok_or_else(|| Failure::Invalid(format!("grid has {} points, asked for point {}", grid.len(), args.point)))?;
    if args.trial >= spec.trials {
        return Err(Failure::Invalid(format!("spec runs {} trials, asked for trial {}", spec.trials, args.trial)));
    }
    let (draw, objective) = trial_problem(&spec, point, args.trial)?;
    Snapshot { objective, w_star: Some(draw.w_star) }.save(&args.out)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(a, true),
        Command::Sweep(a) => run(a, false),
        Command::Diag(a) => diag(a),
        Command::Generate(a) => generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
