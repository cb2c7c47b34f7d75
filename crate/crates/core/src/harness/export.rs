//! CSV output.
//!
//! `export_csv` writes five files into a directory:
//!
//! | file                  | one row per                         |
//! |-----------------------|-------------------------------------|
//! | `trials.csv`          | run (grid point, trial, sub-trial)  |
//! | `raw.csv`             | recorded iteration of every run     |
//! | `curves.csv`          | grid point and integer epoch        |
//! | `recovery.csv`        | grid point                          |
//! | `min_measurements.csv`| parameter combination other than m  |
//!
//! Floats use the shortest representation that parses back to the same
//! value. Wall-clock columns appear only with `output.timing = true`, so by
//! default two runs of the same spec produce identical bytes.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::aggregate::{epoch_curves, min_measurements, recovery_table};
use super::run::TrialSet;
use super::spec::GridPoint;
use super::HarnessError;

pub const TRIALS_FILE: &str = "trials.csv";
pub const RAW_FILE: &str = "raw.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const RECOVERY_FILE: &str = "recovery.csv";
pub const MIN_MEASUREMENTS_FILE: &str = "min_measurements.csv";

const POINT_COLUMNS: [&str; 10] =
    ["point", "solver", "k0", "m", "b", "gamma", "oversampling", "noise_norm", "gradient_noise", "threshold"];

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map_or_else(String::new, |v| v.to_string())
}

fn point_fields(ts: &TrialSet, p: &GridPoint) -> Vec<String> {
    vec![
        p.index.to_string(),
        p.solver.as_str().to_string(),
        p.k0.to_string(),
        p.m.to_string(),
        p.b.to_string(),
        p.gamma.map_or_else(String::new, float),
        opt(p.oversampling),
        float(p.noise_norm),
        float(p.gradient_noise),
        float(p.success_threshold(&ts.spec)),
    ]
}

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>, HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_trials<W: Write>(ts: &TrialSet, out: W) -> Result<(), HarnessError> {
    let timing = ts.spec.output.timing;
    let mut header = POINT_COLUMNS.to_vec();
    header.extend(["trial", "sub_trial", "status", "iterations", "epochs", "final_error", "success"]);
    if timing {
        header.push("wall_time_s");
    }
    let mut w = writer(out, &header)?;
    for t in &ts.trials {
        let mut row = point_fields(ts, &ts.grid[t.point]);
        row.extend([
            t.trial.to_string(),
            t.sub_trial.to_string(),
            t.status.as_str().to_string(),
            t.iterations.to_string(),
            float(t.epochs),
            float(t.final_error),
            t.success.to_string(),
        ]);
        if timing {
            row.push(float(t.wall_time_s));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_raw<W: Write>(ts: &TrialSet, out: W) -> Result<(), HarnessError> {
    let timing = ts.spec.output.timing;
    let every = ts.spec.output.raw_every;
    let mut header = vec!["point", "trial", "sub_trial", "epoch", "iteration", "error", "objective"];
    if timing {
        header.push("wall_time_s");
    }
    let mut w = writer(out, &header)?;
    for t in &ts.trials {
        let last = t.curve.len() - 1;
        for (j, c) in t.curve.iter().enumerate() {
            if j % every != 0 && j != last {
                continue;
            }
            let mut row = vec![
                t.point.to_string(),
                t.trial.to_string(),
                t.sub_trial.to_string(),
                float(c.epoch),
                c.iteration.to_string(),
                float(c.error),
                c.objective.map_or_else(String::new, float),
            ];
            if timing {
                row.push(float(c.wall_time_s));
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_curves<W: Write>(ts: &TrialSet, out: W) -> Result<(), HarnessError> {
    let timing = ts.spec.output.timing;
    let mut header = POINT_COLUMNS.to_vec();
    header.extend(["epoch", "trimmed_mean_error", "runs_kept"]);
    if timing {
        header.push("mean_wall_time_s");
    }
    let mut w = writer(out, &header)?;
    for r in epoch_curves(ts)? {
        let mut row = point_fields(ts, &ts.grid[r.point]);
        row.extend([r.epoch.to_string(), float(r.trimmed_mean_error), r.runs_kept.to_string()]);
        if timing {
            row.push(float(r.mean_wall_time_s));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_recovery<W: Write>(ts: &TrialSet, out: W) -> Result<(), HarnessError> {
    let timing = ts.spec.output.timing;
    let mut header = POINT_COLUMNS.to_vec();
    header.extend(["runs", "successes", "recovery_fraction", "trimmed_mean_final_error"]);
    if timing {
        header.push("mean_wall_time_s");
    }
    let mut w = writer(out, &header)?;
    for r in recovery_table(ts)? {
        let mut row = point_fields(ts, &ts.grid[r.point]);
        row.extend([
            r.runs.to_string(),
            r.successes.to_string(),
            float(r.recovery_fraction),
            float(r.trimmed_mean_final_error),
        ]);
        if timing {
            row.push(float(r.mean_wall_time_s));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_min_measurements<W: Write>(ts: &TrialSet, out: W) -> Result<(), HarnessError> {
    let header = ["solver", "k0", "block_size", "gamma", "oversampling", "noise_norm", "gradient_noise", "min_m"];
    let mut w = writer(out, &header)?;
    for r in min_measurements(ts)? {
        w.write_record([
            r.solver.as_str().to_string(),
            r.k0.to_string(),
            r.block.to_string(),
            r.gamma.map_or_else(String::new, float),
            opt(r.oversampling),
            float(r.noise_norm),
            float(r.gradient_noise),
            r.min_m.map_or_else(|| "none".to_string(), |m| m.to_string()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes all five files into `dir` (created if missing) and returns their
/// paths.
pub fn export_csv(ts: &TrialSet, dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    std::fs::create_dir_all(dir)?;
    type Emit = fn(&TrialSet, File) -> Result<(), HarnessError>;
    let files: [(&str, Emit); 5] = [
        (TRIALS_FILE, write_trials),
        (RAW_FILE, write_raw),
        (CURVES_FILE, write_curves),
        (RECOVERY_FILE, write_recovery),
        (MIN_MEASUREMENTS_FILE, write_min_measurements),
    ];
    let mut paths = Vec::new();
    for (name, emit) in files {
        let path = dir.join(name);
        emit(ts, File::create(&path)?)?;
        paths.push(path);
    }
    Ok(paths)
}
