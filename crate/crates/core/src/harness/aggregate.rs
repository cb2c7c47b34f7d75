//! Trimmed-mean aggregation of trial batches.
//!
//! Every table here is a pure function of [`TrialSet::trials`], so it can be
//! rebuilt from the raw rows.

use super::run::{TrialSet, TrialSummary};
use super::spec::{GridPoint, SolverKind};
use super::HarnessError;

/// Slack when matching fractional epochs to integer epoch marks.
const EPOCH_SLACK: f64 = 1e-9;

/// Values dropped from each end: `round(fraction/2 · N)`, half away from zero.
pub fn trim_count(n: usize, fraction: f64) -> usize {
    let c = (fraction / 2.0 * n as f64).round() as usize;
    c.min(n.saturating_sub(1) / 2)
}

/// Indices (ascending) of the values kept after dropping the `trim_count`
/// smallest and largest. Equal values are ordered by index.
pub fn trimmed_indices(values: &[f64], fraction: f64) -> Result<Vec<usize>, HarnessError> {
    if values.is_empty() {
        return Err(HarnessError::InvalidInput("trimmed mean of an empty list".into()));
    }
    if !(0.0..0.5).contains(&fraction) {
        return Err(HarnessError::InvalidInput(format!("trim fraction must lie in [0, 0.5), got {fraction}")));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let c = trim_count(values.len(), fraction);
    let mut kept = order[c..values.len() - c].to_vec();
    kept.sort_unstable();
    Ok(kept)
}

pub fn trimmed_mean(values: &[f64], fraction: f64) -> Result<f64, HarnessError> {
    let kept = trimmed_indices(values, fraction)?;
    Ok(kept.iter().map(|&i| values[i]).sum::<f64>() / kept.len() as f64)
}

fn mean_at(values: &[f64], idx: &[usize]) -> f64 {
    idx.iter().map(|&i| values[i]).sum::<f64>() / idx.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub point: usize,
    pub epoch: usize,
    pub trimmed_mean_error: f64,
    /// Mean over the same runs the error trimming kept.
    pub mean_wall_time_s: f64,
    pub runs_kept: usize,
}

/// `(error, wall time)` of a run at an integer epoch mark. Runs that stopped
/// earlier hold their final values.
fn state_at(run: &TrialSummary, epoch: usize, cursor: &mut usize) -> (f64, f64) {
    while *cursor + 1 < run.curve.len() && run.curve[*cursor + 1].epoch <= epoch as f64 + EPOCH_SLACK {
        *cursor += 1;
    }
    let c = &run.curve[*cursor];
    (c.error, c.wall_time_s)
}

/// Trimmed-mean error at every integer epoch, per grid point.
pub fn epoch_curves(ts: &TrialSet) -> Result<Vec<CurveRow>, HarnessError> {
    let fraction = ts.spec.trim_fraction;
    let mut out = Vec::new();
    for point in &ts.grid {
        let runs: Vec<&TrialSummary> = ts.runs(point.index).collect();
        if runs.is_empty() {
            continue;
        }
        let last = runs.iter().map(|r| (r.epochs - EPOCH_SLACK).ceil().max(0.0) as usize).max().unwrap_or(0);
        let mut cursors = vec![0usize; runs.len()];
        for epoch in 0..=last {
            let (errors, times): (Vec<f64>, Vec<f64>) =
                runs.iter().zip(cursors.iter_mut()).map(|(r, c)| state_at(r, epoch, c)).unzip();
            let kept = trimmed_indices(&errors, fraction)?;
            out.push(CurveRow {
                point: point.index,
                epoch,
                trimmed_mean_error: mean_at(&errors, &kept),
                mean_wall_time_s: mean_at(&times, &kept),
                runs_kept: kept.len(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryRow {
    pub point: usize,
    pub runs: usize,
    pub successes: usize,
    pub recovery_fraction: f64,
    pub trimmed_mean_final_error: f64,
    pub mean_wall_time_s: f64,
    pub threshold: f64,
}

/// Success counts and trimmed final errors per grid point.
pub fn recovery_table(ts: &TrialSet) -> Result<Vec<RecoveryRow>, HarnessError> {
    let mut out = Vec::new();
    for point in &ts.grid {
        let runs: Vec<&TrialSummary> = ts.runs(point.index).collect();
        if runs.is_empty() {
            continue;
        }
        let errors: Vec<f64> = runs.iter().map(|r| r.final_error).collect();
        let times: Vec<f64> = runs.iter().map(|r| r.wall_time_s).collect();
        let kept = trimmed_indices(&errors, ts.spec.trim_fraction)?;
        let successes = runs.iter().filter(|r| r.success).count();
        out.push(RecoveryRow {
            point: point.index,
            runs: runs.len(),
            successes,
            recovery_fraction: successes as f64 / runs.len() as f64,
            trimmed_mean_final_error: mean_at(&errors, &kept),
            mean_wall_time_s: mean_at(&times, &kept),
            threshold: point.success_threshold(&ts.spec),
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockLabel {
    /// Single-block baseline.
    Deterministic,
    Size(usize),
}

impl std::fmt::Display for BlockLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BlockLabel::Deterministic => f.write_str("deterministic"),
            BlockLabel::Size(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinMeasurementRow {
    pub solver: SolverKind,
    pub k0: usize,
    pub block: BlockLabel,
    pub gamma: Option<f64>,
    pub oversampling: Option<usize>,
    pub noise_norm: f64,
    pub gradient_noise: f64,
    /// Smallest grid `m` whose trimmed-mean final error is below the
    /// threshold; `None` when no grid value qualifies.
    pub min_m: Option<usize>,
}

type GroupKey = (SolverKind, usize, BlockLabel, Option<u64>, Option<usize>, u64, u64);

fn group_key(p: &GridPoint) -> GroupKey {
    let block = p.requested_b.map_or(BlockLabel::Deterministic, BlockLabel::Size);
    (p.solver, p.k0, block, p.gamma.map(f64::to_bits), p.oversampling, p.noise_norm.to_bits(), p.gradient_noise.to_bits())
}

/// Smallest number of measurements meeting the recovery criterion, for each
/// combination of the other grid parameters. Single-block solvers form one
/// row each, labelled `deterministic`.
pub fn min_measurements(ts: &TrialSet) -> Result<Vec<MinMeasurementRow>, HarnessError> {
    let recovery = recovery_table(ts)?;
    let mut groups: Vec<(GroupKey, MinMeasurementRow)> = Vec::new();
    for point in &ts.grid {
        let key = group_key(point);
        let met = recovery
            .iter()
            .find(|r| r.point == point.index)
            .is_some_and(|r| r.trimmed_mean_final_error < r.threshold);
        let row = match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, row)) => row,
            None => {
                groups.push((
                    key,
                    MinMeasurementRow {
                        solver: point.solver,
                        k0: point.k0,
                        block: key.2,
                        gamma: point.gamma,
                        oversampling: point.oversampling,
                        noise_norm: point.noise_norm,
                        gradient_noise: point.gradient_noise,
                        min_m: None,
                    },
                ));
                &mut groups.last_mut().expect("just pushed").1
            }
        };
        if met && row.min_m.is_none_or(|m| point.m < m) {
            row.min_m = Some(point.m);
        }
    }
    Ok(groups.into_iter().map(|(_, r)| r).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trimmed_mean_examples() {
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(trimmed_mean(&v, 0.10).unwrap(), 10.5);
        assert_eq!(trimmed_indices(&v, 0.10).unwrap(), (1..19).collect::<Vec<_>>());
        assert_eq!(trimmed_mean(&[3.0; 7], 0.3).unwrap(), 3.0);
        assert_eq!(trimmed_mean(&[1.0, 2.0, 6.0], 0.0).unwrap(), 3.0);
        assert!(trimmed_mean(&[], 0.1).is_err());
        assert!(trimmed_mean(&[1.0], 0.5).is_err());
    }

    #[test]
    fn trim_counts_round_half_away() {
        // 0.05 · 50 = 2.5 rounds to 3
        assert_eq!(trim_count(50, 0.10), 3);
        assert_eq!(trim_count(30, 0.10), 2);
        assert_eq!(trim_count(2, 0.49), 0);
        assert_eq!(trim_count(1, 0.49), 0);
    }

    #[test]
    fn outliers_are_dropped() {
        let mut v = vec![1.0; 18];
        v.push(1e9);
        v.push(-1e9);
        assert_eq!(trimmed_mean(&v, 0.10).unwrap(), 1.0);
    }
}
