use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use stogreedy::atoms::{identify, project, randomized_svd, truncated_svd};
use stogreedy::harness::{trim_count, trimmed_mean, ExperimentSpec};
use stogreedy::objectives::{read_snapshot, write_snapshot, BlockObjective};
use stogreedy::oracle::{best_support_bruteforce, exact_truncation, support_residual, verify_eta, OracleBudget};
use stogreedy::rng::stream;
use stogreedy::solvers::diagnostics::{error_bound, error_bound_schedule, kappa_stoiht};
use stogreedy::solvers::{DiagnosticInputs, Halting};
use stogreedy::{stogradmp, stoiht, AtomModel, ProjectionConfig, RestrictedConstants, SolverConfig};

fn vector(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 1..=max_len)
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    prop::collection::vec(-3.0f64..3.0, rows * cols).prop_map(move |v| DMatrix::from_vec(rows, cols, v))
}

/// `(design, observations, block size)` with at least as many columns as the
/// sparsity tests need.
fn regression() -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>, usize)> {
    (3usize..12, 4usize..14, 1usize..6).prop_flat_map(|(m, n, b)| {
        (matrix(m, n), prop::collection::vec(-3.0f64..3.0, m), Just(b.min(m)))
            .prop_map(|(a, y, b)| (a, DVector::from_vec(y), b))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn coordinate_identify_is_optimal(v in vector(10), k in 1usize..10) {
        let n = v.len();
        let k = k.min(n);
        let v = DVector::from_vec(v);
        let model = AtomModel::coordinate(n);
        let support = identify(&model, &v, k, &ProjectionConfig::exact(), &mut stream(0, &[])).unwrap();
        prop_assert!(support.len() <= k);
        prop_assert!(verify_eta(&model, &v, k, &support, 1.0, &OracleBudget::default()).unwrap());
        let best = best_support_bruteforce(&model, &v, k, &OracleBudget::default()).unwrap();
        let ours = support_residual(&model, &v, &support).unwrap();
        prop_assert!((ours - best.residual).abs() <= 1e-12 * (1.0 + v.norm()));
    }

    #[test]
    fn projection_is_idempotent_and_shrinks(v in vector(12), k in 1usize..6) {
        let n = v.len();
        let v = DVector::from_vec(v);
        let model = AtomModel::coordinate(n);
        let support = identify(&model, &v, k.min(n), &ProjectionConfig::exact(), &mut stream(0, &[])).unwrap();
        let p = project(&model, &v, &support).unwrap();
        let pp = project(&model, &p, &support).unwrap();
        prop_assert!((&p - &pp).norm() <= 1e-12 * (1.0 + p.norm()));
        prop_assert!(p.norm() <= v.norm() * (1.0 + 1e-12));
        // residual is orthogonal to the projection
        prop_assert!((&v - &p).dot(&p).abs() <= 1e-9 * (1.0 + v.norm_squared()));
    }

    #[test]
    fn rank_one_identify_matches_truncation(w in matrix(5, 4), k in 1usize..4) {
        let model = AtomModel::rank_one(5, 4);
        let v = DVector::from_column_slice(w.as_slice());
        let support = identify(&model, &v, k, &ProjectionConfig::exact(), &mut stream(0, &[])).unwrap();
        let p = project(&model, &v, &support).unwrap();
        let oracle = exact_truncation(&w, k);
        prop_assert!((p - DVector::from_column_slice(oracle.as_slice())).norm() <= 1e-9 * (1.0 + w.norm()));
    }

    #[test]
    fn randomized_svd_never_beats_exact(w in matrix(8, 7), s in 1usize..4, d in 0usize..3, seed in any::<u64>()) {
        let exact = (&w - truncated_svd(&w, s).reconstruct()).norm();
        let approx = randomized_svd(&w, s, d, 0, &mut stream(seed, &[])).unwrap();
        prop_assert!(approx.rank() <= s);
        let err = (&w - approx.reconstruct()).norm();
        prop_assert!(err >= exact - 1e-9 * (1.0 + w.norm()));
    }

    #[test]
    fn randomized_svd_exact_on_low_rank(l in matrix(9, 2), r in matrix(2, 8), seed in any::<u64>()) {
        let w = &l * &r;
        let approx = randomized_svd(&w, 2, 2, 0, &mut stream(seed, &[])).unwrap();
        prop_assert!((&w - approx.reconstruct()).norm() <= 1e-8 * (1.0 + w.norm()));
    }

    #[test]
    fn trimmed_mean_lies_within_range(v in prop::collection::vec(-1e6f64..1e6, 1..60), f in 0.0f64..0.49) {
        let t = trimmed_mean(&v, f).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(t >= lo - 1e-9 && t <= hi + 1e-9);
        prop_assert!(2 * trim_count(v.len(), f) < v.len());
        let mut rev = v.clone();
        rev.reverse();
        prop_assert!((trimmed_mean(&rev, f).unwrap() - t).abs() <= 1e-9 * (1.0 + t.abs()));
    }

    #[test]
    fn untrimmed_mean_is_plain_mean(v in prop::collection::vec(-1e3f64..1e3, 1..40)) {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        prop_assert!((trimmed_mean(&v, 0.0).unwrap() - mean).abs() <= 1e-9);
    }

    #[test]
    fn weighted_block_gradients_average_to_full_gradient(
        (a, y, b) in regression(),
        raw in prop::collection::vec(0.05f64..1.0, 14),
        w in prop::collection::vec(-2.0f64..2.0, 14),
    ) {
        let n = a.ncols();
        let obj = BlockObjective::sparse_regression(a, y, b).unwrap();
        let m_blocks = obj.block_count();
        let total: f64 = raw[..m_blocks].iter().sum();
        let p: Vec<f64> = raw[..m_blocks].iter().map(|x| x / total).collect();
        let obj = obj.with_sampling(p.clone()).unwrap();
        let w = DVector::from_column_slice(&w[..n]);
        let mut sum = DVector::zeros(n);
        for (i, pi) in p.iter().enumerate() {
            sum += obj.block_gradient(&w, i).unwrap() * (pi / (m_blocks as f64 * pi));
        }
        let full = obj.full_gradient(&w).unwrap();
        prop_assert!((sum - &full).norm() <= 1e-10 * (1.0 + full.norm()));
        // the values average the same way
        let mean: f64 = (0..m_blocks).map(|i| obj.block_value(&w, i).unwrap()).sum::<f64>() / m_blocks as f64;
        prop_assert!((mean - obj.full_value(&w).unwrap()).abs() <= 1e-10 * (1.0 + mean.abs()));
    }

    #[test]
    fn snapshots_round_trip_bit_for_bit((a, y, b) in regression(), with_w in any::<bool>()) {
        let n = a.ncols();
        let obj = BlockObjective::sparse_regression(a, y, b).unwrap();
        let w_star = with_w.then(|| DVector::from_fn(n, |i, _| i as f64 * 0.1 - 0.3));
        let mut buf = Vec::new();
        write_snapshot(&mut buf, &obj, w_star.as_ref()).unwrap();
        let back = read_snapshot(buf.as_slice()).unwrap();
        prop_assert_eq!(back.objective.design(), obj.design());
        prop_assert_eq!(back.objective.observations(), obj.observations());
        prop_assert_eq!(back.objective.sampling(), obj.sampling());
        prop_assert_eq!(back.objective.block_size(), obj.block_size());
        prop_assert_eq!(back.w_star, w_star);
    }

    #[test]
    fn solver_iterates_stay_feasible((a, y, b) in regression(), k in 1usize..4, seed in any::<u64>()) {
        let n = a.ncols();
        let obj = BlockObjective::sparse_regression(a, y, b).unwrap();
        let model = AtomModel::coordinate(n);
        let mut cfg = SolverConfig::new(k);
        cfg.gamma = 0.05;
        cfg.seed = seed;
        cfg.keep_iterates = true;
        cfg.halting = Halting { max_epochs: 5.0, ..Halting::default() };
        let w0 = DVector::zeros(n);
        for trace in [stoiht(&obj, &model, &cfg, &w0, None).unwrap(), stogradmp(&obj, &model, &cfg, &w0, None).unwrap()] {
            for w in &trace.iterates {
                prop_assert!(w.iter().filter(|x| **x != 0.0).count() <= k);
            }
            for r in &trace.records {
                prop_assert!(r.support.len() <= k);
            }
        }
    }

    #[test]
    fn same_seed_same_trace((a, y, b) in regression(), seed in any::<u64>()) {
        let n = a.ncols();
        let obj = BlockObjective::sparse_regression(a, y, b).unwrap();
        let model = AtomModel::coordinate(n);
        let mut cfg = SolverConfig::new(2);
        cfg.gamma = 0.05;
        cfg.seed = seed;
        cfg.halting = Halting { max_epochs: 4.0, ..Halting::default() };
        let w0 = DVector::zeros(n);
        let a1 = stoiht(&obj, &model, &cfg, &w0, None).unwrap();
        let a2 = stoiht(&obj, &model, &cfg, &w0, None).unwrap();
        prop_assert_eq!(&a1.final_iterate, &a2.final_iterate);
        let blocks = |t: &stogreedy::RunTrace| t.records.iter().map(|r| r.block).collect::<Vec<_>>();
        prop_assert_eq!(blocks(&a1), blocks(&a2));
    }

    #[test]
    fn constant_schedule_bound_matches_closed_form(kappa in 0.0f64..0.99, e0 in 0.0f64..10.0, sigma in 0.0f64..1.0, t in 0usize..40) {
        let sched = error_bound_schedule(&vec![kappa; t], e0, sigma);
        prop_assert_eq!(sched.len(), t + 1);
        let last = sched[t];
        // the unrolled recursion never exceeds the geometric-series bound
        prop_assert!(last <= error_bound(kappa, e0, sigma, t) * (1.0 + 1e-12) + 1e-12);
        prop_assert!(sched.windows(2).all(|w| w[1] <= w[0] + sigma + 1e-12));
    }

    #[test]
    fn stoiht_kappa_grows_with_isometry_constant(d1 in 0.0f64..0.3, d2 in 0.0f64..0.3) {
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let k = |d: f64| kappa_stoiht(&DiagnosticInputs::stoiht(RestrictedConstants::uniform(6, 4, 1.0 + d, 1.0 - d), 1.0, 1.0)).unwrap();
        prop_assert!(k(lo) <= k(hi) + 1e-12);
        // closed form with uniform sampling and gamma = 1
        prop_assert!((k(hi) - 2.0 * (2.0 * hi - hi * hi).sqrt()).abs() <= 1e-12);
    }

    #[test]
    fn spec_round_trips_through_toml(trials in 1usize..100, seed in any::<u64>(), k0 in 1usize..5, m in 5usize..50, g in 0.01f64..2.0) {
        let text = format!(r#"
schema_version = 1
kind = "stepsize_sweep"
trials = {trials}
seed = {seed}
[problem]
n = 60
k0 = {k0}
m = {m}
b = [2, 4]
[solver]
gamma = [{g:?}, 1.0]
"#);
        let spec = ExperimentSpec::from_toml_str(&text).unwrap();
        let back = ExperimentSpec::from_toml_str(&spec.to_toml_string()).unwrap();
        prop_assert_eq!(&spec, &back);
        // StoGradMP has no step size, so only StoIHT spans the gamma list
        prop_assert_eq!(spec.grid().len(), 2 * 2 + 2);
    }
}
