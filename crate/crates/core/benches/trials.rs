//! Parallel vs sequential trial execution on a small batch.

use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use stogreedy::harness::{run_experiment_with, Execution, ExperimentSpec};

const SPEC: &str = r#"
schema_version = 1
kind = "phase_transition"
trials = 16
seed = 1
solvers = ["stoiht", "stogradmp"]

[problem]
n = 128
k0 = 4
m = [64, 96]
b = 8

[solver]
gamma = 0.3
max_epochs = 40
"#;

fn trials(c: &mut Criterion) {
    let spec = ExperimentSpec::from_toml_str(SPEC).expect("bench spec parses");
    let mut group = c.benchmark_group("trials");
    group.sample_size(10);
    for (name, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_function(name, |b| b.iter(|| run_experiment_with(black_box(&spec), exec).expect("bench run")));
    }
    group.finish();
}

criterion_group!(benches, trials);
criterion_main!(benches);
