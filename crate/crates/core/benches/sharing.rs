use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nalgebra::DVector;

use netrecon::exec::Executor;
use netrecon::experiment::{trial_data, SweepSpec};
use netrecon::problem::{partition_columns, RegressionProblem, SolverConfig};
use netrecon::sharing::solve_sharing;

const NODES: usize = 150;
const BLOCKS: usize = 60;

fn problem() -> RegressionProblem {
    let spec = SweepSpec {
        sizes: vec![NODES],
        snrs_db: vec![25.0],
        trials: 1,
        base_seed: 11,
        ..SweepSpec::default()
    };
    trial_data(&spec, NODES, 25.0, 0).unwrap().problems.remove(0).1
}

fn sharing(c: &mut Criterion) {
    let problem = problem();
    let part = partition_columns(problem.cols(), BLOCKS).unwrap();
    let theta = DVector::from_element(problem.cols(), 1.0);
    let cfg = SolverConfig::default();
    let lambda = cfg.lambda_scale * problem.a.tr_mul(&problem.y).amax();

    let mut group = c.benchmark_group("solve_sharing");
    group.sample_size(20);
    let executors = [
        ("sequential", Executor::sequential()),
        ("parallel", Executor::new(2).unwrap()),
        ("parallel", Executor::new(4).unwrap()),
    ];
    for (name, exec) in &executors {
        group.bench_with_input(BenchmarkId::new(*name, exec.workers()), exec, |b, exec| {
            b.iter(|| solve_sharing(&problem, &part, &theta, lambda, &cfg, exec, None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sharing);
criterion_main!(benches);
