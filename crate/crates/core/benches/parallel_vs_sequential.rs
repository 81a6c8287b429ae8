use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use demix::bench::{default_sample_grid, run_experiment_with, ExperimentSpec, SolverId};
use demix::operators::{make_basis, BasisKind};
use demix::par::Exec;
use demix::sparsity::{incoherence_estimate_with, IncoherenceOptions, SupportSampler};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn small_phase_spec() -> ExperimentSpec {
    let mut spec = ExperimentSpec::desk_scale();
    spec.p = 256;
    spec.b = 4;
    spec.s = 16;
    spec.sample_grid = default_sample_grid(16);
    spec.trials = 2;
    spec.solvers = vec![SolverId::StructDht, SolverId::Dht];
    spec.max_iters = 200;
    spec
}

fn bench_phase(c: &mut Criterion) {
    let spec = small_phase_spec();
    let mut group = c.benchmark_group("phase_experiment");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| run_experiment_with(black_box(&spec), exec).unwrap())
        });
    }
    group.finish();
}

fn bench_incoherence(c: &mut Criterion) {
    let p = 1024;
    let phi = make_basis(BasisKind::Identity, p, 0).unwrap();
    let psi = make_basis(BasisKind::Dct, p, 0).unwrap();
    let mut group = c.benchmark_group("incoherence_probe");
    for (name, exec) in MODES {
        let opts = IncoherenceOptions {
            sampler: SupportSampler::Block(8),
            exec,
        };
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| incoherence_estimate_with(&phi, &psi, black_box(64), 256, 3, opts).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_phase, bench_incoherence);
criterion_main!(benches);
