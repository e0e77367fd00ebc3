use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use equigame::evo::{perf, simulate_fixation, Conjunction, Distribution, PerfMode};
use equigame::netecon::paper_instance;
use equigame::par::Execution;
use equigame::vi::{solve_stochastic_batch, StepSchedule, StochasticSampler};

const MODES: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn fixation(c: &mut Criterion) {
    let mut group = c.benchmark_group("simulate_fixation");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "N=50,r=1.1,20k"), |b| {
            b.iter(|| simulate_fixation(50, 1.1, 1, 20_000, 42, exec).unwrap())
        });
    }
    group.finish();
}

fn stochastic_batch(c: &mut Criterion) {
    let p = paper_instance().assemble_vi().unwrap();
    let sampler = StochasticSampler::gaussian(1.0);
    let sched = StepSchedule::harmonic(0.5, 10.0, 1.0);
    let seeds: Vec<u64> = (0..16).collect();
    let mut group = c.benchmark_group("stochastic_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "16 seeds x 20k"), |b| {
            b.iter(|| solve_stochastic_batch(&p, &sampler, &sched, &seeds, 20_000, exec).unwrap())
        });
    }
    group.finish();
}

fn perf_enumeration(c: &mut Criterion) {
    let n = 20;
    let f = Conjunction::new(n, &[1, 4, 9]).unwrap();
    let r = Conjunction::new(n, &[1, 4]).unwrap();
    let d = Distribution::Uniform { n };
    let mut group = c.benchmark_group("perf_exact");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, "n=20"), |b| {
            b.iter(|| perf(&r, &f, &d, PerfMode::Exact, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, fixation, stochastic_batch, perf_enumeration);
criterion_main!(benches);
