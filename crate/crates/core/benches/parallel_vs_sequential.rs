use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use secpower_core::experiment::{self, sweep};
use secpower_core::planner::policy_iteration;
use secpower_core::{Algorithm, Axis, Exec, ExperimentConfig, Kernel, Mdp, Selector, SimConfig, Simulator, SystemModel};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn kernel_build(c: &mut Criterion) {
    let mdp = Mdp::joint(SystemModel::default());
    let mut g = c.benchmark_group("kernel_build");
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| Kernel::build_with(black_box(&mdp), exec)));
    }
    g.finish();
}

fn monte_carlo(c: &mut Criterion) {
    let mdp = Mdp::joint(SystemModel::default());
    let policy = policy_iteration(&Kernel::build(&mdp), 0.9, 0.07).policy;
    let sim = Simulator::new(mdp.clone());
    let mut g = c.benchmark_group("estimate_ojpa");
    g.sample_size(20);
    for episodes in [1_000, 20_000] {
        let cfg = SimConfig::new(0.9, episodes, mdp.initial_state(), 1);
        for (name, exec) in MODES {
            let selector = Selector::Lookup(policy.clone());
            g.bench_with_input(BenchmarkId::new(name, episodes), &cfg, |b, cfg| {
                b.iter(|| sim.estimate_with(&selector, cfg, exec).unwrap())
            });
        }
    }
    g.finish();
}

fn gamma_sweep(c: &mut Criterion) {
    let cfg = ExperimentConfig {
        episodes: 2_000,
        algorithms: vec![Algorithm::Ojpa, Algorithm::Rsjpa, Algorithm::Ga, Algorithm::Na],
        ..ExperimentConfig::default()
    };
    let mut g = c.benchmark_group("gamma_sweep");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_function(name, |b| b.iter(|| sweep(&cfg, Axis::Gamma, exec).unwrap()));
    }
    g.finish();
}

fn planning(c: &mut Criterion) {
    let cfg = ExperimentConfig::default();
    let mdp = experiment::decision_problem(&cfg, Algorithm::Ojpa).unwrap();
    let kernel = Kernel::build(&mdp);
    let s0 = mdp.space().index(&mdp.initial_state()).unwrap();
    let mut g = c.benchmark_group("planning");
    for algorithm in [Algorithm::Ojpa, Algorithm::Rsjpa] {
        g.bench_function(algorithm.name(), |b| {
            b.iter(|| experiment::plan_on(&cfg, algorithm, black_box(&kernel), s0))
        });
    }
    g.finish();
}

criterion_group!(benches, kernel_build, monte_carlo, gamma_sweep, planning);
criterion_main!(benches);
