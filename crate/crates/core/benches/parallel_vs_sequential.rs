use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use sweeper_core::convergence::gamma_sweep;
use sweeper_core::geometry::PenaltySchedule;
use sweeper_core::ocp::brute_force_unit_controls;
use sweeper_core::par::ExecMode;
use sweeper_core::scenario::{load_scenario, Scenario};
use sweeper_core::workflow::Flags;

fn scenario(name: &str) -> Scenario {
    load_scenario(format!("{}/../../scenarios/{name}.json", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

const MODES: [(&str, ExecMode); 2] = [("parallel", ExecMode::Parallel), ("sequential", ExecMode::Sequential)];

fn sweep(c: &mut Criterion) {
    let sc = scenario("disk-slide");
    let schedule = PenaltySchedule::geometric(sc.model.mbar, sc.model.set.eta, Some(10.0), 8).unwrap();
    let mut group = c.benchmark_group("gamma_sweep");
    group.sample_size(10);
    for (label, mode) in MODES {
        let opts = sc.sweep_options(&Flags { exec: mode, ..Flags::default() }, &schedule);
        let reference = sc.reference(opts.n_out).unwrap();
        group.bench_with_input(BenchmarkId::new(label, schedule.len()), &opts, |b, opts| {
            b.iter(|| gamma_sweep(&sc.model, &schedule, &sc.x0, &sc.control, &reference, black_box(opts)).unwrap())
        });
    }
    group.finish();
}

fn brute_force(c: &mut Criterion) {
    let sc = scenario("disk-push");
    let cost = &sc.problem.as_ref().unwrap().cost;
    let angles = [-0.3, 0.0, 0.3];
    let mut group = c.benchmark_group("brute_force");
    group.sample_size(10);
    for (label, mode) in MODES {
        // 3^5 candidate controls on a coarse grid
        group.bench_function(BenchmarkId::new(label, 243), |b| {
            b.iter(|| brute_force_unit_controls(&sc.model, cost, &sc.x0, 1e3, black_box(&angles), 5, 200, mode).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep, brute_force);
criterion_main!(benches);
