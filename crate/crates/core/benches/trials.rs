use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use tensor_sketch::ensemble::{gen_distributed_support, gen_left_regular};
use tensor_sketch::harness::{phase_diagram, run_trial, PhaseSettings, TrialConfig};
use tensor_sketch::verify::check_expansion;
use tensor_sketch::{seed, Exec, TensorGraph};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn trial_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("trial_batch");
    group.sample_size(10);
    let base = TrialConfig { p: 20, m: 20, d: 2, delta: 3, ..TrialConfig::default() };
    for (name, exec) in MODES {
        group.bench_function(BenchmarkId::new(name, 16), |b| {
            b.iter(|| {
                exec.map(16, |t| {
                    let cfg = TrialConfig { seed: seed::trial_seed(1, t as u64), ..base.clone() };
                    run_trial(&cfg).unwrap().success
                })
            })
        });
    }
    group.finish();
}

fn phase_cells(c: &mut Criterion) {
    let mut group = c.benchmark_group("phase_cells");
    group.sample_size(10);
    let settings = PhaseSettings::default();
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| phase_diagram(&[10, 16], &[6, 12, 18], 4, 7, &settings, exec).unwrap())
        });
    }
    group.finish();
}

fn expansion_batch(c: &mut Criterion) {
    let mut group = c.benchmark_group("expansion_batch");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| {
            b.iter(|| {
                exec.map(32, |t| {
                    let s = seed::trial_seed(4, t as u64);
                    let g1 = gen_left_regular(100, 87, 5, seed::substream(s, 1)).unwrap();
                    let g2 = gen_left_regular(100, 87, 5, seed::substream(s, 2)).unwrap();
                    let omega = gen_distributed_support(100, 3, seed::substream(s, 3)).unwrap();
                    check_expansion(&TensorGraph::new(&g1, &g2).unwrap(), &omega, 0.25, false).unwrap().all_passed()
                })
            })
        });
    }
    group.finish();
}

criterion_group!(benches, trial_batch, phase_cells, expansion_batch);
criterion_main!(benches);
