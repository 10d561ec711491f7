mod common;

use nalgebra::SymmetricEigen;
use tensor_sketch::ensemble::{
    default_delta, gen_bernoulli_matrix, gen_distributed_matrix, gen_distributed_support, gen_left_regular,
};
use tensor_sketch::harness::{phase_diagram, run_trial, PhaseGrid, PhaseSettings, TrialConfig};
use tensor_sketch::operator::{unvec, vec};
use tensor_sketch::pipelines::{
    cross_cov_recover, empirical_covariance, graph_sketch, graph_unsketch, random_bounded_degree_graph,
    recover_covariance, rectangular_recover, run_covariance, CovConfig, CovMode, PartitionedGraph, RecoveryMode,
    SampleStream,
};
use tensor_sketch::solver::solve_p2;
use tensor_sketch::{seed, DenseMatrix, Exec, SketchOperator, SolverOptions, ValueSpec};

use common::brute_sketch;

#[test]
fn repeated_target_fraction_matches_birthday_formula() {
    let (p, m, delta) = (40, 21, 4);
    let exact = 1.0 - (0..delta).map(|k| (m - k) as f64 / m as f64).product::<f64>();
    let graphs = 10_000u64;
    let repeats: usize = (0..graphs)
        .map(|s| {
            let g = gen_left_regular(p, m, delta, s).unwrap();
            (0..p).filter(|&i| g.has_repeat(i)).count()
        })
        .sum();
    let observed = repeats as f64 / (graphs as usize * p) as f64;
    assert!((exact - 0.264).abs() < 5e-3, "exact {exact}");
    assert!((observed - exact).abs() <= 0.02, "observed {observed}, exact {exact}");
}

#[test]
fn bernoulli_entry_count_matches_binomial_mean() {
    let (p, trials) = (200, 100u64);
    let mean =
        (0..trials).map(|s| gen_bernoulli_matrix(p, 2.0 / p as f64, s).unwrap().l1()).sum::<f64>() / trials as f64;
    assert!((mean - 400.0).abs() <= 60.0, "mean {mean}");
}

fn p2_objective(k: &DenseMatrix, y: &[f64], x: &[f64], lambda: f64) -> f64 {
    let kx = k.matmul(&unvec(x, x.len(), 1).unwrap()).unwrap();
    let r: f64 = kx.as_slice().iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    r + lambda * x.iter().map(|v| v.abs()).sum::<f64>()
}

#[test]
fn p2_matches_long_run_ista() {
    let (p, m, lambda) = (4, 3, 0.3);
    let g = gen_left_regular(p, m, 2, 3).unwrap();
    let op = SketchOperator::from_graph(&g, false);
    let x0 = gen_distributed_matrix(&gen_distributed_support(p, 2, 3).unwrap(), ValueSpec::default(), 3).unwrap();
    let noise = DenseMatrix::from_fn(m, m, |i, j| 0.05 * ((i * m + j) as f64).sin());
    let y_hat = op.forward(&x0).unwrap().add(&noise);

    let k = op.kron_materialize(64).unwrap();
    let y = vec(&y_hat);
    let ktk = k.transpose().matmul(&k).unwrap();
    let lmax = SymmetricEigen::new(ktk.to_nalgebra()).eigenvalues.max();
    let step = 1.0 / (2.0 * lmax);
    let kt = k.transpose();
    let mut x = vec![0.0; p * p];
    for _ in 0..1_000_000 {
        let kx = k.matmul(&unvec(&x, p * p, 1).unwrap()).unwrap();
        let r: Vec<f64> = kx.as_slice().iter().zip(&y).map(|(a, b)| a - b).collect();
        let grad = kt.matmul(&unvec(&r, r.len(), 1).unwrap()).unwrap();
        for (xi, gi) in x.iter_mut().zip(grad.as_slice()) {
            let v = *xi - step * 2.0 * gi;
            let t = step * lambda;
            *xi = v.signum() * (v.abs() - t).max(0.0);
        }
    }
    let oracle = p2_objective(&k, &y, &x, lambda);
    let r = solve_p2(&op, &y_hat, lambda, &SolverOptions::default()).unwrap();
    let ours = p2_objective(&k, &y, &vec(&r.x), lambda);
    assert!((ours - oracle).abs() <= 1e-8, "fista {ours}, ista {oracle}");
}

const SEVENTEEN_EDGES: &str = "\
# within V1
1 2
2 3
4 5
# V1-V2
1 6
3 7
# within V2
6 7
8 9
# V2-V3
9 10
# within V3
10 11
12 13
11 13
# V3-V4
12 14
13 15
# within V4
14 15
16 17
# V1-V4
5 17
";

fn seventeen_node_partition(extra: &str) -> String {
    let mut s = String::new();
    for v in 1..=17 {
        let part = match v {
            1..=5 => 1,
            6..=9 => 2,
            10..=13 => 3,
            _ => 4,
        };
        s.push_str(&format!("{v} {part}\n"));
    }
    s + extra
}

fn with_self_loops(edges: &str) -> String {
    let mut s = edges.to_string();
    for v in 1..=17 {
        s.push_str(&format!("{v} {v}\n"));
    }
    s
}

#[test]
fn seventeen_node_graph_matches_hand_counts() {
    let pg =
        PartitionedGraph::from_text(&with_self_loops(SEVENTEEN_EDGES), &seventeen_node_partition(""), None).unwrap();
    assert_eq!((pg.p(), pg.m()), (17, 4));
    let y = graph_sketch(&pg).unwrap();
    // diagonal: twice the internal edges plus one self edge per vertex
    let expected = DenseMatrix::from_rows(&[
        &[11.0, 2.0, 0.0, 1.0],
        &[2.0, 8.0, 1.0, 0.0],
        &[0.0, 1.0, 10.0, 2.0],
        &[1.0, 0.0, 2.0, 8.0],
    ]);
    assert_eq!(y, expected);

    // vertex 9 shared by V2 and V3: its self edge and both its edges now cross
    let shared =
        PartitionedGraph::from_text(&with_self_loops(SEVENTEEN_EDGES), &seventeen_node_partition("9 3\n"), None)
            .unwrap();
    let y = graph_sketch(&shared).unwrap();
    assert_eq!(y[(1, 2)], 3.0);
    assert_eq!(y[(2, 1)], 3.0);
    assert_eq!(y[(2, 2)], 13.0);
    assert_eq!(y[(0, 2)], 0.0);
    assert_eq!(y[(2, 3)], 2.0);
    assert_eq!(y, brute_sketch(&shared.indicator(), shared.adjacency(), &shared.indicator()));
}

#[test]
fn empirical_covariance_converges() {
    let (stream, _) = SampleStream::planted(10, 3, ValueSpec::default(), 100_000, 4).unwrap();
    let err = empirical_covariance(&stream).sub(stream.sigma()).l1() / stream.sigma().l1();
    assert!(err < 0.05, "relative l1 error {err}");
}

#[test]
fn ideal_covariance_sketch_recovers_exactly() {
    let cfg = CovConfig { p: 40, m: 28, mode: CovMode::Exact, ..CovConfig::default() };
    let trials = 10;
    let exact = (0..trials)
        .filter(|&t| {
            let cfg = CovConfig { seed: t, ..cfg.clone() };
            let r = run_covariance(&cfg, &SolverOptions::default(), Exec::Parallel).unwrap();
            r.result.x.max_abs_diff(&r.sigma) <= 1e-4
        })
        .count();
    assert!(exact >= 8, "{exact}/{trials}");
}

#[test]
fn recovery_error_shrinks_with_sample_size() {
    let trials = 20;
    let mean_err = |n: usize| {
        (0..trials)
            .map(|t| {
                let cfg = CovConfig {
                    p: 20,
                    d: 2,
                    m: 15,
                    delta: 3,
                    n,
                    seed: seed::trial_seed(77, t),
                    folds: 4,
                    ..CovConfig::default()
                };
                let r = run_covariance(&cfg, &SolverOptions::default(), Exec::Parallel).unwrap();
                r.result.x.sub(&r.sigma).l1()
            })
            .sum::<f64>()
            / trials as f64
    };
    let errs: Vec<f64> = [500, 2100, 10_000].into_iter().map(mean_err).collect();
    assert!(errs.windows(2).all(|w| w[1] <= w[0]), "{errs:?}");
}

#[test]
fn cross_covariance_round_trips() {
    let p = 20;
    let mut exact = 0;
    for t in 0..10 {
        let s = seed::trial_seed(13, t);
        let omega = gen_distributed_support(p, 2, seed::substream(s, 3)).unwrap();
        let sigma = gen_distributed_matrix(&omega, ValueSpec::default(), seed::substream(s, 4)).unwrap();
        assert!(sigma.asymmetry() > 0.0);
        let a = gen_left_regular(p, 18, 4, seed::substream(s, 1)).unwrap().adjacency(false);
        let b = gen_left_regular(p, 18, 4, seed::substream(s, 2)).unwrap().adjacency(false);
        let y = brute_sketch(&a, &sigma, &b);
        let r = cross_cov_recover(&a, &b, &y, &SolverOptions::default()).unwrap();
        if r.x.max_abs_diff(&sigma) <= 1e-4 {
            exact += 1;
        }
    }
    assert!(exact >= 9, "{exact}/10");
}

#[test]
fn ideal_cross_covariance_with_independent_graphs() {
    let (p, m, trials) = (40, 27, 10);
    let exact = (0..trials)
        .filter(|&t| {
            let s = seed::trial_seed(14, t);
            let omega = gen_distributed_support(p, 3, seed::substream(s, 3)).unwrap();
            let sigma = gen_distributed_matrix(&omega, ValueSpec::default(), seed::substream(s, 4)).unwrap();
            let a = gen_left_regular(p, m, 4, seed::substream(s, 1)).unwrap().adjacency(false);
            let b = gen_left_regular(p, m, 4, seed::substream(s, 2)).unwrap().adjacency(false);
            let y = a.matmul(&sigma).unwrap().matmul(&b.transpose()).unwrap();
            cross_cov_recover(&a, &b, &y, &SolverOptions::default()).unwrap().x.max_abs_diff(&sigma) <= 1e-4
        })
        .count();
    assert!(exact >= 8, "{exact}/{trials}");
}

#[test]
fn symmetric_ideal_sketch_of_identity() {
    let a = gen_left_regular(12, 12, 3, 1).unwrap().adjacency(false);
    let ideal = a.matmul(&a.transpose()).unwrap();
    let r = recover_covariance(&a, &ideal, RecoveryMode::Exact, &SolverOptions::default()).unwrap();
    assert!(r.x.max_abs_diff(&DenseMatrix::identity(12)) <= 1e-6);
}

#[test]
fn rectangular_recovery_rate() {
    let (p1, p2, m, delta, trials) = (20, 40, 21, 5, 40);
    let ok = Exec::Parallel
        .map(trials, |t| {
            let s = seed::trial_seed(15, t as u64);
            let omega = gen_distributed_support(p2, 3, seed::substream(s, 3)).unwrap();
            let x = gen_distributed_matrix(&omega, ValueSpec::default(), seed::substream(s, 4)).unwrap().block(p1, p2);
            let a = gen_left_regular(p1, m, delta, seed::substream(s, 1)).unwrap().adjacency(false);
            let b = gen_left_regular(p2, m, delta, seed::substream(s, 2)).unwrap().adjacency(false);
            let y = brute_sketch(&a, &x, &b);
            let r = rectangular_recover(&a, &b, &y, seed::substream(s, 6), &SolverOptions::default()).unwrap();
            r.x.max_abs_diff(&x) <= 1e-4
        })
        .into_iter()
        .filter(|&b| b)
        .count();
    assert!(ok * 5 >= trials * 4, "{ok}/{trials}");
}

#[test]
fn bounded_degree_graphs_round_trip_above_threshold() {
    let (p, m, trials) = (40, 25, 40);
    let ok = Exec::Parallel
        .map(trials, |t| {
            let s = seed::trial_seed(16, t as u64);
            let adj = random_bounded_degree_graph(p, 3, seed::substream(s, 1)).unwrap();
            let parts = gen_left_regular(p, m, 4, seed::substream(s, 2)).unwrap();
            let pg = PartitionedGraph::with_ensemble_parts(adj, &parts).unwrap();
            let u = graph_unsketch(&graph_sketch(&pg).unwrap(), &pg.indicator(), &SolverOptions::default()).unwrap();
            &u.rounded == pg.adjacency()
        })
        .into_iter()
        .filter(|&b| b)
        .count();
    assert!(ok * 10 >= trials * 9, "{ok}/{trials}");
}

#[test]
fn black_region_cell_fails() {
    let cfg = TrialConfig { p: 60, m: 2, d: 4, delta: default_delta(60), seed: 3, ..TrialConfig::default() };
    let r = run_trial(&cfg).unwrap();
    assert!(!r.success);
}

#[test]
fn success_rate_rises_with_m_after_smoothing() {
    let p = vec![10, 20];
    let m: Vec<usize> = (2..=30).step_by(4).collect();
    let grid = phase_diagram(&p, &m, 10, 5, &PhaseSettings::default(), Exec::Parallel).unwrap();
    assert!(grid.max_smoothed_decrease() <= 0.1, "{:?}", grid.success_rate);
    assert!(
        grid.success_rate.iter().all(|row| row[0] == 0.0 && *row.last().unwrap() == 1.0),
        "{:?}",
        grid.success_rate
    );
}

#[test]
fn svg_matches_golden_file() {
    let grid = PhaseGrid {
        p_values: vec![10, 20, 30],
        m_values: vec![2, 6, 10, 14, 18],
        success_rate: vec![
            vec![0.0, 0.25, 1.0, 1.0, 1.0],
            vec![0.0, 0.0, 0.5, 1.0, 1.0],
            vec![0.0, 0.0, 0.125, 0.75, 1.0],
        ],
        trials_per_cell: 8,
    };
    let svg = grid.to_svg();
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/phase.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, &svg).unwrap();
    }
    let golden = std::fs::read_to_string(path).unwrap();
    assert_eq!(svg, golden);
    assert_eq!(grid.to_svg(), svg);
}
