mod common;

use proptest::prelude::*;
use tensor_sketch::ensemble::{
    degree_of_sparsity, gen_distributed_matrix, gen_distributed_support, gen_left_regular, project_support,
    tensor_neighbors,
};
use tensor_sketch::harness::{trial_instance, TrialConfig};
use tensor_sketch::operator::{unvec, vec};
use tensor_sketch::pipelines::{cov_sketch, empirical_covariance, SampleStream};
use tensor_sketch::solver::{lp_oracle, solve_p1};
use tensor_sketch::verify::{check_expansion, check_rip1};
use tensor_sketch::{BipartiteGraph, DenseMatrix, SketchOperator, SolverOptions, Support, TensorGraph, ValueSpec};

use common::{brute_expansion, brute_sketch};

fn dense(rows: usize, cols: usize) -> impl Strategy<Value = DenseMatrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols)
        .prop_map(move |v| DenseMatrix::from_row_major(rows, cols, v).expect("sized"))
}

/// `(p, m, δ, seed)` with small dimensions.
fn graph_params() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..9, 1usize..7, 1usize..4, any::<u64>())
}

fn pair(p: usize, m: usize, delta: usize, seed: u64) -> (BipartiteGraph, BipartiteGraph) {
    (gen_left_regular(p, m, delta, seed).unwrap(), gen_left_regular(p, m, delta, seed.wrapping_add(1)).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_pairs_with_forward((p, m, delta, seed) in graph_params(), xs in dense(8, 8), ms in dense(6, 6)) {
        let (g1, g2) = pair(p, m, delta, seed);
        let op = SketchOperator::from_graphs(&g1, &g2, false);
        let x = xs.block(p, p);
        let mm = ms.block(m, m);
        let lhs = op.forward(&x).unwrap().dot(&mm);
        let rhs = x.dot(&op.adjoint(&mm).unwrap());
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn forward_matches_kronecker((p, m, delta, seed) in graph_params(), xs in dense(8, 8), clip in any::<bool>()) {
        let (g1, g2) = pair(p, m, delta, seed);
        let op = SketchOperator::from_graphs(&g1, &g2, clip);
        let x = xs.block(p, p);
        let k = op.kron_materialize(64).unwrap();
        let kx = k.matmul(&unvec(&vec(&x), p * p, 1).unwrap()).unwrap();
        let y = op.forward(&x).unwrap();
        let direct = brute_sketch(&g1.adjacency(clip), &x, &g2.adjacency(clip));
        prop_assert!(unvec(&vec(&kx), m, m).unwrap().max_abs_diff(&y) <= 1e-10);
        prop_assert!(direct.max_abs_diff(&y) <= 1e-10);
    }

    #[test]
    fn vec_round_trips(xs in dense(7, 5)) {
        prop_assert_eq!(unvec(&vec(&xs), 7, 5).unwrap(), xs);
    }

    #[test]
    fn rip_upper_bound_never_fails((p, m, delta, seed) in graph_params(), d in 1usize..4, vseed in any::<u64>()) {
        let (g1, g2) = pair(p, m, delta, seed);
        let op = SketchOperator::from_graphs(&g1, &g2, false);
        let omega = gen_distributed_support(p, d.min(p), vseed).unwrap();
        let x = gen_distributed_matrix(&omega, ValueSpec::default(), vseed).unwrap();
        let r = check_rip1(&op, &x, 0.25).unwrap();
        prop_assert!(r.upper_ok);
        prop_assert!(op.forward(&x).unwrap().l1() <= (delta * delta) as f64 * x.l1() * (1.0 + 1e-12));
    }

    #[test]
    fn generated_supports_are_distributed(p in 1usize..30, d in 1usize..6, seed in any::<u64>()) {
        let d = d.min(p);
        let omega = gen_distributed_support(p, d, seed).unwrap();
        prop_assert!(omega.is_distributed(d));
        prop_assert!((0..p).all(|i| omega.contains(i, i)));
        prop_assert!(omega.row_counts().iter().all(|&c| c <= d));
        prop_assert!(omega.col_counts().iter().all(|&c| c <= d));
        let x = gen_distributed_matrix(&omega, ValueSpec::default(), seed).unwrap();
        prop_assert_eq!(Support::of_matrix(&x, 0.0), omega.clone());
        prop_assert!(degree_of_sparsity(&x) <= d);
    }

    #[test]
    fn graphs_are_left_regular((p, m, delta, seed) in graph_params()) {
        let g = gen_left_regular(p, m, delta, seed).unwrap();
        prop_assert!((0..p).all(|i| g.targets(i).len() == delta && g.targets(i).iter().all(|&t| t < m)));
        let a = g.adjacency(false);
        prop_assert!((0..p).all(|i| (0..m).map(|r| a[(r, i)]).sum::<f64>() == delta as f64));
        prop_assert_eq!(BipartiteGraph::from_text(&g.to_text()).unwrap(), g);
    }

    #[test]
    fn support_text_round_trips(p in 1usize..20, d in 1usize..4, seed in any::<u64>()) {
        let omega = gen_distributed_support(p, d.min(p), seed).unwrap();
        prop_assert_eq!(Support::from_text(&omega.to_text(), Some(p)).unwrap(), omega);
    }

    #[test]
    fn csv_round_trips(xs in dense(4, 6)) {
        prop_assert_eq!(DenseMatrix::from_csv(&xs.to_csv()).unwrap(), xs);
    }

    #[test]
    fn l1_splits_over_support(xs in dense(6, 6), d in 1usize..4, seed in any::<u64>()) {
        let omega = gen_distributed_support(6, d, seed).unwrap();
        let inside = project_support(&xs, &omega).unwrap();
        let outside = xs.sub(&inside);
        prop_assert!((inside.l1() + outside.l1() - xs.l1()).abs() <= 1e-12 * (1.0 + xs.l1()));
    }

    #[test]
    fn jaccard_is_symmetric_and_bounded(p in 1usize..12, s1 in any::<u64>(), s2 in any::<u64>()) {
        let a = gen_distributed_support(p, 2.min(p), s1).unwrap();
        let b = gen_distributed_support(p, 2.min(p), s2).unwrap();
        let j = a.jaccard(&b);
        prop_assert_eq!(j, b.jaccard(&a));
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(a.jaccard(&a), 1.0);
    }

    #[test]
    fn expansion_matches_exhaustive_oracle((p, m, delta, seed) in graph_params(), d in 1usize..4) {
        let (g1, g2) = pair(p, m, delta, seed);
        let tg = TensorGraph::new(&g1, &g2).unwrap();
        let omega = gen_distributed_support(p, d.min(p), seed).unwrap();
        let r = check_expansion(&tg, &omega, 0.25, false).unwrap();
        prop_assert_eq!(
            (r.neighborhood_size, r.max_collision_outside, r.max_collision_inside),
            brute_expansion(&tg, &omega)
        );
    }

    #[test]
    fn neighborhood_grows_with_support((p, m, delta, seed) in graph_params(), extra in prop::collection::vec((0usize..8, 0usize..8), 0..6)) {
        let g = gen_left_regular(p, m, delta, seed).unwrap();
        let tg = TensorGraph::shared(&g);
        let mut omega = Support::diagonal(p);
        let mut last = tensor_neighbors(&tg, &omega).unwrap().len();
        for (i, j) in extra {
            omega.insert(i % p, j % p);
            let now = tensor_neighbors(&tg, &omega).unwrap().len();
            prop_assert!(now >= last);
            last = now;
        }
    }

    #[test]
    fn trials_are_deterministic(seed in any::<u64>()) {
        let cfg = TrialConfig { p: 8, m: 5, d: 2, delta: 2, seed, ..TrialConfig::default() };
        let (_, x1, y1) = trial_instance(&cfg).unwrap();
        let (_, x2, y2) = trial_instance(&cfg).unwrap();
        prop_assert_eq!(x1, x2);
        prop_assert_eq!(y1, y2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn one_pass_covariance_sketch_equals_two_pass(p in 2usize..12, m in 1usize..8, n in 1usize..300, seed in any::<u64>()) {
        let (stream, _) = SampleStream::planted(p, 2.min(p), ValueSpec::default(), n, seed).unwrap();
        let a = gen_left_regular(p, m, 2, seed).unwrap().adjacency(false);
        let one = cov_sketch(&stream, &a).unwrap();
        let two = a.matmul(&empirical_covariance(&stream)).unwrap().matmul(&a.transpose()).unwrap();
        prop_assert!(one.max_abs_diff(&two) <= 1e-10 * (1.0 + two.linf()));
    }

    #[test]
    fn lp_never_worse_than_p1(p in 2usize..6, m in 2usize..5, delta in 1usize..3, d in 1usize..3, seed in any::<u64>()) {
        let g = gen_left_regular(p, m, delta, seed).unwrap();
        let op = SketchOperator::from_graph(&g, false);
        let omega = gen_distributed_support(p, d.min(p), seed).unwrap();
        let x = gen_distributed_matrix(&omega, ValueSpec::default(), seed).unwrap();
        let y = op.forward(&x).unwrap();
        let lp = lp_oracle(&op, &y).unwrap();
        let admm = solve_p1(&op, &y, &SolverOptions::default()).unwrap();
        prop_assert!(lp.objective <= admm.objective + 1e-6);
        prop_assert!(lp.objective <= x.l1() + 1e-9);
    }
}
