use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use tensor_sketch::ensemble::{default_delta, gen_distributed_matrix, gen_distributed_support, gen_left_regular};
use tensor_sketch::harness::{
    default_grid, noise_csv, noise_sweep, phase_diagram, reduced_grid, run_trial, PhaseSettings, TrialConfig, TrialMode,
};
use tensor_sketch::pipelines::{
    edges_to_text, graph_sketch, graph_unsketch, random_bounded_degree_graph, run_covariance, CovConfig, CovMode,
    PartitionedGraph,
};
use tensor_sketch::solver::{solve_constrained, solve_p1, solve_p2};
use tensor_sketch::verify::{
    arrow_ambiguity_witness, check_expansion, check_nullspace, check_nullspace_dense, check_rip1,
};
use tensor_sketch::{
    seed, BipartiteGraph, DenseMatrix, Error, Exec, Result, SketchOperator, SolverOptions, TensorGraph,
};

use crate::{Cli, Command, GridArg, InstanceArgs, ModeArg};

pub enum Status {
    Done,
    NotConverged,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub fn run(cli: &Cli) -> Result<Status> {
    match &cli.command {
        Command::GenGraph { p, m } => gen_graph(cli, *p, *m),
        Command::Sketch { inst, graph, graph2, x } => {
            sketch(cli, inst, graph.as_deref(), graph2.as_deref(), x.as_deref())
        }
        Command::Recover { inst, mode, lambda, kappa, graph, graph2, sketch } => {
            let mut cfg = trial_config(cli, inst)?;
            cfg.mode = trial_mode(*mode, *lambda, *kappa, cfg.mode)?;
            match sketch {
                Some(y) => recover_file(cli, &cfg, graph.as_deref(), graph2.as_deref(), y),
                None => recover_trial(cli, &cfg),
            }
        }
        Command::CheckExpansion { inst, eps, samples, allow_large } => {
            expansion(cli, inst, *eps, *samples, *allow_large)
        }
        Command::CheckRip { inst, eps, samples } => rip(cli, inst, *eps, *samples),
        Command::CheckNullspace { inst, samples, vectors, dense } => nullspace(cli, inst, *samples, *vectors, *dense),
        Command::PhaseDiagram { trials, grid, p_values, m_values, d, max_iter } => {
            phase(cli, *trials, *grid, p_values.clone(), m_values.clone(), *d, *max_iter)
        }
        Command::CovSketch { p, m, d, n, exact, kappa } => cov(cli, *p, *m, *d, *n, *exact, *kappa),
        Command::GraphSketch { edges, partition, p, m, max_degree } => {
            graph(cli, edges.as_deref(), partition.as_deref(), *p, *m, *max_degree)
        }
        Command::NoiseSweep { inst, scales, trials } => noise(cli, inst, scales, *trials),
        Command::ArrowDemo { inst } => arrow(cli, inst),
    }
}

fn write_out(cli: &Cli, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cli.out)?;
    let path = cli.out.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(path)
}

fn read(path: &Path) -> Result<String> {
    Ok(fs::read_to_string(path)?)
}

/// Config file (or defaults), then flags. Without a config file the left
/// degree defaults to `default_delta(p)`.
fn trial_config(cli: &Cli, inst: &InstanceArgs) -> Result<TrialConfig> {
    let mut cfg = match &cli.config {
        Some(path) => TrialConfig::load(path)?,
        None => TrialConfig::default(),
    };
    cfg.p = inst.p.unwrap_or(cfg.p);
    cfg.m = inst.m.unwrap_or(cfg.m);
    cfg.d = inst.d.unwrap_or(cfg.d);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.delta = match (cli.delta, &cli.config) {
        (Some(delta), _) => delta,
        (None, Some(_)) => cfg.delta,
        (None, None) => default_delta(cfg.p),
    };
    cfg.clip_binary |= cli.clip_binary;
    cfg.shared &= !inst.independent;
    if let Some(k) = inst.max_iter {
        cfg.solver.max_iter = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn trial_mode(
    mode: Option<ModeArg>,
    lambda: Option<f64>,
    kappa: Option<f64>,
    fallback: TrialMode,
) -> Result<TrialMode> {
    match mode {
        None => Ok(fallback),
        Some(ModeArg::P1) => Ok(TrialMode::P1),
        Some(ModeArg::P2) => {
            lambda.map(|lambda| TrialMode::P2 { lambda }).ok_or_else(|| bad("--mode p2 needs --lambda"))
        }
        Some(ModeArg::Constrained) => {
            kappa.map(|kappa| TrialMode::Constrained { kappa }).ok_or_else(|| bad("--mode constrained needs --kappa"))
        }
    }
}

/// Left graph and, unless shared, right graph for instance seed `s`, drawn
/// from the substreams a seeded trial uses.
fn graphs(cfg: &TrialConfig, s: u64) -> Result<(BipartiteGraph, Option<BipartiteGraph>)> {
    let g1 = gen_left_regular(cfg.p, cfg.m, cfg.delta, seed::substream(s, 1))?;
    let g2 = if cfg.shared { None } else { Some(gen_left_regular(cfg.p, cfg.m, cfg.delta, seed::substream(s, 2))?) };
    Ok((g1, g2))
}

fn operator(g1: &BipartiteGraph, g2: Option<&BipartiteGraph>, clip: bool) -> SketchOperator {
    match g2 {
        Some(g2) => SketchOperator::from_graphs(g1, g2, clip),
        None => SketchOperator::from_graph(g1, clip),
    }
}

fn gen_graph(cli: &Cli, p: usize, m: usize) -> Result<Status> {
    let delta = cli.delta.unwrap_or_else(|| default_delta(p));
    let g = gen_left_regular(p, m, delta, cli.seed.unwrap_or(0))?;
    write_out(cli, "graph.txt", &g.to_text())?;
    Ok(Status::Done)
}

fn sketch(
    cli: &Cli,
    inst: &InstanceArgs,
    graph: Option<&Path>,
    graph2: Option<&Path>,
    x: Option<&Path>,
) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let (gen1, gen2) = graphs(&cfg, cfg.seed)?;
    let g1 = match graph {
        Some(path) => BipartiteGraph::from_text(&read(path)?)?,
        None => {
            write_out(cli, "graph.txt", &gen1.to_text())?;
            gen1
        }
    };
    let g2 = match (graph2, gen2) {
        (Some(path), _) => Some(BipartiteGraph::from_text(&read(path)?)?),
        (None, Some(g)) if graph.is_none() => {
            write_out(cli, "graph2.txt", &g.to_text())?;
            Some(g)
        }
        _ => None,
    };
    let op = operator(&g1, g2.as_ref(), cfg.clip_binary);
    let x = match x {
        Some(path) => DenseMatrix::read_csv(path)?,
        None => {
            let support = gen_distributed_support(g1.p(), cfg.d, seed::substream(cfg.seed, 3))?;
            let x = gen_distributed_matrix(&support, cfg.values, seed::substream(cfg.seed, 4))?;
            write_out(cli, "support.txt", &support.to_text())?;
            write_out(cli, "x.csv", &x.to_csv())?;
            x
        }
    };
    let y = op.forward(&x)?;
    write_out(cli, "y.csv", &y.to_csv())?;
    Ok(Status::Done)
}

fn recover_file(cli: &Cli, cfg: &TrialConfig, graph: Option<&Path>, graph2: Option<&Path>, y: &Path) -> Result<Status> {
    let g1 = BipartiteGraph::from_text(&read(graph.ok_or_else(|| bad("--sketch needs --graph"))?)?)?;
    let g2 = graph2.map(|path| read(path).and_then(|t| BipartiteGraph::from_text(&t))).transpose()?;
    let op = operator(&g1, g2.as_ref(), cfg.clip_binary);
    let y = DenseMatrix::read_csv(y)?;
    let result = match cfg.mode {
        TrialMode::P1 => solve_p1(&op, &y, &cfg.solver)?,
        TrialMode::P2 { lambda } => solve_p2(&op, &y, lambda, &cfg.solver)?,
        TrialMode::Constrained { kappa } => solve_constrained(&op, &y, kappa, &cfg.solver)?,
    };
    write_out(cli, "x_star.csv", &result.x.to_csv())?;
    write_out(cli, "result.json", &result.to_json())?;
    println!("{}", result.to_json());
    Ok(if result.converged { Status::Done } else { Status::NotConverged })
}

fn recover_trial(cli: &Cli, cfg: &TrialConfig) -> Result<Status> {
    let record = run_trial(cfg)?;
    write_out(cli, "trial.json", &record.to_json())?;
    println!("{}", record.to_json());
    Ok(if record.result.converged { Status::Done } else { Status::NotConverged })
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn expansion(cli: &Cli, inst: &InstanceArgs, eps: f64, samples: usize, allow_large: bool) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let reports = Exec::Parallel.map(samples, |k| {
        let s = seed::trial_seed(cfg.seed, k as u64);
        let (g1, g2) = graphs(&cfg, s)?;
        let tg = match &g2 {
            Some(g2) => TensorGraph::new(&g1, g2)?,
            None => TensorGraph::shared(&g1),
        };
        let omega = gen_distributed_support(cfg.p, cfg.d, seed::substream(s, 3))?;
        check_expansion(&tg, &omega, eps, allow_large)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    println!(
        "{:>6} {:>8} {:>10} {:>5} {:>5} {:>8}  part1 part2 part3",
        "sample", "|N|", "bound", "out", "in", "budget"
    );
    for (k, r) in reports.iter().enumerate() {
        println!(
            "{k:>6} {:>8} {:>10.1} {:>5} {:>5} {:>8.2}  {:>5} {:>5} {:>5}",
            r.neighborhood_size,
            r.bound,
            r.max_collision_outside,
            r.max_collision_inside,
            r.collision_budget,
            mark(r.passed[0]),
            mark(r.passed[1]),
            mark(r.passed[2])
        );
    }
    let all = reports.iter().filter(|r| r.all_passed()).count();
    println!("all parts passed on {all}/{samples}");
    let doc = json!({ "p": cfg.p, "m": cfg.m, "d": cfg.d, "delta": cfg.delta, "eps": eps, "seed": cfg.seed, "reports": reports });
    write_out(cli, "expansion.json", &serde_json::to_string_pretty(&doc)?)?;
    Ok(Status::Done)
}

fn rip(cli: &Cli, inst: &InstanceArgs, eps: f64, samples: usize) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let reports = Exec::Parallel.map(samples, |k| {
        let s = seed::trial_seed(cfg.seed, k as u64);
        let (g1, g2) = graphs(&cfg, s)?;
        let op = operator(&g1, g2.as_ref(), cfg.clip_binary);
        let omega = gen_distributed_support(cfg.p, cfg.d, seed::substream(s, 3))?;
        let x = gen_distributed_matrix(&omega, cfg.values, seed::substream(s, 4))?;
        check_rip1(&op, &x, eps)
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("sample,ratio,lower_ok,upper_ok\n");
    for (k, r) in reports.iter().enumerate() {
        writeln!(csv, "{k},{:.9},{},{}", r.ratio, r.lower_ok, r.upper_ok).expect("string write");
    }
    let upper = reports.iter().filter(|r| r.upper_ok).count();
    let lower = reports.iter().filter(|r| r.lower_ok).count();
    let min = reports.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min);
    println!("{:<12} {:>6} {:>10}", "bound", "status", "holds");
    println!("{:<12} {:>6} {:>10}", "upper", mark(upper == samples), format!("{upper}/{samples}"));
    println!("{:<12} {:>6} {:>10}", "lower", mark(lower == samples), format!("{lower}/{samples}"));
    println!("smallest ratio {min:.4}");
    write_out(cli, "rip.csv", &csv)?;
    Ok(Status::Done)
}

fn nullspace(cli: &Cli, inst: &InstanceArgs, samples: usize, vectors: usize, dense: bool) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let reports = Exec::Parallel.map(samples, |k| {
        let s = seed::trial_seed(cfg.seed, k as u64);
        let (g1, g2) = graphs(&cfg, s)?;
        let op = operator(&g1, g2.as_ref(), cfg.clip_binary);
        let omega = gen_distributed_support(cfg.p, cfg.d, seed::substream(s, 3))?;
        if dense {
            check_nullspace_dense(&op, &omega, vectors, seed::substream(s, 5))
        } else {
            check_nullspace(&op, &omega, vectors, seed::substream(s, 5))
        }
    });
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("sample,max_ratio,samples,max_residual,trivial_kernel\n");
    println!("{:>6} {:>10} {:>12} {:>6}", "sample", "max_ratio", "residual", "status");
    for (k, r) in reports.iter().enumerate() {
        writeln!(csv, "{k},{:.9},{},{:.3e},{}", r.max_ratio, r.samples, r.max_residual, r.trivial_kernel)
            .expect("string write");
        println!("{k:>6} {:>10.4} {:>12.3e} {:>6}", r.max_ratio, r.max_residual, mark(r.max_ratio < 1.0));
    }
    let ok = reports.iter().filter(|r| r.max_ratio < 1.0).count();
    println!("ratio below 1 on {ok}/{samples}");
    write_out(cli, "nullspace.csv", &csv)?;
    Ok(Status::Done)
}

fn phase(
    cli: &Cli,
    trials: usize,
    grid: GridArg,
    p_values: Option<Vec<usize>>,
    m_values: Option<Vec<usize>>,
    d: Option<usize>,
    max_iter: Option<usize>,
) -> Result<Status> {
    let mut settings = PhaseSettings::default();
    let mut master = 0;
    if let Some(path) = &cli.config {
        let cfg = TrialConfig::load(path)?;
        settings.d = cfg.d;
        settings.values = cfg.values;
        settings.success_threshold = cfg.success_threshold;
        settings.clip_binary = cfg.clip_binary;
        settings.solver = cfg.solver;
        master = cfg.seed;
    }
    settings.d = d.unwrap_or(settings.d);
    settings.delta = cli.delta;
    settings.clip_binary |= cli.clip_binary;
    if let Some(k) = max_iter {
        settings.solver.max_iter = k;
    }
    let master = cli.seed.unwrap_or(master);
    let (dp, dm) = match grid {
        GridArg::Full => default_grid(),
        GridArg::Reduced => reduced_grid(),
    };
    let pg =
        phase_diagram(&p_values.unwrap_or(dp), &m_values.unwrap_or(dm), trials, master, &settings, Exec::Parallel)?;
    write_out(cli, "phase.csv", &pg.to_csv())?;
    write_out(cli, "phase.svg", &pg.to_svg())?;
    println!("{:>4} {:>8} {:>10}", "p", "m50", "sqrt(14p)");
    for (p, m50, reference) in pg.boundary() {
        let m50 = m50.map_or_else(|| "none".to_string(), |m| format!("{m:.2}"));
        println!("{p:>4} {m50:>8} {reference:>10.2}");
    }
    Ok(Status::Done)
}

fn cov(
    cli: &Cli,
    p: Option<usize>,
    m: Option<usize>,
    d: Option<usize>,
    n: Option<usize>,
    exact: bool,
    kappa: Option<f64>,
) -> Result<Status> {
    let mut cfg = match &cli.config {
        Some(path) => CovConfig::load(path)?,
        None => CovConfig::default(),
    };
    cfg.p = p.unwrap_or(cfg.p);
    cfg.m = m.unwrap_or(cfg.m);
    cfg.d = d.unwrap_or(cfg.d);
    cfg.n = n.unwrap_or(cfg.n);
    cfg.seed = cli.seed.unwrap_or(cfg.seed);
    cfg.delta = match (cli.delta, &cli.config) {
        (Some(delta), _) => delta,
        (None, Some(_)) => cfg.delta,
        (None, None) => default_delta(cfg.p),
    };
    cfg.clip_binary |= cli.clip_binary;
    if exact {
        cfg.mode = CovMode::Exact;
    }
    if kappa.is_some() {
        cfg.kappa = kappa;
    }
    let report = run_covariance(&cfg, &SolverOptions::default(), Exec::Parallel)?;
    println!("relative l1 error {:.4}", report.rel_l1_error);
    println!("support jaccard   {:.4}", report.jaccard);
    if let Some(k) = report.kappa {
        println!("kappa             {k:.6e}");
    }
    let doc = json!({ "config": cfg, "report": report });
    write_out(cli, "cov.json", &serde_json::to_string_pretty(&doc)?)?;
    write_out(cli, "sigma_hat.csv", &report.result.x.to_csv())?;
    Ok(if report.result.converged { Status::Done } else { Status::NotConverged })
}

fn graph(
    cli: &Cli,
    edges: Option<&Path>,
    partition: Option<&Path>,
    p: usize,
    m: usize,
    max_degree: usize,
) -> Result<Status> {
    let s = cli.seed.unwrap_or(0);
    let pg = match (edges, partition) {
        (Some(e), Some(part)) => PartitionedGraph::from_text(&read(e)?, &read(part)?, None)?,
        (None, None) => {
            let adj = random_bounded_degree_graph(p, max_degree, seed::substream(s, 1))?;
            let parts = gen_left_regular(p, m, cli.delta.unwrap_or_else(|| default_delta(p)), seed::substream(s, 2))?;
            let pg = PartitionedGraph::with_ensemble_parts(adj, &parts)?;
            write_out(cli, "edges.txt", &pg.edges_to_text())?;
            write_out(cli, "partition.txt", &pg.partition_to_text())?;
            pg
        }
        _ => return Err(bad("--edges and --partition must be given together")),
    };
    let y = graph_sketch(&pg)?;
    let u = graph_unsketch(&y, &pg.indicator(), &SolverOptions::default())?;
    let wrong = u.rounded.sub(pg.adjacency()).as_slice().iter().filter(|v| **v != 0.0).count();
    println!("vertices {}, parts {}, wrong entries after rounding {wrong}", pg.p(), pg.m());
    let doc = json!({ "p": pg.p(), "m": pg.m(), "exact": wrong == 0, "wrong_entries": wrong, "result": u.result });
    write_out(cli, "sketch.csv", &y.to_csv())?;
    write_out(cli, "recovered_edges.txt", &edges_to_text(&u.rounded))?;
    write_out(cli, "graph.json", &serde_json::to_string_pretty(&doc)?)?;
    Ok(if u.result.converged { Status::Done } else { Status::NotConverged })
}

fn noise(cli: &Cli, inst: &InstanceArgs, scales: &[f64], trials: usize) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let rows = noise_sweep(&cfg, scales, trials, Exec::Parallel)?;
    println!("{:>8} {:>12} {:>12} {:>8}", "scale", "noise_l1", "error_l1", "ratio");
    for r in &rows {
        println!("{:>8} {:>12.4} {:>12.4} {:>8.3}", r.scale, r.mean_noise_l1, r.mean_error_l1, r.ratio);
    }
    write_out(cli, "noise.csv", &noise_csv(&rows))?;
    Ok(Status::Done)
}

fn arrow(cli: &Cli, inst: &InstanceArgs) -> Result<Status> {
    let cfg = trial_config(cli, inst)?;
    let (g1, g2) = graphs(&cfg, cfg.seed)?;
    let op = operator(&g1, g2.as_ref(), cfg.clip_binary);
    let w = arrow_ambiguity_witness(&op, cfg.p, seed::substream(cfg.seed, 6))?;
    let r = solve_p1(&op, &op.forward(&w.x)?, &cfg.solver)?;
    let err = r.x.max_abs_diff(&w.x);
    let distance = w.x.sub(&w.x_tilde).l1();
    println!("sketch gap {:.3e}, |X - X~|_1 {distance:.4}", w.sketch_gap);
    println!("l1 recovery of X: linf error {err:.3e} ({})", if err > 1e-2 { "fails" } else { "recovers" });
    let doc = json!({
        "p": cfg.p,
        "m": cfg.m,
        "delta": cfg.delta,
        "seed": cfg.seed,
        "sketch_gap": w.sketch_gap,
        "kernel_residual": w.kernel_residual,
        "l1_distance": distance,
        "recovery_linf_error": err,
        "recovery": r,
    });
    write_out(cli, "arrow_x.csv", &w.x.to_csv())?;
    write_out(cli, "arrow_x_tilde.csv", &w.x_tilde.to_csv())?;
    write_out(cli, "arrow.json", &serde_json::to_string_pretty(&doc)?)?;
    Ok(Status::Done)
}
