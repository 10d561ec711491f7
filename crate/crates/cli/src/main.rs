//! `tsketch`: generate instances, sketch, recover and run the empirical
//! verifiers from the command line.
//!
//! Exit status: 0 on success, 1 on a parameter or input error (including an
//! unknown subcommand), 2 when a solver stops without converging.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "tsketch", version, about = "Sparse recovery from tensor-product expander sketches")]
pub struct Cli {
    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// JSON config: a trial config for instance commands, a covariance
    /// config for `cov-sketch`.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Left degree of the sketching graphs (default max(2, ⌈ln p⌉)).
    #[arg(long, global = true)]
    pub delta: Option<usize>,
    /// Clip multi-edges so the sketching matrices are 0/1.
    #[arg(long, global = true)]
    pub clip_binary: bool,
    /// Worker threads (`SKETCH_THREADS` takes precedence).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

/// Size of a random instance; unset fields fall back to the config file,
/// then to p=40, m=21, d=4.
#[derive(Debug, Clone, Default, Args)]
pub struct InstanceArgs {
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    /// Off-diagonal support budget per row and column.
    #[arg(long)]
    pub d: Option<usize>,
    /// Draw an independent right graph instead of `B = A`.
    #[arg(long)]
    pub independent: bool,
    /// Solver iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    P1,
    P2,
    Constrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridArg {
    Full,
    Reduced,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random δ-left-regular bipartite graph to graph.txt.
    GenGraph {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        m: usize,
    },
    /// Sketch a matrix: Y = A X Bᵀ, written to y.csv.
    Sketch {
        #[command(flatten)]
        inst: InstanceArgs,
        /// Left graph file; generated when absent.
        #[arg(long)]
        graph: Option<PathBuf>,
        /// Right graph file; defaults to the left graph.
        #[arg(long)]
        graph2: Option<PathBuf>,
        /// Matrix CSV; a random distributed-sparse matrix when absent.
        #[arg(long)]
        x: Option<PathBuf>,
    },
    /// Recover X from a sketch, or run one seeded trial when no sketch is given.
    Recover {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Penalty for p2.
        #[arg(long)]
        lambda: Option<f64>,
        /// Residual radius for constrained.
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long)]
        graph: Option<PathBuf>,
        #[arg(long)]
        graph2: Option<PathBuf>,
        /// Sketch CSV to recover from.
        #[arg(long)]
        sketch: Option<PathBuf>,
    },
    /// Weak distributed expansion of random (graph, support) pairs.
    CheckExpansion {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Lift the p ≤ 300 guard.
        #[arg(long)]
        allow_large: bool,
    },
    /// ℓ1 isometry ratios on random distributed-sparse matrices.
    CheckRip {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 0.25)]
        eps: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Sampled nullspace ratios on random instances.
    CheckNullspace {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        /// Kernel vectors drawn per instance.
        #[arg(long, default_value_t = 200)]
        vectors: usize,
        /// Use an explicit kernel basis (small p only).
        #[arg(long)]
        dense: bool,
    },
    /// Success-rate grid over (p, m) with phase.csv and phase.svg.
    PhaseDiagram {
        #[arg(long, default_value_t = 40)]
        trials: usize,
        #[arg(long, value_enum, default_value_t = GridArg::Full)]
        grid: GridArg,
        /// Comma-separated p values (overrides --grid).
        #[arg(long, value_delimiter = ',')]
        p_values: Option<Vec<usize>>,
        /// Comma-separated m values (overrides --grid).
        #[arg(long, value_delimiter = ',')]
        m_values: Option<Vec<usize>>,
        #[arg(long)]
        d: Option<usize>,
        #[arg(long)]
        max_iter: Option<usize>,
    },
    /// Plant a sparse covariance, sketch samples, recover it.
    CovSketch {
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        d: Option<usize>,
        /// Number of samples.
        #[arg(long)]
        n: Option<usize>,
        /// Recover from the ideal sketch A Σ Aᵀ instead of samples.
        #[arg(long)]
        exact: bool,
        /// Fixed residual radius (cross-validated when absent).
        #[arg(long)]
        kappa: Option<f64>,
    },
    /// Sketch a partitioned graph and recover its adjacency.
    GraphSketch {
        /// Edge list (`u v`, 1-based); a random bounded-degree graph when absent.
        #[arg(long)]
        edges: Option<PathBuf>,
        /// Partition (`vertex part`, 1-based); random parts when absent.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        p: usize,
        #[arg(long, default_value_t = 21)]
        m: usize,
        /// Off-diagonal degree cap of generated graphs.
        #[arg(long, default_value_t = 3)]
        max_degree: usize,
    },
    /// Recovery error against dense perturbations of growing ℓ1 mass.
    NoiseSweep {
        #[command(flatten)]
        inst: InstanceArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
        scales: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Two arrow matrices with the same sketch, and an ℓ1 recovery attempt.
    ArrowDemo {
        #[command(flatten)]
        inst: InstanceArgs,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    tensor_sketch::exec::init_threads(cli.threads);
    match commands::run(&cli) {
        Ok(commands::Status::Done) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => {
            eprintln!("tsketch: solver did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("tsketch: {e}");
            ExitCode::from(1)
        }
    }
}
