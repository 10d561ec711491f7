//! Experiment drivers: single recovery trials, phase-transition grids and
//! noise sweeps, with CSV/JSON/SVG emitters for their results.

use std::fmt::Write as _;
use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::ensemble::{default_delta, gen_distributed_matrix, gen_distributed_support, gen_left_regular, ValueSpec};
use crate::error::{param, Result};
use crate::exec::Exec;
use crate::matrix::DenseMatrix;
use crate::operator::SketchOperator;
use crate::seed;
use crate::solver::{solve_constrained, solve_p1, solve_p2, RecoveryResult, SolverOptions};

pub const DEFAULT_SUCCESS_THRESHOLD: f64 = 1e-4;
/// Iteration cap used inside phase diagrams.
pub const PHASE_MAX_ITER: usize = 5000;
/// Constant of the reference boundary `p = m² / 14`.
pub const BOUNDARY_CONSTANT: f64 = 14.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TrialMode {
    P1,
    P2 { lambda: f64 },
    Constrained { kappa: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrialConfig {
    pub p: usize,
    pub m: usize,
    pub d: usize,
    pub delta: usize,
    pub seed: u64,
    pub mode: TrialMode,
    pub values: ValueSpec,
    /// Largest `‖X* − X‖∞` counted as exact recovery.
    pub success_threshold: f64,
    /// One graph for both sides (`Y = A X Aᵀ`) or two independent ones.
    pub shared: bool,
    pub clip_binary: bool,
    pub solver: SolverOptions,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            p: 40,
            m: 21,
            d: 4,
            delta: 4,
            seed: 0,
            mode: TrialMode::P1,
            values: ValueSpec::default(),
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            shared: true,
            clip_binary: false,
            solver: SolverOptions::default(),
        }
    }
}

impl TrialConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.m == 0 || self.d == 0 || self.delta == 0 {
            return Err(param("p, m, d and delta must be positive"));
        }
        if self.d > self.p {
            return Err(param(format!("d={} exceeds p={}", self.d, self.p)));
        }
        if !(self.success_threshold > 0.0) {
            return Err(param("success threshold must be positive"));
        }
        self.values.validate()?;
        self.solver.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Everything a trial produces, ready for `trial.json`.
#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub p: usize,
    pub m: usize,
    pub d: usize,
    pub delta: usize,
    pub seed: u64,
    pub linf_error: f64,
    pub l1_error: f64,
    pub truth_l1: f64,
    pub success: bool,
    pub result: RecoveryResult,
    pub diagnostic: Option<String>,
}

impl TrialRecord {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain struct")
    }
}

/// Operator, planted matrix and its sketch for one seeded trial.
pub fn trial_instance(cfg: &TrialConfig) -> Result<(SketchOperator, DenseMatrix, DenseMatrix)> {
    cfg.validate()?;
    let g1 = gen_left_regular(cfg.p, cfg.m, cfg.delta, seed::substream(cfg.seed, 1))?;
    let op = if cfg.shared {
        SketchOperator::from_graph(&g1, cfg.clip_binary)
    } else {
        let g2 = gen_left_regular(cfg.p, cfg.m, cfg.delta, seed::substream(cfg.seed, 2))?;
        SketchOperator::from_graphs(&g1, &g2, cfg.clip_binary)
    };
    let support = gen_distributed_support(cfg.p, cfg.d, seed::substream(cfg.seed, 3))?;
    let x = gen_distributed_matrix(&support, cfg.values, seed::substream(cfg.seed, 4))?;
    let y = op.forward(&x)?;
    Ok((op, x, y))
}

fn recover(op: &SketchOperator, y: &DenseMatrix, mode: TrialMode, opts: &SolverOptions) -> Result<RecoveryResult> {
    match mode {
        TrialMode::P1 => solve_p1(op, y, opts),
        TrialMode::P2 { lambda } => solve_p2(op, y, lambda, opts),
        TrialMode::Constrained { kappa } => solve_constrained(op, y, kappa, opts),
    }
}

/// Generate, sketch, recover, score. Deterministic in `cfg.seed`.
pub fn run_trial(cfg: &TrialConfig) -> Result<TrialRecord> {
    let (op, x, y) = trial_instance(cfg)?;
    let result = recover(&op, &y, cfg.mode, &cfg.solver)?;
    let diff = result.x.sub(&x);
    let linf_error = diff.linf();
    let diagnostic = (!result.converged).then(|| {
        format!(
            "solver stopped after {} iterations without converging (residual {:.3e})",
            result.iterations, result.feas_residual
        )
    });
    Ok(TrialRecord {
        p: cfg.p,
        m: cfg.m,
        d: cfg.d,
        delta: cfg.delta,
        seed: cfg.seed,
        linf_error,
        l1_error: diff.l1(),
        truth_l1: x.l1(),
        success: linf_error <= cfg.success_threshold,
        result,
        diagnostic,
    })
}

/// Success fractions over a `(p, m)` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub p_values: Vec<usize>,
    pub m_values: Vec<usize>,
    /// `success_rate[ip][im]` for `p_values[ip]`, `m_values[im]`.
    pub success_rate: Vec<Vec<f64>>,
    pub trials_per_cell: usize,
}

/// Settings shared by every cell of a phase diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSettings {
    pub d: usize,
    /// Left degree; `None` picks [`default_delta`] per `p`.
    pub delta: Option<usize>,
    pub values: ValueSpec,
    pub clip_binary: bool,
    pub success_threshold: f64,
    pub solver: SolverOptions,
}

impl Default for PhaseSettings {
    fn default() -> Self {
        Self {
            d: 4,
            delta: None,
            values: ValueSpec::default(),
            clip_binary: false,
            success_threshold: DEFAULT_SUCCESS_THRESHOLD,
            solver: SolverOptions { max_iter: PHASE_MAX_ITER, ..SolverOptions::default() },
        }
    }
}

fn ascending(v: &[usize]) -> bool {
    v.windows(2).all(|w| w[0] < w[1])
}

/// The full grid: `p ∈ {10, 12, …, 60}`, `m ∈ {2, 4, …, 60}`.
pub fn default_grid() -> (Vec<usize>, Vec<usize>) {
    ((10..=60).step_by(2).collect(), (2..=60).step_by(2).collect())
}

/// The CI grid: `p ∈ {10, 20, …, 60}`, `m ∈ {2, 12, …, 52}`.
pub fn reduced_grid() -> (Vec<usize>, Vec<usize>) {
    ((10..=60).step_by(10).collect(), (2..=60).step_by(10).collect())
}

/// Run `trials` seeded trials in every cell. Trial seeds are
/// [`seed::cell_seed`]`(master, p, m, t)`, so any sub-grid reproduces the
/// same cells. Every `p` must be at least `settings.d`.
pub fn phase_diagram(
    p_values: &[usize],
    m_values: &[usize],
    trials: usize,
    master_seed: u64,
    settings: &PhaseSettings,
    exec: Exec,
) -> Result<PhaseGrid> {
    if p_values.is_empty() || m_values.is_empty() || !ascending(p_values) || !ascending(m_values) {
        return Err(param("p and m lists must be non-empty and strictly ascending"));
    }
    if trials == 0 {
        return Err(param("need at least one trial per cell"));
    }
    if p_values[0] < settings.d {
        return Err(param(format!("smallest p={} below d={}", p_values[0], settings.d)));
    }
    let jobs: Vec<(usize, usize, usize)> = (0..p_values.len())
        .flat_map(|ip| (0..m_values.len()).flat_map(move |im| (0..trials).map(move |t| (ip, im, t))))
        .collect();
    let outcomes = exec.map_items(&jobs, |&(ip, im, t)| -> Result<bool> {
        let (p, m) = (p_values[ip], m_values[im]);
        let cfg = TrialConfig {
            p,
            m,
            d: settings.d,
            delta: settings.delta.unwrap_or_else(|| default_delta(p)),
            seed: seed::cell_seed(master_seed, p, m, t),
            mode: TrialMode::P1,
            values: settings.values,
            success_threshold: settings.success_threshold,
            shared: true,
            clip_binary: settings.clip_binary,
            solver: settings.solver.clone(),
        };
        Ok(run_trial(&cfg)?.success)
    });
    let mut counts = vec![vec![0usize; m_values.len()]; p_values.len()];
    for (&(ip, im, _), ok) in jobs.iter().zip(outcomes) {
        if ok? {
            counts[ip][im] += 1;
        }
    }
    let success_rate =
        counts.into_iter().map(|row| row.into_iter().map(|c| c as f64 / trials as f64).collect()).collect();
    Ok(PhaseGrid { p_values: p_values.to_vec(), m_values: m_values.to_vec(), success_rate, trials_per_cell: trials })
}

impl PhaseGrid {
    pub fn validate(&self) -> Result<()> {
        if self.success_rate.len() != self.p_values.len()
            || self.success_rate.iter().any(|r| r.len() != self.m_values.len())
        {
            return Err(param("success-rate matrix does not match the value lists"));
        }
        if self.success_rate.iter().flatten().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(param("success rates must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn rate(&self, p: usize, m: usize) -> Option<f64> {
        let ip = self.p_values.iter().position(|&v| v == p)?;
        let im = self.m_values.iter().position(|&v| v == m)?;
        Some(self.success_rate[ip][im])
    }

    /// `p,m,rate` rows, `p` major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,m,rate\n");
        for (ip, &p) in self.p_values.iter().enumerate() {
            for (im, &m) in self.m_values.iter().enumerate() {
                writeln!(out, "{p},{m},{:.6}", self.success_rate[ip][im]).expect("string write");
            }
        }
        out
    }

    /// Parse the output of [`PhaseGrid::to_csv`]; `trials_per_cell` is not
    /// stored in the CSV and must be supplied.
    pub fn from_csv(text: &str, trials_per_cell: usize) -> Result<Self> {
        let mut rows: Vec<(usize, usize, f64)> = Vec::new();
        for (ln, line) in text.lines().enumerate().skip(1) {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || crate::error::Error::Parse { line: ln + 1, msg: format!("expected p,m,rate, got {line:?}") };
            if f.len() != 3 {
                return Err(bad());
            }
            rows.push((
                f[0].trim().parse().map_err(|_| bad())?,
                f[1].trim().parse().map_err(|_| bad())?,
                f[2].trim().parse().map_err(|_| bad())?,
            ));
        }
        let mut p_values: Vec<usize> = rows.iter().map(|r| r.0).collect();
        let mut m_values: Vec<usize> = rows.iter().map(|r| r.1).collect();
        p_values.sort_unstable();
        p_values.dedup();
        m_values.sort_unstable();
        m_values.dedup();
        let mut success_rate = vec![vec![f64::NAN; m_values.len()]; p_values.len()];
        for (p, m, r) in rows {
            let ip = p_values.binary_search(&p).expect("collected");
            let im = m_values.binary_search(&m).expect("collected");
            success_rate[ip][im] = r;
        }
        let grid = Self { p_values, m_values, success_rate, trials_per_cell };
        grid.validate()?;
        Ok(grid)
    }

    /// Empirical 50% boundary for row `ip`: the first `m` where the rate
    /// reaches 0.5, linearly interpolated against the previous grid point.
    /// `None` if the rate never reaches 0.5.
    pub fn m50(&self, ip: usize) -> Option<f64> {
        let row = &self.success_rate[ip];
        let k = row.iter().position(|&r| r >= 0.5)?;
        if k == 0 {
            return Some(self.m_values[0] as f64);
        }
        let (m0, m1) = (self.m_values[k - 1] as f64, self.m_values[k] as f64);
        let (r0, r1) = (row[k - 1], row[k]);
        Some(m0 + (0.5 - r0) / (r1 - r0) * (m1 - m0))
    }

    /// `(p, m₅₀(p), √(14p))` for every row.
    pub fn boundary(&self) -> Vec<(usize, Option<f64>, f64)> {
        (0..self.p_values.len())
            .map(|ip| {
                let p = self.p_values[ip];
                (p, self.m50(ip), (BOUNDARY_CONSTANT * p as f64).sqrt())
            })
            .collect()
    }

    /// Whether `√(14p)/factor ≤ m₅₀(p) ≤ factor·√(14p)` for every `p`.
    pub fn boundary_within(&self, factor: f64) -> bool {
        self.boundary().iter().all(|&(_, m50, reference)| match m50 {
            Some(m) => m >= reference / factor && m <= reference * factor,
            None => false,
        })
    }

    /// Largest drop along `m` of the 3-cell moving average of each row.
    pub fn max_smoothed_decrease(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for row in &self.success_rate {
            let smooth: Vec<f64> = (0..row.len())
                .map(|k| {
                    let lo = k.saturating_sub(1);
                    let hi = (k + 1).min(row.len() - 1);
                    row[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
                })
                .collect();
            for w in smooth.windows(2) {
                worst = worst.max(w[0] - w[1]);
            }
        }
        worst
    }

    /// Rect-per-cell heatmap (`m` across, `p` upwards; black = always fails,
    /// white = always succeeds) with the curve `p = m²/14` drawn on top.
    pub fn to_svg(&self) -> String {
        const CELL: usize = 12;
        const LEFT: usize = 40;
        const TOP: usize = 20;
        const BOTTOM: usize = 36;
        const RIGHT: usize = 20;
        let (nm, np) = (self.m_values.len(), self.p_values.len());
        let width = LEFT + nm * CELL + RIGHT;
        let height = TOP + np * CELL + BOTTOM;
        let mut s = String::new();
        writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#).unwrap();
        writeln!(s, r#"<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>"#).unwrap();
        for (ip, row) in self.success_rate.iter().enumerate() {
            let y = TOP + (np - 1 - ip) * CELL;
            for (im, &rate) in row.iter().enumerate() {
                let x = LEFT + im * CELL;
                let g = (rate.clamp(0.0, 1.0) * 255.0).round() as u8;
                writeln!(
                    s,
                    r##"<rect x="{x}" y="{y}" width="{CELL}" height="{CELL}" fill="#{g:02x}{g:02x}{g:02x}"/>"##
                )
                .unwrap();
            }
        }
        // cell centres: column im at LEFT + (im + 0.5)·CELL, row ip likewise
        let col = |m: f64| -> f64 { interp_index(&self.m_values, m) };
        let row = |p: f64| -> f64 { interp_index(&self.p_values, p) };
        let (m_lo, m_hi) = (self.m_values[0] as f64, self.m_values[nm - 1] as f64);
        let (p_lo, p_hi) = (self.p_values[0] as f64, self.p_values[np - 1] as f64);
        let mut pts = Vec::new();
        let steps = 200;
        for k in 0..=steps {
            let m = m_lo + (m_hi - m_lo) * k as f64 / steps as f64;
            let p = m * m / BOUNDARY_CONSTANT;
            if p < p_lo || p > p_hi {
                continue;
            }
            let x = LEFT as f64 + (col(m) + 0.5) * CELL as f64;
            let y = TOP as f64 + (np as f64 - 1.0 - row(p) + 0.5) * CELL as f64;
            pts.push(format!("{x:.2},{y:.2}"));
        }
        if pts.len() >= 2 {
            writeln!(s, r#"<polyline points="{}" fill="none" stroke="red" stroke-width="2"/>"#, pts.join(" ")).unwrap();
        }
        let axis_y = TOP + np * CELL;
        for (im, m) in self.m_values.iter().enumerate() {
            if im % 5 == 0 || im + 1 == nm {
                let x = LEFT + im * CELL + CELL / 2;
                writeln!(s, r#"<text x="{x}" y="{}" font-size="9" text-anchor="middle">{m}</text>"#, axis_y + 12)
                    .unwrap();
            }
        }
        for (ip, p) in self.p_values.iter().enumerate() {
            if ip % 5 == 0 || ip + 1 == np {
                let y = TOP + (np - 1 - ip) * CELL + CELL / 2 + 3;
                writeln!(s, r#"<text x="{}" y="{y}" font-size="9" text-anchor="end">{p}</text>"#, LEFT - 4).unwrap();
            }
        }
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" text-anchor="middle">m</text>"#,
            LEFT + nm * CELL / 2,
            axis_y + 28
        )
        .unwrap();
        writeln!(s, r#"<text x="12" y="{}" font-size="11" text-anchor="middle">p</text>"#, TOP + np * CELL / 2)
            .unwrap();
        s.push_str("</svg>\n");
        s
    }
}

/// Fractional position of `v` in an ascending list, linear between entries.
fn interp_index(values: &[usize], v: f64) -> f64 {
    let k = values.iter().position(|&x| x as f64 >= v).unwrap_or(values.len() - 1);
    if k == 0 {
        return 0.0;
    }
    let (a, b) = (values[k - 1] as f64, values[k] as f64);
    (k - 1) as f64 + ((v - a) / (b - a)).clamp(0.0, 1.0)
}

/// Mean errors at one noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseRow {
    /// Target `‖N‖₁`.
    pub scale: f64,
    pub mean_noise_l1: f64,
    /// Mean of `‖X* − X‖₁`.
    pub mean_error_l1: f64,
    /// `mean_error_l1 / mean_noise_l1` (0 when there is no noise).
    pub ratio: f64,
}

/// Dense Gaussian matrix rescaled to `‖N‖₁ = scale`.
pub fn dense_noise(p: usize, scale: f64, seed: u64) -> DenseMatrix {
    if scale == 0.0 {
        return DenseMatrix::zeros(p, p);
    }
    let mut rng = seed::rng(seed);
    let n = DenseMatrix::from_fn(p, p, |_, _| StandardNormal.sample(&mut rng));
    n.scaled(scale / n.l1())
}

/// For each scale, `trials` seeded instances: sketch `X + N`, recover with
/// the configured mode, and average `‖X* − X‖₁`. Trial `t` reuses the same
/// planted instance at every scale, so only the noise level changes.
pub fn noise_sweep(cfg: &TrialConfig, scales: &[f64], trials: usize, exec: Exec) -> Result<Vec<NoiseRow>> {
    cfg.validate()?;
    if scales.is_empty() || scales.iter().any(|s| !(*s >= 0.0)) || scales.windows(2).any(|w| w[0] >= w[1]) {
        return Err(param("noise scales must be non-negative and strictly ascending"));
    }
    if trials == 0 {
        return Err(param("need at least one trial per scale"));
    }
    let jobs: Vec<(usize, usize)> = (0..scales.len()).flat_map(|k| (0..trials).map(move |t| (k, t))).collect();
    let errs = exec.map_items(&jobs, |&(k, t)| -> Result<(f64, f64)> {
        let tcfg = TrialConfig { seed: seed::trial_seed(cfg.seed, t as u64), ..cfg.clone() };
        let (op, x, _) = trial_instance(&tcfg)?;
        let n = dense_noise(cfg.p, scales[k], seed::substream(tcfg.seed, 5));
        let y = op.forward(&x.add(&n))?;
        let r = recover(&op, &y, cfg.mode, &cfg.solver)?;
        Ok((n.l1(), r.x.sub(&x).l1()))
    });
    let mut sums = vec![(0.0, 0.0); scales.len()];
    for (&(k, _), e) in jobs.iter().zip(errs) {
        let (nl, el) = e?;
        sums[k].0 += nl / trials as f64;
        sums[k].1 += el / trials as f64;
    }
    Ok(scales
        .iter()
        .zip(sums)
        .map(|(&scale, (mean_noise_l1, mean_error_l1))| NoiseRow {
            scale,
            mean_noise_l1,
            mean_error_l1,
            ratio: if mean_noise_l1 > 0.0 { mean_error_l1 / mean_noise_l1 } else { 0.0 },
        })
        .collect())
}

/// `scale,noise_l1,error_l1,ratio` rows.
pub fn noise_csv(rows: &[NoiseRow]) -> String {
    let mut out = String::from("scale,noise_l1,error_l1,ratio\n");
    for r in rows {
        writeln!(out, "{},{:.9e},{:.9e},{:.9e}", r.scale, r.mean_noise_l1, r.mean_error_l1, r.ratio)
            .expect("string write");
    }
    out
}
