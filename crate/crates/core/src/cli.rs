//! Command implementations behind the `proxflow` binary: JSON run configs,
//! trajectory/summary CSV persistence, run manifests, and parameter sweeps.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::Arc;

use crate::analysis::{
    self, CritReport, DecreaseReport, LyapunovSeries, RateFit,
};
use crate::dynamics::{check_condition, ConditionReport, DynParams};
use crate::integrate::{
    detect_oscillation, integrate, OscillationReport, SolverConfig, Termination, Trajectory,
};
use crate::problem::{BlockProblem, LipschitzSpec};
use crate::proxlib::{prox_oracle, ProxHandle};
use crate::{Error, Result};

/// Grid resolution of the prox oracle used by `cmd_proxtest`.
const ORACLE_GRID: f64 = 1e-4;

// ---------------------------------------------------------------------------
// Configuration schema
// ---------------------------------------------------------------------------

/// Top-level JSON run configuration. Exactly one of `preset` / `problem`
/// selects the objective; `params` carries the system parameters in either
/// the `(gamma1, gamma2)` or the `(c1, c2)` parameterization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub problem: Option<ProblemConfig>,
    pub params: ParamsConfig,
    pub initial: InitialPoint,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.preset, &self.problem) {
            (Some(_), Some(_)) => {
                Err(Error::argument("provide either a preset or an inline problem, not both"))
            }
            (None, None) => Err(Error::argument("no problem selected: set preset or problem")),
            _ => Ok(()),
        }
    }

    pub fn build_problem(&self) -> Result<BlockProblem> {
        self.validate()?;
        if let Some(name) = &self.preset {
            BlockProblem::preset(name)
        } else {
            self.problem.as_ref().unwrap().build()
        }
    }
}

fn one() -> f64 {
    1.0
}

/// System parameters: `lambda`, `mu`, and exactly one of the pairs
/// `(gamma1, gamma2)` or `(c1, c2)` (with `c_i = gamma_i * L`). `l` falls
/// back to the problem's Lipschitz constant when omitted.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsConfig {
    #[serde(default)]
    pub lambda: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

impl ParamsConfig {
    pub fn resolve(&self, problem: &BlockProblem) -> Result<DynParams> {
        let l = self.l.unwrap_or_else(|| problem.lipschitz());
        match (self.gamma1, self.gamma2, self.c1, self.c2) {
            (Some(g1), Some(g2), None, None) => DynParams::new(self.lambda, self.mu, g1, g2, l),
            (None, None, Some(c1), Some(c2)) => DynParams::from_c(self.lambda, self.mu, c1, c2, l),
            _ => Err(Error::argument(
                "provide exactly one of (gamma1, gamma2) or (c1, c2)",
            )),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// Which analyses run after integration, with their tolerances.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub monitor: bool,
    pub rate_fit: bool,
    pub oscillation: bool,
    pub tail_fraction: f64,
    pub oscillation_window: f64,
    pub oscillation_tol: f64,
    pub monitor_tol: f64,
    pub crit_probe: f64,
    pub crit_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            monitor: true,
            rate_fit: true,
            oscillation: true,
            tail_fraction: 0.5,
            oscillation_window: 20.0,
            oscillation_tol: 1e-3,
            monitor_tol: 1e-6,
            crit_probe: 1e-3,
            crit_tol: 1e-6,
        }
    }
}

/// Inline problem definition: built-in nonsmooth terms per block plus a
/// coupling from a small closed family.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub name: String,
    pub dims: (usize, usize),
    pub f: TermConfig,
    pub g: TermConfig,
    pub h: CouplingConfig,
    /// Declared Lipschitz constant of grad H; derived from the coupling when
    /// omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<f64>,
}

/// A nonsmooth term with a known closed-form prox.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TermConfig {
    Abs,
    L1,
    Huber { delta: f64 },
    Quadratic { weight: f64 },
    Box { lo: f64, hi: f64 },
    Zero,
}

impl TermConfig {
    pub fn handle(&self) -> ProxHandle {
        match *self {
            TermConfig::Abs => ProxHandle::Abs,
            TermConfig::L1 => ProxHandle::L1,
            TermConfig::Huber { delta } => ProxHandle::Huber { delta },
            TermConfig::Quadratic { weight } => ProxHandle::Quadratic { weight },
            TermConfig::Box { lo, hi } => ProxHandle::BoxIndicator { lo, hi },
            TermConfig::Zero => ProxHandle::Zero,
        }
    }
}

/// Smooth couplings expressible in the JSON schema.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CouplingConfig {
    /// `H(x, y) = scale * (offset - sum(x) - sum(y))^2`.
    ScaledResidual { scale: f64, offset: f64 },
    /// `H = 0`.
    Zero,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<BlockProblem> {
        let (n, m) = self.dims;
        let fh = self.f.handle();
        let gh = self.g.handle();
        let f_value = value_fn(fh.clone());
        let g_value = value_fn(gh.clone());
        let (h_value, h_grad_x, h_grad_y, derived_l): (
            crate::problem::CoupleFn,
            crate::problem::GradFn,
            crate::problem::GradFn,
            f64,
        ) = match self.h {
            CouplingConfig::ScaledResidual { scale, offset } => {
                let residual =
                    move |x: &[f64], y: &[f64]| offset - x.iter().sum::<f64>() - y.iter().sum::<f64>();
                (
                    Arc::new(move |x: &[f64], y: &[f64]| {
                        let r = residual(x, y);
                        scale * r * r
                    }),
                    Arc::new(move |x: &[f64], y: &[f64]| vec![-2.0 * scale * residual(x, y); x.len()]),
                    Arc::new(move |x: &[f64], y: &[f64]| vec![-2.0 * scale * residual(x, y); y.len()]),
                    // Hessian is 2 * scale * ones(n + m), spectral norm 2|scale|(n + m)
                    2.0 * scale.abs() * (n + m) as f64,
                )
            }
            CouplingConfig::Zero => (
                Arc::new(|_: &[f64], _: &[f64]| 0.0),
                Arc::new(|x: &[f64], _: &[f64]| vec![0.0; x.len()]),
                Arc::new(|_: &[f64], y: &[f64]| vec![0.0; y.len()]),
                0.0,
            ),
        };
        let l = match self.l {
            Some(l) => l,
            None if derived_l > 0.0 => derived_l,
            None => {
                return Err(Error::argument(
                    "the zero coupling has no intrinsic L; declare `l` explicitly",
                ))
            }
        };
        BlockProblem::new(
            self.name.clone(),
            self.dims,
            f_value,
            fh,
            g_value,
            gh,
            h_value,
            h_grad_x,
            h_grad_y,
            LipschitzSpec::Constant(l),
        )
    }
}

fn value_fn(handle: ProxHandle) -> crate::problem::ValueFn {
    Arc::new(move |v: &[f64]| handle.value(v).expect("builtin terms have known values"))
}

/// Sweep axis: a lambda grid or a grid of `(c1, c2)` pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "axis", rename_all = "lowercase", deny_unknown_fields)]
pub enum SweepConfig {
    Lambda { values: Vec<f64> },
    C { values: Vec<(f64, f64)> },
}

impl SweepConfig {
    pub fn len(&self) -> usize {
        match self {
            SweepConfig::Lambda { values } => values.len(),
            SweepConfig::C { values } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The run configuration at grid index `i` and the axis label/value
    /// written into the summary row.
    fn instantiate(&self, base: &RunConfig, i: usize) -> RunConfig {
        let mut cfg = base.clone();
        cfg.sweep = None;
        match self {
            SweepConfig::Lambda { values } => cfg.params.lambda = values[i],
            SweepConfig::C { values } => {
                let (c1, c2) = values[i];
                cfg.params.c1 = Some(c1);
                cfg.params.c2 = Some(c2);
                cfg.params.gamma1 = None;
                cfg.params.gamma2 = None;
            }
        }
        cfg
    }
}

/// Parses a grid specification: either a comma list `a,b,c` or an inclusive
/// range `start:step:end`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>> {
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::argument(format!("invalid number '{s}' in grid")))
    };
    if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::argument(format!("range grid must be start:step:end, got '{text}'")));
        }
        let (start, step, end) = (parse(parts[0])?, parse(parts[1])?, parse(parts[2])?);
        if !(step > 0.0) || end < start {
            return Err(Error::argument(format!("degenerate range grid '{text}'")));
        }
        let count = ((end - start) / step + 0.5).floor() as usize;
        let mut values: Vec<f64> = (0..=count).map(|i| start + i as f64 * step).collect();
        // snap a near-exact endpoint onto it
        if let Some(last) = values.last_mut() {
            if (*last - end).abs() < 1e-9 {
                *last = end;
            }
        }
        Ok(values)
    } else {
        text.split(',').map(parse).collect()
    }
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct TerminalState {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

/// The JSON manifest written for every run, successful or not.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub condition: ConditionReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terminal: Option<TerminalState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub criticality: Option<CritReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decrease: Option<DecreaseReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oscillation: Option<OscillationReport>,
    /// SHA-256 of every emitted CSV, keyed by file name.
    pub checksums: BTreeMap<String, String>,
    pub duration_seconds: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").unwrap();
    }
    out
}

/// One number, 17 significant digits, round-trippable.
fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// Trajectory CSV
// ---------------------------------------------------------------------------

pub fn trajectory_csv(traj: &Trajectory, dims: (usize, usize)) -> String {
    let (n, m) = dims;
    let mut out = String::new();
    out.push('t');
    for i in 1..=n {
        write!(out, ",x_{i}").unwrap();
    }
    for j in 1..=m {
        write!(out, ",y_{j}").unwrap();
    }
    for i in 1..=n {
        write!(out, ",xdot_{i}").unwrap();
    }
    for j in 1..=m {
        write!(out, ",ydot_{j}").unwrap();
    }
    out.push_str(",psi,lyap\n");
    for k in 0..traj.len() {
        out.push_str(&fmt_num(traj.times[k]));
        let (x, y) = &traj.states[k];
        let (u, v) = &traj.derivs[k];
        for col in [&x[..], &y[..], &u[..], &v[..]] {
            for &value in col {
                out.push(',');
                out.push_str(&fmt_num(value));
            }
        }
        out.push(',');
        out.push_str(&fmt_num(traj.psi[k]));
        out.push(',');
        out.push_str(&fmt_num(traj.lyap[k]));
        out.push('\n');
    }
    out
}

/// Reads a trajectory CSV written by `trajectory_csv` back into a
/// `Trajectory` (termination is not stored in the CSV and is set to
/// time-limit).
pub fn parse_trajectory_csv(text: &str) -> Result<(Trajectory, (usize, usize))> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::argument("empty trajectory CSV"))?;
    let cols: Vec<&str> = header.split(',').collect();
    let n = cols.iter().filter(|c| c.starts_with("x_")).count();
    let m = cols.iter().filter(|c| c.starts_with("y_")).count();
    let expected = 1 + 2 * (n + m) + 2;
    if n == 0 || m == 0 || cols.len() != expected {
        return Err(Error::argument(format!("unrecognized trajectory CSV header '{header}'")));
    }
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        derivs: Vec::new(),
        psi: Vec::new(),
        lyap: Vec::new(),
        terminated: Termination::TimeLimit,
    };
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::argument(format!("bad number '{s}' on data row {lineno}")))
            })
            .collect::<Result<_>>()?;
        if fields.len() != expected {
            return Err(Error::argument(format!(
                "row {lineno} has {} fields, expected {expected}",
                fields.len()
            )));
        }
        let mut it = fields.into_iter();
        traj.times.push(it.next().unwrap());
        let x: Vec<f64> = (&mut it).take(n).collect();
        let y: Vec<f64> = (&mut it).take(m).collect();
        let u: Vec<f64> = (&mut it).take(n).collect();
        let v: Vec<f64> = (&mut it).take(m).collect();
        traj.states.push((x, y));
        traj.derivs.push((u, v));
        traj.psi.push(it.next().unwrap());
        traj.lyap.push(it.next().unwrap());
    }
    if traj.is_empty() {
        return Err(Error::argument("trajectory CSV has no data rows"));
    }
    Ok((traj, (n, m)))
}

// ---------------------------------------------------------------------------
// run
// ---------------------------------------------------------------------------

/// Integrates, analyzes, and writes `trajectory.csv` + `manifest.json` into
/// `out_dir`. Returns the manifest and the process exit code (0 success,
/// 2 numerical failure).
pub fn cmd_run(config: &RunConfig, out_dir: &Path, emit_plot_script: bool) -> Result<(RunManifest, i32)> {
    let started = Instant::now();
    let problem = config.build_problem()?;
    let params = config.params.resolve(&problem)?;
    if config.initial.x.len() != problem.dims.0 || config.initial.y.len() != problem.dims.1 {
        return Err(Error::argument(format!(
            "initial point dimensions ({}, {}) do not match problem {:?}",
            config.initial.x.len(),
            config.initial.y.len(),
            problem.dims
        )));
    }
    let condition = check_condition(&params)?;
    std::fs::create_dir_all(out_dir)?;

    let mut manifest = RunManifest {
        config: config.clone(),
        condition,
        terminal: None,
        termination: None,
        criticality: None,
        decrease: None,
        rate: None,
        rate_error: None,
        oscillation: None,
        checksums: BTreeMap::new(),
        duration_seconds: 0.0,
        error: None,
    };

    let traj = match integrate(&problem, &params, &config.initial.x, &config.initial.y, &config.solver)
    {
        Ok(t) => t,
        Err(e) => {
            manifest.error = Some(e.to_string());
            manifest.duration_seconds = started.elapsed().as_secs_f64();
            write_manifest(&manifest, out_dir)?;
            return Ok((manifest, 2));
        }
    };

    let csv = trajectory_csv(&traj, problem.dims);
    std::fs::write(out_dir.join("trajectory.csv"), &csv)?;
    manifest
        .checksums
        .insert("trajectory.csv".into(), sha256_hex(csv.as_bytes()));

    let (tx, ty) = traj.terminal_state();
    manifest.terminal = Some(TerminalState { x: tx.to_vec(), y: ty.to_vec() });
    let mut termination = traj.terminated.clone();

    let an = &config.analysis;
    manifest.criticality =
        Some(analysis::verify_critical(&problem, (tx, ty), an.crit_probe, an.crit_tol)?);

    let series = analysis::lyapunov_series(&traj, &problem, &params)?;
    if an.monitor {
        manifest.decrease = Some(analysis::monitor_decrease(&series, &params, an.monitor_tol)?);
    }
    if an.oscillation {
        let report = detect_oscillation(
            &traj,
            an.oscillation_window,
            an.oscillation_tol,
            config.solver.stationary_tol,
        );
        if report.oscillating && termination == Termination::TimeLimit {
            termination = Termination::Oscillation;
        }
        manifest.oscillation = Some(report);
    }
    if an.rate_fit {
        let limit = *series.values.last().unwrap();
        match analysis::fit_rate(&series, limit, an.tail_fraction) {
            Ok(fit) => manifest.rate = Some(fit),
            Err(e) => manifest.rate_error = Some(e.to_string()),
        }
    }

    if let Termination::Error(detail) = &termination {
        manifest.error = Some(detail.clone());
    }
    manifest.termination = Some(termination.clone());
    manifest.duration_seconds = started.elapsed().as_secs_f64();
    write_manifest(&manifest, out_dir)?;
    if emit_plot_script {
        std::fs::write(out_dir.join("plot.py"), PLOT_SCRIPT)?;
    }
    let exit = if matches!(termination, Termination::Error(_)) { 2 } else { 0 };
    Ok((manifest, exit))
}

fn write_manifest(manifest: &RunManifest, out_dir: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)?;
    std::fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Plot the trajectory.csv next to this script."""
import csv
import os
import sys

import matplotlib.pyplot as plt

path = os.path.join(os.path.dirname(os.path.abspath(__file__)), "trajectory.csv")
with open(path, newline="") as fh:
    rows = list(csv.DictReader(fh))
if not rows:
    sys.exit("no data in " + path)

t = [float(r["t"]) for r in rows]
fig, (ax1, ax2) = plt.subplots(2, 1, sharex=True, figsize=(8, 6))
for col in rows[0]:
    if col.startswith(("x_", "y_")):
        ax1.plot(t, [float(r[col]) for r in rows], label=col)
ax1.set_ylabel("state")
ax1.legend(loc="best")
ax2.plot(t, [float(r["psi"]) for r in rows], label="psi")
ax2.plot(t, [float(r["lyap"]) for r in rows], label="lyap")
ax2.set_xlabel("t")
ax2.set_ylabel("objective / energy")
ax2.legend(loc="best")
fig.tight_layout()
out = os.path.join(os.path.dirname(path), "trajectory.png")
fig.savefig(out, dpi=150)
print("wrote", out)
"#;

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug)]
pub struct SweepOutcome {
    pub rows: Vec<SweepRow>,
    pub csv_path: PathBuf,
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub index: usize,
    pub lambda: f64,
    pub c1: f64,
    pub c2: f64,
    pub terminal: Option<TerminalState>,
    pub termination: Option<Termination>,
    pub oscillating: bool,
    pub error: Option<String>,
}

fn termination_label(t: &Termination) -> String {
    match t {
        Termination::Stationary => "stationary".into(),
        Termination::TimeLimit => "time-limit".into(),
        Termination::Oscillation => "oscillation".into(),
        Termination::Error(_) => "error".into(),
    }
}

/// Runs every grid point of `sweep` (concurrently, capped by
/// `PROXFLOW_THREADS`), each into its own `run_XXX` subdirectory of
/// `out_dir`, and writes `sweep.csv` ordered by grid index.
pub fn cmd_sweep(base: &RunConfig, sweep: &SweepConfig, out_dir: &Path) -> Result<SweepOutcome> {
    if sweep.is_empty() {
        return Err(Error::argument("sweep grid is empty"));
    }
    let problem = base.build_problem()?;
    let dims = problem.dims;
    std::fs::create_dir_all(out_dir)?;

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Ok(text) = std::env::var("PROXFLOW_THREADS") {
        let threads: usize = text
            .parse()
            .map_err(|_| Error::argument(format!("PROXFLOW_THREADS must be an integer, got '{text}'")))?;
        if threads == 0 {
            return Err(Error::argument("PROXFLOW_THREADS must be at least 1"));
        }
        pool = pool.num_threads(threads);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::argument(format!("failed to build thread pool: {e}")))?;

    let indices: Vec<usize> = (0..sweep.len()).collect();
    let rows: Vec<SweepRow> = pool.install(|| {
        indices
            .par_iter()
            .map(|&i| {
                let cfg = sweep.instantiate(base, i);
                let run_dir = out_dir.join(format!("run_{i:03}"));
                let (lambda, c1, c2) = match cfg.params.resolve(&problem) {
                    Ok(p) => (p.lambda, p.c1(), p.c2()),
                    Err(_) => (cfg.params.lambda, f64::NAN, f64::NAN),
                };
                match cmd_run(&cfg, &run_dir, false) {
                    Ok((manifest, _)) => SweepRow {
                        index: i,
                        lambda,
                        c1,
                        c2,
                        terminal: manifest.terminal,
                        termination: manifest.termination,
                        oscillating: manifest
                            .oscillation
                            .as_ref()
                            .map(|o| o.oscillating)
                            .unwrap_or(false),
                        error: manifest.error,
                    },
                    Err(e) => SweepRow {
                        index: i,
                        lambda,
                        c1,
                        c2,
                        terminal: None,
                        termination: None,
                        oscillating: false,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });

    let mut csv = String::from("index,lambda,c1,c2");
    for i in 1..=dims.0 {
        write!(csv, ",x_{i}").unwrap();
    }
    for j in 1..=dims.1 {
        write!(csv, ",y_{j}").unwrap();
    }
    csv.push_str(",termination,oscillating,error\n");
    for row in &rows {
        write!(
            csv,
            "{},{},{},{}",
            row.index,
            fmt_num(row.lambda),
            fmt_num(row.c1),
            fmt_num(row.c2)
        )
        .unwrap();
        match &row.terminal {
            Some(t) => {
                for &v in t.x.iter().chain(&t.y) {
                    csv.push(',');
                    csv.push_str(&fmt_num(v));
                }
            }
            None => {
                for _ in 0..dims.0 + dims.1 {
                    csv.push_str(",nan");
                }
            }
        }
        let label = row
            .termination
            .as_ref()
            .map(termination_label)
            .unwrap_or_else(|| "failed".into());
        let err = row.error.as_deref().unwrap_or("").replace(',', ";");
        writeln!(csv, ",{label},{},{err}", row.oscillating).unwrap();
    }
    let csv_path = out_dir.join("sweep.csv");
    std::fs::write(&csv_path, csv)?;
    Ok(SweepOutcome { rows, csv_path })
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

/// Prints the condition report; returns exit code 0 when the condition is
/// satisfied, 3 otherwise.
pub fn cmd_check(params: &DynParams, out: &mut impl std::io::Write) -> Result<i32> {
    let report = check_condition(params)?;
    writeln!(
        out,
        "parameters: lambda={} mu={} gamma1={} gamma2={} L={} (c1={}, c2={})",
        params.lambda,
        params.mu,
        params.gamma1,
        params.gamma2,
        params.l,
        params.c1(),
        params.c2()
    )?;
    writeln!(out, "beta                = {:.12}", report.beta)?;
    writeln!(out, "M (sqrt form)       = {:.12}", report.m_cap)?;
    writeln!(out, "M (unrooted form)   = {:.12}", report.m_cap_unrooted)?;
    writeln!(out, "m1                  = {:.12}", report.m1)?;
    writeln!(out, "m2                  = {:.12}", report.m2)?;
    writeln!(out, "margin              = {:.12}", report.margin)?;
    writeln!(
        out,
        "stepsize condition  : {}",
        if report.satisfied { "satisfied" } else { "NOT satisfied" }
    )?;
    writeln!(
        out,
        "experiment-form     : lhs={:.12} rhs={:.12} -> {}",
        report.experiment_form.lhs,
        report.experiment_form.rhs,
        if report.experiment_form.satisfied { "satisfied" } else { "NOT satisfied" }
    )?;
    Ok(if report.satisfied { 0 } else { 3 })
}

// ---------------------------------------------------------------------------
// proxtest
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ProxTestReport {
    pub kind: String,
    pub trials: usize,
    pub max_deviation: f64,
    pub grid_step: f64,
    pub pass: bool,
}

/// Compares the closed-form prox of the named kind against the grid argmin
/// oracle over randomized `(alpha, x)` trials.
pub fn cmd_proxtest(kind: &str, trials: usize, seed: u64) -> Result<ProxTestReport> {
    let handle = match kind {
        "abs" => ProxHandle::Abs,
        "l1" => ProxHandle::L1,
        "huber" => ProxHandle::Huber { delta: 2.0 },
        "quadratic" => ProxHandle::Quadratic { weight: 1.0 },
        "box" => ProxHandle::BoxIndicator { lo: -1.0, hi: 1.0 },
        "zero" => ProxHandle::Zero,
        other => {
            return Err(Error::argument(format!(
                "unknown prox kind '{other}' (expected abs, l1, huber, quadratic, box, or zero)"
            )))
        }
    };
    if trials == 0 {
        return Err(Error::argument("need at least one trial"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_deviation: f64 = 0.0;
    for _ in 0..trials {
        let alpha = rng.gen_range(0.05..3.0);
        let x = rng.gen_range(-6.0..6.0);
        let closed = handle.evaluate(alpha, &[x])?[0];
        let h = handle
            .scalar_value()
            .expect("builtin kinds have scalar objectives");
        let oracle = prox_oracle(h, alpha, x, -10.0, 10.0, ORACLE_GRID)?;
        max_deviation = max_deviation.max((closed - oracle).abs());
    }
    Ok(ProxTestReport {
        kind: kind.into(),
        trials,
        max_deviation,
        grid_step: ORACLE_GRID,
        pass: max_deviation <= ORACLE_GRID + 1e-9,
    })
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

/// Refits the convergence rate from an existing trajectory CSV. The problem
/// and parameters must be supplied so subgradient norms can be recomputed.
pub fn cmd_rates(
    csv_path: &Path,
    problem: &BlockProblem,
    params: &DynParams,
    tail_fraction: f64,
    limit: Option<f64>,
) -> Result<RateFit> {
    let text = std::fs::read_to_string(csv_path)?;
    let (traj, dims) = parse_trajectory_csv(&text)?;
    if dims != problem.dims {
        return Err(Error::argument(format!(
            "CSV dimensions {dims:?} do not match problem {:?}",
            problem.dims
        )));
    }
    let series = analysis::lyapunov_series(&traj, problem, params)?;
    let limit = limit.unwrap_or_else(|| *series.values.last().unwrap());
    analysis::fit_rate(&series, limit, tail_fraction)
}

/// Builds a diagnostic series from a previously written CSV (used by tests
/// and the `rates` subcommand).
pub fn series_from_csv(
    csv_path: &Path,
    problem: &BlockProblem,
    params: &DynParams,
) -> Result<LyapunovSeries> {
    let text = std::fs::read_to_string(csv_path)?;
    let (traj, _) = parse_trajectory_csv(&text)?;
    analysis::lyapunov_series(&traj, problem, params)
}
