//! Command-line front end for the proximal dynamical-system solver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use proxflow::cli::{
    cmd_check, cmd_proxtest, cmd_rates, cmd_run, cmd_sweep, parse_grid, InitialPoint,
    ParamsConfig, RunConfig, SweepConfig,
};
use proxflow::dynamics::DynParams;
use proxflow::{Error, Result};

#[derive(Parser)]
#[command(
    name = "proxflow",
    version,
    about = "Integrates a coupled forward-backward proximal dynamical system for \
             block objectives f(x) + g(y) + H(x, y) and analyzes the trajectories."
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate one trajectory and write trajectory.csv + manifest.json.
    Run(RunArgs),
    /// Run a parameter grid concurrently and write sweep.csv.
    Sweep(SweepArgs),
    /// Evaluate the stepsize admissibility condition.
    Check(CheckArgs),
    /// Compare a closed-form prox against the grid argmin oracle.
    Proxtest(ProxtestArgs),
    /// Refit the convergence rate from an existing trajectory.csv.
    Rates(RatesArgs),
}

/// Parameter flags shared by the subcommands; they override config values.
#[derive(Args, Clone)]
struct ParamFlags {
    /// Problem preset name (example1, example1-2d, example2, example2-alt).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Product c1 = gamma1 * L.
    #[arg(long)]
    c1: Option<f64>,
    /// Product c2 = gamma2 * L.
    #[arg(long)]
    c2: Option<f64>,
    /// Lipschitz constant of grad H (defaults to the preset's constant).
    #[arg(long = "L")]
    l: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
    /// Integration horizon.
    #[arg(long)]
    tmax: Option<f64>,
    /// Initial x block, comma-separated.
    #[arg(long)]
    x0: Option<String>,
    /// Initial y block, comma-separated.
    #[arg(long)]
    y0: Option<String>,
    /// Output directory (default: run-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a generic plotting script next to the CSV.
    #[arg(long)]
    emit_plot_script: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    y0: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lambda grid: comma list or start:step:end.
    #[arg(long)]
    lambda_grid: Option<String>,
    /// Grid of c values applied to both c1 and c2: comma list or
    /// start:step:end.
    #[arg(long)]
    c_grid: Option<String>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    params: ParamFlags,
}

#[derive(Args)]
struct ProxtestArgs {
    /// Prox kind: abs, l1, huber, quadratic, box, or zero.
    #[arg(long)]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    /// RNG seed for the randomized trials.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct RatesArgs {
    /// Path to a previously written trajectory.csv.
    #[arg(long)]
    csv: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    params: ParamFlags,
    /// Fraction of the series tail used for the fit.
    #[arg(long, default_value_t = 0.5)]
    tail: f64,
    /// Limiting energy value; defaults to the final recorded value.
    #[arg(long)]
    limit: Option<f64>,
}

fn parse_point(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::argument(format!("invalid number '{s}' in {what}")))
        })
        .collect()
}

/// Loads the config file if given, otherwise builds a minimal config from
/// flags, then applies flag overrides on top.
fn assemble_config(
    config_path: Option<&PathBuf>,
    flags: &ParamFlags,
    tmax: Option<f64>,
    x0: Option<&String>,
    y0: Option<&String>,
    out: Option<&PathBuf>,
) -> Result<RunConfig> {
    let mut cfg = match config_path {
        Some(path) => RunConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => {
            let preset = flags.preset.clone().ok_or_else(|| {
                Error::argument("either --config or --preset is required")
            })?;
            let (x0, y0) = match (x0, y0) {
                (Some(x), Some(y)) => (parse_point(x, "--x0")?, parse_point(y, "--y0")?),
                _ => {
                    return Err(Error::argument(
                        "--x0 and --y0 are required when no config file is given",
                    ))
                }
            };
            RunConfig {
                preset: Some(preset),
                problem: None,
                params: ParamsConfig {
                    lambda: 0.0,
                    mu: 1.0,
                    gamma1: None,
                    gamma2: None,
                    c1: Some(1.0),
                    c2: Some(1.0),
                    l: None,
                },
                initial: InitialPoint { x: x0, y: y0 },
                solver: Default::default(),
                analysis: Default::default(),
                out: None,
                sweep: None,
            }
        }
    };
    if config_path.is_some() {
        if let Some(p) = &flags.preset {
            cfg.preset = Some(p.clone());
            cfg.problem = None;
        }
        if let Some(x) = x0 {
            cfg.initial.x = parse_point(x, "--x0")?;
        }
        if let Some(y) = y0 {
            cfg.initial.y = parse_point(y, "--y0")?;
        }
    }
    if let Some(v) = flags.lambda {
        cfg.params.lambda = v;
    }
    if let Some(v) = flags.mu {
        cfg.params.mu = v;
    }
    if let Some(v) = flags.c1 {
        cfg.params.c1 = Some(v);
        cfg.params.gamma1 = None;
    }
    if let Some(v) = flags.c2 {
        cfg.params.c2 = Some(v);
        cfg.params.gamma2 = None;
    }
    if let Some(v) = flags.l {
        cfg.params.l = Some(v);
    }
    if let Some(v) = tmax {
        cfg.solver.t_max = v;
    }
    if let Some(dir) = out {
        cfg.out = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn check_params(flags: &ParamFlags) -> Result<DynParams> {
    let l = match (flags.l, &flags.preset) {
        (Some(l), _) => l,
        (None, Some(name)) => proxflow::problem::BlockProblem::preset(name)?.lipschitz(),
        (None, None) => return Err(Error::argument("--L (or --preset) is required")),
    };
    let (c1, c2) = match (flags.c1, flags.c2) {
        (Some(c1), Some(c2)) => (c1, c2),
        _ => return Err(Error::argument("--c1 and --c2 are required")),
    };
    DynParams::from_c(flags.lambda.unwrap_or(0.0), flags.mu.unwrap_or(1.0), c1, c2, l)
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::Argument(_) | Error::Json(_) => 1,
        _ => 2,
    }
}

fn dispatch(cmd: Cmd) -> Result<u8> {
    match cmd {
        Cmd::Run(args) => {
            let cfg = assemble_config(
                args.config.as_ref(),
                &args.params,
                args.tmax,
                args.x0.as_ref(),
                args.y0.as_ref(),
                args.out.as_ref(),
            )?;
            let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("run-out"));
            let (manifest, exit) = cmd_run(&cfg, &out_dir, args.emit_plot_script)?;
            println!("{}", serde_json::to_string_pretty(&manifest)?);
            Ok(exit as u8)
        }
        Cmd::Sweep(args) => {
            let mut cfg = assemble_config(
                args.config.as_ref(),
                &args.params,
                args.tmax,
                args.x0.as_ref(),
                args.y0.as_ref(),
                args.out.as_ref(),
            )?;
            let sweep = match (&args.lambda_grid, &args.c_grid, cfg.sweep.take()) {
                (Some(spec), None, _) => SweepConfig::Lambda { values: parse_grid(spec)? },
                (None, Some(spec), _) => SweepConfig::C {
                    values: parse_grid(spec)?.into_iter().map(|c| (c, c)).collect(),
                },
                (None, None, Some(sweep)) => sweep,
                (Some(_), Some(_), _) => {
                    return Err(Error::argument(
                        "provide only one of --lambda-grid / --c-grid",
                    ))
                }
                (None, None, None) => {
                    return Err(Error::argument(
                        "no sweep axis: use --lambda-grid, --c-grid, or a config `sweep` section",
                    ))
                }
            };
            let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep-out"));
            let outcome = cmd_sweep(&cfg, &sweep, &out_dir)?;
            let failures = outcome.rows.iter().filter(|r| r.error.is_some()).count();
            println!(
                "wrote {} ({} runs, {} failed)",
                outcome.csv_path.display(),
                outcome.rows.len(),
                failures
            );
            Ok(0)
        }
        Cmd::Check(args) => {
            let params = check_params(&args.params)?;
            let code = cmd_check(&params, &mut std::io::stdout())?;
            Ok(code as u8)
        }
        Cmd::Proxtest(args) => {
            let report = cmd_proxtest(&args.kind, args.trials, args.seed)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(if report.pass { 0 } else { 2 })
        }
        Cmd::Rates(args) => {
            let (problem, params) = match &args.config {
                Some(path) => {
                    let cfg = RunConfig::from_json(&std::fs::read_to_string(path)?)?;
                    let problem = cfg.build_problem()?;
                    let params = cfg.params.resolve(&problem)?;
                    (problem, params)
                }
                None => {
                    let name = args.params.preset.as_deref().ok_or_else(|| {
                        Error::argument("either --config or --preset is required")
                    })?;
                    let problem = proxflow::problem::BlockProblem::preset(name)?;
                    let params = ParamsConfig {
                        lambda: args.params.lambda.unwrap_or(0.0),
                        mu: args.params.mu.unwrap_or(1.0),
                        gamma1: None,
                        gamma2: None,
                        c1: Some(args.params.c1.unwrap_or(1.0)),
                        c2: Some(args.params.c2.unwrap_or(1.0)),
                        l: args.params.l,
                    }
                    .resolve(&problem)?;
                    (problem, params)
                }
            };
            let fit = cmd_rates(&args.csv, &problem, &params, args.tail, args.limit)?;
            println!("{}", serde_json::to_string_pretty(&fit)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    // clap's own error exit code is 2; this tool reserves 2 for numerical
    // failures and reports usage problems as 1
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
