//! `scaling-ot` command-line front end.
//!
//! Exit status: 0 when the run converged, 2 when it finished without converging (or the
//! solver gave up), 1 on usage, parse or I/O errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use config::Eps;

#[derive(Parser)]
#[command(name = "scaling-ot", version, about = "Stabilized sparse multi-scale scaling algorithms for entropic transport")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Entropic (unbalanced) transport between two measures.
    Solve(SolveArgs),
    /// Barycenter of several measures on a common grid.
    Barycenter(BarycenterArgs),
    /// Porous-medium gradient flow by entropic JKO steps.
    Flow(FlowArgs),
    /// Auction algorithm on a square cost table.
    Auction(AuctionArgs),
    /// Iteration counts over an ε grid.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CostChoice {
    Sqeuclid,
    Wfr,
    Explicit,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum StopChoice {
    Linf,
    Gap,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModelChoice {
    Wasserstein,
    Wfr,
}

/// Solver settings shared by the transport-type commands.
#[derive(Args, Clone, Debug)]
pub struct SolverArgs {
    /// Truncation threshold θ.
    #[arg(long, default_value_t = 1e-20)]
    theta: f64,
    /// Absorption threshold τ.
    #[arg(long, default_value_t = 1e2)]
    tau: f64,
    /// Stopping rule; defaults to `linf` when a marginal is fixed and `gap` otherwise.
    #[arg(long, value_enum)]
    stop: Option<StopChoice>,
    /// Tolerance of the stopping rule.
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Iteration cap per ε value.
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Check for absorption every this many iterations.
    #[arg(long, default_value_t = 1)]
    absorb_every: usize,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    /// TOML file with default values for any of these flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sqeuclid")]
    cost: CostChoice,
    /// Cost table for `--cost explicit`.
    #[arg(long)]
    cost_file: Option<PathBuf>,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Final ε, absolute or in units of h² (`0.1h2`).
    #[arg(long, default_value = "0.1h2")]
    eps_final: Eps,
    /// Use λ·KL marginal fidelity instead of fixed marginals.
    #[arg(long)]
    lambda: Option<f64>,
    /// Solve on the finest level only.
    #[arg(long)]
    single_scale: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// Report JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Coupling triples CSV path.
    #[arg(long)]
    coupling: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BarycenterArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input measure file; repeat once per input.
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    /// Comma-separated weights; uniform when omitted.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "wasserstein")]
    model: ModelChoice,
    /// Marginal penalty Λ of the WFR model.
    #[arg(long, default_value_t = 1.0)]
    big_lambda: f64,
    #[arg(long, default_value = "0.1h2")]
    eps_final: Eps,
    #[command(flatten)]
    solver: SolverArgs,
    /// Barycenter measure path.
    #[arg(long)]
    out: PathBuf,
    /// Report JSON path.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FlowArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Initial measure.
    #[arg(long)]
    mu0: PathBuf,
    /// Per-cell potential in the measure layout; `inf` marks barrier cells. Zero when omitted.
    #[arg(long)]
    potential: Option<PathBuf>,
    #[arg(long, default_value = "0.66h2")]
    eps: Eps,
    /// JKO time step.
    #[arg(long, default_value_t = 2e-3)]
    time_step: f64,
    #[arg(long, default_value_t = 10)]
    steps: usize,
    /// Marginal tolerance per step.
    #[arg(long, default_value_t = 1e-12)]
    tol: f64,
    #[arg(long, default_value_t = 100_000)]
    max_iter: usize,
    /// Directory for frame_0001.csv, frame_0002.csv, ... and reports.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct AuctionArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Square cost table.
    #[arg(long)]
    cost_file: PathBuf,
    /// Bid increment; 1/(n+1) when omitted, which is exact for integer costs.
    #[arg(long)]
    eps: Option<f64>,
    /// Result JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "sqeuclid")]
    cost: CostChoice,
    #[arg(long)]
    cost_file: Option<PathBuf>,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Comma-separated ε values, absolute or with the `h2` suffix.
    #[arg(long, value_delimiter = ',', required = true)]
    eps_grid: Vec<Eps>,
    /// Warm-start every ε through a halving ladder instead of a cold start.
    #[arg(long)]
    eps_scaling: bool,
    #[command(flatten)]
    solver: SolverArgs,
    /// CSV path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Command-line arguments with the `--config` file (if any) merged in.
fn effective_args() -> anyhow::Result<Vec<String>> {
    let argv: Vec<String> = std::env::args().collect();
    let Some(sub_name) = argv.get(1) else { return Ok(argv) };
    let cmd = Cli::command();
    let Some(sub) = cmd.find_subcommand(sub_name) else { return Ok(argv) };
    let config = argv.iter().enumerate().find_map(|(i, a)| match a.strip_prefix("--config") {
        Some("") => argv.get(i + 1).cloned(),
        Some(rest) => rest.strip_prefix('=').map(str::to_string),
        None => None,
    });
    let Some(path) = config else { return Ok(argv) };
    let given = |flag: &str| argv.iter().any(|a| a == flag || a.starts_with(&format!("{flag}=")));
    let from_file = config::config_args(path.as_ref(), sub)?;
    let mut merged = argv[..2].to_vec();
    let mut i = 0;
    while i < from_file.len() {
        let flag = &from_file[i];
        let has_value = from_file.get(i + 1).is_some_and(|v| !v.starts_with("--"));
        if !given(flag) {
            merged.push(flag.clone());
            if has_value {
                merged.push(from_file[i + 1].clone());
            }
        }
        i += if has_value { 2 } else { 1 };
    }
    merged.extend_from_slice(&argv[2..]);
    Ok(merged)
}

fn main() -> ExitCode {
    let args = match effective_args() {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Cmd::Solve(a) => commands::solve(a),
        Cmd::Barycenter(a) => commands::barycenter(a),
        Cmd::Flow(a) => commands::flow(a),
        Cmd::Auction(a) => commands::auction(a),
        Cmd::Bench(a) => commands::bench(a),
    };
    match result {
        Ok(commands::Status::Converged) => ExitCode::SUCCESS,
        Ok(commands::Status::NotConverged) => {
            eprintln!("warning: the run did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let solver_failure = e.downcast_ref::<commands::SolverFailure>().is_some();
            ExitCode::from(if solver_failure { 2 } else { 1 })
        }
    }
}
