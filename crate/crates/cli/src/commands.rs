use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, ensure, Context, Result};
use scaling_ot::io::{read_explicit_cost, read_grid_values, read_measure, write_measure, write_triples};
use scaling_ot::kernel::{PairProblem, Rho};
use scaling_ot::reference::{auction_solve, fit_log_log_slope, iteration_scaling_study, AssignmentInstance, StudyRow, StudyTable};
use scaling_ot::solvers::{
    default_eps_lists, eps_ladder, eps_scaling, solve_barycenter, solve_full, BarycenterModel, NoObserver,
};
use scaling_ot::{
    BarycenterProblem, CostFunction, GridGeometry, MarginalFunction, MultiScaleProblem, PorousMediumFlow, ProblemSpec,
    SolverConfig, StopRule,
};
use serde::Serialize;

use crate::{AuctionArgs, BarycenterArgs, BenchArgs, CostChoice, FlowArgs, ModelChoice, SolveArgs, SolverArgs, StopChoice};

pub enum Status {
    Converged,
    NotConverged,
}

fn status(converged: bool) -> Status {
    if converged {
        Status::Converged
    } else {
        Status::NotConverged
    }
}

/// The solver gave up (divergence, starvation, numerical breakdown) rather than rejecting input.
#[derive(Debug)]
pub struct SolverFailure(scaling_ot::Error);

impl fmt::Display for SolverFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for SolverFailure {}

fn solver<T>(r: scaling_ot::Result<T>) -> Result<T> {
    use scaling_ot::Error as E;
    r.map_err(|e| match e {
        E::Diverged { .. } | E::Starvation { .. } | E::Numerical(_) => anyhow!(SolverFailure(e)),
        other => anyhow!(other),
    })
}

fn check_input(path: &Path) -> Result<()> {
    ensure!(path.is_file(), "{}: no such file", path.display());
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => bail!("{}: directory does not exist", dir.display()),
        _ => Ok(()),
    }
}

fn write_json(path: Option<&PathBuf>, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => std::fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn solver_config(s: &SolverArgs, fixed_marginal: bool, eps_lists: Vec<Vec<f64>>) -> SolverConfig {
    let stop = s.stop.unwrap_or(if fixed_marginal { StopChoice::Linf } else { StopChoice::Gap });
    SolverConfig {
        theta: s.theta,
        tau: s.tau,
        eps_lists,
        stop_rule: match stop {
            StopChoice::Linf => StopRule::LInfMarginal(s.tol),
            StopChoice::Gap => StopRule::PrimalDualGap(s.tol),
        },
        max_iterations: s.max_iter,
        absorption_check_every: s.absorb_every,
    }
}

/// Cost, marginals and ε unit h for `solve` and `bench`.
struct Pair {
    gx: GridGeometry,
    gy: GridGeometry,
    mu: Vec<f64>,
    nu: Vec<f64>,
    cost: CostFunction,
    explicit: bool,
}

fn load_pair(cost: CostChoice, cost_file: Option<&PathBuf>, mu: &Path, nu: &Path) -> Result<Pair> {
    check_input(mu)?;
    check_input(nu)?;
    if let Some(p) = cost_file {
        check_input(p)?;
    }
    let (gx, mu) = read_measure(mu)?;
    let (gy, nu) = read_measure(nu)?;
    let (cost, explicit) = match cost {
        CostChoice::Sqeuclid => (CostFunction::squared_euclidean(&gx, &gy)?, false),
        CostChoice::Wfr => (CostFunction::wfr(&gx, &gy)?, false),
        CostChoice::Explicit => {
            let p = cost_file.ok_or_else(|| anyhow!("--cost explicit needs --cost-file"))?;
            let c = read_explicit_cost(p)?;
            ensure!(
                (c.x_len(), c.y_len()) == (mu.len(), nu.len()),
                "{}: cost table is {}x{} but the measures have {} and {} points",
                p.display(),
                c.x_len(),
                c.y_len(),
                mu.len(),
                nu.len()
            );
            (c, true)
        }
    };
    Ok(Pair { gx, gy, mu, nu, cost, explicit })
}

fn build_spec(p: Pair, lambda: Option<f64>) -> Result<(ProblemSpec, f64)> {
    let h = p.gx.spacing();
    let spec = match (lambda, p.explicit) {
        (None, false) => ProblemSpec::optimal_transport(p.gx, p.gy, p.cost, p.mu, p.nu)?,
        (None, true) => ProblemSpec::explicit_transport(p.cost, p.mu, p.nu)?,
        (Some(l), false) => ProblemSpec::unbalanced(p.gx, p.gy, p.cost, p.mu, p.nu, l)?,
        (Some(l), true) => ProblemSpec::new(
            GridGeometry::index_line(p.mu.len())?,
            GridGeometry::index_line(p.nu.len())?,
            p.cost,
            Rho::Uniform(1.0),
            MarginalFunction::kl(p.mu, l)?,
            MarginalFunction::kl(p.nu, l)?,
        )?,
    };
    Ok((spec, h))
}

pub fn solve(a: SolveArgs) -> Result<Status> {
    for p in [&a.out, &a.coupling].into_iter().flatten() {
        check_output(p)?;
    }
    let pair = load_pair(a.cost, a.cost_file.as_ref(), &a.mu, &a.nu)?;
    let (spec, h) = build_spec(pair, a.lambda)?;
    let ms = if a.single_scale { MultiScaleProblem::single_level(spec)? } else { MultiScaleProblem::new(spec)? };
    let lists = default_eps_lists(&ms, a.eps_final.resolve(h))?;
    let config = solver_config(&a.solver, a.lambda.is_none(), lists);
    let sol = solver(solve_full(&ms, &config, &mut NoObserver))?;
    if let Some(p) = &a.coupling {
        write_triples(p, &sol.coupling_triples(ms.level(0)?))?;
    }
    write_json(a.out.as_ref(), &sol.report)?;
    Ok(status(sol.report.converged))
}

pub fn barycenter(a: BarycenterArgs) -> Result<Status> {
    check_output(&a.out)?;
    if let Some(p) = &a.report {
        check_output(p)?;
    }
    for p in &a.inputs {
        check_input(p)?;
    }
    let mut inputs = Vec::with_capacity(a.inputs.len());
    for p in &a.inputs {
        inputs.push(read_measure(p)?);
    }
    let grid = inputs[0].0.clone();
    for ((g, _), p) in inputs.iter().zip(&a.inputs) {
        ensure!(*g == grid, "{}: grid differs from {}", p.display(), a.inputs[0].display());
    }
    let n = inputs.len();
    let weights = a.weights.unwrap_or_else(|| vec![1.0 / n as f64; n]);
    ensure!(weights.len() == n, "{} weights given for {n} inputs", weights.len());
    let model = match a.model {
        ModelChoice::Wasserstein => BarycenterModel::Wasserstein,
        ModelChoice::Wfr => BarycenterModel::Wfr { big_lambda: a.big_lambda },
    };
    let fixed = matches!(a.model, ModelChoice::Wasserstein);
    let eps = a.eps_final.resolve(grid.spacing());
    let problem = BarycenterProblem { inputs, grid_y: grid.clone(), weights, model };
    let sol = solver(solve_barycenter(&problem, eps, &solver_config(&a.solver, fixed, Vec::new())))?;
    write_measure(&a.out, &grid, &sol.barycenter)?;
    if let Some(p) = &a.report {
        write_json(Some(p), &sol.report)?;
    }
    Ok(status(sol.report.converged))
}

pub fn flow(a: FlowArgs) -> Result<Status> {
    check_input(&a.mu0)?;
    if let Some(p) = &a.potential {
        check_input(p)?;
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let (grid, mu0) = read_measure(&a.mu0)?;
    let potential = match &a.potential {
        Some(p) => {
            let (g, v) = read_grid_values(p)?;
            ensure!(g == grid, "{}: grid differs from {}", p.display(), a.mu0.display());
            v
        }
        None => vec![0.0; grid.len()],
    };
    let eps = a.eps.resolve(grid.spacing());
    let mut flow = PorousMediumFlow::new(grid.clone(), potential, eps, a.time_step);
    flow.config.stop_rule = StopRule::LInfMarginal(a.tol);
    flow.config.max_iterations = a.max_iter;
    let mut reports = Vec::with_capacity(a.steps);
    let mut current = mu0;
    for k in 1..=a.steps {
        let step = solver(flow.step(&current))?;
        write_measure(&a.out_dir.join(format!("frame_{k:04}.csv")), &grid, &step.measure)?;
        reports.push(step.report);
        current = step.measure;
    }
    write_json(Some(&a.out_dir.join("reports.json")), &reports)?;
    Ok(status(reports.iter().all(|r| r.converged)))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct AuctionOutput {
    assignment: Vec<usize>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    value: f64,
    iterations: usize,
    bids: usize,
    eps: f64,
}

pub fn auction(a: AuctionArgs) -> Result<Status> {
    check_input(&a.cost_file)?;
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    let c = read_explicit_cost(&a.cost_file)?;
    let n = c.x_len();
    ensure!(c.y_len() == n, "{}: auction needs a square cost table, got {}x{}", a.cost_file.display(), n, c.y_len());
    let data: Vec<f64> = (0..n * n).map(|k| c.eval(k / n, k % n)).collect();
    let inst = AssignmentInstance::new(n, data)?;
    let eps = a.eps.unwrap_or(1.0 / (n as f64 + 1.0));
    let r = solver(auction_solve(&inst, eps, None))?;
    write_json(
        a.out.as_ref(),
        &AuctionOutput {
            assignment: r.assignment,
            alpha: r.alpha,
            beta: r.beta,
            value: r.value,
            iterations: r.iterations,
            bids: r.bids,
            eps,
        },
    )?;
    Ok(Status::Converged)
}

pub fn bench(a: BenchArgs) -> Result<Status> {
    if let Some(p) = &a.out {
        check_output(p)?;
    }
    ensure!(a.eps_grid.len() >= 2, "--eps-grid needs at least two values");
    let pair = load_pair(a.cost, a.cost_file.as_ref(), &a.mu, &a.nu)?;
    let (spec, h) = build_spec(pair, None)?;
    let ms = MultiScaleProblem::single_level(spec)?;
    let grid: Vec<f64> = a.eps_grid.iter().map(|e| e.resolve(h)).collect();
    let config = solver_config(&a.solver, true, Vec::new());
    let table = if a.eps_scaling {
        let top = ms.spec().cost.max_finite();
        let mut rows = Vec::with_capacity(grid.len());
        for &eps in &grid {
            let ladder = eps_ladder(top.max(eps), eps, 0.5)?;
            let lp = ms.level(0)?;
            let zeros = |n| vec![0.0; n];
            let sol = solver(eps_scaling(&ms, 0, &ladder, zeros(lp.nx()), zeros(lp.ny()), &config, &mut NoObserver))?;
            rows.push(StudyRow {
                eps,
                iterations: sol.report.iterations,
                gap: sol.report.primal_dual_gap,
                converged: sol.report.converged,
            });
        }
        let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.eps).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.iterations.max(1) as f64).collect();
        let slope = fit_log_log_slope(&x, &y)?;
        StudyTable { rows, slope }
    } else {
        solver(iteration_scaling_study(&ms, &grid, &config))?
    };
    let csv = table.to_csv();
    match &a.out {
        Some(p) => std::fs::write(p, csv).with_context(|| format!("writing {}", p.display()))?,
        None => print!("{csv}"),
    }
    eprintln!("log-log slope of iterations against 1/eps: {:.3}", table.slope);
    Ok(status(table.rows.iter().all(|r| r.converged)))
}
