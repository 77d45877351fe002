use super::{check_eps_list, scaling_algorithm_stabilized, Observer, Solution, SolverConfig};
use crate::error::{Error, Result};
use crate::kernel::{MultiScaleProblem, PairProblem};
use crate::scalar::Real;

/// Runs the stabilized solver for each ε in `eps_list`, carrying the duals from one ε to the next.
pub fn eps_scaling<T: Real>(
    ms: &MultiScaleProblem<T>,
    level: usize,
    eps_list: &[T],
    alpha: Vec<T>,
    beta: Vec<T>,
    config: &SolverConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<Solution<T>> {
    check_eps_list(eps_list)?;
    let Some((&first, rest)) = eps_list.split_first() else {
        return Err(Error::InvalidInput("empty eps list".into()));
    };
    let mut sol = scaling_algorithm_stabilized(ms, level, first, alpha, beta, config, observer)?;
    for &eps in rest {
        let next = scaling_algorithm_stabilized(
            ms,
            level,
            eps,
            sol.state.alpha_hat.clone(),
            sol.state.beta_hat.clone(),
            config,
            observer,
        )?;
        let mut report = std::mem::take(&mut sol.report);
        report.chain(next.report.clone());
        sol = Solution { report, ..next };
    }
    Ok(sol)
}

/// Coarse-to-fine solve: ε-scaling on each level with a non-empty list, then dual refinement.
///
/// `config.eps_lists[i]` is used at level i; missing or empty lists skip the level.
/// A starving level is retried once with θ/10.
pub fn solve_full<T: Real>(
    ms: &MultiScaleProblem<T>,
    config: &SolverConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<Solution<T>> {
    config.validate()?;
    let lists = &config.eps_lists;
    if lists.first().is_none_or(|l| l.is_empty()) {
        return Err(Error::InvalidInput("the eps list for level 0 must not be empty".into()));
    }
    if lists.len() > ms.depth() + 1 {
        return Err(Error::InvalidInput(format!(
            "{} eps lists given but the problem has {} levels",
            lists.len(),
            ms.depth() + 1
        )));
    }
    let top = lists.iter().rposition(|l| !l.is_empty()).unwrap_or(0);
    let lp = ms.level(top)?;
    let (mut alpha, mut beta) = (vec![T::zero(); lp.nx()], vec![T::zero(); lp.ny()]);
    let mut report: Option<super::SolveReport> = None;
    for i in (0..=top).rev() {
        if !lists[i].is_empty() {
            let run = |cfg: &SolverConfig<T>, obs: &mut dyn Observer<T>| {
                eps_scaling(ms, i, &lists[i], alpha.clone(), beta.clone(), cfg, obs)
            };
            let sol = match run(config, observer) {
                Err(Error::Starvation { .. }) => {
                    let retry = SolverConfig { theta: config.theta / T::lit(10.0), ..config.clone() };
                    run(&retry, observer)?
                }
                other => other?,
            };
            let merged = match report.take() {
                Some(mut r) => {
                    r.chain(sol.report.clone());
                    r
                }
                None => sol.report.clone(),
            };
            if i == 0 {
                return Ok(Solution { report: merged, ..sol });
            }
            report = Some(merged);
            alpha = sol.state.alpha_hat;
            beta = sol.state.beta_hat;
        }
        let refined = ms.refine_duals(i - 1, &alpha, &beta)?;
        alpha = refined.0;
        beta = refined.1;
    }
    unreachable!("level 0 always has an eps list")
}

/// Geometric ladder from `start` down to `end` with ratio `factor` < 1; `end` is always last.
pub fn eps_ladder<T: Real>(start: T, end: T, factor: T) -> Result<Vec<T>> {
    if !(end > T::zero() && end.is_finite() && start.is_finite()) {
        return Err(Error::InvalidInput("ladder endpoints must be positive and finite".into()));
    }
    if !(factor > T::zero() && factor < T::one()) {
        return Err(Error::InvalidInput(format!("ladder factor must lie in (0, 1), got {factor}")));
    }
    let mut out = Vec::new();
    let mut e = start;
    while e > end * (T::one() + T::lit(1e-12)) {
        out.push(e);
        e = e * factor;
    }
    out.push(end);
    Ok(out)
}

/// Default schedule: ε halves from the largest finite cost down to `eps_final`, and each ε runs
/// on the coarsest level whose squared grid constant does not exceed it.
pub fn default_eps_lists<T: Real>(ms: &MultiScaleProblem<T>, eps_final: T) -> Result<Vec<Vec<T>>> {
    let c = ms.spec().cost.max_finite();
    let start = if c > eps_final { c } else { eps_final };
    let ladder = eps_ladder(start, eps_final, T::lit(0.5))?;
    let mut lists = vec![Vec::new(); ms.depth() + 1];
    for eps in ladder {
        let level = (0..=ms.depth())
            .rev()
            .find(|&i| i == 0 || ms.level(i).is_ok_and(|lp| lp.spacing * lp.spacing <= eps))
            .unwrap_or(0);
        lists[level].push(eps);
    }
    while lists.len() > 1 && lists.last().is_some_and(|l| l.is_empty()) {
        lists.pop();
    }
    Ok(lists)
}
