use super::{check_eps_list, to_f64, AbsorptionEvent, Observer, ScalingState, Solution, SolveReport, SolverConfig, StopRule};
use crate::error::{Error, Result};
use crate::kernel::{lagrangian_gap, primal_value, LevelProblem, MultiScaleProblem, PairProblem, SparseKernel};
use crate::proxdiv::MarginalFunction;
use crate::scalar::{max_abs, max_value, min_value, ordered_sum, Real};

/// Stabilized scaling iterations at one level and one ε, starting from absorbed duals.
///
/// The truncated kernel is rebuilt by hierarchical search whenever ũ or ṽ leaves [1/τ, τ].
/// A closing absorption leaves ũ = ṽ = 1 in the returned state.
pub fn scaling_algorithm_stabilized<T: Real>(
    ms: &MultiScaleProblem<T>,
    level: usize,
    eps: T,
    alpha_hat: Vec<T>,
    beta_hat: Vec<T>,
    config: &SolverConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<Solution<T>> {
    config.validate()?;
    check_eps_list(&[eps])?;
    let lp = ms.level(level)?;
    check_stop_rule(lp, &config.stop_rule)?;
    crate::error::check_len("alpha_hat", lp.nx(), alpha_hat.len())?;
    crate::error::check_len("beta_hat", lp.ny(), beta_hat.len())?;

    let build = |s: &ScalingState<T>| -> Result<SparseKernel<T>> {
        let k = ms.truncated_kernel(level, &s.alpha_hat, &s.beta_hat, eps, config.theta)?;
        if let Some(r) = k.empty_row().filter(|_| lp.fx.requires_mass()) {
            return Err(Error::Starvation { side: "row", index: lp.x_ids[r] });
        }
        if let Some(c) = k.empty_col().filter(|_| lp.fy.requires_mass()) {
            return Err(Error::Starvation { side: "column", index: lp.y_ids[c] });
        }
        Ok(k)
    };

    let mut state = ScalingState::new(alpha_hat, beta_hat, eps);
    let mut kernel = build(&state)?;
    let mut kv = kernel.apply(&state.v_tilde);
    let mut absorptions = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        state.u_tilde = side_proxdiv(&lp.fx, &kv, &state.alpha_hat, eps, lp, true)?;
        let ktu = kernel.apply_transposed(&state.u_tilde);
        state.v_tilde = side_proxdiv(&lp.fy, &ktu, &state.beta_hat, eps, lp, false)?;
        iterations += 1;
        kv = kernel.apply(&state.v_tilde);
        observer.iteration(level, iterations, &state);

        let row = mul(&state.u_tilde, &kv);
        let col = mul(&state.v_tilde, &ktu);
        if stop_reached(lp, &config.stop_rule, iterations, &row, &col, || {
            lagrangian_gap(lp, &kernel.scaled(&state.u_tilde, &state.v_tilde), &state.alpha(), &state.beta(), eps)
        })? {
            converged = true;
            break;
        }

        if iterations % config.absorption_check_every == 0 && needs_absorption(&state, config.tau) {
            let before = state.clone();
            state.absorb();
            let fresh = build(&state)?;
            observer.absorption(&AbsorptionEvent {
                level,
                problem: lp,
                theta: config.theta,
                before: &before,
                old_kernel: &kernel,
                after: &state,
                new_kernel: &fresh,
            });
            kernel = fresh;
            absorptions += 1;
            kv = kernel.apply(&state.v_tilde);
        }
    }

    let truncation_bound = max_value(&state.u_tilde) * max_value(&state.v_tilde) * config.theta * lp.rho_total();
    let coupling = kernel.scaled(&state.u_tilde, &state.v_tilde);
    let mut report = report_for(lp, &coupling, &state.alpha(), &state.beta(), eps)?;
    report.truncation_bound = to_f64(truncation_bound);
    report.iterations = iterations;
    report.absorption_count = absorptions;
    report.per_eps_iteration_counts = vec![iterations];
    report.converged = converged;
    state.absorb();
    Ok(Solution { state, report, coupling, kernel_nnz: kernel.nnz(), level })
}

fn side_proxdiv<T: Real>(
    f: &MarginalFunction<T>,
    sigma: &[T],
    gamma: &[T],
    eps: T,
    lp: &LevelProblem<T>,
    x_side: bool,
) -> Result<Vec<T>> {
    let out = f.proxdiv(sigma, gamma, eps).map_err(|e| match e {
        Error::Starvation { index, .. } if x_side => Error::Starvation { side: "row", index: lp.x_ids[index] },
        Error::Starvation { index, .. } => Error::Starvation { side: "column", index: lp.y_ids[index] },
        other => other,
    })?;
    if let Some(i) = out.iter().position(|s| !s.is_finite()) {
        return Err(Error::Numerical(format!(
            "scaling factor {} on the {} side is {}",
            i,
            if x_side { "X" } else { "Y" },
            out[i]
        )));
    }
    Ok(out)
}

pub(crate) fn needs_absorption<T: Real>(state: &ScalingState<T>, tau: T) -> bool {
    let lo = tau.recip();
    let out = |v: &[T]| max_value(v) > tau || min_value(v) < lo;
    out(&state.u_tilde) || out(&state.v_tilde)
}

pub(crate) fn mul<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x * y).collect()
}

pub(crate) fn check_stop_rule<T: Real>(lp: &LevelProblem<T>, rule: &StopRule<T>) -> Result<()> {
    if matches!(rule, StopRule::LInfMarginal(_)) && !lp.fx.is_fixed() && !lp.fy.is_fixed() {
        return Err(Error::InvalidInput(
            "the L-infinity marginal rule needs at least one fixed marginal; use the gap rule".into(),
        ));
    }
    Ok(())
}

/// Largest deviation of the fixed marginals from their targets.
pub(crate) fn fixed_marginal_error<T: Real>(lp: &LevelProblem<T>, row: &[T], col: &[T]) -> T {
    let err = |f: &MarginalFunction<T>, s: &[T]| match f {
        MarginalFunction::Fixed { target } => max_abs(&s.iter().zip(target).map(|(&a, &b)| a - b).collect::<Vec<_>>()),
        _ => T::zero(),
    };
    err(&lp.fx, row).max(err(&lp.fy, col))
}

pub(crate) fn stop_reached<T: Real>(
    lp: &LevelProblem<T>,
    rule: &StopRule<T>,
    iterations: usize,
    row: &[T],
    col: &[T],
    gap: impl FnOnce() -> Result<T>,
) -> Result<bool> {
    Ok(match *rule {
        StopRule::LInfMarginal(tol) => fixed_marginal_error(lp, row, col) <= tol,
        // With a fixed marginal the Lagrangian term ⟨α, s − μ⟩ has no sign.
        StopRule::PrimalDualGap(tol) => gap()?.abs() <= tol,
        StopRule::FixedIterations(n) => iterations >= n,
        StopRule::MassTarget(q) => ordered_sum(row) >= q,
    })
}

/// Report figures for a coupling and its effective duals; counters are left at zero.
pub(crate) fn report_for<T: Real>(
    lp: &LevelProblem<T>,
    coupling: &SparseKernel<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<SolveReport> {
    let (row, col) = (coupling.row_sums(), coupling.col_sums());
    Ok(SolveReport {
        iterations: 0,
        final_eps: to_f64(eps),
        marginal_error_l_inf: to_f64(fixed_marginal_error(lp, &row, &col)),
        primal_dual_gap: to_f64(lagrangian_gap(lp, coupling, alpha, beta, eps)?),
        truncation_bound: 0.0,
        primal_value: to_f64(primal_value(lp, coupling)?),
        absorption_count: 0,
        per_eps_iteration_counts: Vec::new(),
        converged: false,
    })
}
