use super::stabilized::{check_stop_rule, mul, report_for, stop_reached};
use super::{check_eps_list, Observer, ScalingState, Solution, SolverConfig};
use crate::error::{check_len, Error, Result};
use crate::kernel::{kernel_dense, lagrangian_gap, DenseMatrix, LevelProblem, PairProblem, SparseKernel};
use crate::scalar::Real;

/// Plain alternating scaling u ← proxdiv_X(κv), v ← proxdiv_Y(κᵀu) on the dense kernel.
///
/// No absorption and no truncation. Any non-finite or vanishing scaling factor is reported
/// as [`Error::Diverged`]. The returned state holds the raw scalings in `u_tilde`/`v_tilde`
/// with zero absorbed duals.
pub fn scaling_algorithm<T: Real>(
    lp: &LevelProblem<T>,
    eps: T,
    v0: Option<Vec<T>>,
    config: &SolverConfig<T>,
    observer: &mut dyn Observer<T>,
) -> Result<Solution<T>> {
    config.validate()?;
    check_eps_list(&[eps])?;
    check_stop_rule(lp, &config.stop_rule)?;
    let kappa = kernel_dense(lp, eps)?;
    let v0 = v0.unwrap_or_else(|| vec![T::one(); lp.ny()]);
    check_len("v0", lp.ny(), v0.len())?;
    let mut state = ScalingState::new(vec![T::zero(); lp.nx()], vec![T::zero(); lp.ny()], eps);
    state.v_tilde = v0;

    let mut iterations = 0;
    let mut converged = false;
    let mut kv = kappa.apply(&state.v_tilde);
    while iterations < config.max_iterations {
        let diverged = |_| Error::Diverged { iteration: iterations + 1 };
        state.u_tilde = lp.fx.proxdiv(&kv, &state.alpha_hat, eps).map_err(diverged)?;
        let ktu = kappa.apply_transposed(&state.u_tilde);
        state.v_tilde = lp.fy.proxdiv(&ktu, &state.beta_hat, eps).map_err(diverged)?;
        iterations += 1;
        if !finite_positive(&state.u_tilde) || !finite_positive(&state.v_tilde) {
            return Err(Error::Diverged { iteration: iterations });
        }
        kv = kappa.apply(&state.v_tilde);
        observer.iteration(lp.level, iterations, &state);
        let row = mul(&state.u_tilde, &kv);
        let col = mul(&state.v_tilde, &ktu);
        if stop_reached(lp, &config.stop_rule, iterations, &row, &col, || {
            lagrangian_gap(lp, &dense_coupling(&kappa, &state.u_tilde, &state.v_tilde)?, &state.alpha(), &state.beta(), eps)
        })? {
            converged = true;
            break;
        }
    }

    let coupling = dense_coupling(&kappa, &state.u_tilde, &state.v_tilde)?;
    let mut report = report_for(lp, &coupling, &state.alpha(), &state.beta(), eps)?;
    report.iterations = iterations;
    report.per_eps_iteration_counts = vec![iterations];
    report.converged = converged;
    Ok(Solution { state, report, coupling, kernel_nnz: lp.nx() * lp.ny(), level: lp.level })
}

/// Every compact point carries mass, so every factor must be finite and positive.
fn finite_positive<T: Real>(s: &[T]) -> bool {
    s.iter().all(|&x| x.is_finite() && x > T::zero())
}

fn dense_coupling<T: Real>(k: &DenseMatrix<T>, u: &[T], v: &[T]) -> Result<SparseKernel<T>> {
    let mut triples = Vec::new();
    for (r, &ur) in u.iter().enumerate() {
        for (c, &vc) in v.iter().enumerate() {
            let p = ur * k.get(r, c) * vc;
            if p > T::zero() {
                triples.push((r, c, p));
            }
        }
    }
    SparseKernel::from_triples(k.rows, k.cols, triples)
}
