use super::{stabilized_entry, LevelProblem, PairProblem, SparseKernel, DENSE_SIDE_LIMIT};
use crate::error::{check_len, Error, Result};
use crate::scalar::{max_value, ordered_sum, Real};
use crate::solvers::ScalingState;

/// Duality-gap bookkeeping for a truncated stabilized iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapReport<T> {
    /// Ê(π) − Ĵ(α, β) on the kernel support (indicators dropped).
    pub restricted_gap: T,
    /// ‖ũ‖∞·‖ṽ‖∞·θ·ρ(X×Y).
    pub truncation_bound: T,
    /// Σ over discarded pairs of u·κ·v, when requested.
    pub discarded_mass_exact: Option<T>,
}

/// Gap report for `state` with its truncated kernel 𝒦 (built at the state's absorbed duals).
pub fn truncation_gap<T: Real>(
    lp: &LevelProblem<T>,
    state: &ScalingState<T>,
    kernel: &SparseKernel<T>,
    theta: T,
    exact: bool,
) -> Result<GapReport<T>> {
    check_len("u_tilde", kernel.rows(), state.u_tilde.len())?;
    check_len("v_tilde", kernel.cols(), state.v_tilde.len())?;
    let truncation_bound = max_value(&state.u_tilde) * max_value(&state.v_tilde) * theta * lp.rho_total();
    let (alpha, beta) = (state.alpha(), state.beta());
    let pi = kernel.scaled(&state.u_tilde, &state.v_tilde);
    let restricted_gap = lagrangian_gap(lp, &pi, &alpha, &beta, state.eps)?;
    let discarded_mass_exact = if exact { Some(discarded_mass(lp, kernel, &alpha, &beta, state.eps)?) } else { None };
    Ok(GapReport { restricted_gap, truncation_bound, discarded_mass_exact })
}

/// Σ_{(x,y) ∉ 𝒩} exp(−[c − α − β]/ε)·ρ for effective duals α, β.
pub fn discarded_mass<T: Real>(
    lp: &LevelProblem<T>,
    kernel: &SparseKernel<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<T> {
    if lp.nx() > DENSE_SIDE_LIMIT || lp.ny() > DENSE_SIDE_LIMIT {
        return Err(Error::SizeGate { what: "exact discarded mass", size: lp.nx().max(lp.ny()), limit: DENSE_SIDE_LIMIT });
    }
    let mut kept = vec![false; lp.ny()];
    let mut acc = T::zero();
    for x in 0..lp.nx() {
        let (cols, _) = kernel.row(x);
        for &c in cols {
            kept[c] = true;
        }
        for (y, &k) in kept.iter().enumerate() {
            if !k {
                acc = acc + stabilized_entry(lp.cost(x, y), alpha[x], beta[y], eps) * lp.rho(x, y);
            }
        }
        for &c in cols {
            kept[c] = false;
        }
    }
    Ok(acc)
}

/// E(π) − J(α, β) with restricted functionals on the support of π.
///
/// Evaluates as F_X-gap + F_Y-gap + ε·KL(π | exp(−[c − α ⊕ β]/ε)·ρ), every term non-negative.
/// A fixed marginal violated by more than 1e-9 of its mass makes the gap +∞.
pub fn primal_dual_gap<T: Real>(
    lp: &LevelProblem<T>,
    coupling: &SparseKernel<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<T> {
    gap_impl(lp, coupling, alpha, beta, eps, true)
}

/// As [`primal_dual_gap`] but with fixed-marginal indicators replaced by their Lagrangian terms
/// ⟨α, P_X π − μ⟩, so the value stays finite along the iterations.
pub fn lagrangian_gap<T: Real>(
    lp: &LevelProblem<T>,
    coupling: &SparseKernel<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<T> {
    gap_impl(lp, coupling, alpha, beta, eps, false)
}

fn gap_impl<T: Real>(
    lp: &LevelProblem<T>,
    pi: &SparseKernel<T>,
    alpha: &[T],
    beta: &[T],
    eps: T,
    strict: bool,
) -> Result<T> {
    check_len("coupling rows", lp.nx(), pi.rows())?;
    check_len("coupling cols", lp.ny(), pi.cols())?;
    check_len("alpha", lp.nx(), alpha.len())?;
    check_len("beta", lp.ny(), beta.len())?;
    let tol = |f: &crate::proxdiv::MarginalFunction<T>| {
        T::lit(1e-9) * f.target().map(ordered_sum).unwrap_or(T::one()).max(T::min_positive_value())
    };
    let gx = lp.fx.fenchel_young_gap(&pi.row_sums(), alpha, strict, tol(&lp.fx))?;
    let gy = lp.fy.fenchel_young_gap(&pi.col_sums(), beta, strict, tol(&lp.fy))?;
    if !gx.is_finite() || !gy.is_finite() {
        return Ok(T::infinity());
    }
    let mut kl = T::zero();
    for (x, y, p) in pi.triples() {
        let c = lp.cost(x, y);
        if c == T::infinity() {
            return Ok(T::infinity());
        }
        let log_q = lp.rho(x, y).ln() - (c - alpha[x] - beta[y]) / eps;
        kl = kl + p * (p.ln() - log_q) - p + log_q.exp();
    }
    Ok(gx + gy + eps * kl)
}

/// ⟨c, π⟩ plus the finite parts of F_X(P_X π) and F_Y(P_Y π). The entropic term is excluded.
pub fn primal_value<T: Real>(lp: &LevelProblem<T>, pi: &SparseKernel<T>) -> Result<T> {
    let mut acc = T::zero();
    for (x, y, p) in pi.triples() {
        acc = acc + lp.cost(x, y) * p;
    }
    Ok(acc + lp.fx.finite_value(&pi.row_sums())? + lp.fy.finite_value(&pi.col_sums())?)
}
