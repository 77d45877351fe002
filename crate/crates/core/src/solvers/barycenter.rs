use super::multiscale::default_eps_lists;
use super::stabilized::{mul, needs_absorption};
use super::{check_eps_list, to_f64, ScalingState, SolveReport, SolverConfig, StopRule};
use crate::costs::CostFunction;
use crate::error::{check_len, Error, Result};
use crate::kernel::{MultiScaleProblem, PairProblem, ProblemSpec, Rho, SparseKernel};
use crate::measures::{kl_divergence, GridGeometry};
use crate::proxdiv::{proxdiv_barycenter_consensus, proxdiv_wfr_barycenter, MarginalFunction};
use crate::scalar::{max_abs, max_value, Real};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BarycenterModel<T> {
    /// Squared Euclidean cost, exact input marginals.
    Wasserstein,
    /// WFR cost, input marginals penalized by Λ·KL.
    Wfr { big_lambda: T },
}

/// Weighted barycenter of measures on (possibly different) grids, supported on `grid_y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BarycenterProblem<T> {
    pub inputs: Vec<(GridGeometry<T>, Vec<T>)>,
    pub grid_y: GridGeometry<T>,
    pub weights: Vec<T>,
    pub model: BarycenterModel<T>,
}

#[derive(Debug, Clone)]
pub struct BarycenterSolution<T> {
    /// Barycenter weights on `grid_y`.
    pub barycenter: Vec<T>,
    pub report: SolveReport,
    /// Per-input couplings in compact indices of the finest level.
    pub couplings: Vec<SparseKernel<T>>,
    /// Per-input dual potentials (α_i, β_i) in the same indices.
    pub duals: Vec<(Vec<T>, Vec<T>)>,
}

struct Pair<'a, T: Real> {
    ms: &'a MultiScaleProblem<T>,
    state: ScalingState<T>,
    kernel: SparseKernel<T>,
}

impl<T: Real> BarycenterProblem<T> {
    fn validate(&self) -> Result<()> {
        check_len("barycenter weights", self.inputs.len(), self.weights.len())?;
        if self.inputs.is_empty() {
            return Err(Error::InvalidInput("a barycenter needs at least one input".into()));
        }
        for (g, m) in &self.inputs {
            check_len("barycenter input", g.len(), m.len())?;
        }
        MarginalFunction::barycenter(self.weights.clone())?;
        Ok(())
    }

    fn specs(&self) -> Result<Vec<ProblemSpec<T>>> {
        let gy = &self.grid_y;
        let vol = |g: &GridGeometry<T>| g.spacing().powi(g.dim() as i32);
        self.inputs
            .iter()
            .map(|(gx, mu)| match self.model {
                BarycenterModel::Wasserstein => ProblemSpec::new(
                    gx.clone(),
                    gy.clone(),
                    CostFunction::squared_euclidean(gx, gy)?,
                    Rho::Product { x: mu.clone(), y: vec![vol(gy); gy.len()] },
                    MarginalFunction::fixed(mu.clone())?,
                    MarginalFunction::barycenter(self.weights.clone())?,
                ),
                BarycenterModel::Wfr { big_lambda } => ProblemSpec::new(
                    gx.clone(),
                    gy.clone(),
                    CostFunction::wfr(gx, gy)?,
                    Rho::Uniform(vol(gx) * vol(gy)),
                    MarginalFunction::kl(mu.clone(), big_lambda)?,
                    MarginalFunction::wfr_barycenter(self.weights.clone(), big_lambda)?,
                ),
            })
            .collect()
    }
}

/// Multi-scale ε-scaling for the coupled barycenter problem.
///
/// Uses `config.eps_lists` when given, otherwise the default schedule ending at `eps_final`.
pub fn solve_barycenter<T: Real>(
    problem: &BarycenterProblem<T>,
    eps_final: T,
    config: &SolverConfig<T>,
) -> Result<BarycenterSolution<T>> {
    problem.validate()?;
    config.validate()?;
    if let (BarycenterModel::Wfr { .. }, StopRule::LInfMarginal(_)) = (problem.model, config.stop_rule) {
        return Err(Error::InvalidInput("WFR barycenters have no fixed marginal; use the gap rule".into()));
    }
    let problems: Vec<MultiScaleProblem<T>> =
        problem.specs()?.into_iter().map(MultiScaleProblem::new).collect::<Result<_>>()?;
    let depth = problems.iter().map(|p| p.depth()).min().unwrap_or(0);
    let mut lists = if config.eps_lists.is_empty() {
        default_eps_lists(&problems[0], eps_final)?
    } else {
        config.eps_lists.clone()
    };
    // levels deeper than every input fold into the coarsest shared level
    while lists.len() > depth + 1 {
        let extra = lists.pop().unwrap_or_default();
        let last = lists.len() - 1;
        lists[last] = extra.into_iter().chain(lists[last].drain(..)).collect();
    }
    for l in &lists {
        check_eps_list(l)?;
    }
    if lists.first().is_none_or(|l| l.is_empty()) {
        return Err(Error::InvalidInput("the eps list for level 0 must not be empty".into()));
    }

    let top = lists.iter().rposition(|l| !l.is_empty()).unwrap_or(0);
    let mut duals: Vec<(Vec<T>, Vec<T>)> = problems
        .iter()
        .map(|p| p.level(top).map(|lp| (vec![T::zero(); lp.nx()], vec![T::zero(); lp.ny()])))
        .collect::<Result<_>>()?;
    let mut report = SolveReport::default();
    for i in (0..=top).rev() {
        for &eps in &lists[i] {
            let (next, r, last) = run_level(problem, &problems, i, eps, duals, config)?;
            duals = next;
            report.chain(r);
            if i == 0 && Some(&eps) == lists[0].last() {
                return Ok(last);
            }
        }
        if i > 0 {
            duals = problems
                .iter()
                .zip(duals)
                .map(|(p, (a, b))| p.refine_duals(i - 1, &a, &b))
                .collect::<Result<_>>()?;
        }
    }
    unreachable!("level 0 always has an eps list")
}

type Duals<T> = Vec<(Vec<T>, Vec<T>)>;

fn run_level<T: Real>(
    problem: &BarycenterProblem<T>,
    problems: &[MultiScaleProblem<T>],
    level: usize,
    eps: T,
    duals: Duals<T>,
    config: &SolverConfig<T>,
) -> Result<(Duals<T>, SolveReport, BarycenterSolution<T>)> {
    let build = |ms: &MultiScaleProblem<T>, s: &ScalingState<T>| -> Result<SparseKernel<T>> {
        let lp = ms.level(level)?;
        let k = ms.truncated_kernel(level, &s.alpha_hat, &s.beta_hat, eps, config.theta)?;
        if let Some(r) = k.empty_row() {
            return Err(Error::Starvation { side: "row", index: lp.x_ids[r] });
        }
        Ok(k)
    };
    let mut pairs = Vec::with_capacity(problems.len());
    for (ms, (a, b)) in problems.iter().zip(duals) {
        let state = ScalingState::new(a, b, eps);
        let kernel = build(ms, &state)?;
        pairs.push(Pair { ms, state, kernel });
    }
    let weights = &problem.weights;
    let mut iterations = 0;
    let mut absorptions = 0;
    let mut converged = false;
    while iterations < config.max_iterations {
        let mut nus = Vec::with_capacity(pairs.len());
        for p in pairs.iter_mut() {
            let lp = p.ms.level(level)?;
            let kv = p.kernel.apply(&p.state.v_tilde);
            p.state.u_tilde = lp.fx.proxdiv(&kv, &p.state.alpha_hat, eps)?;
            nus.push(p.kernel.apply_transposed(&p.state.u_tilde));
        }
        let betas: Vec<Vec<T>> = pairs.iter().map(|p| p.state.beta_hat.clone()).collect();
        let vs = match problem.model {
            BarycenterModel::Wasserstein => proxdiv_barycenter_consensus(&nus, &betas, eps, weights)?,
            BarycenterModel::Wfr { big_lambda } => proxdiv_wfr_barycenter(&nus, &betas, eps, weights, big_lambda)?,
        };
        for (p, v) in pairs.iter_mut().zip(vs) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical("barycenter scaling factor is not finite".into()));
            }
            p.state.v_tilde = v;
        }
        iterations += 1;

        let done = match config.stop_rule {
            StopRule::LInfMarginal(tol) => marginal_error(&pairs, level)? <= tol,
            StopRule::PrimalDualGap(tol) => gap(problem, &pairs, level, eps)? <= tol,
            StopRule::FixedIterations(n) => iterations >= n,
            StopRule::MassTarget(q) => {
                let mass = pairs.iter().zip(weights).try_fold(T::zero(), |acc, (p, &w)| {
                    Ok::<T, Error>(acc + w * p.kernel.scaled(&p.state.u_tilde, &p.state.v_tilde).total())
                })?;
                mass >= q
            }
        };
        if done {
            converged = true;
            break;
        }
        if iterations % config.absorption_check_every == 0 {
            for p in pairs.iter_mut() {
                if needs_absorption(&p.state, config.tau) {
                    p.state.absorb();
                    p.kernel = build(p.ms, &p.state)?;
                    absorptions += 1;
                }
            }
        }
    }

    let report = SolveReport {
        iterations,
        final_eps: to_f64(eps),
        marginal_error_l_inf: match problem.model {
            BarycenterModel::Wasserstein => to_f64(marginal_error(&pairs, level)?),
            BarycenterModel::Wfr { .. } => 0.0,
        },
        primal_dual_gap: to_f64(gap(problem, &pairs, level, eps)?),
        truncation_bound: to_f64(pairs.iter().zip(weights).try_fold(T::zero(), |acc, (p, &w)| {
            let lp = p.ms.level(level)?;
            Ok::<T, Error>(
                acc + w * max_value(&p.state.u_tilde) * max_value(&p.state.v_tilde) * config.theta * lp.rho_total(),
            )
        })?),
        primal_value: to_f64(primal(problem, &pairs, level)?),
        absorption_count: absorptions,
        per_eps_iteration_counts: vec![iterations],
        converged,
    };
    let couplings: Vec<SparseKernel<T>> =
        pairs.iter().map(|p| p.kernel.scaled(&p.state.u_tilde, &p.state.v_tilde)).collect();
    let lp0 = pairs[0].ms.level(level)?;
    let mut sigma = vec![T::zero(); lp0.ny()];
    for (pi, &w) in couplings.iter().zip(weights) {
        for (s, c) in sigma.iter_mut().zip(pi.col_sums()) {
            *s = *s + w * c;
        }
    }
    let barycenter = lp0.expand_y(&sigma, T::zero());
    let final_duals = pairs.iter().map(|p| (p.state.alpha(), p.state.beta())).collect();
    let next = pairs
        .iter_mut()
        .map(|p| {
            p.state.absorb();
            (p.state.alpha_hat.clone(), p.state.beta_hat.clone())
        })
        .collect();
    Ok((next, report.clone(), BarycenterSolution { barycenter, report, couplings, duals: final_duals }))
}

fn marginal_error<T: Real>(pairs: &[Pair<'_, T>], level: usize) -> Result<T> {
    let mut err = T::zero();
    for p in pairs {
        let lp = p.ms.level(level)?;
        if let MarginalFunction::Fixed { target } = &lp.fx {
            let row = mul(&p.state.u_tilde, &p.kernel.apply(&p.state.v_tilde));
            let d: Vec<T> = row.iter().zip(target).map(|(&a, &b)| a - b).collect();
            err = err.max(max_abs(&d));
        }
    }
    Ok(err)
}

/// Σλ_i⟨c, π_i⟩ + Σλ_i F_i(P_X π_i), plus Λ·Σλ_i KL(P_Y π_i | σ̄) for the WFR model.
fn primal<T: Real>(problem: &BarycenterProblem<T>, pairs: &[Pair<'_, T>], level: usize) -> Result<T> {
    let mut acc = T::zero();
    let mut cols = Vec::with_capacity(pairs.len());
    for (p, &w) in pairs.iter().zip(&problem.weights) {
        let lp = p.ms.level(level)?;
        let pi = p.kernel.scaled(&p.state.u_tilde, &p.state.v_tilde);
        let transport = pi.triples().fold(T::zero(), |a, (x, y, m)| a + lp.cost(x, y) * m);
        acc = acc + w * (transport + lp.fx.finite_value(&pi.row_sums())?);
        cols.push(pi.col_sums());
    }
    if let BarycenterModel::Wfr { big_lambda } = problem.model {
        acc = acc + big_lambda * consensus_kl(&cols, &problem.weights)?;
    }
    Ok(acc)
}

/// Σλ_i KL(ν_i | Σ_j λ_j ν_j).
fn consensus_kl<T: Real>(cols: &[Vec<T>], weights: &[T]) -> Result<T> {
    let n = cols[0].len();
    let mut mean = vec![T::zero(); n];
    for (c, &w) in cols.iter().zip(weights) {
        for (m, &x) in mean.iter_mut().zip(c) {
            *m = *m + w * x;
        }
    }
    let mut acc = T::zero();
    for (c, &w) in cols.iter().zip(weights) {
        if w > T::zero() {
            acc = acc + w * kl_divergence(c, &mean)?;
        }
    }
    Ok(acc)
}

/// Duality gap of the coupled problem. The Wasserstein variant keeps the Lagrangian terms of
/// the fixed input marginals; the consensus constraint holds exactly after each update.
fn gap<T: Real>(problem: &BarycenterProblem<T>, pairs: &[Pair<'_, T>], level: usize, eps: T) -> Result<T> {
    let weights = &problem.weights;
    let mut acc = T::zero();
    let mut cols = Vec::with_capacity(pairs.len());
    let mut betas = Vec::with_capacity(pairs.len());
    for (p, &w) in pairs.iter().zip(weights) {
        let lp = p.ms.level(level)?;
        let (alpha, beta) = (p.state.alpha(), p.state.beta());
        let pi = p.kernel.scaled(&p.state.u_tilde, &p.state.v_tilde);
        let row = pi.row_sums();
        let col = pi.col_sums();
        let mut term = lp.fx.fenchel_young_gap(&row, &alpha, false, T::zero())?;
        let mut kl = T::zero();
        for (x, y, v) in pi.triples() {
            let log_q = lp.rho(x, y).ln() - (lp.cost(x, y) - alpha[x] - beta[y]) / eps;
            kl = kl + v * (v.ln() - log_q) - v + log_q.exp();
        }
        term = term + eps * kl + col.iter().zip(&beta).fold(T::zero(), |a, (&m, &b)| a + m * b);
        acc = acc + w * term;
        cols.push(col);
        betas.push(beta);
    }
    match problem.model {
        BarycenterModel::Wasserstein => {
            // F2 + F2* vanish when every ν_i equals the consensus; only ⟨β_i, ν_i⟩ is left, and
            // Σλ_iβ_i = 0 there, so the consensus part of the gap is exactly that inner product.
            Ok(acc)
        }
        BarycenterModel::Wfr { big_lambda } => {
            let n = cols[0].len();
            for y in 0..n {
                let s = betas
                    .iter()
                    .zip(weights)
                    .fold(T::zero(), |a, (b, &w)| a + w * (-b[y] / big_lambda).exp());
                if s > T::one() + T::lit(1e-9) {
                    return Ok(T::infinity());
                }
            }
            Ok(acc + big_lambda * consensus_kl(&cols, weights)?)
        }
    }
}
