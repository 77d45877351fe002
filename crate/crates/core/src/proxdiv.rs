//! Marginal functions F_X, F_Y and their stabilized proxdiv operators.
//!
//! Every operator takes the stabilized form `(σ, γ) ↦ ProxKL_F(exp(−γ/ε)·σ) ⊘ σ`, where γ holds
//! the absorbed duals. With γ = 0 this is the plain proxdiv of the scaling algorithm.

use crate::error::{check_len, Error, Result};
use crate::hierarchy::HierarchicalPartition;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub enum MarginalFunction<T> {
    /// ι_{μ}: hard marginal constraint.
    Fixed { target: Vec<T> },
    /// λ·KL(·|μ).
    KlFidelity { target: Vec<T>, lambda: T },
    /// Second-marginal coupling of a Wasserstein barycenter.
    BarycenterConsensus { weights: Vec<T> },
    /// Second-marginal coupling of a barycenter with KL fidelity of strength Λ.
    WfrBarycenterConsensus { weights: Vec<T>, big_lambda: T },
    /// 2τ·Σ (m²/ℒ + v·m); v = +∞ marks a barrier.
    PorousMedium { tau: T, potential: Vec<T>, lebesgue: Vec<T> },
}

fn check_weights<T: Real>(w: &[T]) -> Result<()> {
    if w.is_empty() || w.iter().any(|&x| !(x >= T::zero()) || !x.is_finite()) {
        return Err(Error::InvalidInput("barycenter weights must be finite and >= 0".into()));
    }
    let s = w.iter().fold(T::zero(), |a, &b| a + b);
    if (s - T::one()).abs() > T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) {
        return Err(Error::InvalidInput(format!("barycenter weights sum to {s}, expected 1")));
    }
    Ok(())
}

fn check_target<T: Real>(t: &[T]) -> Result<()> {
    if let Some(v) = t.iter().find(|v| !(v.is_finite() && **v >= T::zero())) {
        return Err(Error::InvalidInput(format!("marginal target entry {v} must be finite and >= 0")));
    }
    Ok(())
}

impl<T: Real> MarginalFunction<T> {
    pub fn fixed(target: Vec<T>) -> Result<Self> {
        check_target(&target)?;
        Ok(MarginalFunction::Fixed { target })
    }

    pub fn kl(target: Vec<T>, lambda: T) -> Result<Self> {
        check_target(&target)?;
        if !(lambda > T::zero()) {
            return Err(Error::InvalidInput(format!("KL fidelity weight must be > 0, got {lambda}")));
        }
        Ok(MarginalFunction::KlFidelity { target, lambda })
    }

    pub fn barycenter(weights: Vec<T>) -> Result<Self> {
        check_weights(&weights)?;
        Ok(MarginalFunction::BarycenterConsensus { weights })
    }

    pub fn wfr_barycenter(weights: Vec<T>, big_lambda: T) -> Result<Self> {
        check_weights(&weights)?;
        if !(big_lambda > T::zero()) {
            return Err(Error::InvalidInput(format!("fidelity weight must be > 0, got {big_lambda}")));
        }
        Ok(MarginalFunction::WfrBarycenterConsensus { weights, big_lambda })
    }

    pub fn porous_medium(tau: T, potential: Vec<T>, lebesgue: Vec<T>) -> Result<Self> {
        check_len("porous medium lebesgue", potential.len(), lebesgue.len())?;
        if !(tau > T::zero()) {
            return Err(Error::InvalidInput(format!("time step must be > 0, got {tau}")));
        }
        if potential.iter().any(|v| v.is_nan() || *v == T::neg_infinity()) {
            return Err(Error::InvalidInput("potential entries must be finite or +inf".into()));
        }
        if lebesgue.iter().any(|&l| !(l > T::zero() && l.is_finite())) {
            return Err(Error::InvalidInput("cell volumes must be positive".into()));
        }
        Ok(MarginalFunction::PorousMedium { tau, potential, lebesgue })
    }

    /// Point count for per-point variants.
    pub fn len(&self) -> Option<usize> {
        match self {
            MarginalFunction::Fixed { target } | MarginalFunction::KlFidelity { target, .. } => Some(target.len()),
            MarginalFunction::PorousMedium { potential, .. } => Some(potential.len()),
            _ => None,
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, MarginalFunction::Fixed { .. })
    }

    pub fn target(&self) -> Option<&[T]> {
        match self {
            MarginalFunction::Fixed { target } | MarginalFunction::KlFidelity { target, .. } => Some(target),
            _ => None,
        }
    }

    /// Whether point `i` can carry mass. Zero-target and barrier points are dropped before solving.
    pub fn is_active(&self, i: usize) -> bool {
        match self {
            MarginalFunction::Fixed { target } | MarginalFunction::KlFidelity { target, .. } => target[i] > T::zero(),
            MarginalFunction::PorousMedium { potential, .. } => potential[i].is_finite(),
            _ => true,
        }
    }

    /// Whether every active point must receive mass. A porous-medium point may end up empty,
    /// so an empty kernel column there is not an error.
    pub fn requires_mass(&self) -> bool {
        !matches!(self, MarginalFunction::PorousMedium { .. })
    }

    /// Sub-function on the listed points.
    pub fn restrict(&self, ids: &[usize]) -> Self {
        let pick = |v: &Vec<T>| ids.iter().map(|&i| v[i]).collect::<Vec<T>>();
        match self {
            MarginalFunction::Fixed { target } => MarginalFunction::Fixed { target: pick(target) },
            MarginalFunction::KlFidelity { target, lambda } => {
                MarginalFunction::KlFidelity { target: pick(target), lambda: *lambda }
            }
            MarginalFunction::PorousMedium { tau, potential, lebesgue } => {
                MarginalFunction::PorousMedium { tau: *tau, potential: pick(potential), lebesgue: pick(lebesgue) }
            }
            other => other.clone(),
        }
    }

    /// Representation at partition level `level`: targets are summed over cells.
    /// Barycenter consensus carries no per-point data and passes through unchanged.
    pub fn coarsen(&self, partition: &HierarchicalPartition<T>, level: usize) -> Result<Self> {
        if level == 0 {
            return Ok(self.clone());
        }
        match self {
            MarginalFunction::Fixed { target } => {
                Ok(MarginalFunction::Fixed { target: partition.coarsen_values(0, level, target)? })
            }
            MarginalFunction::KlFidelity { target, lambda } => Ok(MarginalFunction::KlFidelity {
                target: partition.coarsen_values(0, level, target)?,
                lambda: *lambda,
            }),
            MarginalFunction::BarycenterConsensus { .. } | MarginalFunction::WfrBarycenterConsensus { .. } => {
                Ok(self.clone())
            }
            MarginalFunction::PorousMedium { .. } => Err(Error::InvalidInput(
                "the porous-medium marginal has no coarse-level representation; solve it on level 0".into(),
            )),
        }
    }

    /// Stabilized proxdiv for the single-marginal variants.
    pub fn proxdiv(&self, sigma: &[T], gamma: &[T], eps: T) -> Result<Vec<T>> {
        match self {
            MarginalFunction::Fixed { target } => proxdiv_fixed(sigma, gamma, eps, target),
            MarginalFunction::KlFidelity { target, lambda } => proxdiv_kl(sigma, gamma, eps, target, *lambda),
            MarginalFunction::PorousMedium { tau, potential, lebesgue } => {
                proxdiv_porous_medium(sigma, gamma, eps, *tau, potential, lebesgue)
            }
            _ => Err(Error::InvalidInput(
                "barycenter consensus couples several problems; use the barycenter solvers".into(),
            )),
        }
    }

    /// F(s) + F*(−α) + ⟨α, s⟩ ≥ 0, the Fenchel-Young gap of this marginal term.
    ///
    /// For a fixed marginal, `strict` evaluates the indicator (any entry off by more than
    /// `feasibility_tol` gives +∞); otherwise the indicator is dropped and the Lagrangian
    /// term ⟨α, s − μ⟩ remains.
    pub fn fenchel_young_gap(&self, s: &[T], alpha: &[T], strict: bool, feasibility_tol: T) -> Result<T> {
        check_len("marginal vs dual", s.len(), alpha.len())?;
        if let Some(n) = self.len() {
            check_len("marginal vs function", n, s.len())?;
        }
        let two = T::lit(2.0);
        let mut acc = T::zero();
        match self {
            MarginalFunction::Fixed { target } => {
                for i in 0..s.len() {
                    let d = s[i] - target[i];
                    if strict && d.abs() > feasibility_tol {
                        return Ok(T::infinity());
                    }
                    acc = acc + alpha[i] * d;
                }
            }
            MarginalFunction::KlFidelity { target, lambda } => {
                let l = *lambda;
                for i in 0..s.len() {
                    let (m, mu, a) = (s[i], target[i], alpha[i]);
                    let kl = if m > T::zero() {
                        if mu == T::zero() {
                            return Ok(T::infinity());
                        }
                        m * (m / mu).ln() - m + mu
                    } else {
                        mu
                    };
                    acc = acc + l * kl + l * (-a / l).exp_m1() * mu + a * m;
                }
            }
            MarginalFunction::PorousMedium { tau, potential, lebesgue } => {
                let t2 = two * *tau;
                for i in 0..s.len() {
                    let (m, v, l, a) = (s[i], potential[i], lebesgue[i], alpha[i]);
                    if !v.is_finite() {
                        if m > T::zero() {
                            return Ok(T::infinity());
                        }
                        continue;
                    }
                    let g = t2 * (m * m / l + v * m);
                    let b = (-a - t2 * v).max(T::zero());
                    let gstar = b * b * l / (T::lit(4.0) * t2);
                    acc = acc + g + gstar + a * m;
                }
            }
            _ => {
                return Err(Error::InvalidInput("consensus terms have no single-marginal gap".into()));
            }
        }
        Ok(acc)
    }

    /// F(s) with the fixed-marginal indicator dropped (it is 0 on feasible points).
    pub fn finite_value(&self, s: &[T]) -> Result<T> {
        Ok(match self {
            MarginalFunction::Fixed { .. } => T::zero(),
            MarginalFunction::KlFidelity { target, lambda } => *lambda * crate::measures::kl_divergence(s, target)?,
            MarginalFunction::PorousMedium { tau, potential, lebesgue } => {
                check_len("porous medium value", potential.len(), s.len())?;
                let t2 = T::lit(2.0) * *tau;
                let mut acc = T::zero();
                for i in 0..s.len() {
                    if s[i] == T::zero() {
                        continue;
                    }
                    acc = acc + t2 * (s[i] * s[i] / lebesgue[i] + potential[i] * s[i]);
                }
                acc
            }
            _ => return Err(Error::InvalidInput("consensus terms have no single-marginal value".into())),
        })
    }
}

/// μ ⊘ σ. Independent of γ and ε.
pub fn proxdiv_fixed<T: Real>(sigma: &[T], gamma: &[T], _eps: T, target: &[T]) -> Result<Vec<T>> {
    check_len("proxdiv sigma", target.len(), sigma.len())?;
    check_len("proxdiv gamma", target.len(), gamma.len())?;
    let mut out = Vec::with_capacity(sigma.len());
    for (i, (&m, &s)) in target.iter().zip(sigma).enumerate() {
        if m > T::zero() && !(s > T::zero()) {
            return Err(Error::Starvation { side: "row", index: i });
        }
        out.push(if m > T::zero() { m / s } else { T::zero() });
    }
    Ok(out)
}

/// exp(−γ/(λ+ε)) ⊙ (μ ⊘ σ)^{λ/(λ+ε)}.
pub fn proxdiv_kl<T: Real>(sigma: &[T], gamma: &[T], eps: T, target: &[T], lambda: T) -> Result<Vec<T>> {
    check_len("proxdiv sigma", target.len(), sigma.len())?;
    check_len("proxdiv gamma", target.len(), gamma.len())?;
    let p = lambda / (lambda + eps);
    let mut out = Vec::with_capacity(sigma.len());
    for i in 0..sigma.len() {
        if target[i] > T::zero() && !(sigma[i] > T::zero()) {
            return Err(Error::Starvation { side: "row", index: i });
        }
        out.push((-gamma[i] / (lambda + eps)).exp() * (target[i] / sigma[i]).powf(p));
    }
    Ok(out)
}

/// Consensus update of the Wasserstein barycenter: σ = exp(Σ λ_i (log ν_i − β_i/ε)),
/// returns (σ ⊘ ν_i)_i. σ is always formed in the log domain. Zero entries of ν_i are floored.
pub fn proxdiv_barycenter_consensus<T: Real>(
    nus: &[Vec<T>],
    betas: &[Vec<T>],
    eps: T,
    weights: &[T],
) -> Result<Vec<Vec<T>>> {
    let n = check_family(nus, betas, weights)?;
    let log_sigma = consensus_log_sigma(nus, betas, eps, weights, n)?;
    Ok(nus
        .iter()
        .map(|nu| nu.iter().zip(&log_sigma).map(|(&v, &ls)| ls.exp() / v.max(T::min_positive_value())).collect())
        .collect())
}

/// log σ of the consensus update.
pub fn consensus_log_sigma<T: Real>(
    nus: &[Vec<T>],
    betas: &[Vec<T>],
    eps: T,
    weights: &[T],
    n: usize,
) -> Result<Vec<T>> {
    let mut log_sigma = vec![T::zero(); n];
    for (i, (nu, beta)) in nus.iter().zip(betas).enumerate() {
        if weights[i] == T::zero() {
            continue;
        }
        for y in 0..n {
            log_sigma[y] = log_sigma[y] + weights[i] * (floored(nu[y])?.ln() - beta[y] / eps);
        }
    }
    Ok(log_sigma)
}

/// A truncated kernel may leave a barycenter point without entries. Its ν is then taken as the
/// smallest positive normal number, so the point keeps negligible mass and finite duals.
fn floored<T: Real>(nu: T) -> Result<T> {
    if nu >= T::zero() && nu.is_finite() {
        Ok(nu.max(T::min_positive_value()))
    } else {
        Err(Error::Numerical(format!("barycenter column sum {nu}")))
    }
}

fn check_family<T: Real>(nus: &[Vec<T>], betas: &[Vec<T>], weights: &[T]) -> Result<usize> {
    check_len("barycenter inputs", weights.len(), nus.len())?;
    check_len("barycenter duals", weights.len(), betas.len())?;
    let n = nus.first().map(|v| v.len()).unwrap_or(0);
    for (nu, beta) in nus.iter().zip(betas) {
        check_len("barycenter input length", n, nu.len())?;
        check_len("barycenter dual length", n, beta.len())?;
    }
    Ok(n)
}

/// v-update of the barycenter with KL fidelity Λ:
/// ν_i^{−Λ/(ε+Λ)} · exp(−β_i/(ε+Λ)) · (Σ_j λ_j ν_j^{ε/(ε+Λ)} exp(−β_j/(ε+Λ)))^{Λ/ε},
/// with the inner sum accumulated as a log-sum-exp.
pub fn proxdiv_wfr_barycenter<T: Real>(
    nus: &[Vec<T>],
    betas: &[Vec<T>],
    eps: T,
    weights: &[T],
    big_lambda: T,
) -> Result<Vec<Vec<T>>> {
    let n = check_family(nus, betas, weights)?;
    let denom = eps + big_lambda;
    let mut log_s = vec![T::zero(); n];
    let mut terms = vec![T::zero(); nus.len()];
    for y in 0..n {
        let mut top = T::neg_infinity();
        for (j, (nu, beta)) in nus.iter().zip(betas).enumerate() {
            terms[j] = if weights[j] > T::zero() {
                weights[j].ln() + (eps * floored(nu[y])?.ln() - beta[y]) / denom
            } else {
                T::neg_infinity()
            };
            top = top.max(terms[j]);
        }
        let s = terms.iter().fold(T::zero(), |acc, &t| acc + (t - top).exp());
        log_s[y] = top + s.ln();
    }
    let outer = big_lambda / eps;
    Ok(nus
        .iter()
        .zip(betas)
        .map(|(nu, beta)| {
            (0..n)
                .map(|y| (-(big_lambda / denom) * nu[y].max(T::min_positive_value()).ln() - beta[y] / denom + outer * log_s[y]).exp())
                .collect()
        })
        .collect())
}

/// Stabilized proxdiv of 2τ·Σ (m²/ℒ + v·m): m = (εℒ/4τ)·W(z) with
/// log z = log(4τ/(εℒ)) + log σ − (γ + 2τv)/ε, returned as m ⊘ σ. Barrier points give 0,
/// points with σ = 0 give the limit of m/σ.
pub fn proxdiv_porous_medium<T: Real>(
    sigma: &[T],
    gamma: &[T],
    eps: T,
    tau: T,
    potential: &[T],
    lebesgue: &[T],
) -> Result<Vec<T>> {
    check_len("proxdiv sigma", potential.len(), sigma.len())?;
    check_len("proxdiv gamma", potential.len(), gamma.len())?;
    check_len("proxdiv lebesgue", potential.len(), lebesgue.len())?;
    let four_tau = T::lit(4.0) * tau;
    let two_tau = T::lit(2.0) * tau;
    let mut out = Vec::with_capacity(sigma.len());
    for i in 0..sigma.len() {
        if !potential[i].is_finite() {
            out.push(T::zero());
            continue;
        }
        if !(sigma[i] >= T::zero()) {
            return Err(Error::Numerical(format!("proxdiv input {i} is {}", sigma[i])));
        }
        if sigma[i] == T::zero() {
            // W(z) ~ z as z -> 0, so m/σ tends to exp(-(γ + 2τv)/ε)
            out.push((-(gamma[i] + two_tau * potential[i]) / eps).exp());
            continue;
        }
        let l = lebesgue[i];
        let log_z = (four_tau / (eps * l)).ln() + sigma[i].ln() - (gamma[i] + two_tau * potential[i]) / eps;
        let m = eps * l / four_tau * lambert_w_exp(log_z);
        out.push(m / sigma[i]);
    }
    Ok(out)
}

/// Principal branch of the Lambert W function for z ≥ 0.
pub fn lambert_w<T: Real>(z: T) -> T {
    if z.is_nan() || z < T::zero() {
        return T::nan();
    }
    if z == T::zero() {
        return T::zero();
    }
    if z.is_infinite() {
        return z;
    }
    let log_z = z.ln();
    if log_z > T::lit(20.0) {
        return lambert_w_exp(log_z);
    }
    let mut w = if z <= T::E() {
        z.ln_1p()
    } else {
        log_z - log_z.ln()
    };
    let two = T::lit(2.0);
    for _ in 0..64 {
        let ew = w.exp();
        let f = w * ew - z;
        let wp1 = w + T::one();
        let dw = f / (ew * wp1 - (w + two) * f / (two * wp1));
        w = w - dw;
        if dw.abs() <= T::lit(4.0) * T::epsilon() * w.abs() {
            break;
        }
    }
    w
}

/// W(exp(s)) without forming exp(s). Above s = 20 this starts from the asymptotic
/// expansion s − log s + log s / s and refines with Newton steps on w + log w = s.
pub fn lambert_w_exp<T: Real>(s: T) -> T {
    if s.is_nan() {
        return s;
    }
    if s == T::infinity() {
        return s;
    }
    if s <= T::lit(20.0) {
        return lambert_w(s.exp());
    }
    let ls = s.ln();
    let mut w = s - ls + ls / s;
    for _ in 0..32 {
        let g = w + w.ln() - s;
        let dw = g / (T::one() + T::one() / w);
        w = w - dw;
        if dw.abs() <= T::lit(4.0) * T::epsilon() * w {
            break;
        }
    }
    w
}
