use crate::costs::CostFunction;
use crate::error::{check_len, Error, Result};
use crate::kernel::{MultiScaleProblem, ProblemSpec};
use crate::solvers::{eps_ladder, eps_scaling, NoObserver, Solution, SolverConfig, StopRule};
use crate::scalar::{max_value, min_value, Real};
use nalgebra::{DMatrix, DVector};

/// Marginals μ = r/M, ν = s/M with positive integer counts summing to M.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AtomicMarginals {
    r: Vec<u64>,
    s: Vec<u64>,
    m: u64,
}

impl AtomicMarginals {
    pub fn new(r: Vec<u64>, s: Vec<u64>) -> Result<Self> {
        if r.is_empty() || s.is_empty() || r.iter().chain(&s).any(|&k| k == 0) {
            return Err(Error::InvalidInput("atom counts must be positive".into()));
        }
        let (mr, ms): (u64, u64) = (r.iter().sum(), s.iter().sum());
        if mr != ms {
            return Err(Error::InvalidInput(format!("atom counts sum to {mr} and {ms}")));
        }
        Ok(AtomicMarginals { r, s, m: mr })
    }

    pub fn atoms(&self) -> u64 {
        self.m
    }

    pub fn mu<T: Real>(&self) -> Vec<T> {
        self.r.iter().map(|&k| T::lit(k as f64) / T::lit(self.m as f64)).collect()
    }

    pub fn nu<T: Real>(&self) -> Vec<T> {
        self.s.iter().map(|&k| T::lit(k as f64) / T::lit(self.m as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    /// max Δα − min Δα.
    pub oscillation_alpha: T,
    pub oscillation_beta: T,
    /// ε₁·N·(4 log N + 24 log M).
    pub bound: T,
    /// Some solve did not reach the target accuracy; the comparison is then not meaningful.
    pub inconclusive: bool,
}

impl<T: Real> StabilityReport<T> {
    pub fn holds(&self) -> bool {
        !self.inconclusive && self.oscillation_alpha <= self.bound && self.oscillation_beta <= self.bound
    }
}

pub fn stability_bound<T: Real>(eps1: T, n: usize, m: u64) -> T {
    let nf = T::from_usize_lossy(n);
    eps1 * nf * (T::lit(4.0) * nf.ln() + T::lit(24.0) * T::lit(m as f64).ln())
}

/// Solves entropic transport at ε₁ and then ε₂ (warm-started from ε₁) to tight marginal
/// tolerance and compares the oscillations of the dual differences with the stability bound.
pub fn stability_experiment<T: Real>(
    cost: &[T],
    marginals: &AtomicMarginals,
    eps1: T,
    eps2: T,
) -> Result<StabilityReport<T>> {
    if !(eps1 >= eps2 && eps2 > T::zero()) {
        return Err(Error::InvalidInput("need eps1 >= eps2 > 0".into()));
    }
    let (nx, ny) = (marginals.r.len(), marginals.s.len());
    check_len("stability cost", nx * ny, cost.len())?;
    let spec = ProblemSpec::explicit_transport(
        CostFunction::explicit(nx, ny, cost.to_vec())?,
        marginals.mu(),
        marginals.nu(),
    )?;
    let ms = MultiScaleProblem::single_level(spec)?;
    let config = SolverConfig {
        theta: T::lit(1e-300).max(T::min_positive_value()),
        stop_rule: StopRule::LInfMarginal(T::lit(1e-10)),
        max_iterations: 20_000,
        ..SolverConfig::default()
    };
    let top = ms.spec().cost.max_finite().max(eps1);
    let ladder = eps_ladder(top, eps1, T::lit(0.5))?;
    let zeros = (vec![T::zero(); nx], vec![T::zero(); ny]);
    let first = eps_scaling(&ms, 0, &ladder, zeros.0, zeros.1, &config, &mut NoObserver)?;
    let second: Solution<T> = if eps2 == eps1 {
        first.clone()
    } else {
        let (a, b) = (first.state.alpha_hat.clone(), first.state.beta_hat.clone());
        eps_scaling(&ms, 0, &[eps2], a, b, &config, &mut NoObserver)?
    };
    // Atomic marginals often admit sub-blocks of equal mass. The optimal coupling then
    // splits into blocks joined by mass of order exp(-gap/eps), Sinkhorn stalls and the
    // duals stay inaccurate along that flat direction, so both solves are finished with Newton.
    let (mu, nu): (Vec<f64>, Vec<f64>) = (marginals.mu(), marginals.nu());
    let c64: Vec<f64> = cost.iter().map(|x| x.as_f64()).collect();
    let polish = |sol: &Solution<T>, eps: T| {
        let a = sol.state.alpha_hat.iter().map(|x| x.as_f64()).collect();
        let b = sol.state.beta_hat.iter().map(|x| x.as_f64()).collect();
        newton_dual(&c64, &mu, &nu, eps.as_f64(), a, b)
    };
    let (a1, b1, ok1) = polish(&first, eps1);
    let (a2, b2, ok2) = polish(&second, eps2);
    let back = |v: Vec<f64>| -> Vec<T> { v.into_iter().map(T::lit).collect() };
    let (a1, b1, a2, b2) = (back(a1), back(b1), back(a2), back(b2));
    let osc = |a: &[T], b: &[T]| {
        let d: Vec<T> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
        max_value(&d) - min_value(&d)
    };
    Ok(StabilityReport {
        oscillation_alpha: osc(&a2, &a1),
        oscillation_beta: osc(&b2, &b1),
        bound: stability_bound(eps1, nx.max(ny), marginals.m),
        inconclusive: !(ok1 && ok2),
    })
}

/// Largest marginal violation accepted after Newton polishing.
const NEWTON_TOL: f64 = 1e-13;

/// Damped Newton ascent on the entropic dual
/// J(α, β) = ⟨α, μ⟩ + ⟨β, ν⟩ − ε Σ exp((α_i + β_j − c_ij)/ε) μ_i ν_j,
/// with the last β fixed to remove the constant shift. Returns the duals and whether
/// the marginals were matched to `NEWTON_TOL`.
fn newton_dual(
    cost: &[f64],
    mu: &[f64],
    nu: &[f64],
    eps: f64,
    mut alpha: Vec<f64>,
    mut beta: Vec<f64>,
) -> (Vec<f64>, Vec<f64>, bool) {
    let (nx, ny) = (mu.len(), nu.len());
    if alpha.iter().chain(&beta).any(|x| !x.is_finite()) {
        return (alpha, beta, false);
    }
    let shift = beta[ny - 1];
    alpha.iter_mut().for_each(|a| *a += shift);
    beta.iter_mut().for_each(|b| *b -= shift);
    let plan = |a: &[f64], b: &[f64]| -> Vec<f64> {
        let mut p = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                let c = cost[i * ny + j];
                if c.is_finite() {
                    p[i * ny + j] = ((a[i] + b[j] - c) / eps).exp() * mu[i] * nu[j];
                }
            }
        }
        p
    };
    let grad = |p: &[f64]| -> Vec<f64> {
        let mut g: Vec<f64> = mu.iter().chain(nu).copied().collect();
        for i in 0..nx {
            for j in 0..ny {
                g[i] -= p[i * ny + j];
                g[nx + j] -= p[i * ny + j];
            }
        }
        g
    };
    let objective = |a: &[f64], b: &[f64], p: &[f64]| -> f64 {
        let lin: f64 = a.iter().zip(mu).chain(b.iter().zip(nu)).map(|(x, m)| x * m).sum();
        lin - eps * p.iter().sum::<f64>()
    };
    let norm = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let dim = nx + ny - 1;
    let mut p = plan(&alpha, &beta);
    let mut g = grad(&p);
    for _ in 0..200 {
        if norm(&g) <= NEWTON_TOL {
            break;
        }
        let mut h = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..nx {
            for j in 0..ny {
                let v = p[i * ny + j] / eps;
                h[(i, i)] += v;
                if j < ny - 1 {
                    h[(nx + j, nx + j)] += v;
                    h[(i, nx + j)] += v;
                    h[(nx + j, i)] += v;
                }
            }
        }
        let rhs = DVector::from_column_slice(&g[..dim]);
        let Some(d) = h.lu().solve(&rhs) else { break };
        let j0 = objective(&alpha, &beta, &p);
        let slope: f64 = d.iter().zip(&g).map(|(x, y)| x * y).sum();
        let mut t = 1.0;
        let mut accepted = false;
        while t > 1e-12 {
            let a: Vec<f64> = (0..nx).map(|i| alpha[i] + t * d[i]).collect();
            let b: Vec<f64> = (0..ny).map(|j| if j < ny - 1 { beta[j] + t * d[nx + j] } else { 0.0 }).collect();
            let pt = plan(&a, &b);
            let gt = grad(&pt);
            let jt = objective(&a, &b, &pt);
            // Close to the optimum J is flat to rounding, so a smaller gradient also counts.
            if jt.is_finite() && (jt >= j0 + 1e-4 * t * slope || norm(&gt) < 0.5 * norm(&g)) {
                (alpha, beta, p, g) = (a, b, pt, gt);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let ok = norm(&g) <= NEWTON_TOL;
    (alpha, beta, ok)
}
