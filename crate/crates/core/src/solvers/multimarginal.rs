use super::multiscale::eps_ladder;
use super::{check_eps_list, to_f64, SolveReport, SolverConfig, StopRule};
use crate::error::{check_len, Error, Result};
use crate::scalar::{max_value, min_value, ordered_sum, Real};

/// Largest number of tensor cells accepted.
pub const MULTI_MARGINAL_LIMIT: usize = 1_000_000;

/// Dense n-way cost table, row-major (last axis fastest). Entries may be +∞.
#[derive(Debug, Clone, PartialEq)]
pub struct CostTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Real> CostTensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.len() < 2 || shape.contains(&0) {
            return Err(Error::InvalidInput("a cost tensor needs at least two non-empty axes".into()));
        }
        let size = shape.iter().try_fold(1usize, |a, &n| a.checked_mul(n)).unwrap_or(usize::MAX);
        if size > MULTI_MARGINAL_LIMIT {
            return Err(Error::SizeGate { what: "multi-marginal cost tensor", size, limit: MULTI_MARGINAL_LIMIT });
        }
        check_len("cost tensor data", size, data.len())?;
        if data.iter().any(|c| c.is_nan() || *c == T::neg_infinity()) {
            return Err(Error::InvalidInput("cost tensor entries must be finite or +inf".into()));
        }
        Ok(CostTensor { shape, data })
    }

    /// Tabulates `f` over the product grid.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let size = shape.iter().try_fold(1usize, |a, &n| a.checked_mul(n)).unwrap_or(usize::MAX);
        if size > MULTI_MARGINAL_LIMIT {
            return Err(Error::SizeGate { what: "multi-marginal cost tensor", size, limit: MULTI_MARGINAL_LIMIT });
        }
        let mut idx = vec![0; shape.len()];
        let mut data = Vec::with_capacity(size);
        for _ in 0..size {
            data.push(f(&idx));
            advance(&mut idx, &shape);
        }
        Self::new(shape, data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }
}

fn advance(idx: &mut [usize], shape: &[usize]) {
    for a in (0..idx.len()).rev() {
        idx[a] += 1;
        if idx[a] < shape[a] {
            return;
        }
        idx[a] = 0;
    }
}

#[derive(Debug, Clone)]
pub struct MultiMarginalSolution<T> {
    /// One dual vector per axis; points with zero mass get −∞.
    pub duals: Vec<Vec<T>>,
    /// Coupling entries (multi-index, mass) on the final truncated support.
    pub entries: Vec<(Vec<usize>, T)>,
    pub marginal_errors: Vec<T>,
    pub report: SolveReport,
}

struct Tensor<T> {
    n: usize,
    idx: Vec<u32>,
    val: Vec<T>,
}

impl<T: Real> Tensor<T> {
    fn len(&self) -> usize {
        self.val.len()
    }

    fn at(&self, e: usize) -> &[u32] {
        &self.idx[e * self.n..(e + 1) * self.n]
    }

    /// Axis-`axis` marginal of the tensor scaled by the factors of every axis.
    fn marginal(&self, axis: usize, factors: &[Vec<T>], len: usize) -> Vec<T> {
        let mut out = vec![T::zero(); len];
        for e in 0..self.len() {
            let ix = self.at(e);
            let mut p = self.val[e];
            for (a, f) in factors.iter().enumerate() {
                if a != axis {
                    p = p * f[ix[a] as usize];
                }
            }
            out[ix[axis] as usize] = out[ix[axis] as usize] + p;
        }
        out
    }
}

/// Cyclic Sinkhorn over n marginals with dual absorption and kernel truncation.
///
/// Runs the ε ladder in `config.eps_lists[0]` if given, otherwise halves from the largest
/// finite cost down to `eps`. Each axis update makes that marginal exact.
pub fn solve_multi_marginal<T: Real>(
    cost: &CostTensor<T>,
    marginals: &[Vec<T>],
    eps: T,
    config: &SolverConfig<T>,
) -> Result<MultiMarginalSolution<T>> {
    config.validate()?;
    let n = cost.shape.len();
    check_len("marginal count", n, marginals.len())?;
    for (m, &s) in marginals.iter().zip(&cost.shape) {
        check_len("marginal length", s, m.len())?;
        if m.iter().any(|&x| !(x >= T::zero() && x.is_finite())) {
            return Err(Error::InvalidInput("marginal weights must be finite and >= 0".into()));
        }
    }
    if matches!(config.stop_rule, StopRule::PrimalDualGap(_)) {
        return Err(Error::InvalidInput("the multi-marginal solver supports marginal, iteration and mass rules".into()));
    }
    let ladder = match config.eps_lists.first() {
        Some(l) if !l.is_empty() => l.clone(),
        _ => {
            let c = cost.data.iter().copied().filter(|c| c.is_finite()).fold(T::zero(), T::max);
            eps_ladder(c.max(eps), eps, T::lit(0.5))?
        }
    };
    check_eps_list(&ladder)?;

    let mut alpha: Vec<Vec<T>> = marginals.iter().map(|m| vec![T::zero(); m.len()]).collect();
    let mut report = SolveReport::default();
    let mut last = None;
    for &e in &ladder {
        let (tensor, u, r) = run_eps(cost, marginals, &alpha, e, config)?;
        for (a, ua) in alpha.iter_mut().zip(&u) {
            for (x, &s) in a.iter_mut().zip(ua) {
                *x = *x + e * s.ln();
            }
        }
        report.chain(r);
        last = Some((tensor, u));
    }
    let (tensor, u) = last.expect("ladder is non-empty");
    let mut entries = Vec::with_capacity(tensor.len());
    for e in 0..tensor.len() {
        let ix = tensor.at(e);
        let p = ix.iter().enumerate().fold(tensor.val[e], |p, (a, &i)| p * u[a][i as usize]);
        if p > T::zero() {
            entries.push((ix.iter().map(|&i| i as usize).collect(), p));
        }
    }
    let marginal_errors = (0..n)
        .map(|a| {
            let m = tensor.marginal(a, &u, marginals[a].len());
            u[a].iter().zip(&m).zip(&marginals[a]).fold(T::zero(), |acc, ((&f, &x), &t)| acc.max((f * x - t).abs()))
        })
        .collect::<Vec<_>>();
    for (a, m) in alpha.iter_mut().zip(marginals) {
        for (x, &w) in a.iter_mut().zip(m) {
            if w == T::zero() {
                *x = T::neg_infinity();
            }
        }
    }
    report.marginal_error_l_inf = to_f64(max_value(&marginal_errors));
    Ok(MultiMarginalSolution { duals: alpha, entries, marginal_errors, report })
}

fn build<T: Real>(cost: &CostTensor<T>, marginals: &[Vec<T>], alpha: &[Vec<T>], eps: T, theta: T) -> Result<Tensor<T>> {
    let n = cost.shape.len();
    let mut idx = vec![0usize; n];
    let mut t = Tensor { n, idx: Vec::new(), val: Vec::new() };
    for &c in &cost.data {
        let mut rho = T::one();
        let mut s = T::zero();
        for a in 0..n {
            rho = rho * marginals[a][idx[a]];
            s = s + alpha[a][idx[a]];
        }
        if c.is_finite() && rho > T::zero() {
            let k = (-(c - s) / eps).exp();
            if k >= theta {
                let v = k * rho;
                if !v.is_finite() {
                    return Err(Error::Numerical("multi-marginal kernel entry overflows".into()));
                }
                if v > T::zero() {
                    t.idx.extend(idx.iter().map(|&i| i as u32));
                    t.val.push(v);
                }
            }
        }
        advance(&mut idx, &cost.shape);
    }
    Ok(t)
}

type EpsRun<T> = (Tensor<T>, Vec<Vec<T>>, SolveReport);

fn run_eps<T: Real>(
    cost: &CostTensor<T>,
    marginals: &[Vec<T>],
    alpha0: &[Vec<T>],
    eps: T,
    config: &SolverConfig<T>,
) -> Result<EpsRun<T>> {
    let n = cost.shape.len();
    let mut alpha = alpha0.to_vec();
    let mut u: Vec<Vec<T>> = marginals.iter().map(|m| vec![T::one(); m.len()]).collect();
    let mut tensor = build(cost, marginals, &alpha, eps, config.theta)?;
    let mut iterations = 0;
    let mut absorptions = 0;
    let mut converged = false;
    let mut err = T::infinity();
    while iterations < config.max_iterations {
        for a in 0..n {
            let m = tensor.marginal(a, &u, marginals[a].len());
            for (i, (&t, &s)) in marginals[a].iter().zip(&m).enumerate() {
                if t > T::zero() && !(s > T::zero()) {
                    return Err(Error::Starvation { side: "axis point", index: i });
                }
                u[a][i] = if t > T::zero() { t / s } else { T::one() };
            }
        }
        iterations += 1;
        err = (0..n - 1)
            .map(|a| {
                let m = tensor.marginal(a, &u, marginals[a].len());
                marginals[a]
                    .iter()
                    .zip(&m)
                    .zip(&u[a])
                    .fold(T::zero(), |acc, ((&t, &x), &f)| acc.max((f * x - t).abs()))
            })
            .fold(T::zero(), T::max);
        let done = match config.stop_rule {
            StopRule::LInfMarginal(tol) => err <= tol,
            StopRule::FixedIterations(k) => iterations >= k,
            StopRule::MassTarget(q) => {
                let m = tensor.marginal(n - 1, &u, marginals[n - 1].len());
                ordered_sum(&u[n - 1].iter().zip(&m).map(|(&f, &x)| f * x).collect::<Vec<_>>()) >= q
            }
            StopRule::PrimalDualGap(_) => unreachable!("rejected before solving"),
        };
        if done {
            converged = true;
            break;
        }
        if iterations % config.absorption_check_every == 0
            && u.iter().any(|v| max_value(v) > config.tau || min_value(v) < config.tau.recip())
        {
            for (a, ua) in alpha.iter_mut().zip(u.iter_mut()) {
                for (x, s) in a.iter_mut().zip(ua.iter_mut()) {
                    *x = *x + eps * s.ln();
                    *s = T::one();
                }
            }
            tensor = build(cost, marginals, &alpha, eps, config.theta)?;
            absorptions += 1;
        }
    }
    let mut primal = T::zero();
    for e in 0..tensor.len() {
        let ix = tensor.at(e);
        let off = ix.iter().zip(&cost.shape).fold(0, |off, (&i, &s)| off * s + i as usize);
        let p = ix.iter().enumerate().fold(tensor.val[e], |p, (a, &i)| p * u[a][i as usize]);
        primal = primal + cost.data[off] * p;
    }
    let report = SolveReport {
        iterations,
        final_eps: to_f64(eps),
        marginal_error_l_inf: to_f64(err),
        primal_dual_gap: f64::NAN,
        truncation_bound: to_f64(
            u.iter().fold(T::one(), |acc, v| acc * max_value(v))
                * config.theta
                * marginals.iter().fold(T::one(), |acc, m| acc * ordered_sum(m)),
        ),
        primal_value: to_f64(primal),
        absorption_count: absorptions,
        per_eps_iteration_counts: vec![iterations],
        converged,
    };
    Ok((tensor, u, report))
}

/// Pushes a multi-marginal coupling on 1-d axes through x̄ = Σλ_i x_i and spreads each mass
/// linearly onto the two nearest points of the sorted `target` coordinates.
pub fn project_barycenter<T: Real>(
    entries: &[(Vec<usize>, T)],
    axis_coords: &[Vec<T>],
    weights: &[T],
    target: &[T],
) -> Result<Vec<T>> {
    check_len("projection weights", axis_coords.len(), weights.len())?;
    if target.is_empty() || target.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidInput("target coordinates must be strictly increasing".into()));
    }
    let mut out = vec![T::zero(); target.len()];
    for (ix, p) in entries {
        check_len("entry arity", axis_coords.len(), ix.len())?;
        let xbar = ix.iter().enumerate().fold(T::zero(), |acc, (a, &i)| acc + weights[a] * axis_coords[a][i]);
        let j = target.partition_point(|&t| t <= xbar);
        if j == 0 {
            out[0] = out[0] + *p;
        } else if j == target.len() {
            out[j - 1] = out[j - 1] + *p;
        } else {
            let (l, r) = (target[j - 1], target[j]);
            let w = (xbar - l) / (r - l);
            out[j - 1] = out[j - 1] + (T::one() - w) * *p;
            out[j] = out[j] + w * *p;
        }
    }
    Ok(out)
}
