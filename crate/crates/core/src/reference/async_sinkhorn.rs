use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct AsyncSinkhornResult<T> {
    /// Row-major nx×ny coupling diag(u)·K·diag(v).
    pub coupling: Vec<T>,
    pub u: Vec<T>,
    pub v: Vec<T>,
    pub iterations: usize,
    /// q = π(X×Y) after each iteration.
    pub q_trace: Vec<T>,
}

/// Σ u(x)·K(x,y)·v(y) for a row-major kernel.
pub fn coupling_mass<T: Real>(kernel: &[T], u: &[T], v: &[T]) -> T {
    let ny = v.len();
    let mut acc = T::zero();
    for (x, &ux) in u.iter().enumerate() {
        for y in 0..ny {
            acc = acc + ux * kernel[x * ny + y] * v[y];
        }
    }
    acc
}

/// Sinkhorn with the one-sided update v ← min(v, ν ⊘ Kᵀu), run until π(X×Y) ≥ `q_target`.
///
/// The kernel is exp(−c/ε)·μ⊗ν. `cost` is row-major, finite and non-negative. Stops with an
/// error after `max_iterations` rounds.
pub fn async_sinkhorn<T: Real>(
    cost: &[T],
    mu: &[T],
    nu: &[T],
    eps: T,
    v0: Option<Vec<T>>,
    q_target: T,
    max_iterations: usize,
) -> Result<AsyncSinkhornResult<T>> {
    let (nx, ny) = (mu.len(), nu.len());
    check_len("async sinkhorn cost", nx * ny, cost.len())?;
    if cost.iter().any(|c| !(c.is_finite() && *c >= T::zero())) {
        return Err(Error::InvalidInput("costs must be finite and >= 0".into()));
    }
    if mu.iter().chain(nu).any(|m| !(*m > T::zero() && m.is_finite())) {
        return Err(Error::InvalidInput("marginals must be positive".into()));
    }
    if !(eps > T::zero()) || !(q_target > T::zero() && q_target < T::one()) {
        return Err(Error::InvalidInput("need eps > 0 and q_target in (0, 1)".into()));
    }
    let mut kernel = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            kernel.push((-cost[x * ny + y] / eps).exp() * mu[x] * nu[y]);
        }
    }
    let mut v = v0.unwrap_or_else(|| vec![T::one(); ny]);
    check_len("v0", ny, v.len())?;
    let mut u = vec![T::zero(); nx];
    let mut q_trace = Vec::new();
    for it in 1..=max_iterations {
        for x in 0..nx {
            let kv = (0..ny).fold(T::zero(), |a, y| a + kernel[x * ny + y] * v[y]);
            u[x] = mu[x] / kv;
        }
        for y in 0..ny {
            let ktu = (0..nx).fold(T::zero(), |a, x| a + kernel[x * ny + y] * u[x]);
            v[y] = v[y].min(nu[y] / ktu);
        }
        if u.iter().chain(&v).any(|s| !s.is_finite() || !(*s > T::zero())) {
            return Err(Error::Diverged { iteration: it });
        }
        let q = coupling_mass(&kernel, &u, &v);
        q_trace.push(q);
        if q >= q_target {
            let mut coupling = kernel;
            for x in 0..nx {
                for y in 0..ny {
                    coupling[x * ny + y] = u[x] * coupling[x * ny + y] * v[y];
                }
            }
            return Ok(AsyncSinkhornResult { coupling, u, v, iterations: it, q_trace });
        }
    }
    Err(Error::Numerical(format!(
        "asynchronous Sinkhorn did not reach q = {q_target} in {max_iterations} iterations (last q = {})",
        q_trace.last().copied().unwrap_or(T::zero())
    )))
}

