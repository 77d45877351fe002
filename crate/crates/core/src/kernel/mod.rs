//! Problem descriptions, dense and truncated kernels, and duality-gap accounting.

mod gap;
mod level;
mod search;
mod sparse;

pub use gap::{lagrangian_gap, primal_dual_gap, primal_value, truncation_gap, GapReport};
pub use gap::discarded_mass;
pub use level::{LevelProblem, MultiScaleProblem};
pub use search::truncated_kernel_brute_force;
pub use sparse::SparseKernel;

use crate::costs::CostFunction;
use crate::error::{check_len, Error, Result};
use crate::measures::GridGeometry;
use crate::proxdiv::MarginalFunction;
use crate::scalar::{ordered_sum, Real};

/// Largest side for which dense kernels are materialized.
pub const DENSE_SIDE_LIMIT: usize = 4096;

/// Reference measure ρ on X×Y.
#[derive(Debug, Clone, PartialEq)]
pub enum Rho<T> {
    Product { x: Vec<T>, y: Vec<T> },
    Uniform(T),
}

impl<T: Real> Rho<T> {
    /// Factor vectors (ρ_X, ρ_Y) with ρ(x, y) = ρ_X(x)·ρ_Y(y).
    pub fn factors(&self, nx: usize, ny: usize) -> (Vec<T>, Vec<T>) {
        match self {
            Rho::Product { x, y } => (x.clone(), y.clone()),
            Rho::Uniform(w) => (vec![*w; nx], vec![T::one(); ny]),
        }
    }
}

/// The pieces every kernel routine needs: point counts, cost, and ρ.
pub trait PairProblem<T: Real> {
    fn nx(&self) -> usize;
    fn ny(&self) -> usize;
    fn cost(&self, x: usize, y: usize) -> T;
    fn rho(&self, x: usize, y: usize) -> T;

    /// ρ(X×Y).
    fn rho_total(&self) -> T;
}

/// A transport-type problem: cost, reference measure, and the two marginal functions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemSpec<T> {
    pub grid_x: GridGeometry<T>,
    pub grid_y: GridGeometry<T>,
    pub cost: CostFunction<T>,
    pub rho: Rho<T>,
    pub fx: MarginalFunction<T>,
    pub fy: MarginalFunction<T>,
}

impl<T: Real> ProblemSpec<T> {
    pub fn new(
        grid_x: GridGeometry<T>,
        grid_y: GridGeometry<T>,
        cost: CostFunction<T>,
        rho: Rho<T>,
        fx: MarginalFunction<T>,
        fy: MarginalFunction<T>,
    ) -> Result<Self> {
        let (nx, ny) = (grid_x.len(), grid_y.len());
        check_len("cost rows", nx, cost.x_len())?;
        check_len("cost columns", ny, cost.y_len())?;
        if let Some(n) = fx.len() {
            check_len("X marginal function", nx, n)?;
        }
        if let Some(n) = fy.len() {
            check_len("Y marginal function", ny, n)?;
        }
        match &rho {
            Rho::Product { x, y } => {
                check_len("rho X factor", nx, x.len())?;
                check_len("rho Y factor", ny, y.len())?;
                for (i, &r) in x.iter().enumerate() {
                    if !(r >= T::zero() && r.is_finite()) || (r == T::zero() && fx.is_active(i)) {
                        return Err(Error::InvalidInput(format!("rho must be positive on X, entry {i} is {r}")));
                    }
                }
                for (j, &r) in y.iter().enumerate() {
                    if !(r >= T::zero() && r.is_finite()) || (r == T::zero() && fy.is_active(j)) {
                        return Err(Error::InvalidInput(format!("rho must be positive on Y, entry {j} is {r}")));
                    }
                }
            }
            Rho::Uniform(w) => {
                if !(*w > T::zero() && w.is_finite()) {
                    return Err(Error::InvalidInput(format!("uniform rho must be positive, got {w}")));
                }
            }
        }
        Ok(ProblemSpec { grid_x, grid_y, cost, rho, fx, fy })
    }

    /// Balanced transport between μ and ν with ρ = μ⊗ν.
    pub fn optimal_transport(
        grid_x: GridGeometry<T>,
        grid_y: GridGeometry<T>,
        cost: CostFunction<T>,
        mu: Vec<T>,
        nu: Vec<T>,
    ) -> Result<Self> {
        let rho = Rho::Product { x: mu.clone(), y: nu.clone() };
        Self::new(grid_x, grid_y, cost, rho, MarginalFunction::fixed(mu)?, MarginalFunction::fixed(nu)?)
    }

    /// Transport with λ·KL marginal fidelity on both sides and ρ the product Lebesgue measure h^d ⊗ h^d.
    pub fn unbalanced(
        grid_x: GridGeometry<T>,
        grid_y: GridGeometry<T>,
        cost: CostFunction<T>,
        mu: Vec<T>,
        nu: Vec<T>,
        lambda: T,
    ) -> Result<Self> {
        let w = grid_x.spacing().powi(grid_x.dim() as i32) * grid_y.spacing().powi(grid_y.dim() as i32);
        Self::new(grid_x, grid_y, cost, Rho::Uniform(w), MarginalFunction::kl(mu, lambda)?, MarginalFunction::kl(nu, lambda)?)
    }

    /// Balanced transport for an explicit cost table on index grids.
    pub fn explicit_transport(cost: CostFunction<T>, mu: Vec<T>, nu: Vec<T>) -> Result<Self> {
        let gx = GridGeometry::index_line(cost.x_len())?;
        let gy = GridGeometry::index_line(cost.y_len())?;
        Self::optimal_transport(gx, gy, cost, mu, nu)
    }
}

impl<T: Real> PairProblem<T> for ProblemSpec<T> {
    fn nx(&self) -> usize {
        self.grid_x.len()
    }

    fn ny(&self) -> usize {
        self.grid_y.len()
    }

    fn cost(&self, x: usize, y: usize) -> T {
        self.cost.eval(x, y)
    }

    fn rho(&self, x: usize, y: usize) -> T {
        match &self.rho {
            Rho::Product { x: rx, y: ry } => rx[x] * ry[y],
            Rho::Uniform(w) => *w,
        }
    }

    fn rho_total(&self) -> T {
        match &self.rho {
            Rho::Product { x, y } => ordered_sum(x) * ordered_sum(y),
            Rho::Uniform(w) => *w * T::from_usize_lossy(self.nx() * self.ny()),
        }
    }
}

/// Row-major dense matrix used by the reference paths.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    pub fn apply(&self, v: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|r| {
                let row = &self.data[r * self.cols..(r + 1) * self.cols];
                row.iter().zip(v).fold(T::zero(), |a, (&k, &x)| a + k * x)
            })
            .collect()
    }

    pub fn apply_transposed(&self, u: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for (r, &ur) in u.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &k) in out.iter_mut().zip(row) {
                *o = *o + k * ur;
            }
        }
        out
    }
}

fn gate<T: Real, P: PairProblem<T>>(p: &P) -> Result<()> {
    for n in [p.nx(), p.ny()] {
        if n > DENSE_SIDE_LIMIT {
            return Err(Error::SizeGate { what: "dense kernel side", size: n, limit: DENSE_SIDE_LIMIT });
        }
    }
    Ok(())
}

/// κ = exp(−c/ε)·ρ; infinite costs give exact zeros.
pub fn kernel_dense<T: Real, P: PairProblem<T>>(p: &P, eps: T) -> Result<DenseMatrix<T>> {
    gate(p)?;
    let (nx, ny) = (p.nx(), p.ny());
    let mut data = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            data.push((-p.cost(x, y) / eps).exp() * p.rho(x, y));
        }
    }
    Ok(DenseMatrix { rows: nx, cols: ny, data })
}

/// 𝒦 = exp(−[c − α ⊕ β]/ε)·ρ with the cancellation done inside the exponent.
pub fn stabilized_kernel_dense<T: Real, P: PairProblem<T>>(
    p: &P,
    alpha: &[T],
    beta: &[T],
    eps: T,
) -> Result<DenseMatrix<T>> {
    gate(p)?;
    check_len("alpha", p.nx(), alpha.len())?;
    check_len("beta", p.ny(), beta.len())?;
    let (nx, ny) = (p.nx(), p.ny());
    let mut data = Vec::with_capacity(nx * ny);
    for x in 0..nx {
        for y in 0..ny {
            data.push(stabilized_entry(p.cost(x, y), alpha[x], beta[y], eps) * p.rho(x, y));
        }
    }
    Ok(DenseMatrix { rows: nx, cols: ny, data })
}

/// exp(−[c − a − b]/ε), with exp(−∞) = 0.
#[inline]
pub fn stabilized_entry<T: Real>(c: T, a: T, b: T, eps: T) -> T {
    if c == T::infinity() {
        return T::zero();
    }
    (-(c - a - b) / eps).exp()
}
