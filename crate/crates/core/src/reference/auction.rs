use crate::error::{check_len, Error, Result};
use crate::scalar::Real;

/// Linear assignment problem with |X| = |Y| = n and counting marginals.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentInstance<T> {
    n: usize,
    cost: Vec<T>,
}

impl<T: Real> AssignmentInstance<T> {
    /// `cost` is row-major n×n, finite and non-negative.
    pub fn new(n: usize, cost: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidInput("assignment instance must be non-empty".into()));
        }
        check_len("assignment cost", n * n, cost.len())?;
        if let Some(c) = cost.iter().find(|c| !(c.is_finite() && **c >= T::zero())) {
            return Err(Error::InvalidInput(format!("assignment costs must be finite and >= 0, found {c}")));
        }
        Ok(AssignmentInstance { n, cost })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn cost(&self, x: usize, y: usize) -> T {
        self.cost[x * self.n + y]
    }

    pub fn max_cost(&self) -> T {
        self.cost.iter().copied().fold(T::zero(), T::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuctionResult<T> {
    /// `assignment[x]` is the y assigned to x.
    pub assignment: Vec<usize>,
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
    /// Number of bidding/assignment rounds.
    pub iterations: usize,
    pub bids: usize,
    /// Σ_x c(x, assignment[x]).
    pub value: T,
}

/// Auction algorithm with the simple bid α(x) ← c(x,y) − β(y). Ties go to the lowest index.
pub fn auction_solve<T: Real>(inst: &AssignmentInstance<T>, eps: T, beta0: Option<Vec<T>>) -> Result<AuctionResult<T>> {
    auction_solve_traced(inst, eps, beta0, |_, _, _| {})
}

/// As [`auction_solve`], calling `trace(α, β, owner)` after every assignment phase, where
/// `owner[y]` is the x currently holding y.
pub fn auction_solve_traced<T: Real>(
    inst: &AssignmentInstance<T>,
    eps: T,
    beta0: Option<Vec<T>>,
    mut trace: impl FnMut(&[T], &[T], &[Option<usize>]),
) -> Result<AuctionResult<T>> {
    if !(eps > T::zero() && eps.is_finite()) {
        return Err(Error::InvalidInput(format!("auction eps must be positive, got {eps}")));
    }
    let n = inst.n;
    let mut beta = beta0.unwrap_or_else(|| vec![T::zero(); n]);
    check_len("beta0", n, beta.len())?;
    let mut alpha = vec![T::neg_infinity(); n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut assigned: Vec<Option<usize>> = vec![None; n];
    let mut bids_for: Vec<Vec<usize>> = vec![Vec::new(); n];
    let (mut iterations, mut bids) = (0, 0);
    while assigned.iter().any(Option::is_none) {
        iterations += 1;
        for b in bids_for.iter_mut() {
            b.clear();
        }
        for x in 0..n {
            if assigned[x].is_some() {
                continue;
            }
            let mut best = 0;
            let mut best_val = inst.cost(x, 0) - beta[0];
            for y in 1..n {
                let v = inst.cost(x, y) - beta[y];
                if v < best_val {
                    best = y;
                    best_val = v;
                }
            }
            alpha[x] = best_val;
            bids_for[best].push(x);
            bids += 1;
        }
        for y in 0..n {
            if bids_for[y].is_empty() {
                continue;
            }
            if let Some(prev) = owner[y].take() {
                assigned[prev] = None;
            }
            let mut x = bids_for[y][0];
            for &cand in &bids_for[y][1..] {
                let (vc, vx) = (inst.cost(cand, y) - alpha[cand], inst.cost(x, y) - alpha[x]);
                if vc < vx || (vc == vx && cand < x) {
                    x = cand;
                }
            }
            beta[y] = inst.cost(x, y) - alpha[x] - eps;
            owner[y] = Some(x);
            assigned[x] = Some(y);
        }
        trace(&alpha, &beta, &owner);
    }
    let assignment: Vec<usize> = assigned.into_iter().map(|y| y.expect("loop ends when all are assigned")).collect();
    let value = assignment.iter().enumerate().fold(T::zero(), |a, (x, &y)| a + inst.cost(x, y));
    Ok(AuctionResult { assignment, alpha, beta, iterations, bids, value })
}
