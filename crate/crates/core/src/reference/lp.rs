use std::collections::VecDeque;

use crate::error::{check_len, Error, Result};
use crate::scalar::{ordered_sum, Real};

/// Largest side accepted by [`lp_oracle`].
pub const LP_SIDE_LIMIT: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub value: T,
    /// Row-major optimal coupling.
    pub coupling: Vec<T>,
    /// Optimal duals with α[0] = 0.
    pub alpha: Vec<T>,
    pub beta: Vec<T>,
}

/// Exact unregularized transport by the transportation simplex method.
///
/// Starts from the northwest-corner basis, prices with row/column potentials and pivots
/// with Bland's rule (first improving cell in row-major order, lowest-index leaving cell).
pub fn lp_oracle<T: Real>(mu: &[T], nu: &[T], cost: &[T]) -> Result<LpSolution<T>> {
    let (m, n) = (mu.len(), nu.len());
    if m == 0 || n == 0 {
        return Err(Error::InvalidInput("empty marginal".into()));
    }
    for s in [m, n] {
        if s > LP_SIDE_LIMIT {
            return Err(Error::SizeGate { what: "LP oracle side", size: s, limit: LP_SIDE_LIMIT });
        }
    }
    check_len("LP cost", m * n, cost.len())?;
    if cost.iter().any(|c| !c.is_finite()) {
        return Err(Error::InvalidInput("LP oracle needs a finite cost".into()));
    }
    if mu.iter().chain(nu).any(|w| !(*w >= T::zero() && w.is_finite())) {
        return Err(Error::InvalidInput("marginals must be finite and >= 0".into()));
    }
    let (sm, sn) = (ordered_sum(mu), ordered_sum(nu));
    if (sm - sn).abs() > T::lit(1e-9) * sm.max(sn).max(T::one()) {
        return Err(Error::InvalidInput(format!("marginal masses differ: {sm} vs {sn}")));
    }

    let mut flow = vec![T::zero(); m * n];
    let mut basic = vec![false; m * n];
    let (mut supply, mut demand) = (mu.to_vec(), nu.to_vec());
    let (mut i, mut j) = (0, 0);
    loop {
        let x = supply[i].min(demand[j]);
        flow[i * n + j] = x;
        basic[i * n + j] = true;
        supply[i] = supply[i] - x;
        demand[j] = demand[j] - x;
        if i == m - 1 && j == n - 1 {
            break;
        }
        if j == n - 1 || (i < m - 1 && supply[i] <= demand[j]) {
            i += 1;
        } else {
            j += 1;
        }
    }
    let scale = cost.iter().fold(T::zero(), |a, c| a.max(c.abs())).max(T::one());
    let tol = T::lit(1e-12) * scale;
    let max_pivots = 50 * m * n * (m + n);
    for _ in 0..max_pivots {
        let (u, v) = potentials(&basic, cost, m, n);
        let entering = (0..m * n).find(|&k| !basic[k] && cost[k] - u[k / n] - v[k % n] < -tol);
        let Some(e) = entering else {
            let value = (0..m * n).fold(T::zero(), |a, k| a + cost[k] * flow[k]);
            return Ok(LpSolution { value, coupling: flow, alpha: u, beta: v });
        };
        let cycle = basis_path(&basic, m, n, e % n, e / n);
        // cycle[0] is adjacent to the entering column and carries −θ; signs alternate
        let mut theta = T::infinity();
        let mut leave = usize::MAX;
        for (p, &k) in cycle.iter().enumerate() {
            if p % 2 == 0 && (flow[k] < theta || (flow[k] == theta && k < leave)) {
                theta = flow[k];
                leave = k;
            }
        }
        flow[e] = theta;
        for (p, &k) in cycle.iter().enumerate() {
            flow[k] = if p % 2 == 0 { flow[k] - theta } else { flow[k] + theta };
        }
        flow[leave] = T::zero();
        basic[e] = true;
        basic[leave] = false;
    }
    Err(Error::Numerical("transportation simplex did not terminate".into()))
}

/// Row/column potentials with u[0] = 0 and u_i + v_j = c_ij on the basis tree.
fn potentials<T: Real>(basic: &[bool], cost: &[T], m: usize, n: usize) -> (Vec<T>, Vec<T>) {
    let mut u = vec![T::nan(); m];
    let mut v = vec![T::nan(); n];
    u[0] = T::zero();
    let mut queue = VecDeque::from([0usize]);
    while let Some(node) = queue.pop_front() {
        if node < m {
            for j in 0..n {
                if basic[node * n + j] && v[j].is_nan() {
                    v[j] = cost[node * n + j] - u[node];
                    queue.push_back(m + j);
                }
            }
        } else {
            let j = node - m;
            for i in 0..m {
                if basic[i * n + j] && u[i].is_nan() {
                    u[i] = cost[i * n + j] - v[j];
                    queue.push_back(i);
                }
            }
        }
    }
    (u, v)
}

/// Basic cells on the tree path from column `col` to row `row`, in order.
fn basis_path(basic: &[bool], m: usize, n: usize, col: usize, row: usize) -> Vec<usize> {
    let start = m + col;
    let mut prev = vec![usize::MAX; m + n];
    prev[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(node) = queue.pop_front() {
        if node == row {
            break;
        }
        let nbrs: Vec<usize> = if node < m {
            (0..n).filter(|&j| basic[node * n + j]).map(|j| m + j).collect()
        } else {
            (0..m).filter(|&i| basic[i * n + node - m]).collect()
        };
        for nb in nbrs {
            if prev[nb] == usize::MAX {
                prev[nb] = node;
                queue.push_back(nb);
            }
        }
    }
    let mut cells = Vec::new();
    let mut node = row;
    while node != start {
        let p = prev[node];
        let (r, c) = if node < m { (node, p - m) } else { (p, node - m) };
        cells.push(r * n + c);
        node = p;
    }
    cells.reverse();
    cells
}
