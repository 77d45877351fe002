use super::{stabilized_entry, LevelProblem, MultiScaleProblem, PairProblem, SparseKernel};
use crate::error::{check_len, Error, Result};
use crate::hierarchy::HierarchicalDualExtension;
use crate::scalar::Real;

struct Search<'a, T: Real> {
    ms: &'a MultiScaleProblem<T>,
    lp: &'a LevelProblem<T>,
    leaf_x: usize,
    leaf_y: usize,
    ea: HierarchicalDualExtension<T>,
    eb: HierarchicalDualExtension<T>,
    alpha: &'a [T],
    beta: &'a [T],
    eps: T,
    theta: T,
    /// −ε log θ: a pair survives only if c − α − β stays below this.
    budget: T,
    triples: Vec<(usize, usize, T)>,
}

impl<T: Real> Search<'_, T> {
    fn scan(&mut self, jx: usize, a: usize, jy: usize, b: usize) -> Result<()> {
        if jx == self.leaf_x && jy == self.leaf_y {
            return self.leaf(a, b);
        }
        let (px, py) = (self.ms.partition_x(), self.ms.partition_y());
        let (ca, cb) = (px.cell(jx, a), py.cell(jy, b));
        let lb = self.ms.spec().cost.lower_bound_on_cells(&ca.bbox, &cb.bbox, px.points_of(jx, a), py.points_of(jy, b));
        let (ha, hb) = (self.ea.level(jx)[a], self.eb.level(jy)[b]);
        let slack = T::lit(1e-9) * (self.budget.abs() + ha.abs() + hb.abs() + lb.abs());
        if lb - ha - hb > self.budget + slack || ha == T::neg_infinity() || hb == T::neg_infinity() {
            return Ok(());
        }
        let split_x = jx > self.leaf_x && (jy == self.leaf_y || jx >= jy);
        let split_y = jy > self.leaf_y && (jx == self.leaf_x || jy >= jx);
        let kids_x: Vec<usize> = if split_x { ca.children.clone() } else { vec![a] };
        let kids_y: Vec<usize> = if split_y { cb.children.clone() } else { vec![b] };
        let (nx, ny) = (if split_x { jx - 1 } else { jx }, if split_y { jy - 1 } else { jy });
        for &ka in &kids_x {
            for &kb in &kids_y {
                self.scan(nx, ka, ny, kb)?;
            }
        }
        Ok(())
    }

    fn leaf(&mut self, a: usize, b: usize) -> Result<()> {
        let (Some(x), Some(y)) = (self.lp.compact_x(a), self.lp.compact_y(b)) else {
            return Ok(());
        };
        if let Some(t) = entry(self.lp, x, y, self.alpha[x], self.beta[y], self.eps, self.theta)? {
            self.triples.push(t);
        }
        Ok(())
    }
}

/// Threshold test exp(−[c − α − β]/ε) ≥ θ; ties are kept.
#[inline]
fn entry<T: Real>(lp: &LevelProblem<T>, x: usize, y: usize, a: T, b: T, eps: T, theta: T) -> Result<Option<(usize, usize, T)>> {
    let k = stabilized_entry(lp.cost(x, y), a, b, eps);
    if !(k >= theta) {
        return Ok(None);
    }
    let v = k * lp.rho(x, y);
    if !v.is_finite() {
        return Err(Error::Numerical(format!(
            "stabilized kernel entry ({x}, {y}) overflows; the absorbed duals are far from feasible"
        )));
    }
    Ok(if v > T::zero() { Some((x, y, v)) } else { None })
}

pub(crate) fn hierarchical_search<T: Real>(
    ms: &MultiScaleProblem<T>,
    level: usize,
    alpha_hat: &[T],
    beta_hat: &[T],
    eps: T,
    theta: T,
) -> Result<SparseKernel<T>> {
    let lp = ms.level(level)?;
    check_len("alpha_hat", lp.nx(), alpha_hat.len())?;
    check_len("beta_hat", lp.ny(), beta_hat.len())?;
    if !(theta > T::zero()) {
        return Err(Error::InvalidInput(format!("theta must be > 0, got {theta}")));
    }
    let (leaf_x, leaf_y) = ms.partition_levels(level);
    let ea = ms.partition_x().extend_dual_from(leaf_x, &lp.expand_x(alpha_hat, T::neg_infinity()))?;
    let eb = ms.partition_y().extend_dual_from(leaf_y, &lp.expand_y(beta_hat, T::neg_infinity()))?;
    let (top_x, top_y) = (ms.partition_x().depth(), ms.partition_y().depth());
    let mut s = Search {
        ms,
        lp,
        leaf_x,
        leaf_y,
        ea,
        eb,
        alpha: alpha_hat,
        beta: beta_hat,
        eps,
        theta,
        budget: -eps * theta.ln(),
        triples: Vec::new(),
    };
    s.scan(top_x, 0, top_y, 0)?;
    SparseKernel::from_triples(lp.nx(), lp.ny(), s.triples)
}

/// The same support and values as the hierarchical search, by testing every pair.
pub fn truncated_kernel_brute_force<T: Real>(
    lp: &LevelProblem<T>,
    alpha_hat: &[T],
    beta_hat: &[T],
    eps: T,
    theta: T,
) -> Result<SparseKernel<T>> {
    check_len("alpha_hat", lp.nx(), alpha_hat.len())?;
    check_len("beta_hat", lp.ny(), beta_hat.len())?;
    let mut triples = Vec::new();
    for x in 0..lp.nx() {
        for y in 0..lp.ny() {
            if let Some(t) = entry(lp, x, y, alpha_hat[x], beta_hat[y], eps, theta)? {
                triples.push(t);
            }
        }
    }
    SparseKernel::from_triples(lp.nx(), lp.ny(), triples)
}
