use super::{PairProblem, ProblemSpec, SparseKernel};
use crate::costs::{CostFunction, CostKind};
use crate::error::{check_len, Error, Result};
use crate::hierarchy::HierarchicalPartition;
use crate::proxdiv::MarginalFunction;
use crate::scalar::{ordered_sum, Real};

const NONE: usize = usize::MAX;

/// The problem at one partition level, restricted to points that can carry mass.
///
/// Points are re-indexed compactly; `x_ids[k]` is the level cell behind compact row `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelProblem<T> {
    pub level: usize,
    pub x_ids: Vec<usize>,
    pub y_ids: Vec<usize>,
    pub cost: CostFunction<T>,
    pub rho_x: Vec<T>,
    pub rho_y: Vec<T>,
    pub fx: MarginalFunction<T>,
    pub fy: MarginalFunction<T>,
    /// Grid constant of the X side at this level.
    pub spacing: T,
    x_pos: Vec<usize>,
    y_pos: Vec<usize>,
}

impl<T: Real> LevelProblem<T> {
    pub fn compact_x(&self, cell: usize) -> Option<usize> {
        self.x_pos.get(cell).copied().filter(|&k| k != NONE)
    }

    pub fn compact_y(&self, cell: usize) -> Option<usize> {
        self.y_pos.get(cell).copied().filter(|&k| k != NONE)
    }

    pub fn x_cells(&self) -> usize {
        self.x_pos.len()
    }

    pub fn y_cells(&self) -> usize {
        self.y_pos.len()
    }

    /// Scatter a compact X vector onto all level cells, filling dropped cells.
    pub fn expand_x(&self, values: &[T], fill: T) -> Vec<T> {
        let mut out = vec![fill; self.x_pos.len()];
        for (k, &c) in self.x_ids.iter().enumerate() {
            out[c] = values[k];
        }
        out
    }

    pub fn expand_y(&self, values: &[T], fill: T) -> Vec<T> {
        let mut out = vec![fill; self.y_pos.len()];
        for (k, &c) in self.y_ids.iter().enumerate() {
            out[c] = values[k];
        }
        out
    }

    /// Gather level-cell values onto the compact X points.
    pub fn gather_x(&self, full: &[T]) -> Vec<T> {
        self.x_ids.iter().map(|&c| full[c]).collect()
    }

    pub fn gather_y(&self, full: &[T]) -> Vec<T> {
        self.y_ids.iter().map(|&c| full[c]).collect()
    }
}

impl<T: Real> PairProblem<T> for LevelProblem<T> {
    fn nx(&self) -> usize {
        self.x_ids.len()
    }

    fn ny(&self) -> usize {
        self.y_ids.len()
    }

    #[inline]
    fn cost(&self, x: usize, y: usize) -> T {
        self.cost.eval(x, y)
    }

    #[inline]
    fn rho(&self, x: usize, y: usize) -> T {
        self.rho_x[x] * self.rho_y[y]
    }

    fn rho_total(&self) -> T {
        ordered_sum(&self.rho_x) * ordered_sum(&self.rho_y)
    }
}

/// A problem together with partitions of both grids and its coarsened level problems.
#[derive(Debug, Clone)]
pub struct MultiScaleProblem<T> {
    spec: ProblemSpec<T>,
    px: HierarchicalPartition<T>,
    py: HierarchicalPartition<T>,
    levels: Vec<std::result::Result<LevelProblem<T>, Error>>,
}

impl<T: Real> MultiScaleProblem<T> {
    pub fn new(spec: ProblemSpec<T>) -> Result<Self> {
        let px = HierarchicalPartition::from_geometry(&spec.grid_x);
        let py = HierarchicalPartition::from_geometry(&spec.grid_y);
        Self::with_partitions(spec, px, py)
    }

    /// Uses only level 0 (no coarse levels are built).
    pub fn single_level(spec: ProblemSpec<T>) -> Result<Self> {
        let px = HierarchicalPartition::from_geometry(&spec.grid_x);
        let py = HierarchicalPartition::from_geometry(&spec.grid_y);
        let l0 = build_level(&spec, &px, &py, 0)?;
        Ok(MultiScaleProblem { spec, px, py, levels: vec![Ok(l0)] })
    }

    pub fn with_partitions(
        spec: ProblemSpec<T>,
        px: HierarchicalPartition<T>,
        py: HierarchicalPartition<T>,
    ) -> Result<Self> {
        check_len("X partition grid", spec.grid_x.len(), px.grid().len())?;
        check_len("Y partition grid", spec.grid_y.len(), py.grid().len())?;
        let depth = px.depth().max(py.depth());
        let mut levels = Vec::with_capacity(depth + 1);
        levels.push(Ok(build_level(&spec, &px, &py, 0)?));
        for i in 1..=depth {
            levels.push(build_level(&spec, &px, &py, i));
        }
        Ok(MultiScaleProblem { spec, px, py, levels })
    }

    pub fn spec(&self) -> &ProblemSpec<T> {
        &self.spec
    }

    pub fn partition_x(&self) -> &HierarchicalPartition<T> {
        &self.px
    }

    pub fn partition_y(&self) -> &HierarchicalPartition<T> {
        &self.py
    }

    /// Coarsest level index.
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> Result<&LevelProblem<T>> {
        match self.levels.get(i) {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(e.clone()),
            None => Err(Error::InvalidInput(format!("level {i} beyond depth {}", self.depth()))),
        }
    }

    /// Partition levels used for X and Y at problem level i (shallower trees stop at their root).
    pub(crate) fn partition_levels(&self, i: usize) -> (usize, usize) {
        (i.min(self.px.depth()), i.min(self.py.depth()))
    }

    /// Truncated stabilized kernel at level i found by hierarchical search.
    pub fn truncated_kernel(
        &self,
        i: usize,
        alpha_hat: &[T],
        beta_hat: &[T],
        eps: T,
        theta: T,
    ) -> Result<SparseKernel<T>> {
        super::search::hierarchical_search(self, i, alpha_hat, beta_hat, eps, theta)
    }

    /// Prolongs compact duals at level i+1 to compact duals at level i.
    pub fn refine_duals(&self, i: usize, alpha: &[T], beta: &[T]) -> Result<(Vec<T>, Vec<T>)> {
        let coarse = self.level(i + 1)?;
        let fine = self.level(i)?;
        let (lx_c, ly_c) = self.partition_levels(i + 1);
        let (lx_f, ly_f) = self.partition_levels(i);
        let full_a = coarse.expand_x(alpha, T::zero());
        let full_b = coarse.expand_y(beta, T::zero());
        let fa = if lx_c == lx_f { full_a } else { self.px.refine(lx_f, &full_a)? };
        let fb = if ly_c == ly_f { full_b } else { self.py.refine(ly_f, &full_b)? };
        Ok((fine.gather_x(&fa), fine.gather_y(&fb)))
    }
}

fn build_level<T: Real>(
    spec: &ProblemSpec<T>,
    px: &HierarchicalPartition<T>,
    py: &HierarchicalPartition<T>,
    i: usize,
) -> Result<LevelProblem<T>> {
    let (lx, ly) = (i.min(px.depth()), i.min(py.depth()));
    let fx = spec.fx.coarsen(px, lx)?;
    let fy = spec.fy.coarsen(py, ly)?;
    let (rx0, ry0) = spec.rho.factors(spec.nx(), spec.ny());
    let rx = px.coarsen_values(0, lx, &rx0)?;
    let ry = py.coarsen_values(0, ly, &ry0)?;

    let mut x_pos = vec![NONE; px.level_len(lx)];
    let mut x_ids = Vec::new();
    for c in 0..px.level_len(lx) {
        if fx.is_active(c) && rx[c] > T::zero() {
            x_pos[c] = x_ids.len();
            x_ids.push(c);
        }
    }
    let mut y_pos = vec![NONE; py.level_len(ly)];
    let mut y_ids = Vec::new();
    for c in 0..py.level_len(ly) {
        if fy.is_active(c) && ry[c] > T::zero() {
            y_pos[c] = y_ids.len();
            y_ids.push(c);
        }
    }
    if x_ids.is_empty() || y_ids.is_empty() {
        return Err(Error::InvalidInput("problem has no point with positive mass on one side".into()));
    }

    let cost = if i == 0 {
        spec.cost.restrict(&x_ids, &y_ids)
    } else {
        match spec.cost.kind() {
            CostKind::ExplicitMatrix => {
                let mut data = Vec::with_capacity(x_ids.len() * y_ids.len());
                for &a in &x_ids {
                    for &b in &y_ids {
                        data.push(spec.cost.lower_bound_on_cells(
                            &px.cell(lx, a).bbox,
                            &py.cell(ly, b).bbox,
                            px.points_of(lx, a),
                            py.points_of(ly, b),
                        ));
                    }
                }
                CostFunction::explicit(x_ids.len(), y_ids.len(), data)?
            }
            kind => CostFunction::from_points(
                kind,
                px.cell_centers(lx).select(&x_ids),
                py.cell_centers(ly).select(&y_ids),
            )?,
        }
    };

    Ok(LevelProblem {
        level: i,
        rho_x: x_ids.iter().map(|&c| rx[c]).collect(),
        rho_y: y_ids.iter().map(|&c| ry[c]).collect(),
        fx: fx.restrict(&x_ids),
        fy: fy.restrict(&y_ids),
        spacing: px.level_spacing(lx),
        x_ids,
        y_ids,
        cost,
        x_pos,
        y_pos,
    })
}
