//! Cost functions between point sets and box lower bounds for the hierarchical kernel search.

use crate::error::{check_len, Error, Result};
use crate::measures::GridGeometry;
use crate::scalar::Real;

/// Points in R^d stored flat with stride `dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud<T> {
    dim: usize,
    coords: Vec<T>,
}

impl<T: Real> PointCloud<T> {
    pub fn new(dim: usize, coords: Vec<T>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::InvalidInput(format!(
                "{} coordinates do not split into points of dimension {dim}",
                coords.len()
            )));
        }
        Ok(PointCloud { dim, coords })
    }

    pub fn from_grid(grid: &GridGeometry<T>) -> Self {
        PointCloud { dim: grid.dim(), coords: grid.coordinates() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[T] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn select(&self, ids: &[usize]) -> Self {
        let mut coords = Vec::with_capacity(ids.len() * self.dim);
        for &i in ids {
            coords.extend_from_slice(self.point(i));
        }
        PointCloud { dim: self.dim, coords }
    }

    pub fn bounding_box(&self) -> CellBox<T> {
        let mut lo = vec![T::infinity(); self.dim];
        let mut hi = vec![T::neg_infinity(); self.dim];
        for i in 0..self.len() {
            for (k, &c) in self.point(i).iter().enumerate() {
                lo[k] = lo[k].min(c);
                hi[k] = hi[k].max(c);
            }
        }
        CellBox { lo, hi }
    }
}

/// Closed axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBox<T> {
    pub lo: Vec<T>,
    pub hi: Vec<T>,
}

impl<T: Real> CellBox<T> {
    pub fn point(p: &[T]) -> Self {
        CellBox { lo: p.to_vec(), hi: p.to_vec() }
    }

    pub fn center(&self) -> Vec<T> {
        self.lo.iter().zip(&self.hi).map(|(&a, &b)| (a + b) / T::lit(2.0)).collect()
    }

    /// Squared Euclidean distance between the boxes; 0 when they overlap.
    pub fn distance_sq(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for k in 0..self.lo.len() {
            let gap = (self.lo[k] - other.hi[k]).max(other.lo[k] - self.hi[k]).max(T::zero());
            acc = acc + gap * gap;
        }
        acc
    }

    /// Largest squared distance between a point of `self` and a point of `other`.
    pub fn max_distance_sq(&self, other: &Self) -> T {
        let mut acc = T::zero();
        for k in 0..self.lo.len() {
            let d = (self.hi[k] - other.lo[k]).abs().max((other.hi[k] - self.lo[k]).abs());
            acc = acc + d * d;
        }
        acc
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostKind {
    SquaredEuclidean,
    WassersteinFisherRao,
    ExplicitMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CostFunction<T> {
    SquaredEuclidean { x: PointCloud<T>, y: PointCloud<T> },
    WassersteinFisherRao { x: PointCloud<T>, y: PointCloud<T> },
    /// Row-major table; entries may be +∞.
    ExplicitMatrix { rows: usize, cols: usize, data: Vec<T> },
}

/// −log cos²(d) for d < π/2, +∞ beyond.
#[inline]
pub fn wfr_cost_from_distance<T: Real>(d: T) -> T {
    if d >= T::FRAC_PI_2() {
        return T::infinity();
    }
    let c = d.cos();
    let floor = T::lit(1e-300).max(T::min_positive_value());
    -((c * c).max(floor)).ln()
}

impl<T: Real> CostFunction<T> {
    pub fn squared_euclidean(x: &GridGeometry<T>, y: &GridGeometry<T>) -> Result<Self> {
        check_len("grid dimension", x.dim(), y.dim())?;
        Ok(CostFunction::SquaredEuclidean { x: PointCloud::from_grid(x), y: PointCloud::from_grid(y) })
    }

    pub fn wfr(x: &GridGeometry<T>, y: &GridGeometry<T>) -> Result<Self> {
        check_len("grid dimension", x.dim(), y.dim())?;
        Ok(CostFunction::WassersteinFisherRao { x: PointCloud::from_grid(x), y: PointCloud::from_grid(y) })
    }

    pub fn from_points(kind: CostKind, x: PointCloud<T>, y: PointCloud<T>) -> Result<Self> {
        check_len("point dimension", x.dim(), y.dim())?;
        match kind {
            CostKind::SquaredEuclidean => Ok(CostFunction::SquaredEuclidean { x, y }),
            CostKind::WassersteinFisherRao => Ok(CostFunction::WassersteinFisherRao { x, y }),
            CostKind::ExplicitMatrix => Err(Error::InvalidInput("explicit costs are not built from points".into())),
        }
    }

    pub fn explicit(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        check_len("explicit cost matrix", rows * cols, data.len())?;
        if let Some(v) = data.iter().find(|v| v.is_nan() || **v == T::neg_infinity()) {
            return Err(Error::InvalidInput(format!("cost entry {v} not allowed")));
        }
        Ok(CostFunction::ExplicitMatrix { rows, cols, data })
    }

    pub fn kind(&self) -> CostKind {
        match self {
            CostFunction::SquaredEuclidean { .. } => CostKind::SquaredEuclidean,
            CostFunction::WassersteinFisherRao { .. } => CostKind::WassersteinFisherRao,
            CostFunction::ExplicitMatrix { .. } => CostKind::ExplicitMatrix,
        }
    }

    pub fn x_len(&self) -> usize {
        match self {
            CostFunction::SquaredEuclidean { x, .. } | CostFunction::WassersteinFisherRao { x, .. } => x.len(),
            CostFunction::ExplicitMatrix { rows, .. } => *rows,
        }
    }

    pub fn y_len(&self) -> usize {
        match self {
            CostFunction::SquaredEuclidean { y, .. } | CostFunction::WassersteinFisherRao { y, .. } => y.len(),
            CostFunction::ExplicitMatrix { cols, .. } => *cols,
        }
    }

    /// Checked evaluation.
    pub fn evaluate(&self, x: usize, y: usize) -> Result<T> {
        if x >= self.x_len() || y >= self.y_len() {
            return Err(Error::InvalidInput(format!(
                "point pair ({x}, {y}) outside {}x{} cost",
                self.x_len(),
                self.y_len()
            )));
        }
        Ok(self.eval(x, y))
    }

    /// Unchecked evaluation for inner loops. Panics on out-of-range ids.
    #[inline]
    pub fn eval(&self, x: usize, y: usize) -> T {
        match self {
            CostFunction::SquaredEuclidean { x: px, y: py } => sq_dist(px.point(x), py.point(y)),
            CostFunction::WassersteinFisherRao { x: px, y: py } => {
                wfr_cost_from_distance(sq_dist(px.point(x), py.point(y)).sqrt())
            }
            CostFunction::ExplicitMatrix { cols, data, .. } => data[x * cols + y],
        }
    }

    /// Lower bound on the cost over all pairs of two cells.
    ///
    /// Geometric costs use the box distance; explicit matrices take the exact minimum over the
    /// listed point ids.
    pub fn lower_bound_on_cells(&self, bx: &CellBox<T>, by: &CellBox<T>, xs: &[usize], ys: &[usize]) -> T {
        match self {
            CostFunction::SquaredEuclidean { .. } => bx.distance_sq(by),
            CostFunction::WassersteinFisherRao { .. } => wfr_cost_from_distance(bx.distance_sq(by).sqrt()),
            CostFunction::ExplicitMatrix { cols, data, .. } => {
                let mut m = T::infinity();
                for &x in xs {
                    let row = &data[x * cols..(x + 1) * cols];
                    for &y in ys {
                        m = m.min(row[y]);
                    }
                }
                m
            }
        }
    }

    /// Sub-problem on the given point ids, in the given order.
    pub fn restrict(&self, xs: &[usize], ys: &[usize]) -> Self {
        match self {
            CostFunction::SquaredEuclidean { x, y } => {
                CostFunction::SquaredEuclidean { x: x.select(xs), y: y.select(ys) }
            }
            CostFunction::WassersteinFisherRao { x, y } => {
                CostFunction::WassersteinFisherRao { x: x.select(xs), y: y.select(ys) }
            }
            CostFunction::ExplicitMatrix { cols, data, .. } => {
                let mut out = Vec::with_capacity(xs.len() * ys.len());
                for &i in xs {
                    for &j in ys {
                        out.push(data[i * cols + j]);
                    }
                }
                CostFunction::ExplicitMatrix { rows: xs.len(), cols: ys.len(), data: out }
            }
        }
    }

    /// Largest finite cost value, the natural top of an ε ladder.
    pub fn max_finite(&self) -> T {
        match self {
            CostFunction::SquaredEuclidean { x, y } => x.bounding_box().max_distance_sq(&y.bounding_box()),
            CostFunction::WassersteinFisherRao { x, y } => {
                let d = x.bounding_box().max_distance_sq(&y.bounding_box()).sqrt();
                // the cost blows up at π/2; cap where it is still moderate
                wfr_cost_from_distance(d.min(T::lit(1.4)))
            }
            CostFunction::ExplicitMatrix { data, .. } => data
                .iter()
                .filter(|v| v.is_finite())
                .fold(T::zero(), |m, &v| m.max(v.abs())),
        }
    }
}

#[inline]
fn sq_dist<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = T::zero();
    for (&p, &q) in a.iter().zip(b) {
        let d = p - q;
        acc = acc + d * d;
    }
    acc
}
