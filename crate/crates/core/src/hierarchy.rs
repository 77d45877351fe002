//! 2^d-tree partitions of grids, coarsened measures, and dual extension/refinement between levels.
//!
//! Level 0 holds the grid points as singletons and level `depth` is one cell covering everything.
//! A level-i cell with multi-index `j` covers the fine indices `j·2^i .. (j+1)·2^i` on each axis,
//! clipped to the grid, so an odd axis length leaves a last cell with a single child that merges
//! upward unpaired.

use crate::costs::{CellBox, PointCloud};
use crate::error::{check_len, Result};
use crate::measures::GridGeometry;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct Cell<T> {
    pub bbox: CellBox<T>,
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Range of this cell's points inside [`HierarchicalPartition::ordered_points`].
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level<T> {
    pub shape: Vec<usize>,
    pub cells: Vec<Cell<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalPartition<T> {
    grid: GridGeometry<T>,
    levels: Vec<Level<T>>,
    order: Vec<usize>,
    coarse_measures: Vec<Vec<T>>,
}

/// Per-level maxima of a dual vector. `per_level[i]` is empty below the level it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchicalDualExtension<T> {
    pub per_level: Vec<Vec<T>>,
}

impl<T: Real> HierarchicalDualExtension<T> {
    pub fn level(&self, i: usize) -> &[T] {
        &self.per_level[i]
    }
}

fn ceil_div(a: usize, b: usize) -> usize {
    a.div_ceil(b)
}

fn depth_for(shape: &[usize]) -> usize {
    let n = shape.iter().copied().max().unwrap_or(1);
    let mut depth = 0;
    while (1usize << depth) < n {
        depth += 1;
    }
    depth
}

fn row_major(idx: &[usize], shape: &[usize]) -> usize {
    idx.iter().zip(shape).fold(0, |acc, (&i, &n)| acc * n + i)
}

fn unravel(mut id: usize, shape: &[usize]) -> Vec<usize> {
    let mut idx = vec![0; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = id % shape[k];
        id /= shape[k];
    }
    idx
}

impl<T: Real> HierarchicalPartition<T> {
    /// Tree over the grid without attached measure.
    pub fn from_geometry(grid: &GridGeometry<T>) -> Self {
        let shape = grid.shape().to_vec();
        let depth = depth_for(&shape);
        let dim = shape.len();
        let mut levels: Vec<Level<T>> = Vec::with_capacity(depth + 1);
        for i in 0..=depth {
            let lshape: Vec<usize> = shape.iter().map(|&n| ceil_div(n, 1 << i)).collect();
            let count: usize = lshape.iter().product();
            let mut cells = Vec::with_capacity(count);
            for c in 0..count {
                let j = unravel(c, &lshape);
                let mut lo = Vec::with_capacity(dim);
                let mut hi = Vec::with_capacity(dim);
                for k in 0..dim {
                    let first = j[k] << i;
                    let last = (((j[k] + 1) << i).min(shape[k])) - 1;
                    lo.push(grid.coordinate(k, first));
                    hi.push(grid.coordinate(k, last));
                }
                let parent = if i < depth {
                    let pshape: Vec<usize> = shape.iter().map(|&n| ceil_div(n, 1 << (i + 1))).collect();
                    let pj: Vec<usize> = j.iter().map(|&x| x / 2).collect();
                    Some(row_major(&pj, &pshape))
                } else {
                    None
                };
                let children = if i > 0 {
                    let cshape = &levels[i - 1].shape;
                    let mut kids = Vec::new();
                    for mask in 0..(1usize << dim) {
                        let cj: Vec<usize> = (0..dim).map(|k| 2 * j[k] + ((mask >> (dim - 1 - k)) & 1)).collect();
                        if cj.iter().zip(cshape).all(|(&a, &n)| a < n) {
                            kids.push(row_major(&cj, cshape));
                        }
                    }
                    kids.sort_unstable();
                    kids
                } else {
                    Vec::new()
                };
                cells.push(Cell { bbox: CellBox { lo, hi }, parent, children, start: 0, end: 0 });
            }
            levels.push(Level { shape: lshape, cells });
        }
        let mut order = Vec::with_capacity(grid.len());
        assign_ranges(&mut levels, depth, 0, &mut order);
        HierarchicalPartition { grid: grid.clone(), levels, order, coarse_measures: Vec::new() }
    }

    /// Tree plus the coarsened measure at every level.
    pub fn build(grid: &GridGeometry<T>, measure: &[T]) -> Result<Self> {
        check_len("measure on partition grid", grid.len(), measure.len())?;
        let mut p = Self::from_geometry(grid);
        let mut coarse = vec![measure.to_vec()];
        for i in 1..=p.depth() {
            coarse.push(p.sum_to_parent(i - 1, &coarse[i - 1]));
        }
        p.coarse_measures = coarse;
        Ok(p)
    }

    pub fn grid(&self) -> &GridGeometry<T> {
        &self.grid
    }

    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn level(&self, i: usize) -> &Level<T> {
        &self.levels[i]
    }

    pub fn level_len(&self, i: usize) -> usize {
        self.levels[i].cells.len()
    }

    pub fn cell(&self, i: usize, c: usize) -> &Cell<T> {
        &self.levels[i].cells[c]
    }

    /// Grid point ids in depth-first tree order; every cell owns a contiguous range.
    pub fn ordered_points(&self) -> &[usize] {
        &self.order
    }

    pub fn points_of(&self, i: usize, c: usize) -> &[usize] {
        let cell = &self.levels[i].cells[c];
        &self.order[cell.start..cell.end]
    }

    /// Coarsened measure at level i; empty if the partition was built without a measure.
    pub fn coarse_measure(&self, i: usize) -> &[T] {
        self.coarse_measures.get(i).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Grid constant of level i, h·2^i.
    pub fn level_spacing(&self, i: usize) -> T {
        self.grid.spacing() * T::lit(2f64.powi(i as i32))
    }

    pub fn cell_centers(&self, i: usize) -> PointCloud<T> {
        let mut coords = Vec::with_capacity(self.level_len(i) * self.grid.dim());
        for cell in &self.levels[i].cells {
            coords.extend(cell.bbox.center());
        }
        PointCloud::new(self.grid.dim(), coords).expect("consistent dimension")
    }

    /// Sums level-i values into level i+1.
    pub fn sum_to_parent(&self, i: usize, values: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.level_len(i + 1)];
        for (c, cell) in self.levels[i + 1].cells.iter().enumerate() {
            let mut acc = T::zero();
            for &k in &cell.children {
                acc = acc + values[k];
            }
            out[c] = acc;
        }
        out
    }

    /// Sums level-`from` values up to level `to`.
    pub fn coarsen_values(&self, from: usize, to: usize, values: &[T]) -> Result<Vec<T>> {
        check_len("values at partition level", self.level_len(from), values.len())?;
        let mut cur = values.to_vec();
        for i in from..to {
            cur = self.sum_to_parent(i, &cur);
        }
        Ok(cur)
    }

    /// Number of grid points per level-i cell.
    pub fn cell_sizes(&self, i: usize) -> Vec<usize> {
        self.levels[i].cells.iter().map(|c| c.end - c.start).collect()
    }

    /// Max-propagation of a level-0 dual vector.
    pub fn extend_dual(&self, dual: &[T]) -> Result<HierarchicalDualExtension<T>> {
        self.extend_dual_from(0, dual)
    }

    /// Max-propagation of a dual vector given at level `from`.
    pub fn extend_dual_from(&self, from: usize, dual: &[T]) -> Result<HierarchicalDualExtension<T>> {
        check_len("dual at partition level", self.level_len(from), dual.len())?;
        let mut per_level = vec![Vec::new(); self.depth() + 1];
        per_level[from] = dual.to_vec();
        for i in from + 1..=self.depth() {
            let below = &per_level[i - 1];
            let vals: Vec<T> = self.levels[i]
                .cells
                .iter()
                .map(|cell| cell.children.iter().fold(T::neg_infinity(), |m, &k| m.max(below[k])))
                .collect();
            per_level[i] = vals;
        }
        Ok(HierarchicalDualExtension { per_level })
    }

    /// Piecewise-constant prolongation from level i+1 to level i.
    pub fn refine(&self, i: usize, coarse: &[T]) -> Result<Vec<T>> {
        check_len("coarse dual", self.level_len(i + 1), coarse.len())?;
        Ok(self.levels[i]
            .cells
            .iter()
            .map(|cell| coarse[cell.parent.expect("non-root cell has a parent")])
            .collect())
    }
}

/// Refines both duals from level i+1 to level i.
pub fn refine_duals<T: Real>(
    px: &HierarchicalPartition<T>,
    py: &HierarchicalPartition<T>,
    i: usize,
    coarse_alpha: &[T],
    coarse_beta: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    Ok((px.refine(i, coarse_alpha)?, py.refine(i, coarse_beta)?))
}

fn assign_ranges<T>(levels: &mut [Level<T>], i: usize, c: usize, order: &mut Vec<usize>) {
    let start = order.len();
    if i == 0 {
        order.push(c);
    } else {
        let kids = levels[i].cells[c].children.clone();
        for k in kids {
            assign_ranges(levels, i - 1, k, order);
        }
    }
    let cell = &mut levels[i].cells[c];
    cell.start = start;
    cell.end = order.len();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostFunction;
    use proptest::prelude::*;

    fn line(n: usize) -> GridGeometry<f64> {
        GridGeometry::new(vec![n], 1.0).unwrap()
    }

    #[test]
    fn single_point() {
        let p = HierarchicalPartition::build(&line(1), &[2.0]).unwrap();
        assert_eq!(p.depth(), 0);
        assert_eq!(p.level_len(0), 1);
        assert_eq!(p.coarse_measure(0), &[2.0]);
    }

    #[test]
    fn four_point_masses() {
        let p = HierarchicalPartition::build(&line(4), &[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p.depth(), 2);
        assert_eq!(p.coarse_measure(1), &[3.0, 7.0]);
        assert_eq!(p.coarse_measure(2), &[10.0]);
    }

    #[test]
    fn quadtree_counts() {
        let g = GridGeometry::<f64>::new(vec![4, 4], 1.0).unwrap();
        let p = HierarchicalPartition::from_geometry(&g);
        let counts: Vec<usize> = (0..=p.depth()).map(|i| p.level_len(i)).collect();
        assert_eq!(counts, vec![16, 4, 1]);
        assert_eq!(p.cell(1, 0).children, vec![0, 1, 4, 5]);
        assert_eq!(p.points_of(1, 3), &[10, 11, 14, 15]);
    }

    #[test]
    fn odd_lengths_merge_unpaired() {
        let g = GridGeometry::<f64>::new(vec![5, 3], 1.0).unwrap();
        let p = HierarchicalPartition::from_geometry(&g);
        assert_eq!(p.depth(), 3);
        assert_eq!(p.level(1).shape, vec![3, 2]);
        assert_eq!(p.level(2).shape, vec![2, 1]);
        assert_eq!(p.level(3).shape, vec![1, 1]);
        // last row cell at level 1 only spans fine row 4
        let last = p.cell(1, 4);
        assert_eq!(last.children.len(), 2);
        assert_eq!(p.points_of(1, 5), &[14]);
        for i in 0..=p.depth() {
            let mut seen: Vec<usize> = (0..p.level_len(i)).flat_map(|c| p.points_of(i, c).to_vec()).collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..15).collect::<Vec<_>>());
        }
    }

    #[test]
    fn dual_extension_examples() {
        let p = HierarchicalPartition::from_geometry(&line(4));
        let e = p.extend_dual(&[7.0; 4]).unwrap();
        assert!(e.per_level.iter().all(|l| l.iter().all(|&v| v == 7.0)));
        let e = p.extend_dual(&[1.0, 5.0, 2.0, 2.0]).unwrap();
        assert_eq!(e.level(1), &[5.0, 2.0]);
        assert_eq!(e.level(2), &[5.0]);
        assert!(p.extend_dual(&[1.0]).is_err());
    }

    #[test]
    fn refine_examples() {
        let p = HierarchicalPartition::<f64>::from_geometry(&line(4));
        assert_eq!(p.refine(1, &[3.0]).unwrap(), vec![3.0, 3.0]);
        assert_eq!(p.refine(0, &[1.0, 2.0]).unwrap(), vec![1.0, 1.0, 2.0, 2.0]);
        assert!(p.refine(0, &[1.0]).is_err());
        let (a, b) = refine_duals(&p, &p, 0, &[1.0, 2.0], &[0.0, -1.0]).unwrap();
        assert_eq!(b, vec![0.0, 0.0, -1.0, -1.0]);
        let back = p.extend_dual(&a).unwrap();
        assert_eq!(back.level(1), &[1.0, 2.0]);
    }

    #[test]
    fn box_lower_bounds_exhaustive_16() {
        let g = line(16);
        let p = HierarchicalPartition::from_geometry(&g);
        let c = CostFunction::squared_euclidean(&g, &g).unwrap();
        for i in 0..=p.depth() {
            for a in 0..p.level_len(i) {
                for b in 0..p.level_len(i) {
                    let (xs, ys) = (p.points_of(i, a), p.points_of(i, b));
                    let lb = c.lower_bound_on_cells(&p.cell(i, a).bbox, &p.cell(i, b).bbox, xs, ys);
                    let brute = xs
                        .iter()
                        .flat_map(|&x| ys.iter().map(move |&y| (x, y)))
                        .map(|(x, y)| c.eval(x, y))
                        .fold(f64::INFINITY, f64::min);
                    assert!(lb <= brute, "level {i} cells {a},{b}: {lb} > {brute}");
                }
            }
        }
    }

    #[test]
    fn hierarchical_constraint_exhaustive_8() {
        let g = GridGeometry::<f64>::unit(vec![8]).unwrap();
        let p = HierarchicalPartition::from_geometry(&g);
        let c = CostFunction::wfr(&g, &g).unwrap();
        let alpha: Vec<f64> = (0..8).map(|k| ((k * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let beta: Vec<f64> = (0..8).map(|k| ((k * 3) % 4) as f64 * -0.05).collect();
        let ea = p.extend_dual(&alpha).unwrap();
        let eb = p.extend_dual(&beta).unwrap();
        for i in 0..=p.depth() {
            for a in 0..p.level_len(i) {
                for b in 0..p.level_len(i) {
                    let (xs, ys) = (p.points_of(i, a), p.points_of(i, b));
                    let lb = c.lower_bound_on_cells(&p.cell(i, a).bbox, &p.cell(i, b).bbox, xs, ys);
                    let lhs = lb - ea.level(i)[a] - eb.level(i)[b];
                    for &x in xs {
                        for &y in ys {
                            assert!(lhs <= c.eval(x, y) - alpha[x] - beta[y] + 1e-15);
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn mass_telescopes(shape in prop::collection::vec(1usize..9, 1..4), seed in 0u64..1000) {
            let g = GridGeometry::<f64>::new(shape, 1.0).unwrap();
            let w: Vec<f64> = (0..g.len()).map(|k| ((k as u64 * 2654435761 + seed) % 97) as f64 / 97.0).collect();
            let total: f64 = w.iter().sum();
            let p = HierarchicalPartition::build(&g, &w).unwrap();
            for i in 0..=p.depth() {
                let s: f64 = p.coarse_measure(i).iter().sum();
                prop_assert!((s - total).abs() <= 1e-12 * total.max(1.0));
                for c in 0..p.level_len(i) {
                    let direct: f64 = p.points_of(i, c).iter().map(|&k| w[k]).sum();
                    prop_assert!((direct - p.coarse_measure(i)[c]).abs() <= 1e-12);
                }
            }
            prop_assert_eq!(p.level_len(p.depth()), 1);
            prop_assert!(p.cell(0, 0).children.is_empty());
        }

        #[test]
        fn extension_matches_brute_force(n in 1usize..65, dual in prop::collection::vec(-10.0f64..10.0, 64)) {
            let g = line(n);
            let p = HierarchicalPartition::from_geometry(&g);
            let d = &dual[..n];
            let e = p.extend_dual(d).unwrap();
            for i in 0..=p.depth() {
                for c in 0..p.level_len(i) {
                    let brute = p.points_of(i, c).iter().map(|&k| d[k]).fold(f64::NEG_INFINITY, f64::max);
                    prop_assert_eq!(e.level(i)[c], brute);
                    if i > 0 {
                        for &k in &p.cell(i, c).children {
                            prop_assert!(e.level(i)[c] >= e.level(i - 1)[k]);
                        }
                    }
                }
            }
        }
    }
}
