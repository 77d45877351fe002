#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scaling_ot::costs::CostFunction;
use scaling_ot::kernel::{MultiScaleProblem, ProblemSpec};
use scaling_ot::measures::GridGeometry;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Unit-interval grid with n cells of width 1/n.
pub fn line(n: usize) -> GridGeometry<f64> {
    GridGeometry::new(vec![n], 1.0 / n as f64).unwrap()
}

/// Normalized Gaussian bump on the grid plus a small floor so every point has mass.
pub fn bump(grid: &GridGeometry<f64>, center: f64, width: f64, floor: f64) -> Vec<f64> {
    normalize(
        grid.coordinates()
            .iter()
            .map(|x| (-(x - center).powi(2) / (2.0 * width * width)).exp() + floor)
            .collect(),
    )
}

pub fn random_positive(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    normalize((0..n).map(|_| rng.gen_range(0.2..1.0)).collect())
}

/// Squared-Euclidean transport between two bumps on an n-point line, full hierarchy.
pub fn line_problem(n: usize, a: (f64, f64), b: (f64, f64)) -> MultiScaleProblem<f64> {
    let g = line(n);
    let mu = bump(&g, a.0, a.1, 1e-3);
    let nu = bump(&g, b.0, b.1, 1e-3);
    let cost = CostFunction::squared_euclidean(&g, &g).unwrap();
    MultiScaleProblem::new(ProblemSpec::optimal_transport(g.clone(), g, cost, mu, nu).unwrap()).unwrap()
}

/// Same as [`line_problem`] but without the hierarchy.
pub fn line_problem_flat(n: usize, a: (f64, f64), b: (f64, f64)) -> MultiScaleProblem<f64> {
    MultiScaleProblem::single_level(line_problem(n, a, b).spec().clone()).unwrap()
}

/// Explicit random costs in [0, 1) with random positive marginals.
pub fn random_explicit(rng: &mut ChaCha8Rng, nx: usize, ny: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = (0..nx * ny).map(|_| rng.gen_range(0.0..1.0)).collect();
    (c, random_positive(rng, nx), random_positive(rng, ny))
}

pub fn explicit_problem(c: &[f64], mu: &[f64], nu: &[f64]) -> MultiScaleProblem<f64> {
    let cost = CostFunction::explicit(mu.len(), nu.len(), c.to_vec()).unwrap();
    MultiScaleProblem::single_level(ProblemSpec::explicit_transport(cost, mu.to_vec(), nu.to_vec()).unwrap()).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

pub fn oscillation(d: &[f64]) -> f64 {
    d.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - d.iter().cloned().fold(f64::INFINITY, f64::min)
}
