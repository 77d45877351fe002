use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::kernel::{MultiScaleProblem, PairProblem};
use crate::solvers::{scaling_algorithm_stabilized, NoObserver, SolverConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyRow {
    pub eps: f64,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    /// Least-squares slope of log(iterations) against log(1/ε).
    pub slope: f64,
}

impl StudyTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("eps,iterations,gap,converged\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{}", r.eps, r.iterations, r.gap, r.converged);
        }
        out
    }
}

/// Least-squares slope of log y against log x.
pub fn fit_log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidInput("slope fit needs at least two positive (x, y) pairs".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("slope fit needs distinct x values".into()));
    }
    Ok(sxy / sxx)
}

/// Cold-start stabilized solves at level 0, one per ε, recording the iteration counts.
pub fn iteration_scaling_study<T: Real>(
    ms: &MultiScaleProblem<T>,
    eps_grid: &[T],
    config: &SolverConfig<T>,
) -> Result<StudyTable> {
    let lp = ms.level(0)?;
    let mut rows = Vec::with_capacity(eps_grid.len());
    for &eps in eps_grid {
        let sol = scaling_algorithm_stabilized(
            ms,
            0,
            eps,
            vec![T::zero(); lp.nx()],
            vec![T::zero(); lp.ny()],
            config,
            &mut NoObserver,
        )?;
        rows.push(StudyRow {
            eps: eps.as_f64(),
            iterations: sol.report.iterations,
            gap: sol.report.primal_dual_gap,
            converged: sol.report.converged,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| 1.0 / r.eps).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.iterations.max(1) as f64).collect();
    let slope = fit_log_log_slope(&x, &y)?;
    Ok(StudyTable { rows, slope })
}
