//! Acceptance criteria 1 to 10. Runs without the libtest harness so that every criterion
//! prints its own line; exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use common::*;
use rand::Rng;
use scaling_ot::costs::CostFunction;
use scaling_ot::error::Error;
use scaling_ot::kernel::*;
use scaling_ot::proxdiv::lambert_w;
use scaling_ot::reference::*;
use scaling_ot::solvers::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Trace(Vec<ScalingState<f64>>);

impl Observer<f64> for Trace {
    fn iteration(&mut self, _level: usize, _iter: usize, s: &ScalingState<f64>) {
        self.0.push(s.clone());
    }
}

fn rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(0.0f64, |m, x| m.max(x.abs())).max(f64::MIN_POSITIVE);
    max_abs_diff(a, b) / scale
}

fn c1_stabilization_equivalence() -> Outcome {
    let n = 32;
    let h = 1.0 / n as f64;
    let ms = line_problem(n, (0.3, 0.1), (0.6, 0.15));
    let lp = ms.level(0).unwrap();
    let eps = 10.0 * h * h;
    let config = SolverConfig { theta: 1e-300, stop_rule: StopRule::FixedIterations(100), ..SolverConfig::default() };
    let (mut naive, mut stab) = (Trace(Vec::new()), Trace(Vec::new()));
    scaling_algorithm(lp, eps, None, &config, &mut naive).unwrap();
    scaling_algorithm_stabilized(&ms, 0, eps, vec![0.0; n], vec![0.0; n], &config, &mut stab).unwrap();
    if naive.0.len() != 100 || stab.0.len() != 100 {
        return outcome(false, format!("iterate counts {} and {}", naive.0.len(), stab.0.len()));
    }
    let worst = naive.0.iter().zip(&stab.0).fold(0.0f64, |m, (s, t)| {
        m.max(rel_diff(&s.alpha(), &t.alpha())).max(rel_diff(&s.beta(), &t.beta()))
    });
    outcome(worst <= 1e-8, format!("max relative dual difference {worst:.2e} over 100 iterations"))
}

fn c2_small_eps_robustness() -> Outcome {
    let n = 64;
    let h = 1.0 / n as f64;
    let ms = line_problem(n, (0.1, 0.05), (0.9, 0.05));
    let lp = ms.level(0).unwrap();
    let mut naive_ok = true;
    let mut notes = Vec::new();
    for f in [3.0, 2.0, 1.0, 0.1] {
        let r = scaling_algorithm(lp, f * h * h, None, &SolverConfig::default(), &mut NoObserver);
        let diverged = matches!(r, Err(Error::Diverged { .. }));
        naive_ok &= diverged;
        notes.push(format!("{f}h²:{}", if diverged { "diverged" } else { "no error" }));
    }
    let lists = default_eps_lists(&ms, 0.1 * h * h).unwrap();
    let sol = solve_full(&ms, &SolverConfig { eps_lists: lists, ..SolverConfig::default() }, &mut NoObserver);
    let err = sol.as_ref().map(|s| s.report.marginal_error_l_inf).unwrap_or(f64::INFINITY);
    outcome(naive_ok && err <= 1e-7, format!("stabilized L∞ error {err:.2e}; naive {}", notes.join(" ")))
}

#[derive(Default)]
struct BoundCheck {
    absorptions: usize,
    violations: usize,
    worst_ratio: f64,
}

/// Dense oracle: Σ over pairs missing from the kernel of ũ·exp(−(c − α̂ − β̂)/ε)·ρ·ṽ.
fn dense_discarded(lp: &LevelProblem<f64>, s: &ScalingState<f64>, k: &SparseKernel<f64>) -> f64 {
    let mut total = 0.0;
    for x in 0..lp.nx() {
        let (cols, _) = k.row(x);
        for y in 0..lp.ny() {
            if cols.contains(&y) {
                continue;
            }
            let e = (-(lp.cost(x, y) - s.alpha_hat[x] - s.beta_hat[y]) / s.eps).exp();
            total += s.u_tilde[x] * e * lp.rho(x, y) * s.v_tilde[y];
        }
    }
    total
}

impl Observer<f64> for BoundCheck {
    fn absorption(&mut self, e: &AbsorptionEvent<'_, f64>) {
        self.absorptions += 1;
        let rho = e.problem.rho_total();
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(*x));
        let bound_before = sup(&e.before.u_tilde) * sup(&e.before.v_tilde) * e.theta * rho;
        let before = dense_discarded(e.problem, e.before, e.old_kernel);
        let bound_after = sup(&e.after.u_tilde) * sup(&e.after.v_tilde) * e.theta * rho;
        let after = dense_discarded(e.problem, e.after, e.new_kernel);
        if before > bound_before || after > bound_after || bound_after != e.theta * rho {
            self.violations += 1;
        }
        self.worst_ratio = self.worst_ratio.max(before / bound_before).max(after / bound_after);
    }
}

fn c3_truncation_bound() -> Outcome {
    let mut rng = rng(303);
    let mut check = BoundCheck::default();
    for _ in 0..10 {
        let (c, mu, nu) = random_explicit(&mut rng, 32, 32);
        let ms = explicit_problem(&c, &mu, &nu);
        let config = SolverConfig { theta: 1e-10, ..SolverConfig::default() };
        let ladder = eps_ladder(1.0, 1e-3, 0.5).unwrap();
        if eps_scaling(&ms, 0, &ladder, vec![0.0; 32], vec![0.0; 32], &config, &mut check).is_err() {
            return outcome(false, "solve failed".into());
        }
    }
    outcome(
        check.absorptions > 0 && check.violations == 0,
        format!(
            "{} absorptions, {} violations, worst discarded/bound {:.2e}",
            check.absorptions, check.violations, check.worst_ratio
        ),
    )
}

fn c4_lp_consistency() -> Outcome {
    let mut rng = rng(404);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let (c, mu, nu) = random_explicit(&mut rng, 16, 16);
        let exact = lp_oracle(&mu, &nu, &c).unwrap().value;
        let ms = explicit_problem(&c, &mu, &nu);
        let ladder = eps_ladder(1.0, 1e-4, 0.5).unwrap();
        let sol = match eps_scaling(&ms, 0, &ladder, vec![0.0; 16], vec![0.0; 16], &SolverConfig::default(), &mut NoObserver) {
            Ok(s) => s,
            Err(e) => return outcome(false, format!("solve failed: {e}")),
        };
        worst = worst.max((sol.report.primal_value - exact).abs());
    }
    outcome(worst <= 1e-2, format!("max |entropic primal − LP| {worst:.2e}"))
}

fn c5_async_bound_and_slope() -> Outcome {
    let mut rng = rng(505);
    let factors = [1.0, 0.5, 0.1, 0.05, 0.01];
    let mut bound_violations = 0;
    let mut slopes = Vec::new();
    for _ in 0..5 {
        let (c, mu, nu) = random_explicit(&mut rng, 16, 16);
        let big_c = c.iter().copied().fold(0.0, f64::max);
        for f in factors {
            let eps = f * big_c;
            match async_sinkhorn(&c, &mu, &nu, eps, None, 0.99, 1_000_000) {
                Ok(r) if r.iterations as f64 <= 2.0 + big_c / (eps * 0.01) => {}
                _ => bound_violations += 1,
            }
        }
        let ms = explicit_problem(&c, &mu, &nu);
        let grid: Vec<f64> = factors.iter().map(|f| f * big_c).collect();
        let config = SolverConfig { theta: 1e-300, stop_rule: StopRule::LInfMarginal(1e-6), ..SolverConfig::default() };
        match iteration_scaling_study(&ms, &grid, &config) {
            Ok(t) => slopes.push(t.slope),
            Err(e) => return outcome(false, format!("study failed: {e}")),
        }
    }
    let slopes_ok = slopes.iter().all(|s| (s - 1.0).abs() <= 0.25);
    let shown: Vec<String> = slopes.iter().map(|s| format!("{s:.2}")).collect();
    outcome(
        bound_violations == 0 && slopes_ok,
        format!("{bound_violations} iteration-bound violations in 25 runs; slopes {}", shown.join(" ")),
    )
}

fn c6_auction_exactness() -> Outcome {
    let mut rng = rng(606);
    let n = 6;
    let (mut mismatches, mut over) = (0, 0);
    for _ in 0..20 {
        let cost: Vec<f64> = (0..n * n).map(|_| rng.gen_range(0..=9) as f64).collect();
        let inst = AssignmentInstance::new(n, cost.clone()).unwrap();
        let r = auction_solve(&inst, 0.125, None).unwrap();
        let exact = lp_oracle(&vec![1.0; n], &vec![1.0; n], &cost).unwrap().value;
        if r.value != exact {
            mismatches += 1;
        }
        if r.iterations as f64 > n as f64 * (inst.max_cost() / 0.125 + 1.0) {
            over += 1;
        }
    }
    outcome(mismatches == 0 && over == 0, format!("{mismatches} non-optimal, {over} over the iteration bound, of 20"))
}

fn composition(rng: &mut impl Rng, total: u64, parts: usize) -> Vec<u64> {
    let mut v = vec![1u64; parts];
    for _ in 0..total - parts as u64 {
        v[rng.gen_range(0..parts)] += 1;
    }
    v
}

fn c7_stability() -> Outcome {
    let mut rng = rng(707);
    let (mut violations, mut inconclusive, mut tightest) = (0, 0, f64::INFINITY);
    for _ in 0..50 {
        let nx = rng.gen_range(2..=8);
        let ny = rng.gen_range(2..=8);
        let m = rng.gen_range(nx.max(ny) as u64..=16);
        let marg = AtomicMarginals::new(composition(&mut rng, m, nx), composition(&mut rng, m, ny)).unwrap();
        let cost: Vec<f64> = (0..nx * ny).map(|_| rng.gen_range(0.0..1.0)).collect();
        for eps1 in [0.1, 0.05, 0.025] {
            match stability_experiment(&cost, &marg, eps1, eps1 / 2.0) {
                Ok(r) if r.inconclusive => inconclusive += 1,
                Ok(r) => {
                    if !r.holds() {
                        violations += 1;
                    }
                    let used = r.oscillation_alpha.max(r.oscillation_beta) / r.bound;
                    tightest = tightest.min(1.0 / used.max(f64::MIN_POSITIVE));
                }
                Err(_) => inconclusive += 1,
            }
        }
    }
    outcome(
        violations == 0 && inconclusive == 0,
        format!("150 comparisons, {violations} violations, {inconclusive} inconclusive, smallest bound/oscillation {tightest:.1}"),
    )
}

fn c8_barycenter() -> Outcome {
    let n = 64;
    let h = 1.0 / n as f64;
    let g = line(n);
    let mu = bump(&g, 0.4, 0.1, 1e-3);
    let config = SolverConfig { stop_rule: StopRule::LInfMarginal(1e-9), ..SolverConfig::default() };
    let problem = |inputs: Vec<Vec<f64>>, w: Vec<f64>| BarycenterProblem {
        inputs: inputs.into_iter().map(|m| (g.clone(), m)).collect(),
        grid_y: g.clone(),
        weights: w,
        model: BarycenterModel::Wasserstein,
    };
    let same = match solve_barycenter(&problem(vec![mu.clone(), mu.clone()], vec![0.5, 0.5]), 0.1 * h * h, &config) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("identical inputs failed: {e}")),
    };
    let l1: f64 = same.barycenter.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
    let other = bump(&g, 0.7, 0.05, 1e-3);
    let w = [0.3, 0.7];
    let mixed = match solve_barycenter(&problem(vec![mu.clone(), other], w.to_vec()), 0.5 * h * h, &config) {
        Ok(s) => s,
        Err(e) => return outcome(false, format!("distinct inputs failed: {e}")),
    };
    let residual = |s: &BarycenterSolution<f64>, w: &[f64]| {
        (0..n).fold(0.0f64, |m, j| m.max(s.duals.iter().zip(w).map(|(d, l)| l * d.1[j]).sum::<f64>().abs()))
    };
    let scale = |s: &BarycenterSolution<f64>| {
        s.duals.iter().flat_map(|(a, b)| a.iter().chain(b)).fold(0.0f64, |m, x| m.max(x.abs()))
    };
    let (r1, r2) = (residual(&same, &[0.5, 0.5]), residual(&mixed, &w));
    let ok = same.report.converged && mixed.report.converged && l1 <= 1e-3 && r1 <= 1e-4 * scale(&same) && r2 <= 1e-4 * scale(&mixed);
    outcome(ok, format!("identical-input L¹ {l1:.2e}; consensus residual {r1:.1e} / {r2:.1e} vs dual scale {:.1e} / {:.1e}", scale(&same), scale(&mixed)))
}

fn c9_gradient_flow() -> Outcome {
    let n = 64;
    let h = 1.0 / n as f64;
    let g = line(n);
    let xs = g.coordinates();
    let pot: Vec<f64> = xs.iter().map(|&x| if (0.4..0.5).contains(&x) { f64::INFINITY } else { 10.0 * x }).collect();
    let mu0 = normalize(xs.iter().map(|&x| if x >= 0.6 { 1.0 } else { 0.0 }).collect());
    let flow = PorousMediumFlow::new(g, pot.clone(), 0.66 * h * h, 2e-3);
    let frames = match flow.run(&mu0, 20) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("flow failed: {e}")),
    };
    let mass_err = frames.iter().fold(0.0f64, |m, f| m.max((f.measure.iter().sum::<f64>() - 1.0).abs()));
    let barrier = frames.iter().fold(0.0f64, |m, f| {
        m.max(f.measure.iter().zip(&pot).filter(|(_, p)| p.is_infinite()).map(|(v, _)| v).sum())
    });
    let mut lambert = 0.0f64;
    for k in 0..=1200 {
        let z = 10f64.powf(-6.0 + 12.0 * k as f64 / 1200.0);
        let w = lambert_w(z);
        lambert = lambert.max((w * w.exp() - z).abs() / z);
    }
    let ok = frames.len() == 20 && mass_err <= 1e-9 && barrier <= 1e-12 && lambert <= 1e-10;
    outcome(ok, format!("{} frames, mass error {mass_err:.1e}, barrier mass {barrier:.1e}, Lambert W residual {lambert:.1e}", frames.len()))
}

fn c10_sparsity() -> Outcome {
    let n = 256;
    let h = 1.0 / n as f64;
    let g = line(n);
    let spec = ProblemSpec::optimal_transport(
        g.clone(),
        g.clone(),
        CostFunction::squared_euclidean(&g, &g).unwrap(),
        bump(&g, 0.3, 0.1, 1e-3),
        bump(&g, 0.65, 0.12, 1e-3),
    )
    .unwrap();
    let ms = MultiScaleProblem::new(spec).unwrap();
    let lists = default_eps_lists(&ms, 0.1 * h * h).unwrap();
    match solve_full(&ms, &SolverConfig { eps_lists: lists, ..SolverConfig::default() }, &mut NoObserver) {
        Ok(s) => {
            let per_row = s.coupling.mean_row_nnz();
            outcome(s.report.converged && per_row <= 20.0, format!("{per_row:.1} kernel entries per row, L∞ error {:.1e}", s.report.marginal_error_l_inf))
        }
        Err(e) => outcome(false, format!("solve failed: {e}")),
    }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, u64); 10] = [
        ("stabilization equivalence", c1_stabilization_equivalence, 1),
        ("small-eps robustness", c2_small_eps_robustness, 5),
        ("truncation bound", c3_truncation_bound, 10),
        ("LP consistency", c4_lp_consistency, 10),
        ("asynchronous Sinkhorn bound", c5_async_bound_and_slope, 30),
        ("auction exactness", c6_auction_exactness, 1),
        ("stability inequality", c7_stability, 60),
        ("barycenter properties", c8_barycenter, 10),
        ("gradient flow", c9_gradient_flow, 20),
        ("sparsity at desk scale", c10_sparsity, 10),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let took = start.elapsed();
        let in_time = took < Duration::from_secs(*limit);
        let pass = o.pass && in_time;
        if !pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<28} {}  {} ({:.2?} of {limit} s)",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            took
        );
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
