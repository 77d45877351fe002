mod common;

use common::*;
use rand::Rng;
use scaling_ot::costs::CostFunction;
use scaling_ot::kernel::*;
use scaling_ot::measures::GridGeometry;
use scaling_ot::proxdiv::MarginalFunction;
use scaling_ot::solvers::{scaling_algorithm_stabilized, Observer, ScalingState, SolverConfig, StopRule};

fn support(k: &SparseKernel<f64>) -> Vec<(usize, usize)> {
    k.triples().map(|(r, c, _)| (r, c)).collect()
}

#[test]
fn hierarchical_search_matches_brute_force() {
    let mut rng = rng(7);
    for &n in &[16usize, 33, 64] {
        let ms = line_problem(n, (0.3, 0.1), (0.6, 0.2));
        for level in 0..ms.depth() {
            let lp = ms.level(level).unwrap();
            for _ in 0..4 {
                let eps = rng.gen_range(1e-4..1e-1);
                let theta = 10f64.powf(rng.gen_range(-30.0..-1.0));
                let a: Vec<f64> = (0..lp.nx()).map(|_| rng.gen_range(-0.2..0.2)).collect();
                let b: Vec<f64> = (0..lp.ny()).map(|_| rng.gen_range(-0.2..0.2)).collect();
                let fast = ms.truncated_kernel(level, &a, &b, eps, theta).unwrap();
                let slow = truncated_kernel_brute_force(lp, &a, &b, eps, theta).unwrap();
                assert_eq!(support(&fast), support(&slow), "n={n} level={level}");
                for ((_, _, x), (_, _, y)) in fast.triples().zip(slow.triples()) {
                    assert_eq!(x, y);
                }
            }
        }
    }
}

#[test]
fn hierarchical_search_on_a_2d_grid() {
    let g = GridGeometry::new(vec![8, 8], 1.0 / 8.0).unwrap();
    let mu = vec![1.0 / 64.0; 64];
    let cost = CostFunction::squared_euclidean(&g, &g).unwrap();
    let ms = MultiScaleProblem::new(ProblemSpec::optimal_transport(g.clone(), g, cost, mu.clone(), mu).unwrap()).unwrap();
    let mut rng = rng(8);
    for level in 0..ms.depth() {
        let lp = ms.level(level).unwrap();
        let a: Vec<f64> = (0..lp.nx()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let b: Vec<f64> = (0..lp.ny()).map(|_| rng.gen_range(-0.1..0.1)).collect();
        let fast = ms.truncated_kernel(level, &a, &b, 0.01, 1e-8).unwrap();
        let slow = truncated_kernel_brute_force(lp, &a, &b, 0.01, 1e-8).unwrap();
        assert_eq!(support(&fast), support(&slow));
    }
}

#[test]
fn tiny_threshold_keeps_everything() {
    let ms = line_problem(16, (0.3, 0.1), (0.6, 0.2));
    let k = ms.truncated_kernel(0, &[0.0; 16], &[0.0; 16], 1e-2, 1e-300).unwrap();
    assert_eq!(k.nnz(), 256);
}

fn non_convergence_example(c_big: f64) -> MultiScaleProblem<f64> {
    let g = GridGeometry::index_line(2).unwrap();
    let spec = ProblemSpec::new(
        g.clone(),
        g,
        CostFunction::explicit(2, 2, vec![0.0, c_big, c_big, 0.0]).unwrap(),
        Rho::Uniform(0.5),
        MarginalFunction::fixed(vec![0.5, 0.5]).unwrap(),
        MarginalFunction::fixed(vec![0.5, 0.5]).unwrap(),
    )
    .unwrap();
    MultiScaleProblem::single_level(spec).unwrap()
}

#[test]
fn non_convergence_example_support() {
    let (c_big, eps) = (1.0, 0.1);
    let ms = non_convergence_example(c_big);
    let (a, b) = ([0.0, -c_big], [0.0, c_big]);
    for theta in [(-2.0 * c_big / eps).exp() * 1.01, 1e-3, 0.5, 1.0] {
        let k = ms.truncated_kernel(0, &a, &b, eps, theta).unwrap();
        assert_eq!(support(&k), vec![(0, 0), (0, 1), (1, 1)], "theta={theta}");
    }
}

struct DualTrace(Vec<(Vec<f64>, Vec<f64>)>);

impl Observer<f64> for DualTrace {
    fn iteration(&mut self, _level: usize, _iter: usize, s: &ScalingState<f64>) {
        self.0.push((s.alpha(), s.beta()));
    }
}

#[test]
fn non_convergence_example_dual_drift() {
    // with the support frozen the duals drift like ε·log(2ℓ) and ε·log(2ℓ+1)
    let (c_big, eps) = (1.0, 0.1);
    let ms = non_convergence_example(c_big);
    let config = SolverConfig {
        theta: 1e-2,
        tau: 1e300,
        stop_rule: StopRule::FixedIterations(50),
        ..SolverConfig::default()
    };
    let mut trace = DualTrace(Vec::new());
    scaling_algorithm_stabilized(&ms, 0, eps, vec![0.0, -c_big], vec![0.0, c_big], &config, &mut trace).unwrap();
    assert_eq!(trace.0.len(), 50);
    for (l, (a, b)) in trace.0.iter().enumerate() {
        let l = (l + 1) as f64;
        let shift = a[0];
        assert!((a[1] - shift - (-c_big + eps * (2.0 * l).ln())).abs() < 1e-12);
        assert!((b[0] + shift).abs() < 1e-12);
        assert!((b[1] + shift - (c_big - eps * (2.0 * l + 1.0).ln())).abs() < 1e-12);
    }
}

#[test]
fn truncation_gap_examples() {
    let mut rng = rng(9);
    let (c, mu, nu) = random_explicit(&mut rng, 8, 8);
    let ms = explicit_problem(&c, &mu, &nu);
    let lp = ms.level(0).unwrap();
    let eps = 0.05;
    let theta = 1e-3;
    let a: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.1..0.1)).collect();
    let b: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.1..0.1)).collect();

    let k = ms.truncated_kernel(0, &a, &b, eps, theta).unwrap();
    let mut state = ScalingState::new(a.clone(), b.clone(), eps);
    let fresh = truncation_gap(lp, &state, &k, theta, true).unwrap();
    assert_eq!(fresh.truncation_bound, theta * lp.rho_total());
    let exact = fresh.discarded_mass_exact.unwrap();
    assert!(exact > 0.0 && exact <= fresh.truncation_bound);

    // dense-kernel subtraction as independent oracle
    let dense = stabilized_kernel_dense(lp, &a, &b, eps).unwrap();
    let kept: f64 = k.total();
    let all: f64 = dense.data.iter().sum();
    assert!(((all - kept) - exact).abs() < 1e-15);

    state.u_tilde = (0..8).map(|_| rng.gen_range(0.5..3.0)).collect();
    state.v_tilde = (0..8).map(|_| rng.gen_range(0.5..3.0)).collect();
    let r = truncation_gap(lp, &state, &k, theta, true).unwrap();
    assert!(r.discarded_mass_exact.unwrap() <= r.truncation_bound);

    let full = ms.truncated_kernel(0, &a, &b, eps, 1e-300).unwrap();
    let r = truncation_gap(lp, &state, &full, 1e-300, true).unwrap();
    assert_eq!(r.discarded_mass_exact, Some(0.0));
}

#[test]
fn primal_dual_gap_examples() {
    // 1×1: the optimal pair has zero gap
    let ms = explicit_problem(&[0.7], &[1.0], &[1.0]);
    let lp = ms.level(0).unwrap();
    let eps = 0.1;
    let pi = SparseKernel::from_triples(1, 1, vec![(0, 0, 1.0)]).unwrap();
    let gap = primal_dual_gap(lp, &pi, &[0.7], &[0.0], eps).unwrap();
    assert!(gap.abs() < 1e-12, "{gap}");

    // a coupling off the fixed marginal is infeasible
    let pi = SparseKernel::from_triples(1, 1, vec![(0, 0, 0.9)]).unwrap();
    assert_eq!(primal_dual_gap(lp, &pi, &[0.7], &[0.0], eps).unwrap(), f64::INFINITY);
}

#[test]
fn primal_dual_gap_of_converged_4x4() {
    let mut rng = rng(10);
    let (c, mu, nu) = random_explicit(&mut rng, 4, 4);
    let ms = explicit_problem(&c, &mu, &nu);
    let config = SolverConfig { stop_rule: StopRule::LInfMarginal(1e-13), ..SolverConfig::default() };
    let sol = scaling_algorithm_stabilized(&ms, 0, 0.1, vec![0.0; 4], vec![0.0; 4], &config, &mut scaling_ot::solvers::NoObserver).unwrap();
    let lp = ms.level(0).unwrap();
    let pi = stabilized_kernel_dense(lp, &sol.state.alpha_hat, &sol.state.beta_hat, 0.1).unwrap();
    let triples = (0..4).flat_map(|x| (0..4).map(move |y| (x, y))).map(|(x, y)| (x, y, pi.get(x, y))).collect();
    let pi = SparseKernel::from_triples(4, 4, triples).unwrap();
    let gap = primal_dual_gap(lp, &pi, &sol.state.alpha_hat, &sol.state.beta_hat, 0.1).unwrap();
    assert!((-1e-12..=1e-8).contains(&gap), "{gap}");
}
