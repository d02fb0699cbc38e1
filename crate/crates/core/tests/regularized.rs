use nldisp::continuation::ContinuationConfig;
use nldisp::geometry::{build_grid, Domain, QuadratureRule};
use nldisp::logistic::LogisticProblem;
use nldisp::model::{KernelSpec, WeightSpec};
use nldisp::operator::DiscreteOperator;
use nldisp::regularized::{limit_procedure, multi_point_variant, solve_p_eps};
use nldisp::verification::check_nonexistence;

/// With `K ≡ 1`, `Q ≡ 1`, `p = 2`, `λ = 2`, `x₀ = 1/2`, `ε = 1/4` the solution
/// is `u = c / (λ − (2 − a_ε) m)` with `∫ 1/(λ − (2 − a_ε) m) = 1` and
/// `c² ∫ (λ − (2 − a_ε) m)^{-2} = m`; adaptive quadrature of the continuum
/// integrals gives these values.
const MASS_SQ: f64 = 0.744_518_443_709_073_5;
const MASS: f64 = 0.857_015_777_627_863_4;

fn solve_constant(n: usize, eps: f64, lambda: f64) -> (Vec<f64>, f64) {
    let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, n).unwrap();
    let op = DiscreteOperator::assemble(&KernelSpec::Constant(1.0), &g).unwrap();
    let eig = op.principal_eigenpair().unwrap();
    let w = WeightSpec::constant(1.0, 2.0).unwrap();
    let cfg = ContinuationConfig {
        lambda_max: lambda,
        ..Default::default()
    };
    let sol = solve_p_eps(&op, &eig, &w, &[vec![0.5]], eps, lambda, &cfg, None).unwrap();
    assert!(sol.lemma12_holds, "margin {}", sol.lemma12_margin);
    let mass = g.integrate(&sol.point.u).unwrap();
    (sol.point.u, mass)
}

#[test]
fn constant_weight_regularized_solution_matches_continuum() {
    let errs: Vec<f64> = [129usize, 257, 513]
        .iter()
        .map(|&n| (solve_constant(n, 0.25, 2.0).1 - MASS).abs())
        .collect();
    assert!(errs.windows(2).all(|e| e[1] < e[0]), "{errs:?}");
    assert!(errs[2] < 2e-3, "{errs:?}");

    let (u, _) = solve_constant(513, 0.25, 2.0);
    assert!(u.iter().all(|v| *v > 0.0));
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!(hi - lo > 0.1, "solution should not be constant");
    let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, 513).unwrap();
    let m = g.lp_norm_pow(&u, 2.0);
    assert!((m - MASS_SQ).abs() < 5e-3, "{m}");
}

#[test]
fn regularized_problem_inherits_nonexistence() {
    let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, 65).unwrap();
    let op = DiscreteOperator::assemble(&KernelSpec::Gaussian { length: 1.0 }, &g).unwrap();
    let eig = op.principal_eigenpair().unwrap();
    let w = WeightSpec::constant(1.0, 2.0).unwrap();
    let (q_eps, _) = multi_point_variant(&w, &g, &[vec![0.5]], 0.25).unwrap();
    let pr = LogisticProblem::with_operator(op, &q_eps).unwrap();
    let rep = check_nonexistence(&pr, &eig, 0.9 * eig.lambda1, 20, 1).unwrap();
    assert!(rep.holds, "{rep:?}");
}

#[test]
fn constant_weight_limit_recovers_constant_solution() {
    let n = 129;
    let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, n).unwrap();
    let op = DiscreteOperator::assemble(&KernelSpec::Constant(1.0), &g).unwrap();
    let eig = op.principal_eigenpair().unwrap();
    let w = WeightSpec::constant(1.0, 2.0).unwrap();
    let cfg = ContinuationConfig {
        lambda_max: 2.0,
        ..Default::default()
    };
    let run = limit_procedure(&op, &eig, &w, &[vec![0.5]], 2.0, &[4, 8, 16, 32, 64], &cfg, 0.25).unwrap();
    assert!(run.lemma12_all());
    let err = run.limit.iter().fold(0.0f64, |m, v| m.max((v - 1.0).abs()));
    let near = g.nearest_node(&[0.5]);
    let err_away = run
        .limit
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != near)
        .fold(0.0f64, |m, (_, v)| m.max((v - 1.0).abs()));
    assert!(
        err <= 1e-6,
        "limit differs from u = 1 by {err:.3e} (excluding the node at x0: {err_away:.3e})"
    );
}
