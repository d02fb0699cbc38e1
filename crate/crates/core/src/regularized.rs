//! The regularized family `Q_ε = Q(2 − a_ε)` and the `ε = 1/n → 0` limit.

use serde::Serialize;

use crate::continuation::{newton_correct, sup, trace_branch, BranchPoint, ContinuationConfig};
use crate::error::{Error, Result};
use crate::geometry::{dist, QuadratureGrid};
use crate::logistic::LogisticProblem;
use crate::model::{build_a_eps_multi, build_q_eps, eps0, WeightSpec, GRID_TOL};
use crate::operator::{DiscreteOperator, PrincipalEigenpair};

/// `θ = min(λ₁, λ − λ₁)`.
pub fn theta(lambda1: f64, lambda: f64) -> f64 {
    lambda1.min(lambda - lambda1)
}

/// Smallest `λ − Φ^ε_u(x) − θ a_ε(x)` over the nodes, and whether it clears `−1e-8`.
pub fn check_lemma12(lambda: f64, phi_eps: &[f64], a_eps: &[f64], lambda1: f64) -> (bool, f64) {
    let th = theta(lambda1, lambda);
    let margin = phi_eps
        .iter()
        .zip(a_eps)
        .map(|(f, a)| lambda - f - th * a)
        .fold(f64::INFINITY, f64::min);
    (margin >= -1e-8, margin)
}

/// Weight `Q_ε` for several maximum points, after certifying that each node
/// is dominated by its nearest point: `Q(x_j, y) ≥ Q(x, y)` on the cell of `x_j`.
pub fn multi_point_variant(
    weight: &WeightSpec,
    grid: &QuadratureGrid,
    points: &[Vec<f64>],
    eps: f64,
) -> Result<(WeightSpec, Vec<f64>)> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("at least one maximum point is required".into()));
    }
    let q = weight.matrix(grid)?;
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|c| point_row(weight, grid, &q, c))
        .collect::<Result<_>>()?;
    for (i, x) in grid.nodes.iter().enumerate() {
        let j = nearest(points, x);
        if let Some(col) = (0..grid.len()).find(|&c| rows[j][c] < q[(i, c)] - GRID_TOL) {
            return Err(Error::Hypothesis(format!(
                "decomposition not certified: Q(x_{j}, y) < Q(x, y) at node {i}, column {col}"
            )));
        }
    }
    let a = build_a_eps_multi(grid, points, eps, weight.p)?;
    Ok((build_q_eps(weight, grid, &a)?, a))
}

fn nearest(points: &[Vec<f64>], x: &[f64]) -> usize {
    let mut best = 0;
    for (j, c) in points.iter().enumerate() {
        if dist(x, c) < dist(x, &points[best]) {
            best = j;
        }
    }
    best
}

fn point_row(weight: &WeightSpec, grid: &QuadratureGrid, q: &nalgebra::DMatrix<f64>, c: &[f64]) -> Result<Vec<f64>> {
    if weight.value(c, &grid.nodes[0]).is_some() {
        return Ok(grid
            .nodes
            .iter()
            .map(|y| weight.value(c, y).expect("analytic"))
            .collect());
    }
    let i = grid.nearest_node(c);
    if dist(&grid.nodes[i], c) > GRID_TOL {
        return Err(Error::Hypothesis(format!(
            "tabulated weight: maximum point {c:?} is not a grid node"
        )));
    }
    Ok(q.row(i).iter().copied().collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSolution {
    pub eps: f64,
    pub point: BranchPoint,
    pub a_eps: Vec<f64>,
    /// `g = Φ^ε_u`.
    pub g_field: Vec<f64>,
    pub lemma12_holds: bool,
    pub lemma12_margin: f64,
}

/// Solves the regularized problem at fixed `λ`, from `warm` when given and
/// otherwise by continuation from the bifurcation point.
#[allow(clippy::too_many_arguments)]
pub fn solve_p_eps(
    op: &DiscreteOperator,
    eig: &PrincipalEigenpair,
    weight: &WeightSpec,
    points: &[Vec<f64>],
    eps: f64,
    lambda: f64,
    cfg: &ContinuationConfig,
    warm: Option<&[f64]>,
) -> Result<EpsSolution> {
    if !(lambda > eig.lambda1) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} must exceed lambda1 = {}",
            eig.lambda1
        )));
    }
    let (q_eps, a) = multi_point_variant(weight, &op.grid, points, eps)?;
    let problem = LogisticProblem::with_operator(op.clone(), &q_eps)?;
    let warm_point = warm.and_then(|u| newton_correct(&problem, lambda, u, cfg).ok());
    let point = match warm_point {
        Some(pt) => pt,
        None => {
            let trace_cfg = ContinuationConfig {
                lambda_max: lambda,
                ..cfg.clone()
            };
            let br = trace_branch(&problem, eig, &trace_cfg)?;
            let last = br.points.last().cloned().expect("non-empty branch");
            if last.lambda != lambda {
                return Err(Error::StepFailure(format!(
                    "continuation stopped at lambda = {} before {lambda}",
                    last.lambda
                )));
            }
            last
        }
    };
    let g = problem.phi(&point.u)?.values;
    let (holds, margin) = check_lemma12(lambda, &g, &a, eig.lambda1);
    Ok(EpsSolution {
        eps,
        point,
        a_eps: a,
        g_field: g,
        lemma12_holds: holds,
        lemma12_margin: margin,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularizedRun {
    pub lambda: f64,
    pub lambda1: f64,
    pub theta: f64,
    pub ns: Vec<usize>,
    pub runs: Vec<EpsSolution>,
    /// `‖u_{n_k} − u_{n_{k+1}}‖∞` for consecutive entries of `ns`.
    pub cauchy_gaps: Vec<f64>,
    pub gaps_strictly_decreasing: bool,
    /// Three consecutive gaps increasing.
    pub non_cauchy: bool,
    /// Worst `bound − |g_n − g_m|` with the bound `2‖Q‖∞‖u_n‖_p^p |a_n − a_m|`,
    /// over nodes with `|x − x₀| ≤ 1` and consecutive `n, m`.
    pub modulus_margin: f64,
    /// Same comparison with a single state `u_n` on both sides.
    pub modulus_margin_same_state: f64,
    /// Worst `bound − ∫_{B_R(x₀)} u_n^p` for the ball integral estimate.
    pub near_point_margin: f64,
    pub near_point_radius: f64,
    /// Last solution plus one Richardson step in `1/n`.
    pub limit: Vec<f64>,
    /// Sup-norm residual of the limit in the unregularized problem.
    pub limit_residual: f64,
    /// Same residual restricted to nodes at distance `≥ near_point_radius`
    /// from every maximum point.
    pub limit_residual_away: f64,
}

impl RegularizedRun {
    pub fn lemma12_all(&self) -> bool {
        self.runs.iter().all(|r| r.lemma12_holds)
    }

    pub fn lemma12_worst(&self) -> f64 {
        self.runs.iter().map(|r| r.lemma12_margin).fold(f64::INFINITY, f64::min)
    }
}

/// Surface measure of the unit sphere in `R^N`, equal to `N` times the unit-ball volume.
fn sphere_measure(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        d => {
            let half = d as f64 / 2.0;
            2.0 * std::f64::consts::PI.powf(half) / gamma_half_integer(d)
        }
    }
}

/// `Γ(d/2)` for a positive integer `d`.
fn gamma_half_integer(d: usize) -> f64 {
    if d.is_multiple_of(2) {
        (1..d / 2).map(|k| k as f64).product()
    } else {
        let mut g = std::f64::consts::PI.sqrt();
        let mut x = 0.5;
        while x < d as f64 / 2.0 - 1e-9 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

/// Solves `(P_{1/n})` for each `n`, measures Cauchy gaps and the bounds
/// along the sequence, and extrapolates the limit.
#[allow(clippy::too_many_arguments)]
pub fn limit_procedure(
    op: &DiscreteOperator,
    eig: &PrincipalEigenpair,
    weight: &WeightSpec,
    points: &[Vec<f64>],
    lambda: f64,
    ns: &[usize],
    cfg: &ContinuationConfig,
    near_point_radius: f64,
) -> Result<RegularizedRun> {
    if ns.len() < 2 {
        return Err(Error::InvalidArgument(
            "the limit needs at least two values of n".into(),
        ));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) || ns[0] == 0 {
        return Err(Error::InvalidArgument(
            "n values must be positive and increasing".into(),
        ));
    }
    let grid = &op.grid;
    let e0 = eps0(grid.dim, weight.p);
    if 1.0 / (ns[0] as f64) > e0 {
        return Err(Error::EpsilonOutOfRange {
            eps: 1.0 / ns[0] as f64,
            eps0: e0,
        });
    }
    if !(near_point_radius > 0.0 && near_point_radius <= 1.0) {
        return Err(Error::InvalidArgument("near-point radius must lie in (0, 1]".into()));
    }

    let mut runs: Vec<EpsSolution> = Vec::with_capacity(ns.len());
    for &n in ns {
        let warm = runs.last().map(|r| r.point.u.clone());
        let sol = solve_p_eps(op, eig, weight, points, 1.0 / n as f64, lambda, cfg, warm.as_deref())?;
        runs.push(sol);
    }

    let cauchy_gaps: Vec<f64> = runs
        .windows(2)
        .map(|w| {
            w[0].point
                .u
                .iter()
                .zip(&w[1].point.u)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
        })
        .collect();
    let gaps_strictly_decreasing = cauchy_gaps.windows(2).all(|w| w[1] < w[0]);
    let non_cauchy = cauchy_gaps.windows(3).any(|w| w[0] < w[1] && w[1] < w[2]);

    let q = weight.matrix(grid)?;
    let q_sup = q.iter().fold(0.0f64, |m, v| m.max(*v));
    let p = weight.p;
    let x0 = &points[0];
    let near: Vec<bool> = grid.nodes.iter().map(|x| dist(x, x0) <= 1.0).collect();

    let mut modulus_margin = f64::INFINITY;
    let mut modulus_margin_same_state = f64::INFINITY;
    let base = LogisticProblem::with_operator(op.clone(), weight)?;
    for w in runs.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let up = grid.lp_norm_pow(&a.point.u, p);
        let phi_a = base.phi(&a.point.u)?.values;
        for i in 0..grid.len() {
            if !near[i] {
                continue;
            }
            let da = (a.a_eps[i] - b.a_eps[i]).abs();
            let bound = 2.0 * q_sup * up * da;
            modulus_margin = modulus_margin.min(bound - (a.g_field[i] - b.g_field[i]).abs());
            // same state on both sides: Φ^{ε}_u − Φ^{ε'}_u = (a' − a)Φ_u
            let measured = da * phi_a[i];
            modulus_margin_same_state = modulus_margin_same_state.min(q_sup * up * da - measured);
        }
    }

    let th = theta(eig.lambda1, lambda);
    let nd = grid.dim as f64;
    let mut near_point_margin = f64::INFINITY;
    for (r, &n) in runs.iter().zip(ns) {
        let pe = p / n as f64;
        let au_sup = sup(&op.apply(&r.point.u));
        let bound =
            au_sup.powf(p) * sphere_measure(grid.dim) * near_point_radius.powf(nd - pe) / (th.powf(p) * (nd - pe));
        let measured: f64 = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .zip(&r.point.u)
            .filter(|((x, _), _)| dist(x, x0) < near_point_radius)
            .map(|((_, w), u)| w * u.abs().powf(p))
            .sum();
        near_point_margin = near_point_margin.min(bound - measured);
    }

    let k = runs.len() - 1;
    let (h_last, h_prev) = (1.0 / ns[k] as f64, 1.0 / ns[k - 1] as f64);
    let factor = h_last / (h_prev - h_last);
    let limit: Vec<f64> = runs[k]
        .point
        .u
        .iter()
        .zip(&runs[k - 1].point.u)
        .map(|(a, b)| a + (a - b) * factor)
        .collect();
    let limit_res = base.residual(lambda, &limit)?;
    let limit_residual = sup(&limit_res);
    let limit_residual_away = grid
        .nodes
        .iter()
        .zip(&limit_res)
        .filter(|(x, _)| points.iter().all(|xj| dist(x, xj) >= near_point_radius))
        .fold(0.0f64, |m, (_, r)| m.max(r.abs()));

    Ok(RegularizedRun {
        lambda,
        lambda1: eig.lambda1,
        theta: th,
        ns: ns.to_vec(),
        runs,
        cauchy_gaps,
        gaps_strictly_decreasing,
        non_cauchy,
        modulus_margin,
        modulus_margin_same_state,
        near_point_margin,
        near_point_radius,
        limit,
        limit_residual,
        limit_residual_away,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Domain, QuadratureRule};
    use crate::model::{build_a_eps, KernelSpec, Poly, WeightForm};
    use approx::assert_abs_diff_eq;

    #[test]
    fn theta_examples() {
        assert_eq!(theta(1.0, 1.5), 0.5);
        assert_eq!(theta(1.0, 3.0), 1.0);
    }

    #[test]
    fn lemma12_at_the_maximum_point() {
        let (ok, m) = check_lemma12(2.0, &[1.5, 2.0], &[0.3, 0.0], 1.0);
        assert!(ok);
        assert_abs_diff_eq!(m, 0.0, epsilon = 0.0);
        let (ok, _) = check_lemma12(2.0, &[1.9], &[0.5], 1.0);
        assert!(!ok);
    }

    #[test]
    fn multi_point_reduces_to_single() {
        let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, 9).unwrap();
        let w = WeightSpec::constant(1.0, 1.0).unwrap();
        let (_, a) = multi_point_variant(&w, &g, &[vec![0.5]], 0.5).unwrap();
        assert_eq!(a, build_a_eps(&g, &[0.5], 0.5, 1.0).unwrap());
        let (_, a2) = multi_point_variant(&w, &g, &[vec![0.25], vec![0.75]], 0.5).unwrap();
        assert_abs_diff_eq!(a2[4], 0.25, epsilon = 1e-15);
        assert_eq!(a2[2], 0.0);
        assert_eq!(a2[6], 0.0);
    }

    #[test]
    fn multi_point_rejects_uncertified_decomposition() {
        let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, 9).unwrap();
        let w = WeightSpec::new(
            WeightForm::Separable {
                g: Poly(vec![0.0, 1.0]),
                h: Poly::constant(1.0),
            },
            1.0,
        )
        .unwrap();
        assert!(matches!(
            multi_point_variant(&w, &g, &[vec![0.25], vec![0.75]], 0.5),
            Err(Error::Hypothesis(_))
        ));
        assert!(multi_point_variant(&w, &g, &[vec![1.0]], 0.5).is_ok());
    }

    #[test]
    fn sphere_measures() {
        assert_eq!(sphere_measure(1), 2.0);
        assert_abs_diff_eq!(sphere_measure(2), 2.0 * std::f64::consts::PI, epsilon = 1e-15);
        assert_abs_diff_eq!(sphere_measure(3), 4.0 * std::f64::consts::PI, epsilon = 1e-13);
        assert_abs_diff_eq!(sphere_measure(4), 2.0 * std::f64::consts::PI.powi(2), epsilon = 1e-12);
    }

    #[test]
    fn regularized_solution_dominates_and_is_positive() {
        let g = build_grid(&Domain::unit_interval(), QuadratureRule::Trapezoid, 33).unwrap();
        let op = DiscreteOperator::assemble(&KernelSpec::Constant(1.0), &g).unwrap();
        let eig = op.principal_eigenpair().unwrap();
        let w = WeightSpec::constant(1.0, 2.0).unwrap();
        let cfg = ContinuationConfig::default();
        let sol = solve_p_eps(&op, &eig, &w, &[vec![0.5]], 0.25, 2.0, &cfg, None).unwrap();
        assert!(sol.point.diagnostics.min_u > 0.0);
        let spread = sol.point.u.iter().fold(0.0f64, |m, v| m.max(*v))
            - sol.point.u.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        assert!(spread > 1e-3);
        assert!(sol.lemma12_holds, "margin {}", sol.lemma12_margin);
        assert!(solve_p_eps(&op, &eig, &w, &[vec![0.5]], 0.3, 2.0, &cfg, None).is_err());
        assert!(solve_p_eps(&op, &eig, &w, &[vec![0.5]], 0.25, 0.9, &cfg, None).is_err());
    }
}
