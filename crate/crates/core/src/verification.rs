//! Independent oracles and one checker per quantitative bound.
//!
//! Every [`BoundReport`] uses the convention `margin ≥ 0` means satisfied.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::continuation::{newton_solve, sup, BranchPoint, ContinuationConfig, TRIVIAL_NORM};
use crate::error::{Error, Result};
use crate::geometry::Covering;
use crate::logistic::{LogisticProblem, PhiField};
use crate::operator::{DiscreteOperator, PrincipalEigenpair};

/// Slack allowed on every bound.
pub const BOUND_TOL: f64 = 1e-8;
/// Minimum size of a nontrivial solution counted by the multi-start checks.
pub const NONTRIVIAL_NORM: f64 = 1e-6;
/// Relative residual required to count a multi-start result as a solution.
/// Largest residual, relative to `‖Φ∘u‖∞`, of an accepted solution.
pub const BALANCE_TOL: f64 = 1e-3;
pub const SOLUTION_RESIDUAL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub name: String,
    pub holds: bool,
    pub applicable: bool,
    pub margin: f64,
    pub context: BTreeMap<String, f64>,
}

impl BoundReport {
    pub fn new(name: &str, margin: f64) -> Self {
        BoundReport {
            name: name.to_string(),
            holds: margin >= -BOUND_TOL,
            applicable: true,
            margin,
            context: BTreeMap::new(),
        }
    }

    pub fn not_applicable(name: &str) -> Self {
        BoundReport {
            name: name.to_string(),
            holds: true,
            applicable: false,
            margin: f64::NAN,
            context: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.context.insert(key.to_string(), value);
        self
    }

    /// Folds per-point reports of one bound into the worst case.
    pub fn worst(name: &str, reports: impl IntoIterator<Item = BoundReport>) -> BoundReport {
        let mut out = BoundReport::not_applicable(name);
        for r in reports.into_iter().filter(|r| r.applicable) {
            if !out.applicable || r.margin < out.margin || r.margin.is_nan() {
                let holds = out.holds && r.holds;
                out = r;
                out.holds = holds;
            } else {
                out.holds &= r.holds;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OracleOutcome {
    Converged {
        u: Vec<f64>,
        iterations: usize,
    },
    /// The amplitude equation has no positive root at this `λ`.
    NoPositiveSolution,
    Inconclusive(String),
}

/// Damped fixed-point oracle built on `u = Au / (λ − Φ_u)`.
///
/// The state is split as `u = s·v` with `‖v‖∞ = 1`. The amplitude comes from
/// testing the equation against `φ₁`,
/// `s^p = (λ − λ₁)⟨v, φ₁⟩ / ⟨Φ_v v, φ₁⟩`, and the profile is relaxed by
/// `v ← normalize((1−ω)v + ω·Av / (λ − s^p Φ_v))`.
pub fn oracle_fixed_point(
    problem: &LogisticProblem,
    eig: &PrincipalEigenpair,
    lambda: f64,
    u0: &[f64],
    relaxation: f64,
    max_iter: usize,
) -> Result<OracleOutcome> {
    if !(relaxation > 0.0 && relaxation <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "relaxation must be in (0, 1], got {relaxation}"
        )));
    }
    if u0.len() != problem.len() {
        return Err(Error::LengthMismatch {
            expected: problem.len(),
            got: u0.len(),
        });
    }
    if u0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("oracle start must be positive".into()));
    }
    let g = problem.grid();
    let p = problem.p;
    let mut v: Vec<f64> = {
        let s = sup(u0);
        u0.iter().map(|x| x / s).collect()
    };
    let mut prev_u: Option<Vec<f64>> = None;
    for it in 0..max_iter {
        let phi_v = problem.phi(&v)?;
        let fv: Vec<f64> = phi_v.values.iter().zip(&v).map(|(f, x)| f * x).collect();
        let num = (lambda - eig.lambda1) * g.inner(&v, &eig.phi1);
        let den = g.inner(&fv, &eig.phi1);
        if !(num > 0.0) || !(den > 0.0) {
            return Ok(OracleOutcome::NoPositiveSolution);
        }
        let amp_p = num / den;
        let s = amp_p.powf(1.0 / p);
        let u: Vec<f64> = v.iter().map(|x| s * x).collect();
        if let Some(prev) = &prev_u {
            let change = u.iter().zip(prev).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            if change < 1e-11 {
                return Ok(OracleOutcome::Converged { u, iterations: it });
            }
        }
        let av = problem.op.apply(&v);
        let mut next = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let c = lambda - amp_p * phi_v.values[i];
            if !(c > 0.0) {
                return Ok(OracleOutcome::Inconclusive(format!(
                    "lambda - Phi_u = {c:e} at node {i}: outside the admissible region"
                )));
            }
            next.push((1.0 - relaxation) * v[i] + relaxation * av[i] / c);
        }
        let ns = sup(&next);
        if !(ns > 0.0) || !ns.is_finite() {
            return Ok(OracleOutcome::Inconclusive("profile degenerated".into()));
        }
        v = next.iter().map(|x| x / ns).collect();
        prev_u = Some(u);
    }
    Ok(OracleOutcome::Inconclusive(format!(
        "no convergence in {max_iter} iterations"
    )))
}

/// `‖u‖_p ≤ (mλ/σ)^{1/p}`.
pub fn check_lemma10(point: &BranchPoint, covering: &Covering, sigma: f64, p: f64) -> BoundReport {
    let bound = (covering.m as f64 * point.lambda / sigma).powf(1.0 / p);
    BoundReport::new("lemma10", bound - point.p_norm)
        .with("lambda", point.lambda)
        .with("p_norm", point.p_norm)
        .with("sigma", sigma)
        .with("r", 2.0 * covering.radius)
        .with("m", covering.m as f64)
}

/// `min Φ_u ≥ σ‖u‖_p^p`.
pub fn check_cor1(phi: &PhiField, u_p_norm_pow: f64, sigma: f64) -> BoundReport {
    let lo = phi.values.iter().copied().fold(f64::INFINITY, f64::min);
    BoundReport::new("cor1", lo - sigma * u_p_norm_pow)
        .with("min_phi", lo)
        .with("sigma", sigma)
        .with("p_norm_pow", u_p_norm_pow)
}

/// `γ‖Φ_u‖∞ < 1`, as margin `1 − γ‖Φ_u‖∞`.
pub fn check_lemma9(point: &BranchPoint) -> BoundReport {
    let margin = 1.0 - point.diagnostics.gamma_phi_sup;
    let mut r = BoundReport::new("lemma9", margin).with("lambda", point.lambda);
    r.holds = margin > 0.0;
    r
}

/// `λ − λ₁ > σ‖u‖_p^p` under a global lower bound `σ`.
pub fn check_thm1_inequality(point: &BranchPoint, lambda1: f64, sigma: f64, p: f64) -> BoundReport {
    let rhs = sigma * point.p_norm.powf(p);
    BoundReport::new("thm1_inequality", point.lambda - lambda1 - rhs)
        .with("lambda", point.lambda)
        .with("sigma", sigma)
}

/// Membership of `λ` in `(λ₁, hi)`, margin = distance to the nearer end.
pub fn check_thm1_window(lambda: f64, window: (f64, f64)) -> BoundReport {
    let margin = (lambda - window.0).min(window.1 - lambda);
    BoundReport::new("thm1_window", margin)
        .with("lambda", lambda)
        .with("lambda_lo", window.0)
        .with("lambda_hi", window.1)
}

/// `‖Au/u‖∞ ≥ λ₁` for positive `u`.
pub fn check_lemma4(op: &DiscreteOperator, u: &[f64], lambda1: f64) -> Result<BoundReport> {
    let c = op.lemma4_c_norm(u)?;
    Ok(BoundReport::new("lemma4", c - lambda1)
        .with("c_sup", c)
        .with("lambda1", lambda1))
}

/// Positivity of a nontrivial solution and of `c = Au/u`.
pub fn check_lemma5_positivity(op: &DiscreteOperator, u: &[f64]) -> BoundReport {
    if sup(u) < TRIVIAL_NORM {
        return BoundReport::not_applicable("lemma5");
    }
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    let au = op.apply(u);
    let c_ok = min_u > 0.0 && au.iter().zip(u).all(|(a, v)| a / v > 0.0);
    let mut r = BoundReport::new("lemma5", min_u).with("min_u", min_u);
    r.holds = min_u > 0.0 && c_ok;
    r
}

fn random_start(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = 10f64.powf(rng.random_range(-2.0..0.5));
    (0..n).map(|_| scale * rng.random_range(0.1..1.0)).collect()
}

fn counts_as_solution(problem: &LogisticProblem, lambda: f64, u: &[f64]) -> Result<bool> {
    let s = sup(u);
    if s <= NONTRIVIAL_NORM || u.iter().any(|v| !(*v > 0.0)) {
        return Ok(false);
    }
    let nonlinear = problem.phi(u)?;
    let balance = sup(&nonlinear.values.iter().zip(u).map(|(f, v)| f * v).collect::<Vec<_>>());
    let res = sup(&problem.residual(lambda, u)?);
    Ok(res <= SOLUTION_RESIDUAL * s && res <= BALANCE_TOL * balance)
}

/// Multi-start search for a positive solution at `λ ≤ λ₁`. Holds when none is
/// found; the margin is `λ₁ − λ`, and the count of solutions found is in the
/// context.
pub fn check_nonexistence(
    problem: &LogisticProblem,
    eig: &PrincipalEigenpair,
    lambda: f64,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ContinuationConfig::default();
    let mut found = 0usize;
    let mut largest = 0.0f64;
    for _ in 0..trials {
        let u0 = random_start(&mut rng, problem.len());
        if let Ok(out) = newton_solve(problem, lambda, &u0, &cfg) {
            if counts_as_solution(problem, lambda, &out.u)? {
                found += 1;
                largest = largest.max(sup(&out.u));
            }
        }
        if let OracleOutcome::Converged { u, .. } = oracle_fixed_point(problem, eig, lambda, &u0, 0.5, 20_000)? {
            if counts_as_solution(problem, lambda, &u)? {
                found += 1;
                largest = largest.max(sup(&u));
            }
        }
    }
    let mut r = BoundReport::new("nonexistence", eig.lambda1 - lambda)
        .with("lambda", lambda)
        .with("lambda1", eig.lambda1)
        .with("trials", trials as f64)
        .with("found", found as f64)
        .with("largest_sup", largest);
    r.holds = found == 0;
    Ok(r)
}

/// `L₀u = g∘u` has no positive solution when `min g > λ₁`; checked by Newton
/// from random positive starts.
pub fn check_lemma51(op: &DiscreteOperator, g: &[f64], lambda1: f64, trials: usize, seed: u64) -> Result<BoundReport> {
    if g.len() != op.len() {
        return Err(Error::LengthMismatch {
            expected: op.len(),
            got: g.len(),
        });
    }
    let gmin = g.iter().copied().fold(f64::INFINITY, f64::min);
    if !(gmin > lambda1) {
        return Ok(BoundReport::not_applicable("lemma51").with("min_g", gmin));
    }
    let n = op.len();
    let mut m = op.a.clone();
    for i in 0..n {
        m[(i, i)] -= g[i];
    }
    let lu = m.clone().lu();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut found = 0usize;
    for _ in 0..trials {
        let mut u = DVector::from_vec(random_start(&mut rng, n));
        for _ in 0..25 {
            let r: DVector<f64> = &m * &u;
            if r.amax() <= 1e-14 * u.amax().max(1e-300) {
                break;
            }
            match lu.solve(&r) {
                Some(step) => u -= step,
                None => break,
            }
        }
        let r: DVector<f64> = &m * &u;
        let s = u.amax();
        if s > NONTRIVIAL_NORM && u.iter().all(|v| *v > 0.0) && r.amax() <= SOLUTION_RESIDUAL * s {
            found += 1;
        }
    }
    let mut rep = BoundReport::new("lemma51", gmin - lambda1)
        .with("min_g", gmin)
        .with("found", found as f64);
    rep.holds = found == 0;
    Ok(rep)
}

/// Quantities every bound check over a branch needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundContext {
    pub lambda1: f64,
    pub p: f64,
    /// Local lower bound of `Q` and the covering of radius `r/2`.
    pub sigma_local: Option<f64>,
    /// Global lower bound of `Q`, when positive.
    pub sigma_global: Option<f64>,
    pub oscillation: f64,
}

/// Runs every applicable checker on a list of solved points and folds each
/// bound into its worst case.
pub fn verify_points(
    problem: &LogisticProblem,
    points: &[BranchPoint],
    ctx: &BoundContext,
    covering: Option<&Covering>,
) -> Result<Vec<BoundReport>> {
    let mut lemma9 = Vec::new();
    let mut lemma10 = Vec::new();
    let mut cor1 = Vec::new();
    let mut thm1 = Vec::new();
    let mut lemma5 = Vec::new();
    let mut lemma4 = Vec::new();
    let mut residual = Vec::new();
    for pt in points {
        lemma9.push(check_lemma9(pt));
        if let (Some(s), Some(c)) = (ctx.sigma_local, covering) {
            lemma10.push(check_lemma10(pt, c, s, ctx.p));
        }
        if let Some(s) = ctx.sigma_global {
            let phi = problem.phi(&pt.u)?;
            cor1.push(check_cor1(&phi, pt.p_norm.powf(ctx.p), s));
            thm1.push(check_thm1_inequality(pt, ctx.lambda1, s, ctx.p));
        }
        lemma5.push(check_lemma5_positivity(&problem.op, &pt.u));
        if pt.u.iter().all(|v| *v > 0.0) {
            lemma4.push(check_lemma4(&problem.op, &pt.u, ctx.lambda1)?);
        }
        let tol = 1e-9 * pt.sup_norm.max(1.0);
        let mut r = BoundReport::new("residual", tol - pt.diagnostics.residual_norm).with("lambda", pt.lambda);
        r.holds = r.margin >= 0.0;
        residual.push(r);
    }
    Ok(vec![
        BoundReport::worst("lemma9", lemma9),
        BoundReport::worst("lemma10", lemma10),
        BoundReport::worst("cor1", cor1),
        BoundReport::worst("thm1_inequality", thm1),
        BoundReport::worst("lemma5", lemma5),
        BoundReport::worst("lemma4", lemma4),
        BoundReport::worst("residual", residual),
    ])
}

/// Central finite-difference Jacobian of the residual, for cross-checks.
pub fn fd_jacobian(problem: &LogisticProblem, lambda: f64, u: &[f64], h: f64) -> Result<DMatrix<f64>> {
    let n = u.len();
    let mut j = DMatrix::zeros(n, n);
    let mut up = u.to_vec();
    for c in 0..n {
        let x = u[c];
        up[c] = x + h;
        let rp = problem.residual(lambda, &up)?;
        up[c] = x - h;
        let rm = problem.residual(lambda, &up)?;
        up[c] = x;
        for r in 0..n {
            j[(r, c)] = (rp[r] - rm[r]) / (2.0 * h);
        }
    }
    Ok(j)
}
