//! Positive solution branch: seeding near `(λ₁, 0)`, damped Newton at fixed
//! `λ`, and pseudo-arclength continuation in `(u, λ)`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logistic::LogisticProblem;
use crate::operator::PrincipalEigenpair;

/// Below this sup-norm an iterate is treated as the trivial solution.
pub const TRIVIAL_NORM: f64 = 1e-8;

const MAX_HALVINGS: usize = 40;
const MAX_STEPS: usize = 20_000;
const DEFAULT_SEED: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub lambda_max: f64,
    /// Amplitude `s₀` of the seed `s₀φ₁`; when absent, `min(1e-2, 1e-2^{1/p})`
    /// so that `s₀^p ≤ 1e-2`.
    pub seed_amplitude: Option<f64>,
    /// Covering count and local lower bound of `Q`, for the `L^p` bound margin.
    pub a_priori: Option<APriori>,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            ds: 0.02,
            ds_min: 1e-7,
            ds_max: 0.25,
            newton_tol: 1e-10,
            newton_max_iters: 25,
            lambda_max: 3.0,
            seed_amplitude: None,
            a_priori: None,
        }
    }
}

impl ContinuationConfig {
    pub fn seed_amplitude_for(&self, p: f64) -> f64 {
        self.seed_amplitude
            .unwrap_or_else(|| DEFAULT_SEED.min(DEFAULT_SEED.powf(1.0 / p)))
    }

    pub fn validate(&self, lambda1: f64) -> Result<()> {
        if !(self.ds_min > 0.0 && self.ds_min <= self.ds && self.ds <= self.ds_max) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < ds_min <= ds <= ds_max, got {} / {} / {}",
                self.ds_min, self.ds, self.ds_max
            )));
        }
        if !(self.newton_tol > 0.0) || self.newton_max_iters == 0 {
            return Err(Error::InvalidArgument(
                "newton_tol and newton_max_iters must be positive".into(),
            ));
        }
        if !(self.lambda_max > lambda1) {
            return Err(Error::InvalidArgument(format!(
                "lambda_max = {} must exceed lambda1 = {lambda1}",
                self.lambda_max
            )));
        }
        if self.seed_amplitude.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::InvalidArgument("seed amplitude must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct APriori {
    pub m: usize,
    pub sigma: f64,
}

impl APriori {
    /// `(mλ/σ)^{1/p}`.
    pub fn bound(&self, lambda: f64, p: f64) -> f64 {
        (self.m as f64 * lambda / self.sigma).powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDiagnostics {
    pub gamma_phi_sup: f64,
    pub lemma10_margin: f64,
    pub min_u: f64,
    pub newton_iters: usize,
    pub residual_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub lambda: f64,
    pub u: Vec<f64>,
    pub sup_norm: f64,
    pub p_norm: f64,
    pub gamma: f64,
    pub diagnostics: PointDiagnostics,
}

impl BranchPoint {
    pub fn evaluate(
        problem: &LogisticProblem,
        lambda: f64,
        u: Vec<f64>,
        newton_iters: usize,
        a_priori: Option<APriori>,
    ) -> Result<Self> {
        let phi = problem.phi(&u)?;
        let r = problem.residual_with(lambda, &u, &phi);
        let p = problem.p;
        let p_norm = problem.grid().lp_norm(&u, p);
        let gamma = 1.0 / lambda;
        let lemma10_margin = a_priori.map_or(f64::NAN, |a| a.bound(lambda, p) - p_norm);
        Ok(BranchPoint {
            lambda,
            sup_norm: sup(&u),
            p_norm,
            gamma,
            diagnostics: PointDiagnostics {
                gamma_phi_sup: gamma * phi.sup_norm,
                lemma10_margin,
                min_u: u.iter().copied().fold(f64::INFINITY, f64::min),
                newton_iters,
                residual_norm: sup(&r),
            },
            u,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedLambdaMax,
    StepFailure,
    LeftAdmissibleSet,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Branch {
    pub lambda1: f64,
    pub p: f64,
    pub points: Vec<BranchPoint>,
    pub termination: Termination,
    /// Indices of points where `λ` reverses direction.
    pub folds: Vec<usize>,
}

impl Branch {
    /// Sub-path along which `λ` strictly increases.
    pub fn monotone_points(&self) -> Vec<&BranchPoint> {
        let mut out: Vec<&BranchPoint> = Vec::new();
        for pt in &self.points {
            if out.last().is_none_or(|l| pt.lambda > l.lambda) {
                out.push(pt);
            }
        }
        out
    }

    /// Value at `‖u‖ → 0` of the quadratic in `t = ‖u‖∞^p` through the first
    /// three points.
    pub fn bifurcation_estimate(&self) -> Option<f64> {
        let pts = self.monotone_points();
        if pts.len() < 3 {
            return None;
        }
        let t: Vec<f64> = pts[..3].iter().map(|q| q.sup_norm.powf(self.p)).collect();
        let l: Vec<f64> = pts[..3].iter().map(|q| q.lambda).collect();
        Some(lagrange_at_zero(&t, &l))
    }
}

pub(crate) fn lagrange_at_zero(t: &[f64], y: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 0..t.len() {
        let mut basis = 1.0;
        for j in 0..t.len() {
            if j != k {
                basis *= -t[j] / (t[k] - t[j]);
            }
        }
        acc += y[k] * basis;
    }
    acc
}

pub(crate) fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Start on the branch: `u = s₀φ₁` and `λ` from projecting the residual onto `φ₁`.
pub fn seed_branch(problem: &LogisticProblem, eig: &PrincipalEigenpair, s0: f64) -> Result<(f64, Vec<f64>)> {
    if !(s0 > 0.0) {
        return Err(Error::InvalidArgument(format!("seed amplitude must be > 0, got {s0}")));
    }
    let u: Vec<f64> = eig.phi1.iter().map(|v| s0 * v).collect();
    let phi = problem.phi(&u)?;
    let g = problem.grid();
    let fu: Vec<f64> = phi.values.iter().zip(&u).map(|(f, v)| f * v).collect();
    let lambda = eig.lambda1 + g.inner(&fu, &eig.phi1) / g.inner(&u, &eig.phi1);
    Ok((lambda, u))
}

/// Result of a fixed-`λ` Newton solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub u: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

impl NewtonOutcome {
    pub fn is_trivial(&self) -> bool {
        self.converged && sup(&self.u) < TRIVIAL_NORM
    }
}

fn lu_solve(m: DMatrix<f64>, rhs: DVector<f64>, what: &'static str) -> Result<DVector<f64>> {
    let x = m.lu().solve(&rhs).ok_or(Error::SingularSystem(what))?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(Error::SingularSystem(what))
    }
}

/// Scales `step` until `base + α·step` stays positive and does not increase
/// the residual. Returns the accepted iterate.
fn damped_update(
    problem: &LogisticProblem,
    lambda: f64,
    base: &[f64],
    step: &[f64],
    current_res: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut alpha = 1.0;
    let mut positive = None;
    for _ in 0..MAX_HALVINGS {
        let cand: Vec<f64> = base.iter().zip(step).map(|(b, s)| b + alpha * s).collect();
        if cand.iter().all(|v| *v > 0.0) {
            positive = Some(cand);
            break;
        }
        alpha *= 0.5;
    }
    let Some(mut cand) = positive else {
        let node = base.iter().zip(step).position(|(b, s)| b + s <= 0.0).unwrap_or(0);
        return Err(Error::LostPositivity { node });
    };
    let mut res = sup(&problem.residual(lambda, &cand)?);
    let mut tries = 0;
    while res > current_res && tries < 12 {
        alpha *= 0.5;
        cand = base.iter().zip(step).map(|(b, s)| b + alpha * s).collect();
        res = sup(&problem.residual(lambda, &cand)?);
        tries += 1;
    }
    Ok((cand, res))
}

/// Damped Newton at fixed `λ` with positivity safeguard. Converges when
/// `‖R‖∞ ≤ tol·‖u‖∞`, or reports collapse to the trivial solution.
pub fn newton_solve(
    problem: &LogisticProblem,
    lambda: f64,
    u0: &[f64],
    cfg: &ContinuationConfig,
) -> Result<NewtonOutcome> {
    if problem.p < 1.0 && u0.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("Newton start must be positive for p < 1".into()));
    }
    let mut u = u0.to_vec();
    let mut res = sup(&problem.residual(lambda, &u)?);
    for it in 0..=cfg.newton_max_iters {
        let un = sup(&u);
        if un < TRIVIAL_NORM {
            return Ok(NewtonOutcome {
                u,
                iterations: it,
                residual_norm: res,
                converged: true,
            });
        }
        if res <= cfg.newton_tol * un {
            // one extra step to tighten the residual, kept only if it helps
            if let Ok(step) = newton_direction(problem, lambda, &u) {
                let cand: Vec<f64> = u.iter().zip(&step).map(|(a, b)| a + b).collect();
                if cand.iter().all(|v| *v > 0.0) {
                    let r2 = sup(&problem.residual(lambda, &cand)?);
                    if r2 < res {
                        u = cand;
                        res = r2;
                    }
                }
            }
            return Ok(NewtonOutcome {
                u,
                iterations: it,
                residual_norm: res,
                converged: true,
            });
        }
        if it == cfg.newton_max_iters {
            break;
        }
        let step = newton_direction(problem, lambda, &u)?;
        let (next, r) = damped_update(problem, lambda, &u, &step, res)?;
        u = next;
        res = r;
    }
    Ok(NewtonOutcome {
        u,
        iterations: cfg.newton_max_iters,
        residual_norm: res,
        converged: false,
    })
}

fn newton_direction(problem: &LogisticProblem, lambda: f64, u: &[f64]) -> Result<Vec<f64>> {
    let j = problem.jacobian(lambda, u)?;
    let r = DVector::from_vec(problem.residual(lambda, u)?);
    Ok(lu_solve(j, -r, "Newton step")?.as_slice().to_vec())
}

/// Newton at fixed `λ`, packaged as a branch point. Collapse to the trivial
/// solution and non-convergence are both reported as step failures.
pub fn newton_correct(
    problem: &LogisticProblem,
    lambda: f64,
    u0: &[f64],
    cfg: &ContinuationConfig,
) -> Result<BranchPoint> {
    let out = newton_solve(problem, lambda, u0, cfg)?;
    if !out.converged {
        return Err(Error::StepFailure(format!(
            "no convergence in {} iterations at lambda = {lambda} (|R| = {:e})",
            cfg.newton_max_iters, out.residual_norm
        )));
    }
    if out.is_trivial() {
        return Err(Error::StepFailure(format!(
            "collapsed to the trivial solution at lambda = {lambda}"
        )));
    }
    BranchPoint::evaluate(problem, lambda, out.u, out.iterations, cfg.a_priori)
}

struct ArcState<'a> {
    weights: Vec<f64>,
    problem: &'a LogisticProblem,
}

impl ArcState<'_> {
    fn dot(&self, au: &[f64], al: f64, bu: &[f64], bl: f64) -> f64 {
        self.weights
            .iter()
            .zip(au)
            .zip(bu)
            .map(|((w, a), b)| w * a * b)
            .sum::<f64>()
            + al * bl
    }

    fn tangent(&self, from: (&[f64], f64), to: (&[f64], f64)) -> (Vec<f64>, f64) {
        let du: Vec<f64> = to.0.iter().zip(from.0).map(|(a, b)| a - b).collect();
        let dl = to.1 - from.1;
        let norm = self.dot(&du, dl, &du, dl).sqrt();
        (du.iter().map(|v| v / norm).collect(), dl / norm)
    }

    /// Bordered Newton for `R(λ,u) = 0`, `⟨t, z − z₀⟩ = ds`.
    fn correct(
        &self,
        z0: (&[f64], f64),
        t: (&[f64], f64),
        ds: f64,
        cfg: &ContinuationConfig,
    ) -> Result<(Vec<f64>, f64, usize)> {
        let n = z0.0.len();
        let pr = self.problem;
        let mut u: Vec<f64> = z0.0.iter().zip(t.0).map(|(a, b)| a + ds * b).collect();
        let mut lambda = z0.1 + ds * t.1;
        if u.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::LostPositivity {
                node: u.iter().position(|v| !(*v > 0.0)).unwrap_or(0),
            });
        }
        for it in 0..cfg.newton_max_iters {
            let r = pr.residual(lambda, &u)?;
            let du: Vec<f64> = u.iter().zip(z0.0).map(|(a, b)| a - b).collect();
            let arc = self.dot(&du, lambda - z0.1, t.0, t.1) - ds;
            if sup(&r) <= cfg.newton_tol * sup(&u) && arc.abs() <= 1e-12 * (1.0 + ds) {
                return Ok((u, lambda, it));
            }
            let j = pr.jacobian(lambda, &u)?;
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m.view_mut((0, 0), (n, n)).copy_from(&j);
            for i in 0..n {
                m[(i, n)] = -u[i];
                m[(n, i)] = self.weights[i] * t.0[i];
            }
            m[(n, n)] = t.1;
            let mut rhs = DVector::zeros(n + 1);
            for i in 0..n {
                rhs[i] = -r[i];
            }
            rhs[n] = -arc;
            let step = lu_solve(m, rhs, "bordered corrector")?;
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..MAX_HALVINGS {
                if (0..n).all(|i| u[i] + alpha * step[i] > 0.0) {
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::LostPositivity { node: 0 });
            }
            for i in 0..n {
                u[i] += alpha * step[i];
            }
            lambda += alpha * step[n];
        }
        Err(Error::StepFailure(format!(
            "bordered corrector did not converge in {} iterations",
            cfg.newton_max_iters
        )))
    }
}

/// Pseudo-arclength continuation of the positive branch from `(λ₁, 0)` up to
/// `cfg.lambda_max`.
pub fn trace_branch(problem: &LogisticProblem, eig: &PrincipalEigenpair, cfg: &ContinuationConfig) -> Result<Branch> {
    cfg.validate(eig.lambda1)?;
    let n = problem.len();
    let (lg, ug) = seed_branch(problem, eig, cfg.seed_amplitude_for(problem.p))?;
    let first =
        newton_correct(problem, lg, &ug, cfg).map_err(|e| Error::StepFailure(format!("seed did not converge: {e}")))?;

    let vol = problem.grid().volume();
    let arc = ArcState {
        weights: problem.grid().weights.iter().map(|w| w / vol).collect(),
        problem,
    };

    let mut points = vec![first];
    let mut folds = Vec::new();
    let mut prev_u = vec![0.0; n];
    let mut prev_l = eig.lambda1;
    let mut ds = cfg.ds;
    let mut fast = 0usize;
    let mut termination = Termination::StepFailure;

    for _ in 0..MAX_STEPS {
        let last = points.last().expect("non-empty");
        if last.lambda >= cfg.lambda_max {
            termination = Termination::ReachedLambdaMax;
            break;
        }
        let (tu, tl) = arc.tangent((&prev_u, prev_l), (&last.u, last.lambda));

        if last.lambda + ds * tl > cfg.lambda_max && tl > 0.0 {
            let h = (cfg.lambda_max - last.lambda) / tl;
            let guess: Vec<f64> = last.u.iter().zip(&tu).map(|(a, b)| (a + h * b).max(1e-3 * a)).collect();
            if let Ok(pt) = newton_correct(problem, cfg.lambda_max, &guess, cfg) {
                points.push(pt);
                termination = Termination::ReachedLambdaMax;
                break;
            }
        }

        match arc.correct((&last.u, last.lambda), (&tu, tl), ds, cfg) {
            Ok((u, lambda, iters)) => {
                let polished = newton_correct(problem, lambda, &u, cfg);
                let pt = match polished {
                    Ok(mut pt) => {
                        pt.diagnostics.newton_iters += iters;
                        pt
                    }
                    Err(_) => {
                        ds *= 0.5;
                        fast = 0;
                        if ds < cfg.ds_min {
                            break;
                        }
                        continue;
                    }
                };
                if pt.diagnostics.gamma_phi_sup >= 1.0 {
                    termination = Termination::LeftAdmissibleSet;
                    break;
                }
                let dl_new = pt.lambda - last.lambda;
                let dl_old = last.lambda - prev_l;
                if dl_new * dl_old < 0.0 {
                    folds.push(points.len() - 1);
                }
                prev_u = last.u.clone();
                prev_l = last.lambda;
                points.push(pt);
                if iters <= 4 {
                    fast += 1;
                    if fast >= 3 {
                        ds = (2.0 * ds).min(cfg.ds_max);
                        fast = 0;
                    }
                } else {
                    fast = 0;
                }
            }
            Err(_) => {
                ds *= 0.5;
                fast = 0;
                if ds < cfg.ds_min {
                    break;
                }
            }
        }
    }

    Ok(Branch {
        lambda1: eig.lambda1,
        p: problem.p,
        points,
        termination,
        folds,
    })
}

/// Solution at a given `λ`, started from interpolating the stored branch.
pub fn solution_at(
    problem: &LogisticProblem,
    branch: &Branch,
    lambda: f64,
    cfg: &ContinuationConfig,
) -> Result<BranchPoint> {
    let pts = branch.monotone_points();
    let first = pts
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty branch".into()))?;
    let last = pts.last().expect("non-empty");
    if !(lambda > branch.lambda1 && lambda <= last.lambda) {
        return Err(Error::InvalidArgument(format!(
            "lambda = {lambda} outside the traced range ({}, {}]",
            branch.lambda1, last.lambda
        )));
    }
    let guess: Vec<f64> = if lambda <= first.lambda {
        let s = (lambda - branch.lambda1) / (first.lambda - branch.lambda1);
        first.u.iter().map(|v| v * s.max(1e-3)).collect()
    } else {
        let k = pts.windows(2).position(|w| w[1].lambda >= lambda).expect("bracketed");
        let (a, b) = (pts[k], pts[k + 1]);
        let s = (lambda - a.lambda) / (b.lambda - a.lambda);
        a.u.iter().zip(&b.u).map(|(x, y)| x + s * (y - x)).collect()
    };
    newton_correct(problem, lambda, &guess, cfg)
}

/// `(λ₁, λ₁ + λ₁σ/[Q])`, unbounded above when `[Q] = 0`.
pub fn theorem1_window(lambda1: f64, sigma: f64, oscillation: f64) -> Result<(f64, f64)> {
    if !(sigma > 0.0) {
        return Err(Error::Hypothesis(format!(
            "global lower bound sigma = {sigma} is not positive"
        )));
    }
    let hi = if oscillation == 0.0 {
        f64::INFINITY
    } else {
        lambda1 + lambda1 * sigma / oscillation
    };
    Ok((lambda1, hi))
}
