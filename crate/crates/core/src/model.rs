//! Dispersal kernels `K`, interaction weights `Q`, and their hypothesis
//! certificates on a grid.
//!
//! Matrices follow the convention `M[(i, j)] = M(x_i, y_j)`: rows index the
//! evaluation point `x`, columns the integration variable `y`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, QuadratureGrid};

/// Tolerance used for equalities certified on the grid.
pub const GRID_TOL: f64 = 1e-12;

/// Polynomial with ascending coefficients. On an `N`-dimensional point it is
/// evaluated as a tensor-product profile `Π_k poly(x_k)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Poly(pub Vec<f64>);

impl Poly {
    pub fn constant(c: f64) -> Self {
        Poly(vec![c])
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    pub fn profile(&self, x: &[f64]) -> f64 {
        x.iter().map(|t| self.eval(*t)).product()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Constant(f64),
    /// `K(x, y) = φ(x) φ(y)`.
    RankOne(Poly),
    /// `K(x, y) = exp(-|x - y|² / ℓ²)`.
    Gaussian {
        length: f64,
    },
    Tabulated(DMatrix<f64>),
}

impl KernelSpec {
    /// Pointwise value; `None` for tabulated kernels.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match self {
            KernelSpec::Constant(c) => Some(*c),
            KernelSpec::RankOne(phi) => Some(phi.profile(x) * phi.profile(y)),
            KernelSpec::Gaussian { length } => {
                let d = dist(x, y);
                Some((-(d * d) / (length * length)).exp())
            }
            KernelSpec::Tabulated(_) => None,
        }
    }

    /// Samples `K(x_i, x_j)` over all node pairs. Fails on negative samples.
    pub fn matrix(&self, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
        let n = grid.len();
        let m = match self {
            KernelSpec::Tabulated(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: m.nrows(),
                    });
                }
                m.clone()
            }
            _ => DMatrix::from_fn(n, n, |i, j| {
                self.value(&grid.nodes[i], &grid.nodes[j]).expect("analytic kernel")
            }),
        };
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if !(v >= 0.0) {
                    return Err(Error::NegativeKernel { i, j, value: v });
                }
            }
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeightForm {
    Constant(f64),
    /// `Q(x, y) = g(x) h(y)`.
    Separable {
        g: Poly,
        h: Poly,
    },
    /// `Q(x, y) = h(y) [M - Π_i |x - x_i|^{q_i}] + g(y)`.
    PolynomialDip {
        h: Poly,
        g: Poly,
        points: Vec<Vec<f64>>,
        exponents: Vec<f64>,
        level: f64,
    },
    Tabulated(DMatrix<f64>),
}

/// Interaction weight `Q` together with the nonlinearity power `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub form: WeightForm,
    pub p: f64,
}

impl WeightSpec {
    pub fn new(form: WeightForm, p: f64) -> Result<Self> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::InvalidArgument(format!("exponent p must be > 0, got {p}")));
        }
        if let WeightForm::PolynomialDip { points, exponents, .. } = &form {
            if points.is_empty() || points.len() != exponents.len() {
                return Err(Error::InvalidArgument(
                    "polynomial_dip needs one exponent per point".into(),
                ));
            }
        }
        Ok(WeightSpec { form, p })
    }

    pub fn constant(q: f64, p: f64) -> Result<Self> {
        WeightSpec::new(WeightForm::Constant(q), p)
    }

    /// Pointwise value; `None` for tabulated weights.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Option<f64> {
        match &self.form {
            WeightForm::Constant(q) => Some(*q),
            WeightForm::Separable { g, h } => Some(g.profile(x) * h.profile(y)),
            WeightForm::PolynomialDip {
                h,
                g,
                points,
                exponents,
                level,
            } => Some(h.profile(y) * (level - dip_product(x, points, exponents)) + g.profile(y)),
            WeightForm::Tabulated(_) => None,
        }
    }

    /// Samples `Q(x_i, x_j)`. Fails on negative samples.
    pub fn matrix(&self, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
        let n = grid.len();
        let m = match &self.form {
            WeightForm::Tabulated(m) => {
                if m.nrows() != n || m.ncols() != n {
                    return Err(Error::LengthMismatch {
                        expected: n,
                        got: m.nrows(),
                    });
                }
                m.clone()
            }
            _ => DMatrix::from_fn(n, n, |i, j| {
                self.value(&grid.nodes[i], &grid.nodes[j]).expect("analytic weight")
            }),
        };
        for j in 0..n {
            for i in 0..n {
                let v = m[(i, j)];
                if !(v >= 0.0) {
                    return Err(Error::NegativeWeight { i, j, value: v });
                }
            }
        }
        Ok(m)
    }

    /// Points singled out by the preset (the dip points), if any.
    pub fn marked_points(&self) -> &[Vec<f64>] {
        match &self.form {
            WeightForm::PolynomialDip { points, .. } => points,
            _ => &[],
        }
    }
}

fn dip_product(x: &[f64], points: &[Vec<f64>], exponents: &[f64]) -> f64 {
    points
        .iter()
        .zip(exponents)
        .map(|(xi, qi)| dist(x, xi).powf(*qi))
        .product()
}

// ---------------------------------------------------------------------------
// Hypothesis checks

/// Symmetry of `K`: `(holds, max |K(x_i,x_j) - K(x_j,x_i)|)`.
pub fn check_k1(kernel: &KernelSpec, grid: &QuadratureGrid) -> Result<(bool, f64)> {
    let k = kernel.matrix(grid)?;
    Ok(symmetry_defect(&k))
}

pub(crate) fn symmetry_defect(k: &DMatrix<f64>) -> (bool, f64) {
    let n = k.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((k[(i, j)] - k[(j, i)]).abs());
        }
    }
    (worst <= GRID_TOL, worst)
}

/// Positivity of `K` on node pairs closer than `delta`.
pub fn check_k2(kernel: &KernelSpec, grid: &QuadratureGrid, delta: f64) -> Result<bool> {
    Ok(k2_min(&kernel.matrix(grid)?, grid, delta)? > 0.0)
}

fn k2_min(k: &DMatrix<f64>, grid: &QuadratureGrid, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("delta must be > 0, got {delta}")));
    }
    Ok(min_over_close_pairs(k, grid, delta))
}

fn min_over_close_pairs(m: &DMatrix<f64>, grid: &QuadratureGrid, radius: f64) -> f64 {
    let n = grid.len();
    let mut lo = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            if grid.distance(i, j) <= radius + GRID_TOL {
                lo = lo.min(m[(i, j)]);
            }
        }
    }
    lo
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K1Report {
    pub holds: bool,
    pub max_asymmetry: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct K2Report {
    pub holds: bool,
    pub delta: f64,
    pub min_kernel: f64,
}

/// Local lower bound `Q ≥ σ` on pairs with `|x - y| ≤ r`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q2Report {
    pub holds: bool,
    pub sigma: f64,
    pub r: f64,
}

/// Global lower bound `Q ≥ σ` on all pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q2ppReport {
    pub holds: bool,
    pub sigma: f64,
}

/// Existence of a point `x₀` with `Q(x₀, y) ≥ Q(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q4Report {
    pub holds: bool,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q2Q4Fragment {
    pub q2: Q2Report,
    pub q2pp: Q2ppReport,
    pub q4: Q4Report,
}

/// Certificate for the strict-maximum hypothesis with weight function `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Q3Certificate {
    pub holds: bool,
    pub x0: Vec<f64>,
    /// Exponent `q = max{1, p}` of the integrability requirement on `1/a`.
    pub q: f64,
    /// Scale `m` in `a(x) = m Π |x - x_i|^{q_i}`.
    pub scale: f64,
    pub a_samples: Vec<f64>,
    /// Quadrature of `a^{-q}` over nodes with `a ≥ 1e-14`.
    pub int_a_inv_q: f64,
    pub int_a_inv_1: f64,
    pub int_a_inv_p: f64,
    /// Smallest `Q(x₀, y) - Q(x, y) - a(x)` over the grid.
    pub min_gap: f64,
    pub exponents_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub k1: K1Report,
    pub k2: K2Report,
    pub q2: Q2Report,
    pub q2pp: Q2ppReport,
    pub q3: Option<Q3Certificate>,
    pub q4: Q4Report,
    pub oscillation: f64,
}

impl HypothesisReport {
    /// Report-level implications that must always hold.
    pub fn consistent(&self) -> bool {
        let q2pp_ok = !self.q2pp.holds || (self.q2.holds && self.q2.sigma >= self.q2pp.sigma);
        let q3_ok = match &self.q3 {
            Some(c) if c.holds => self.q4.holds && self.q4.x0.as_ref() == Some(&c.x0),
            _ => true,
        };
        q2pp_ok && q3_ok
    }
}

/// `(Q₂)`, `(Q″₂)` and `(Q₄)` on the grid.
pub fn check_q2_q4(weight: &WeightSpec, grid: &QuadratureGrid, r: f64) -> Result<Q2Q4Fragment> {
    if !(r > 0.0) {
        return Err(Error::InvalidArgument(format!("r must be > 0, got {r}")));
    }
    let q = weight.matrix(grid)?;
    let sigma_local = min_over_close_pairs(&q, grid, r);
    let sigma_global = q.min();
    let q4 = check_q4(weight, grid, &q);
    Ok(Q2Q4Fragment {
        q2: Q2Report {
            holds: sigma_local > 0.0,
            sigma: sigma_local,
            r,
        },
        q2pp: Q2ppReport {
            holds: sigma_global > 0.0,
            sigma: sigma_global,
        },
        q4,
    })
}

fn check_q4(weight: &WeightSpec, grid: &QuadratureGrid, q: &DMatrix<f64>) -> Q4Report {
    let n = grid.len();
    let col_max: Vec<f64> = (0..n).map(|j| q.column(j).max()).collect();
    let dominates = |row: &dyn Fn(usize) -> f64| (0..n).all(|j| row(j) >= col_max[j] - GRID_TOL);

    for c in weight.marked_points() {
        let row = |j: usize| weight.value(c, &grid.nodes[j]).unwrap_or(f64::NEG_INFINITY);
        if dominates(&row) {
            return Q4Report {
                holds: true,
                x0: Some(c.clone()),
            };
        }
    }
    for i in 0..n {
        let row = |j: usize| q[(i, j)];
        if dominates(&row) {
            return Q4Report {
                holds: true,
                x0: Some(grid.nodes[i].clone()),
            };
        }
    }
    Q4Report { holds: false, x0: None }
}

/// `[Q] = max_y (max_x Q(x, y) - min_x Q(x, y))` over nodes.
pub fn oscillation(weight: &WeightSpec, grid: &QuadratureGrid) -> Result<f64> {
    Ok(oscillation_of(&weight.matrix(grid)?))
}

pub(crate) fn oscillation_of(q: &DMatrix<f64>) -> f64 {
    (0..q.ncols())
        .map(|j| {
            let c = q.column(j);
            c.max() - c.min()
        })
        .fold(0.0, f64::max)
}

/// Strict-maximum certificate, available for the `polynomial_dip` preset only.
pub fn certify_q3(weight: &WeightSpec, grid: &QuadratureGrid) -> Result<Option<Q3Certificate>> {
    let WeightForm::PolynomialDip {
        h, points, exponents, ..
    } = &weight.form
    else {
        return Ok(None);
    };
    let p = weight.p;
    let q_exp = p.max(1.0);
    let n_dim = grid.dim as f64;
    let x0 = points[0].clone();

    let exponents_ok = exponents.iter().all(|qi| *qi >= 0.0 && qi * q_exp < n_dim);
    let scale = grid.nodes.iter().map(|y| h.profile(y)).fold(f64::INFINITY, f64::min);

    let a_samples: Vec<f64> = grid
        .nodes
        .iter()
        .map(|x| scale * dip_product(x, points, exponents))
        .collect();

    let qm = weight.matrix(grid)?;
    let n = grid.len();
    let mut min_gap = f64::INFINITY;
    for j in 0..n {
        let top = weight.value(&x0, &grid.nodes[j]).expect("analytic weight");
        for i in 0..n {
            min_gap = min_gap.min(top - qm[(i, j)] - a_samples[i]);
        }
    }

    let inv_int = |e: f64| -> f64 {
        grid.weights
            .iter()
            .zip(&a_samples)
            .filter(|(_, a)| **a >= 1e-14)
            .map(|(w, a)| w * a.powf(-e))
            .sum()
    };
    let int_a_inv_q = inv_int(q_exp);
    let int_a_inv_1 = inv_int(1.0);
    let int_a_inv_p = inv_int(p);
    let holds = scale > 0.0
        && exponents_ok
        && min_gap >= -GRID_TOL
        && a_samples.iter().all(|a| *a >= 0.0)
        && int_a_inv_q.is_finite();

    Ok(Some(Q3Certificate {
        holds,
        x0,
        q: q_exp,
        scale,
        a_samples,
        int_a_inv_q,
        int_a_inv_1,
        int_a_inv_p,
        min_gap,
        exponents_ok,
    }))
}

/// Every hypothesis at once.
pub fn check_hypotheses(
    kernel: &KernelSpec,
    weight: &WeightSpec,
    grid: &QuadratureGrid,
    delta: f64,
    r: f64,
) -> Result<HypothesisReport> {
    let k = kernel.matrix(grid)?;
    let (k1, asym) = symmetry_defect(&k);
    let kmin = k2_min(&k, grid, delta)?;
    let frag = check_q2_q4(weight, grid, r)?;
    let q3 = certify_q3(weight, grid)?;
    let mut q4 = frag.q4;
    // A strict maximum at x₀ is in particular a (non-strict) maximum there.
    if let Some(c) = &q3 {
        if c.holds {
            q4 = Q4Report {
                holds: true,
                x0: Some(c.x0.clone()),
            };
        }
    }
    Ok(HypothesisReport {
        k1: K1Report {
            holds: k1,
            max_asymmetry: asym,
        },
        k2: K2Report {
            holds: kmin > 0.0,
            delta,
            min_kernel: kmin,
        },
        q2: frag.q2,
        q2pp: frag.q2pp,
        q3,
        q4,
        oscillation: oscillation(weight, grid)?,
    })
}

// ---------------------------------------------------------------------------
// Regularizing family

/// Largest admissible regularization exponent `N / (2p)`.
pub fn eps0(dim: usize, p: f64) -> f64 {
    dim as f64 / (2.0 * p)
}

/// `a_ε(x) = |x - x₀|^ε` for `|x - x₀| ≤ 1`, else `1`.
pub fn build_a_eps(grid: &QuadratureGrid, x0: &[f64], eps: f64, p: f64) -> Result<Vec<f64>> {
    build_a_eps_multi(grid, std::slice::from_ref(&x0.to_vec()), eps, p)
}

/// Product form `min(1, Π_j |x - x_j|^ε)`; reduces to [`build_a_eps`] for a
/// single point.
pub fn build_a_eps_multi(grid: &QuadratureGrid, points: &[Vec<f64>], eps: f64, p: f64) -> Result<Vec<f64>> {
    let e0 = eps0(grid.dim, p);
    if !(eps > 0.0 && eps <= e0) {
        return Err(Error::EpsilonOutOfRange { eps, eps0: e0 });
    }
    if points.is_empty() {
        return Err(Error::InvalidArgument("a_eps needs at least one point".into()));
    }
    Ok(grid
        .nodes
        .iter()
        .map(|x| {
            let prod: f64 = points.iter().map(|xj| dist(x, xj).powf(eps)).product();
            prod.min(1.0)
        })
        .collect())
}

/// `Q_ε(x, y) = Q(x, y) (2 - a_ε(x))`, tabulated on the grid.
pub fn build_q_eps(weight: &WeightSpec, grid: &QuadratureGrid, a_eps: &[f64]) -> Result<WeightSpec> {
    if a_eps.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: a_eps.len(),
        });
    }
    let mut q = weight.matrix(grid)?;
    for (i, a) in a_eps.iter().enumerate() {
        q.row_mut(i).scale_mut(2.0 - a);
    }
    WeightSpec::new(WeightForm::Tabulated(q), weight.p)
}
