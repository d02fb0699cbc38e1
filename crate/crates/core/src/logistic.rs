//! The nonlocal logistic equation `L₀u + Φ_u u = λu` on a grid.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::QuadratureGrid;
use crate::model::{KernelSpec, WeightSpec};
use crate::operator::DiscreteOperator;

/// Smallest `|u_i|` at which the Jacobian is formed when `p < 1`.
pub const SINGULAR_FLOOR: f64 = 1e-10;

/// Samples of the crowding term `Φ_u(x) = ∫ Q(x,y) |u(y)|^p dy`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhiField {
    pub values: Vec<f64>,
    pub sup_norm: f64,
    pub p: f64,
}

/// Discretized problem: dispersal operator, sampled weight matrix and power.
#[derive(Debug, Clone)]
pub struct LogisticProblem {
    pub op: DiscreteOperator,
    pub q: DMatrix<f64>,
    pub p: f64,
}

fn abs_pow(v: f64, p: f64) -> f64 {
    v.abs().powf(p)
}

impl LogisticProblem {
    pub fn new(kernel: &KernelSpec, weight: &WeightSpec, grid: &QuadratureGrid) -> Result<Self> {
        let op = DiscreteOperator::assemble(kernel, grid)?;
        Self::with_operator(op, weight)
    }

    /// Reuses an assembled operator with a (possibly different) weight.
    pub fn with_operator(op: DiscreteOperator, weight: &WeightSpec) -> Result<Self> {
        let q = weight.matrix(&op.grid)?;
        Ok(LogisticProblem { op, q, p: weight.p })
    }

    pub fn grid(&self) -> &QuadratureGrid {
        &self.op.grid
    }

    pub fn len(&self) -> usize {
        self.op.len()
    }

    pub fn is_empty(&self) -> bool {
        self.op.is_empty()
    }

    pub fn q_sup(&self) -> f64 {
        self.q.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    fn check_len(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: u.len(),
            });
        }
        Ok(())
    }

    pub fn phi(&self, u: &[f64]) -> Result<PhiField> {
        self.check_len(u)?;
        let w = &self.grid().weights;
        let mass = DVector::from_iterator(u.len(), u.iter().zip(w).map(|(v, wj)| abs_pow(*v, self.p) * wj));
        let values: Vec<f64> = (&self.q * mass).as_slice().to_vec();
        let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(*v));
        Ok(PhiField {
            values,
            sup_norm,
            p: self.p,
        })
    }

    /// `R = Au + Φ_u∘u − λu`.
    pub fn residual(&self, lambda: f64, u: &[f64]) -> Result<Vec<f64>> {
        let phi = self.phi(u)?;
        Ok(self.residual_with(lambda, u, &phi))
    }

    pub(crate) fn residual_with(&self, lambda: f64, u: &[f64], phi: &PhiField) -> Vec<f64> {
        self.op
            .apply(u)
            .iter()
            .zip(u)
            .zip(&phi.values)
            .map(|((au, ui), fi)| au + fi * ui - lambda * ui)
            .collect()
    }

    /// `J = A + diag(Φ_u) − λI + D` with `D_ij = u_i p Q_ij |u_j|^{p−1} sgn(u_j) w_j`.
    pub fn jacobian(&self, lambda: f64, u: &[f64]) -> Result<DMatrix<f64>> {
        self.check_len(u)?;
        let p = self.p;
        if p < 1.0 {
            if let Some((node, v)) = u.iter().enumerate().find(|(_, v)| v.abs() <= SINGULAR_FLOOR) {
                return Err(Error::SingularJacobian { node, value: *v });
            }
        }
        let phi = self.phi(u)?;
        let w = &self.grid().weights;
        let n = u.len();
        // d|u|^p/du, with sgn(0) = 0
        let dpow: Vec<f64> = u
            .iter()
            .map(|v| {
                if *v == 0.0 {
                    0.0
                } else if p == 1.0 {
                    v.signum()
                } else {
                    p * v.abs().powf(p - 1.0) * v.signum()
                }
            })
            .collect();
        let mut j = self.op.a.clone();
        for c in 0..n {
            let col = dpow[c] * w[c];
            for r in 0..n {
                j[(r, c)] += u[r] * self.q[(r, c)] * col;
            }
        }
        for i in 0..n {
            j[(i, i)] += phi.values[i] - lambda;
        }
        Ok(j)
    }

    /// `G(γ,u) = γ² Φ_u∘(Au) / (1 − γΦ_u)`, defined on the admissible set.
    pub fn g_map(&self, gamma: f64, u: &[f64]) -> Result<Vec<f64>> {
        let phi = self.phi(u)?;
        if !in_admissible_set(gamma, &phi) {
            return Err(Error::OutsideAdmissibleSet(gamma * phi.sup_norm));
        }
        Ok(self
            .op
            .apply(u)
            .iter()
            .zip(&phi.values)
            .map(|(au, f)| gamma * gamma * f * au / (1.0 - gamma * f))
            .collect())
    }
}

/// `γ ‖Φ‖∞ < 1`.
pub fn in_admissible_set(gamma: f64, phi: &PhiField) -> bool {
    gamma * phi.sup_norm < 1.0
}

/// Standalone evaluation of `Φ_u` for a weight on a grid.
pub fn phi(weight: &WeightSpec, grid: &QuadratureGrid, u: &[f64]) -> Result<PhiField> {
    let q = weight.matrix(grid)?;
    if u.len() != grid.len() {
        return Err(Error::LengthMismatch {
            expected: grid.len(),
            got: u.len(),
        });
    }
    let values: Vec<f64> = (0..grid.len())
        .map(|i| {
            (0..grid.len())
                .map(|j| q[(i, j)] * abs_pow(u[j], weight.p) * grid.weights[j])
                .sum()
        })
        .collect();
    let sup_norm = values.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok(PhiField {
        values,
        sup_norm,
        p: weight.p,
    })
}
