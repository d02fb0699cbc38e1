//! Nyström discretization of the dispersal operator and its principal eigenpair.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::QuadratureGrid;
use crate::model::KernelSpec;

/// Largest size handled by the dense symmetric eigensolver.
pub const DENSE_LIMIT: usize = 2048;

/// Action matrix `A_ij = K_ij w_j` and its symmetrized twin
/// `S_ij = √w_i K_ij √w_j`.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub a: DMatrix<f64>,
    pub s: DMatrix<f64>,
    pub grid: QuadratureGrid,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrincipalEigenpair {
    pub lambda1: f64,
    /// Sup-normalized, strictly positive.
    pub phi1: Vec<f64>,
    pub gap: f64,
    pub residual: f64,
    pub min_phi1: f64,
}

impl DiscreteOperator {
    pub fn assemble(kernel: &KernelSpec, grid: &QuadratureGrid) -> Result<Self> {
        let k = kernel.matrix(grid)?;
        Ok(Self::from_kernel_matrix(&k, grid))
    }

    pub(crate) fn from_kernel_matrix(k: &DMatrix<f64>, grid: &QuadratureGrid) -> Self {
        let n = grid.len();
        let w = &grid.weights;
        let sw: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
        let a = DMatrix::from_fn(n, n, |i, j| k[(i, j)] * w[j]);
        let s = DMatrix::from_fn(n, n, |i, j| sw[i] * k[(i, j)] * sw[j]);
        DiscreteOperator {
            a,
            s,
            grid: grid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let v = &self.a * DVector::from_column_slice(u);
        v.as_slice().to_vec()
    }

    /// Top eigenpair, recovered from the symmetric form and checked for
    /// strict positivity.
    pub fn principal_eigenpair(&self) -> Result<PrincipalEigenpair> {
        let n = self.len();
        let (top, second, vec) = if n <= DENSE_LIMIT {
            dense_top_two(&self.s)
        } else {
            power_top_two(&self.s, 1e-12, 100_000)?
        };
        if !(top > 0.0) {
            return Err(Error::NonpositiveEigenvalue(top));
        }
        let w = &self.grid.weights;
        let mut phi: Vec<f64> = vec.iter().zip(w).map(|(v, wi)| v / wi.sqrt()).collect();
        let mean: f64 = phi.iter().zip(w).map(|(p, wi)| p * wi).sum();
        if mean < 0.0 {
            phi.iter_mut().for_each(|p| *p = -*p);
        }
        let sup = phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
        phi.iter_mut().for_each(|p| *p /= sup);

        let (node, min_phi1) =
            phi.iter()
                .copied()
                .enumerate()
                .fold((0, f64::INFINITY), |acc, (i, p)| if p < acc.1 { (i, p) } else { acc });
        if !(min_phi1 > 1e-12) {
            return Err(Error::KreinRutmanViolation { node, ratio: min_phi1 });
        }
        let aphi = self.apply(&phi);
        let residual = aphi
            .iter()
            .zip(&phi)
            .fold(0.0f64, |m, (a, p)| m.max((a - top * p).abs()));
        Ok(PrincipalEigenpair {
            lambda1: top,
            phi1: phi,
            gap: top - second,
            residual,
            min_phi1,
        })
    }

    /// Weighted Rayleigh quotient `⟨Au, u⟩_w / ⟨u, u⟩_w`.
    pub fn rayleigh(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        let den = self.grid.inner(u, u);
        if den == 0.0 {
            return Err(Error::InvalidArgument("Rayleigh quotient of the zero vector".into()));
        }
        Ok(self.grid.inner(u, &self.apply(u)) / den)
    }

    /// `‖c‖∞` where `c = (Au)/u` pointwise; bounded below by `λ₁` for positive `u`.
    pub fn lemma4_c_norm(&self, u: &[f64]) -> Result<f64> {
        self.check_len(u)?;
        if let Some(i) = u.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "c = Au/u needs u > 0; u[{i}] = {}",
                u[i]
            )));
        }
        Ok(self
            .apply(u)
            .iter()
            .zip(u)
            .fold(f64::NEG_INFINITY, |m, (a, v)| m.max(a / v)))
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
}

fn dense_top_two(s: &DMatrix<f64>) -> (f64, f64, Vec<f64>) {
    let eig = SymmetricEigen::new(s.clone());
    let mut idx: Vec<usize> = (0..s.nrows()).collect();
    idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
    let top = eig.eigenvalues[idx[0]];
    let second = idx.get(1).map_or(f64::NEG_INFINITY, |i| eig.eigenvalues[*i]);
    (top, second, eig.eigenvectors.column(idx[0]).iter().copied().collect())
}

/// Power iteration for the top eigenpair, then once more on the deflated
/// matrix for the runner-up.
pub(crate) fn power_top_two(s: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(f64, f64, Vec<f64>)> {
    let (top, v) = power_iteration(s, tol, max_iter)?;
    let deflated = s - top * &v * v.transpose();
    let second = if s.nrows() > 1 {
        power_iteration(&deflated, tol, max_iter)
            .map(|(l, _)| l)
            .unwrap_or(f64::NEG_INFINITY)
    } else {
        f64::NEG_INFINITY
    };
    Ok((top, second, v.as_slice().to_vec()))
}

fn power_iteration(s: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<(f64, DVector<f64>)> {
    let n = s.nrows();
    // Shift keeps the dominant eigenvalue on the positive end.
    let shift = s.iter().fold(0.0f64, |m, v| m.max(v.abs())) * n as f64;
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    for k in 0..n {
        v[k] += 1e-3 * ((k as f64 + 1.0).sin());
    }
    v.normalize_mut();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let sv = s * &v;
        lambda = v.dot(&sv);
        let res = (&sv - lambda * &v).norm();
        if res <= tol * lambda.abs().max(1.0) {
            return Ok((lambda, v));
        }
        let mut next = sv + shift * &v;
        let nn = next.norm();
        if nn == 0.0 {
            break;
        }
        next /= nn;
        v = next;
    }
    Err(Error::EigenSolver(format!(
        "power iteration stalled after {max_iter} steps (estimate {lambda})"
    )))
}
