//! Positive steady states of the nonlocal logistic equation
//! `∫K(x,y)u(y)dy + (∫Q(x,y)|u(y)|^p dy) u(x) = λu(x)` on a bounded box,
//! discretized by Nyström quadrature.
//!
//! The crate covers the principal eigenpair of the dispersal operator,
//! grid certificates for the structural hypotheses on `K` and `Q`,
//! continuation of the positive branch from `(λ₁, 0)`, the regularized
//! family `Q_ε` with its `ε → 0` limit, and bound checkers backed by an
//! independent fixed-point oracle.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod continuation;
pub mod error;
pub mod geometry;
pub mod io;
pub mod logistic;
pub mod model;
pub mod operator;
pub mod regularized;
pub mod verification;

pub use error::{Error, Result};
