//! Detection of embedded eigenvalues for matrix Schrödinger operators
//! `−u″ + A(x)u` on the line, and first-order persistence analysis under
//! perturbations `A → A + B`.
//!
//! The pipeline: [`model`] holds the potential and its numerics,
//! [`asymptotic`] the constant-coefficient data at infinity, [`dichotomy`]
//! propagates decaying subspaces, [`matching`] locates eigenvalues by
//! comparing them at the origin, and [`perturbation`] evaluates the
//! Melnikov conditions for persistence.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotic;
pub mod config;
pub mod dichotomy;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod matching;
pub mod model;
pub mod ode;
pub mod output;
pub mod perturbation;
pub mod quadrature;

pub use error::{Error, Result};
pub use expr::Expression;
pub use matching::{detect, detect_with, Detection, Eigenpair};
pub use model::{MatrixFunction, NumericsConfig, PotentialSpec, Scenario};
