//! Demixing of two block-sparse components from nonlinear superposed
//! observations `y = g(X (Phi theta1 + Psi theta2)) + e`.
//!
//! The crate is organized bottom-up:
//!
//! - [`operators`]: designs and orthonormal bases as forward/adjoint maps.
//! - [`sparsity`]: the block-sparse model, its projector, and the
//!   incoherence and restricted-spectrum probes.
//! - [`model`]: link functions, the single-index loss and its gradient, and
//!   synthetic observation generation.
//! - [`solvers`]: block hard thresholding (STRUCT-DHT), its unstructured
//!   variant, and a soft-thresholding convex baseline.
//! - [`bench`]: the Monte-Carlo phase-transition harness with CSV/SVG output.
//! - [`cli`]: the `demix` command-line surface.

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod model;
pub mod operators;
pub mod par;
pub mod plot;
pub mod seeding;
pub mod selfcheck;
pub mod solvers;
pub mod sparsity;
pub mod vecops;

pub use error::{DemixError, Result};
