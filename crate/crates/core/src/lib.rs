//! Simulation and rare-event analysis for dissipative hydrodynamical equations
//! driven by small compensated Poisson noise.
//!
//! The crate works with finite Galerkin realizations `du + A u dt + B(u,u) dt = ε ∫ G dÑ`
//! and provides:
//!
//! - [`model`]: the abstract operator contract (diagonal `A`, bilinear `B`, auxiliary norm)
//!   and a numerical checker for its structural assumptions;
//! - [`models`]: concrete plugins (2D Navier–Stokes on the torus, the Sabra shell model,
//!   and a linear test model);
//! - [`noise`]: finite mark spaces, Poisson sampling with thinning, Girsanov weights and
//!   the entropy functional on tilts;
//! - [`solvers`]: deterministic, stochastic, skeleton, controlled and adjoint integrators;
//! - [`rate`]: quadratic endpoint rate functions by linear-quadratic optimal control;
//! - [`experiments`]: Monte Carlo experiments (LLN, skeleton continuity, controlled
//!   convergence, tail exponents with importance sampling);
//! - [`config`] and [`cli`]: the `mdplab` command-line surface.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod models;
pub mod noise;
pub mod rate;
pub mod rng;
pub mod solvers;
pub mod stats;

pub use error::{Error, Result};
pub use model::{apply_a, bilinear, trilinear, verify_assumptions, AssumptionReport, Model};
