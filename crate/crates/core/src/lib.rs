//! Simulation and verification toolkit for degenerate jump-diffusion SDEs.
//!
//! The crate is organised around the objects needed to study the law of
//! `dZ = ξ(Z)dt + η(Z)dB + ∫ ζ(Z₋, u) Ñ(dt, du)`:
//!
//! - [`random_measures`]: Poisson random measures, λ-thinning and compensated integrals.
//! - [`jump_sde`]: Euler–Maruyama with jump splicing, the jump-only and skeleton
//!   auxiliary processes, and the coupled experiments built on them.
//! - [`support_probe`]: ball-hit estimates of the support of `Z_t` with exact
//!   binomial bounds.
//! - [`girsanov`]: log-density accumulation, path-independence gaps and the
//!   integro-differential residual.
//! - [`spectral_evolution`]: Galerkin truncation of evolution equations and the
//!   exponential-Euler mild solver.
//! - [`cli`]: scenario files, experiment runner and reports.

// `!(x > 0.0)` is used deliberately so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod ensemble;
pub mod error;
pub mod girsanov;
pub mod jump_sde;
pub mod random_measures;
pub mod spectral_evolution;
pub mod stats;
pub mod support_probe;

pub use error::{Error, Result};
pub use random_measures::{RngStreamKey, Substream};
