//! Poisson random measures on `[0, T] × U`, λ-tilted measures obtained by
//! thinning, and compensated integrals against them.

mod key;
mod levy;
mod pattern;
pub mod quadrature;

pub use key::{RngStreamKey, Substream};
pub use levy::{Atom, Compensator, LambdaFn, LevyMeasure, MarkNorm, MarkSpace, QuadratureRule, Region};
pub use pattern::{compensated_integral, sample_prm, thin_to_tilted, JumpEvent, MarkedPointPattern};
