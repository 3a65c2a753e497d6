//! Strong approximation of jump SDEs driven by Brownian motion and a
//! compensated Poisson random measure, plus the two auxiliary processes used
//! to localise the law of the solution (jump-only and skeleton equations).

mod coefficients;
mod coupling;
mod grid;
mod noise;
mod path;
mod scenario;
mod solver;

pub use coefficients::{
    builtin, probe_finite, probe_lipschitz, CoefficientSet, JumpMap, LipschitzBounds, LipschitzProbe, MatrixMap,
    Tabulated1d, VectorMap,
};
pub use coupling::{
    conditioned_coupling_test, coupled_distance_curve, fit_gronwall_envelope, predicted_first_jump_rate,
    ConditionedCouplingOptions, ConditionedCouplingReport, CouplingCurve, CurvePoint,
};
pub use grid::TimeGrid;
pub use noise::NoiseRecord;
pub use path::{CadlagPath, JumpRecord};
pub use scenario::{InitialLaw, JumpSdeScenario};
pub use solver::{solve_jump_only, solve_skeleton, solve_strong, step_scheme, SchemeOptions};
