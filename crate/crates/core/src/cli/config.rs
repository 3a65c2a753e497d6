//! Scenario file schema.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jump_sde::{InitialLaw, LipschitzBounds};
use crate::random_measures::Atom;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub model: ModelConfig,
    pub experiment: ExperimentConfig,
    pub execution: ExecutionConfig,
}

impl ScenarioConfig {
    /// Parses JSON, reporting the failing field path with line and column.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            Error::config(format!(
                "line {}, column {}, field `{}`: {}",
                inner.line(),
                inner.column(),
                path,
                inner
            ))
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExecutionConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    /// Worker count; 0 uses every core. Never affects results.
    #[serde(default, skip_serializing)]
    pub threads: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
}

fn default_alpha() -> f64 {
    0.001
}

/// Model components. Each experiment reads the components it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub dimension: Option<usize>,
    #[serde(default)]
    pub drift: DriftSpec,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub jump: JumpSpec,
    pub measure: Option<MeasureSpec>,
    #[serde(default)]
    pub region: RegionSpec,
    pub initial: Option<InitialLaw>,
    pub lipschitz: Option<LipschitzBounds>,
    pub lambda: Option<LambdaSpec>,
    pub field: Option<FieldSpec>,
    pub rho: Option<RhoSpec>,
    pub generator: Option<GeneratorSpec>,
    pub sequence: Option<SequenceSpec>,
    pub lambda_margin: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftSpec {
    #[default]
    Zero,
    Constant { value: Vec<f64> },
    Linear { matrix: Vec<Vec<f64>> },
    Affine { matrix: Vec<Vec<f64>>, offset: Vec<f64> },
    /// `θ(mean − x)`.
    Ou { theta: f64, mean: Vec<f64> },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiffusionSpec {
    #[default]
    Zero,
    Scalar { value: f64 },
    Diagonal { values: Vec<f64> },
    Matrix { matrix: Vec<Vec<f64>> },
    Tabulated { xs: Vec<f64>, ys: Vec<f64> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpSpec {
    #[default]
    Zero,
    /// `scale · u`.
    Additive { scale: f64 },
    /// `scale · |u|`, upward only.
    AbsAdditive { scale: f64 },
    /// `k · z · u`.
    Proportional { k: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    PointMass {
        mark: Vec<f64>,
        weight: f64,
    },
    Discrete {
        atoms: Vec<Atom>,
    },
    /// Uniform mass on `[lo, hi]`, optionally minus `hole`.
    Uniform {
        lo: f64,
        hi: f64,
        mass: f64,
        #[serde(default)]
        hole: Option<[f64; 2]>,
        #[serde(default)]
        quadrature_nodes: Option<usize>,
    },
}

/// `min_norm ≤ ‖u‖ < max_norm`; a missing bound is 0 or ∞.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub min_norm: Option<f64>,
    pub max_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaSpec {
    Constant { value: f64 },
    /// `e^{rate · u₁}`.
    Exponential { rate: f64 },
    /// `intercept + slope · u₁`.
    Affine { intercept: f64, slope: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant { value: f64 },
    Linear { slope: Vec<f64>, #[serde(default)] offset: f64 },
    /// `½⟨x, Qx⟩ + ⟨linear, x⟩ + constant`.
    Quadratic { matrix: Vec<Vec<f64>>, linear: Vec<f64>, #[serde(default)] constant: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RhoSpec {
    Constant { value: Vec<f64> },
    /// `σ*∇v + shift`.
    FromField { #[serde(default)] shift: f64 },
    /// `scale · tanh(x)` coordinatewise.
    Tanh { scale: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Matrix { matrix: Vec<Vec<f64>> },
    Spectrum { eigenvalues: Vec<f64> },
    /// `λ_j = c · j^p`.
    PowerSpectrum { c: f64, p: f64, n_max: usize },
}

/// Sequence-space coefficients for truncation studies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// Coordinate `j` has diffusion, jump size and initial value `j^{-power}`.
    WeightedDiagonal { power: f64 },
    /// Drift `−rate·x₁`, unit noise and additive jumps on the first coordinate only.
    FirstCoordinate { rate: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SupportExpectation {
    /// Every cell has a positive lower bound.
    AllPositive,
    /// No hits at centres `≤ threshold`, with upper bound below `max_upper`.
    NoHitsBelow { threshold: f64, max_upper: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ExperimentConfig {
    /// Paths must stay at the initial state.
    ConstantPath { tolerance: f64 },
    PoissonLaw {
        replications: usize,
        alpha: f64,
    },
    SupportScan {
        t: f64,
        lo: Vec<f64>,
        hi: Vec<f64>,
        step: f64,
        radius: f64,
        expect: SupportExpectation,
    },
    CoupledDistance {
        region_u: RegionSpec,
        horizons: Vec<f64>,
        max_final_ratio: f64,
    },
    ConditionedCoupling {
        s1: f64,
        mark: Vec<f64>,
        eps: Vec<f64>,
        horizon: f64,
        n_accepted: usize,
        #[serde(default)]
        region_u: RegionSpec,
    },
    Martingale {
        times: Vec<f64>,
        #[serde(default)]
        omit_jump_compensator: bool,
        /// Verdict expected from the check; `false` for deliberately biased runs.
        #[serde(default = "yes")]
        expect_pass: bool,
    },
    PathIndependence {
        dt_levels: Vec<f64>,
        max_median_gap: f64,
        #[serde(default)]
        perturbed_shift: Option<f64>,
        #[serde(default = "ten")]
        min_perturbation_factor: f64,
    },
    Consistency {
        sample_points: Vec<Vec<f64>>,
        tolerance: f64,
    },
    ItoGap {
        dt_levels: Vec<f64>,
    },
    GalerkinConvergence {
        levels: Vec<usize>,
        reference_level: usize,
        t: f64,
        /// Expect identically zero errors instead of a decreasing curve.
        #[serde(default)]
        expect_zero: bool,
    },
}

fn yes() -> bool {
    true
}

fn ten() -> f64 {
    10.0
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::ConstantPath { .. } => "constant_path",
            ExperimentConfig::PoissonLaw { .. } => "poisson_law",
            ExperimentConfig::SupportScan { .. } => "support_scan",
            ExperimentConfig::CoupledDistance { .. } => "coupled_distance",
            ExperimentConfig::ConditionedCoupling { .. } => "conditioned_coupling",
            ExperimentConfig::Martingale { .. } => "martingale",
            ExperimentConfig::PathIndependence { .. } => "path_independence",
            ExperimentConfig::Consistency { .. } => "consistency",
            ExperimentConfig::ItoGap { .. } => "ito_gap",
            ExperimentConfig::GalerkinConvergence { .. } => "galerkin_convergence",
        }
    }
}
