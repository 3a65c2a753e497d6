use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jump_sde::{
    step_scheme, CadlagPath, CoefficientSet, InitialLaw, JumpMap, MatrixMap, NoiseRecord, SchemeOptions, TimeGrid,
    VectorMap,
};
use crate::random_measures::{sample_prm, thin_to_tilted, Compensator, LambdaFn, LevyMeasure, Region, RngStreamKey, Substream};
use crate::spectral_evolution::Spectrum;

pub const DEFAULT_LAMBDA_MARGIN: f64 = 1e-6;
pub const DEFAULT_RHO_BOUND: f64 = 1e6;

/// The linear operator `A`.
#[derive(Clone, Debug, PartialEq)]
pub enum Generator {
    /// A finite-dimensional matrix; `A = 0` is allowed here as a testing
    /// relaxation.
    Matrix(DMatrix<f64>),
    /// `A = −diag(λ_j)` on the leading coordinates.
    Spectral(Spectrum),
}

impl Generator {
    pub fn zero(dim: usize) -> Self {
        Generator::Matrix(DMatrix::zeros(dim, dim))
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self {
            Generator::Matrix(m) if m.nrows() != dim || m.ncols() != dim => {
                Err(Error::config(format!("generator is {}×{}, expected {dim}×{dim}", m.nrows(), m.ncols())))
            }
            Generator::Spectral(s) if s.capacity() < dim => {
                Err(Error::config(format!("spectrum has {} modes, state has {dim}", s.capacity())))
            }
            _ => Ok(()),
        }
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        match self {
            Generator::Matrix(m) => (m * DVector::from_column_slice(g)).iter().copied().collect(),
            Generator::Spectral(s) => g.iter().zip(s.eigenvalues()).map(|(gi, l)| -l * gi).collect(),
        }
    }

    /// Twice the operator; used to isolate the generator term.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        match self {
            Generator::Matrix(m) => Ok(Generator::Matrix(m * c)),
            Generator::Spectral(s) => Ok(Generator::Spectral(Spectrum::new(
                s.eigenvalues().iter().map(|l| l * c).collect(),
            )?)),
        }
    }
}

/// `dX = (AX + σρ(X))dt + σ(X)dW + ∫ f(X₋, u) Ñ_λ(dt, du)` where `N_λ` is the
/// λ-thinning of a Poisson random measure with intensity `ν`.
#[derive(Clone)]
pub struct EvolutionScenario {
    pub dim: usize,
    pub generator: Generator,
    pub sigma: MatrixMap,
    pub rho: VectorMap,
    pub jump: JumpMap,
    pub jump_state_independent: bool,
    pub lambda: LambdaFn,
    pub measure: Arc<LevyMeasure>,
    pub region: Region,
    pub initial: InitialLaw,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    /// λ must lie in `[ε, 1 − ε]` on the truncation region.
    pub lambda_margin: f64,
    /// Largest admissible `|ρ|` along simulated paths.
    pub rho_bound: f64,
}

impl fmt::Debug for EvolutionScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EvolutionScenario")
            .field("dim", &self.dim)
            .field("generator", &self.generator)
            .field("measure", &self.measure)
            .field("region", &self.region)
            .field("initial", &self.initial)
            .field("horizon", &self.horizon)
            .field("dt", &self.dt)
            .field("seed", &self.seed)
            .finish()
    }
}

impl EvolutionScenario {
    /// Zero generator, zero σ, ρ and f; everything else from the arguments.
    pub fn new(initial: InitialLaw, measure: Arc<LevyMeasure>, lambda: LambdaFn) -> Self {
        let dim = initial.dim();
        Self {
            dim,
            generator: Generator::zero(dim),
            sigma: Arc::new(|_, out| out.fill(0.0)),
            rho: Arc::new(|_, out| out.fill(0.0)),
            jump: Arc::new(|_, _, out| out.fill(0.0)),
            jump_state_independent: true,
            lambda,
            measure,
            region: Region::full(),
            initial,
            horizon: 1.0,
            dt: 0.01,
            seed: 0,
            lambda_margin: DEFAULT_LAMBDA_MARGIN,
            rho_bound: DEFAULT_RHO_BOUND,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.check_dim(self.dim)?;
        self.initial.validate()?;
        if self.initial.dim() != self.dim {
            return Err(Error::config("initial law dimension differs from the state dimension"));
        }
        if !(self.horizon > 0.0 && self.dt > 0.0) {
            return Err(Error::config("horizon and dt must be positive"));
        }
        let eps = self.lambda_margin;
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::config("lambda margin must lie in (0, 1/2)"));
        }
        for (u, _) in self.measure.rule(&self.region).iter() {
            let l = (self.lambda)(u);
            if !(l >= eps && l <= 1.0 - eps) {
                return Err(Error::model(format!("λ({u:?}) = {l} outside [{eps}, {}]", 1.0 - eps)));
            }
        }
        Ok(())
    }

    pub fn sigma_at(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        (self.sigma)(x, &mut m);
        m
    }

    pub fn rho_at(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.dim];
        (self.rho)(x, &mut r);
        r
    }

    /// `b(x) = σ(x)ρ(x)`.
    pub fn b_at(&self, x: &[f64]) -> Vec<f64> {
        let b = self.sigma_at(x) * DVector::from_vec(self.rho_at(x));
        b.iter().copied().collect()
    }

    pub fn jump_at(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        (self.jump)(x, u, &mut out);
        out
    }

    /// Coefficients fed to the shared scheme. With a spectral generator the
    /// linear part is handled by the exponential factor instead of the drift.
    pub fn coefficients(&self) -> CoefficientSet {
        let sigma = self.sigma.clone();
        let rho = self.rho.clone();
        let dim = self.dim;
        let linear = match &self.generator {
            Generator::Matrix(m) => Some(m.clone()),
            Generator::Spectral(_) => None,
        };
        let drift: VectorMap = Arc::new(move |x, out| {
            let mut s = DMatrix::zeros(dim, dim);
            sigma(x, &mut s);
            let mut r = vec![0.0; dim];
            rho(x, &mut r);
            let b = s * DVector::from_vec(r);
            let xv = DVector::from_column_slice(x);
            for i in 0..dim {
                out[i] = b[i] + linear.as_ref().map_or(0.0, |m| (m.row(i) * &xv)[0]);
            }
        });
        let c = CoefficientSet::zero(dim).with_drift(drift).with_diffusion(self.sigma.clone());
        if self.jump_state_independent {
            c.with_state_independent_jump(self.jump.clone())
        } else {
            c.with_jump(self.jump.clone())
        }
    }

    pub fn key(&self, path_index: u64) -> RngStreamKey {
        RngStreamKey::new(self.seed, path_index, Substream::Brownian)
    }

    /// Noise driven by `N_λ`: the thinned pattern and the compensator `λν`.
    pub fn noise(&self, path_index: u64) -> Result<(TimeGrid, NoiseRecord)> {
        let key = self.key(path_index);
        let full = sample_prm(&self.measure, &self.region, self.horizon, key)?;
        let pattern = thin_to_tilted(&full, |u| (self.lambda)(u), key)?;
        let grid = TimeGrid::spliced(self.horizon, self.dt, &pattern)?;
        let comp = Compensator::new(self.measure.clone(), self.region).tilted(self.lambda.clone());
        let noise = NoiseRecord::generate(&grid, pattern, comp, self.dim, key)?;
        Ok((grid, noise))
    }

    pub fn simulate(&self, path_index: u64) -> Result<(CadlagPath, NoiseRecord)> {
        let (grid, noise) = self.noise(path_index)?;
        let x0 = self.initial.sample(self.key(path_index));
        let decay = match &self.generator {
            Generator::Spectral(s) => Some(&s.eigenvalues()[..self.dim]),
            Generator::Matrix(_) => None,
        };
        let path = step_scheme(
            &self.coefficients(),
            &noise,
            &grid,
            &x0,
            SchemeOptions {
                use_diffusion: true,
                decay_rates: decay,
            },
        )?;
        Ok((path, noise))
    }
}
