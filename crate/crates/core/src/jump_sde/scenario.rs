use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{solve_strong, CadlagPath, CoefficientSet, NoiseRecord, TimeGrid};
use crate::ensemble::{mean_stderr, run_paths};
use crate::error::{Error, Result};
use crate::random_measures::{sample_prm, Compensator, LevyMeasure, Region, RngStreamKey, Substream};

/// Law of the initial condition γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialLaw {
    Fixed { value: Vec<f64> },
    /// Independent Gaussian coordinates.
    Gaussian { mean: Vec<f64>, std: Vec<f64> },
}

impl InitialLaw {
    pub fn dim(&self) -> usize {
        match self {
            InitialLaw::Fixed { value } => value.len(),
            InitialLaw::Gaussian { mean, .. } => mean.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let InitialLaw::Gaussian { mean, std } = self {
            if mean.len() != std.len() {
                return Err(Error::config("gaussian initial law: mean and std lengths differ"));
            }
            if std.iter().any(|s| !(*s >= 0.0)) {
                return Err(Error::config("gaussian initial law: std must be nonnegative"));
            }
        }
        Ok(())
    }

    /// Draws γ from the `InitialCondition` substream of `key`.
    pub fn sample(&self, key: RngStreamKey) -> Vec<f64> {
        match self {
            InitialLaw::Fixed { value } => value.clone(),
            InitialLaw::Gaussian { mean, std } => {
                let mut rng = key.with_substream(Substream::InitialCondition).rng();
                mean.iter()
                    .zip(std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            }
        }
    }
}

/// A fully specified jump SDE: coefficients, noise law, initial law and
/// discretisation.
#[derive(Clone, Debug)]
pub struct JumpSdeScenario {
    pub coeffs: CoefficientSet,
    pub measure: Arc<LevyMeasure>,
    pub region: Region,
    pub initial: InitialLaw,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
}

impl JumpSdeScenario {
    pub fn key(&self, path_index: u64) -> RngStreamKey {
        RngStreamKey::new(self.seed, path_index, Substream::Brownian)
    }

    pub fn compensator(&self) -> Compensator {
        Compensator::new(self.measure.clone(), self.region)
    }

    /// Noise and spliced grid for path `path_index` on `[0, horizon]`.
    pub fn noise(&self, horizon: f64, path_index: u64) -> Result<(TimeGrid, NoiseRecord)> {
        let key = self.key(path_index);
        let pattern = sample_prm(&self.measure, &self.region, horizon, key)?;
        let grid = TimeGrid::spliced(horizon, self.dt, &pattern)?;
        let noise = NoiseRecord::generate(&grid, pattern, self.compensator(), self.coeffs.dim(), key)?;
        Ok((grid, noise))
    }

    pub fn simulate_to(&self, horizon: f64, path_index: u64) -> Result<(CadlagPath, NoiseRecord)> {
        if self.initial.dim() != self.coeffs.dim() {
            return Err(Error::config("initial law dimension differs from the coefficient dimension"));
        }
        let (grid, noise) = self.noise(horizon, path_index)?;
        let x0 = self.initial.sample(self.key(path_index));
        let path = solve_strong(&self.coeffs, &noise, &grid, &x0)?;
        Ok((path, noise))
    }

    pub fn simulate(&self, path_index: u64) -> Result<(CadlagPath, NoiseRecord)> {
        self.simulate_to(self.horizon, path_index)
    }

    /// Monte Carlo estimate of `E sup_{s≤T} |Z_s|²` with its standard error
    /// and the number of failed paths.
    pub fn sup_second_moment(&self, n_paths: usize, threads: usize) -> (f64, f64, usize) {
        let vals = run_paths(n_paths, threads, |i| {
            self.simulate(i)
                .ok()
                .filter(|(p, _)| p.is_complete())
                .map(|(p, _)| p.sup_norm(self.horizon).powi(2))
        });
        let ok: Vec<f64> = vals.iter().flatten().copied().collect();
        let (m, s) = mean_stderr(&ok);
        (m, s, n_paths - ok.len())
    }
}
