use serde::{Deserialize, Serialize};

use super::super::random_measures::MarkedPointPattern;
use crate::error::{Error, Result};

/// Uniform partition of `[0, T]` with extra nodes spliced in at jump times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    step: f64,
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, step: f64) -> Result<Self> {
        Self::with_times(horizon, step, &[])
    }

    pub fn spliced(horizon: f64, step: f64, pattern: &MarkedPointPattern) -> Result<Self> {
        let times: Vec<f64> = pattern.events().iter().map(|e| e.time).collect();
        Self::with_times(horizon, step, &times)
    }

    /// Uniform nodes `k·step` (the last cell may be short) merged with `extra`.
    /// A time that coincides with a uniform node is stored once.
    pub fn with_times(horizon: f64, step: f64, extra: &[f64]) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("horizon {horizon} must be positive")));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(Error::config(format!("step {step} must be positive")));
        }
        let cells = ((horizon / step) - 1e-9).ceil().max(1.0) as usize;
        let mut nodes: Vec<f64> = (0..cells).map(|k| k as f64 * step).collect();
        nodes.push(horizon);
        for &t in extra {
            if !(t > 0.0 && t <= horizon) {
                return Err(Error::config(format!("spliced time {t} outside (0, {horizon}]")));
            }
        }
        if !extra.is_empty() {
            nodes.extend_from_slice(extra);
            nodes.sort_by(|a, b| a.total_cmp(b));
            nodes.dedup();
        }
        Ok(Self {
            horizon,
            step,
            nodes,
        })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    /// Index of the node equal to `t`, if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.nodes.binary_search_by(|x| x.total_cmp(&t)).ok()
    }

    /// Index of the uniform cell containing node interval `k`.
    pub(crate) fn cell_of(&self, k: usize) -> usize {
        ((self.nodes[k] / self.step) + 1e-9).floor() as usize
    }
}
