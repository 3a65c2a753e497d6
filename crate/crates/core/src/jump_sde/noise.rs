use rand::Rng;
use rand_distr::StandardNormal;

use super::TimeGrid;
use crate::error::{Error, Result};
use crate::random_measures::{Compensator, MarkedPointPattern, Region, RngStreamKey, Substream};

/// Everything random that drives one path: Brownian increments on the grid
/// intervals and the jump pattern together with its compensator.
///
/// Increments are drawn per uniform cell first, and cells split by jump times
/// are filled in with Brownian-bridge draws from a separate stream. The cell
/// increments therefore do not depend on the pattern.
#[derive(Clone, Debug)]
pub struct NoiseRecord {
    dim: usize,
    increments: Vec<f64>,
    pattern: MarkedPointPattern,
    compensator: Compensator,
    key: RngStreamKey,
}

impl NoiseRecord {
    pub fn generate(
        grid: &TimeGrid,
        pattern: MarkedPointPattern,
        compensator: Compensator,
        dim: usize,
        key: RngStreamKey,
    ) -> Result<Self> {
        check_horizon(grid, &pattern)?;
        let nodes = grid.nodes();
        let mut cell_rng = key.with_substream(Substream::Brownian).rng();
        let mut bridge_rng = RngStreamKey {
            stream_id: key.stream_id ^ 0x9e37_79b9_7f4a_7c15,
            ..key.with_substream(Substream::Brownian)
        }
        .rng();

        let mut increments = vec![0.0; grid.intervals() * dim];
        let mut k = 0;
        while k < grid.intervals() {
            // Group intervals sharing a uniform cell.
            let cell = grid.cell_of(k);
            let cell_start = nodes[k];
            let mut end = k + 1;
            while end < grid.intervals() && grid.cell_of(end) == cell {
                end += 1;
            }
            let cell_end = nodes[end];
            let cell_len = cell_end - cell_start;
            for d in 0..dim {
                let total: f64 = cell_rng.sample::<f64, _>(StandardNormal) * cell_len.sqrt();
                let mut w_prev = 0.0;
                let mut t_prev = cell_start;
                for j in k..end {
                    let t = nodes[j + 1];
                    let w = if j + 1 == end {
                        total
                    } else {
                        let frac = (t - t_prev) / (cell_end - t_prev);
                        let var = (t - t_prev) * (cell_end - t) / (cell_end - t_prev);
                        let z: f64 = bridge_rng.sample(StandardNormal);
                        w_prev + frac * (total - w_prev) + var.sqrt() * z
                    };
                    increments[j * dim + d] = w - w_prev;
                    w_prev = w;
                    t_prev = t;
                }
            }
            k = end;
        }
        Ok(Self {
            dim,
            increments,
            pattern,
            compensator,
            key,
        })
    }

    /// Noise with no Brownian component (all increments zero).
    pub fn without_brownian(
        grid: &TimeGrid,
        pattern: MarkedPointPattern,
        compensator: Compensator,
        dim: usize,
        key: RngStreamKey,
    ) -> Result<Self> {
        check_horizon(grid, &pattern)?;
        Ok(Self {
            dim,
            increments: vec![0.0; grid.intervals() * dim],
            pattern,
            compensator,
            key,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn intervals(&self) -> usize {
        self.increments.len() / self.dim.max(1)
    }

    /// Increment `ΔB` over grid interval `k`.
    pub fn increment(&self, k: usize) -> &[f64] {
        &self.increments[k * self.dim..(k + 1) * self.dim]
    }

    pub fn pattern(&self) -> &MarkedPointPattern {
        &self.pattern
    }

    pub fn compensator(&self) -> &Compensator {
        &self.compensator
    }

    pub fn key(&self) -> RngStreamKey {
        self.key
    }

    /// Same Brownian increments, jumps and compensator restricted to `region`.
    pub fn restrict(&self, region: &Region) -> Self {
        Self {
            dim: self.dim,
            increments: self.increments.clone(),
            pattern: self.pattern.restrict(region),
            compensator: self.compensator.restricted(region),
            key: self.key,
        }
    }

    /// The first `dim` Brownian coordinates with the same jumps.
    pub fn prefix(&self, dim: usize) -> Result<Self> {
        if dim == 0 || dim > self.dim {
            return Err(Error::config(format!("prefix dimension {dim} outside 1..={}", self.dim)));
        }
        let increments = self
            .increments
            .chunks(self.dim)
            .flat_map(|c| c[..dim].iter().copied())
            .collect();
        Ok(Self {
            dim,
            increments,
            pattern: self.pattern.clone(),
            compensator: self.compensator.clone(),
            key: self.key,
        })
    }

    /// Brownian path `W` at the grid nodes, starting from 0.
    pub fn brownian_path(&self) -> Vec<Vec<f64>> {
        let mut w = vec![0.0; self.dim];
        let mut out = vec![w.clone()];
        for k in 0..self.intervals() {
            for (wi, di) in w.iter_mut().zip(self.increment(k)) {
                *wi += di;
            }
            out.push(w.clone());
        }
        out
    }
}

fn check_horizon(grid: &TimeGrid, pattern: &MarkedPointPattern) -> Result<()> {
    if (grid.horizon() - pattern.horizon()).abs() > 1e-12 * grid.horizon().max(1.0) {
        return Err(Error::config(format!(
            "grid horizon {} does not match pattern horizon {}",
            grid.horizon(),
            pattern.horizon()
        )));
    }
    for e in pattern.events() {
        if grid.index_of(e.time).is_none() {
            return Err(Error::config(format!("jump time {} is not a grid node", e.time)));
        }
    }
    Ok(())
}
