use std::io::Write;

use serde::Serialize;

use super::{EvolutionScenario, ScalarField};
use crate::ensemble::{mean_stderr, run_paths};
use crate::error::{Error, Result};
use crate::jump_sde::{CadlagPath, NoiseRecord, VectorMap};
use crate::random_measures::{LambdaFn, LevyMeasure, Region};

/// `log Λ_t` on the grid with its four constituents:
/// `log Λ = −term₁ − ½term₂ − term₃ − term₄`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRecord {
    pub times: Vec<f64>,
    pub log_density: Vec<f64>,
    /// `∫⟨ρ(X_s), dW_s⟩`, left-point.
    pub brownian_integral: Vec<f64>,
    /// `∫|ρ(X_s)|² ds`.
    pub quadratic_compensator: Vec<f64>,
    /// `∫∫ log λ(u) N_λ(ds, du)`.
    pub jump_log_sum: Vec<f64>,
    /// `∫∫ (1 − λ(u)) ν(du) ds`.
    pub jump_compensator: Vec<f64>,
    /// First node at which a term became non-finite.
    pub non_finite: Option<usize>,
    /// `max_k |ρ(X_k)|` along the path.
    pub max_rho_norm: f64,
}

impl DensityRecord {
    /// Index of the last node at or before `t`.
    pub fn node_at(&self, t: f64) -> usize {
        self.times.partition_point(|&s| s <= t).saturating_sub(1)
    }

    pub fn log_density_at(&self, t: f64) -> f64 {
        self.log_density[self.node_at(t)]
    }

    /// `log Λ_t + term₄(t)`: the density with its jump compensator left out.
    pub fn log_density_without_jump_compensator(&self, k: usize) -> f64 {
        self.log_density[k] + self.jump_compensator[k]
    }

    /// CSV with header `time,log_density,term1,term2,term3,term4`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time,log_density,term1,term2,term3,term4")?;
        for k in 0..self.times.len() {
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:e}",
                self.times[k],
                self.log_density[k],
                self.brownian_integral[k],
                self.quadratic_compensator[k],
                self.jump_log_sum[k],
                self.jump_compensator[k]
            )?;
        }
        Ok(())
    }
}

/// Accumulates `log Λ_t` along a path.
///
/// The noise pattern is taken to be `N_λ`. λ must lie in `(0, 1)` on every
/// jump mark and every quadrature mark of `ν` on `region`.
pub fn accumulate_log_density(
    path: &CadlagPath,
    noise: &NoiseRecord,
    rho: &VectorMap,
    lambda: &LambdaFn,
    intensity: &LevyMeasure,
    region: &Region,
) -> Result<DensityRecord> {
    let grid = path.grid();
    if noise.intervals() != grid.intervals() || path.len() != grid.len() {
        return Err(Error::config("path and noise are not on the same grid"));
    }
    if noise.dim() != path.dim() {
        return Err(Error::config("noise dimension differs from the state dimension"));
    }
    let check = |u: &[f64]| -> Result<f64> {
        let l = lambda(u);
        if l > 0.0 && l < 1.0 {
            Ok(l)
        } else {
            Err(Error::model(format!("λ({u:?}) = {l} is outside (0, 1)")))
        }
    };
    let mut comp_rate = 0.0;
    for (u, w) in intensity.rule(region).iter() {
        comp_rate += (1.0 - check(u)?) * w;
    }
    let mut log_lambda_at = vec![0.0; grid.len()];
    for e in noise.pattern().events() {
        let k = grid
            .index_of(e.time)
            .ok_or_else(|| Error::config(format!("jump time {} is not a grid node", e.time)))?;
        log_lambda_at[k] += check(&e.mark)?.ln();
    }

    let n = grid.len();
    let d = path.dim();
    let nodes = grid.nodes();
    let mut rec = DensityRecord {
        times: nodes.to_vec(),
        log_density: vec![0.0; n],
        brownian_integral: vec![0.0; n],
        quadratic_compensator: vec![0.0; n],
        jump_log_sum: vec![0.0; n],
        jump_compensator: vec![0.0; n],
        non_finite: None,
        max_rho_norm: 0.0,
    };
    let mut r = vec![0.0; d];
    let (mut t1, mut t2, mut t3, mut t4) = (0.0, 0.0, 0.0, 0.0);
    for k in 0..grid.intervals() {
        let dt = nodes[k + 1] - nodes[k];
        rho(path.state(k), &mut r);
        let r2: f64 = r.iter().map(|v| v * v).sum();
        rec.max_rho_norm = rec.max_rho_norm.max(r2.sqrt());
        t1 += r.iter().zip(noise.increment(k)).map(|(a, b)| a * b).sum::<f64>();
        t2 += r2 * dt;
        t3 += log_lambda_at[k + 1];
        t4 += comp_rate * dt;
        let ld = -t1 - 0.5 * t2 - t3 - t4;
        rec.brownian_integral[k + 1] = t1;
        rec.quadratic_compensator[k + 1] = t2;
        rec.jump_log_sum[k + 1] = t3;
        rec.jump_compensator[k + 1] = t4;
        rec.log_density[k + 1] = ld;
        if rec.non_finite.is_none() && !ld.is_finite() {
            rec.non_finite = Some(k + 1);
        }
    }
    Ok(rec)
}

#[derive(Clone, Copy, Debug, Default)]
pub struct MartingaleOptions {
    /// Drop term₄ from the density (a deliberately wrong compensator).
    pub omit_jump_compensator: bool,
    pub threads: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingalePoint {
    pub time: f64,
    pub mean: f64,
    pub stderr: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub points: Vec<MartingalePoint>,
    pub failed_paths: usize,
    pub passed: bool,
}

/// Monte Carlo `E[Λ_t]` at each requested time; passes iff
/// `|mean − 1| ≤ 3·stderr` everywhere.
pub fn martingale_check(
    scenario: &EvolutionScenario,
    n_paths: usize,
    times: &[f64],
    opts: MartingaleOptions,
) -> Result<MartingaleReport> {
    scenario.validate()?;
    if times.iter().any(|&t| !(t >= 0.0 && t <= scenario.horizon)) {
        return Err(Error::config("martingale times must lie in [0, horizon]"));
    }
    let per_path = run_paths(n_paths, opts.threads, |i| -> Result<Option<(Vec<f64>, f64)>> {
        let (path, noise) = scenario.simulate(i)?;
        if !path.is_complete() {
            return Ok(None);
        }
        let rec = accumulate_log_density(&path, &noise, &scenario.rho, &scenario.lambda, &scenario.measure, &scenario.region)?;
        if rec.non_finite.is_some() {
            return Ok(None);
        }
        let vals = times
            .iter()
            .map(|&t| {
                let k = rec.node_at(t);
                let ld = if opts.omit_jump_compensator {
                    rec.log_density_without_jump_compensator(k)
                } else {
                    rec.log_density[k]
                };
                ld.exp()
            })
            .collect();
        Ok(Some((vals, rec.max_rho_norm)))
    });
    let mut ok = Vec::with_capacity(n_paths);
    for r in per_path {
        if let Some((vals, max_rho)) = r? {
            if max_rho > scenario.rho_bound {
                return Err(Error::model(format!(
                    "|ρ| reached {max_rho} on a path, above the admissible bound {}",
                    scenario.rho_bound
                )));
            }
            ok.push(vals);
        }
    }
    let failed_paths = n_paths - ok.len();
    let points: Vec<MartingalePoint> = times
        .iter()
        .enumerate()
        .map(|(j, &time)| {
            let vals: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (mean, stderr) = mean_stderr(&vals);
            MartingalePoint {
                time,
                mean,
                stderr,
                passed: (mean - 1.0).abs() <= 3.0 * stderr,
            }
        })
        .collect();
    let passed = !points.is_empty() && points.iter().all(|p| p.passed);
    Ok(MartingaleReport {
        points,
        failed_paths,
        passed,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PathGap {
    pub gap: f64,
    pub time: f64,
}

/// `sup_k |log Λ_{t_k} − (v(X₀) − v(X_{t_k}))|` and where it is attained.
pub fn path_independence_gap(path: &CadlagPath, record: &DensityRecord, v: &dyn ScalarField) -> Result<PathGap> {
    if record.times.len() != path.len() {
        return Err(Error::config("density record and path are not aligned"));
    }
    let v0 = v.value(path.initial());
    let mut best = PathGap { gap: 0.0, time: 0.0 };
    for k in 0..path.len() {
        let g = (record.log_density[k] - (v0 - v.value(path.state(k)))).abs();
        if g > best.gap || g.is_nan() {
            best = PathGap { gap: g, time: path.time(k) };
            if g.is_nan() {
                break;
            }
        }
    }
    Ok(best)
}
