//! Ball-hit estimates of the support of the law of `Z_t`.
//!
//! A point `a` is in the support when every ball `B(a, r)` has positive
//! probability. Sampling can only show evidence for that (a positive exact
//! lower bound) or report that no mass was seen at a given resolution; it
//! never proves or disproves membership.

use std::io::Write;

use serde::Serialize;

use crate::ensemble::run_paths;
use crate::error::{Error, Result};
use crate::jump_sde::{CoefficientSet, JumpSdeScenario};
use crate::random_measures::{LevyMeasure, Region, RngStreamKey};
use crate::stats::clopper_pearson;

pub const DEFAULT_ALPHA: f64 = 0.001;
pub const DEFAULT_RADIUS: f64 = 0.25;
pub const DEFAULT_GRID_STEP: f64 = 0.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallQuery {
    pub center: Vec<f64>,
    pub radius: f64,
    pub time: f64,
}

impl BallQuery {
    pub fn contains(&self, x: &[f64]) -> bool {
        let d2: f64 = self.center.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 < self.radius * self.radius
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportVerdict {
    /// `cp_lower > 0`.
    SupportEvidence,
    /// Zero hits; `cp_upper` bounds the ball probability.
    NoEvidenceAtResolution,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HitEstimate {
    pub query: BallQuery,
    pub hits: u64,
    pub trials: u64,
    pub point_estimate: f64,
    pub cp_lower: f64,
    pub cp_upper: f64,
    pub failed_paths: u64,
    /// False when more than 1% of the paths failed.
    pub valid: bool,
}

impl HitEstimate {
    fn from_counts(query: BallQuery, hits: u64, trials: u64, failed: u64, alpha: f64) -> Self {
        let (cp_lower, cp_upper) = clopper_pearson(hits, trials, alpha);
        let total = trials + failed;
        Self {
            query,
            hits,
            trials,
            point_estimate: if trials == 0 { 0.0 } else { hits as f64 / trials as f64 },
            cp_lower,
            cp_upper,
            failed_paths: failed,
            valid: trials > 0 && (failed as f64) <= 0.01 * total as f64,
        }
    }

    pub fn verdict(&self) -> SupportVerdict {
        if self.cp_lower > 0.0 {
            SupportVerdict::SupportEvidence
        } else {
            SupportVerdict::NoEvidenceAtResolution
        }
    }
}

/// Terminal states `Z_t` of `n_paths` independent paths; `None` marks a failure.
pub fn terminal_ensemble(scenario: &JumpSdeScenario, t: f64, n_paths: usize, threads: usize) -> Vec<Option<Vec<f64>>> {
    run_paths(n_paths, threads, |i| {
        scenario
            .simulate_to(t, i)
            .ok()
            .filter(|(p, _)| p.is_complete())
            .map(|(p, _)| p.terminal().to_vec())
    })
}

fn validate(scenario: &JumpSdeScenario, t: f64, radius: f64, n_paths: usize, alpha: f64) -> Result<()> {
    if n_paths < 100 {
        return Err(Error::config("support probes need at least 100 paths"));
    }
    if !(radius > 0.0) {
        return Err(Error::config("ball radius must be positive"));
    }
    if !(t > 0.0 && t <= scenario.horizon) {
        return Err(Error::config(format!("query time {t} outside (0, {}]", scenario.horizon)));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::config("alpha must be in (0, 1)"));
    }
    Ok(())
}

/// Estimates `P(Z_t ∈ B(a, r))` with a Clopper–Pearson interval.
pub fn estimate_hit_probability(
    scenario: &JumpSdeScenario,
    query: &BallQuery,
    n_paths: usize,
    alpha: f64,
    threads: usize,
) -> Result<HitEstimate> {
    let mut out = scan_support(
        scenario,
        query.time,
        std::slice::from_ref(&query.center),
        query.radius,
        n_paths,
        alpha,
        threads,
    )?;
    Ok(out.remove(0))
}

/// Tests every ball `B(c, r)` for `c` in `centers` against one shared ensemble.
pub fn scan_support(
    scenario: &JumpSdeScenario,
    t: f64,
    centers: &[Vec<f64>],
    radius: f64,
    n_paths: usize,
    alpha: f64,
    threads: usize,
) -> Result<Vec<HitEstimate>> {
    validate(scenario, t, radius, n_paths, alpha)?;
    let d = scenario.coeffs.dim();
    if centers.iter().any(|c| c.len() != d) {
        return Err(Error::config("ball centers must match the state dimension"));
    }
    let terminals = terminal_ensemble(scenario, t, n_paths, threads);
    let failed = terminals.iter().filter(|x| x.is_none()).count() as u64;
    let trials = n_paths as u64 - failed;
    Ok(centers
        .iter()
        .map(|c| {
            let query = BallQuery {
                center: c.clone(),
                radius,
                time: t,
            };
            let hits = terminals.iter().flatten().filter(|x| query.contains(x)).count() as u64;
            HitEstimate::from_counts(query, hits, trials, failed, alpha)
        })
        .collect())
}

/// Cartesian grid from `lo` to `hi` (inclusive) with spacing `step`.
pub fn grid_centers(lo: &[f64], hi: &[f64], step: f64) -> Vec<Vec<f64>> {
    let axes: Vec<Vec<f64>> = lo
        .iter()
        .zip(hi)
        .map(|(&a, &b)| {
            let n = ((b - a) / step + 1e-9).floor() as usize;
            (0..=n).map(|i| a + i as f64 * step).collect()
        })
        .collect();
    let mut out = vec![Vec::new()];
    for axis in &axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut p = prefix.clone();
                    p.push(x);
                    p
                })
            })
            .collect();
    }
    out
}

/// CSV with header `center_1..center_d,radius,t,hits,trials,cp_lower,cp_upper`.
pub fn write_scan_csv<W: Write>(estimates: &[HitEstimate], mut w: W) -> std::io::Result<()> {
    let d = estimates.first().map_or(1, |e| e.query.center.len());
    let mut header: Vec<String> = (1..=d).map(|i| format!("center_{i}")).collect();
    header.extend(["radius", "t", "hits", "trials", "cp_lower", "cp_upper"].map(String::from));
    writeln!(w, "{}", header.join(","))?;
    for e in estimates {
        for c in &e.query.center {
            write!(w, "{c},")?;
        }
        writeln!(
            w,
            "{},{},{},{},{:e},{:e}",
            e.query.radius, e.query.time, e.hits, e.trials, e.cp_lower, e.cp_upper
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Reachability {
    Witness { mark: Vec<f64>, draws: usize },
    /// Not a disproof: only `draws` marks were tried.
    NotFound { min_distance: f64, draws: usize },
}

/// Searches for a mark `u` with `ζ(z, u) ∈ B(center, radius)` by sampling ν
/// on `region`.
pub fn check_reachability(
    coeffs: &CoefficientSet,
    measure: &LevyMeasure,
    region: &Region,
    z: &[f64],
    center: &[f64],
    radius: f64,
    n_samples: usize,
    key: RngStreamKey,
) -> Result<Reachability> {
    let mut rng = key.rng();
    let mut min_distance = f64::INFINITY;
    for draw in 1..=n_samples {
        let u = measure.sample(region, &mut rng)?;
        let image = coeffs.jump(z, &u);
        let dist = image
            .iter()
            .zip(center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist < radius {
            return Ok(Reachability::Witness { mark: u, draws: draw });
        }
        min_distance = min_distance.min(dist);
    }
    Ok(Reachability::NotFound {
        min_distance,
        draws: n_samples,
    })
}
