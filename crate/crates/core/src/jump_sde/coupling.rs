use serde::Serialize;

use super::{solve_jump_only, solve_skeleton, solve_strong, JumpSdeScenario, NoiseRecord, TimeGrid};
use crate::ensemble::{mean_stderr, run_paths};
use crate::error::{Error, Result};
use crate::random_measures::{sample_prm, Region, RngStreamKey, Substream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub horizon: f64,
    pub mean_sq_sup_distance: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CouplingCurve {
    pub points: Vec<CurvePoint>,
    pub failed_paths: usize,
}

impl CouplingCurve {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.points
            .windows(2)
            .all(|w| w[1].mean_sq_sup_distance < w[0].mean_sq_sup_distance)
    }
}

/// `E sup_{s≤t_n} |Z_s − Z^U_s|²` for each horizon, with `Z` and the
/// jump-only process `Z^U` driven by the same noise.
///
/// Each path is simulated once on `[0, max t_n]` and the running supremum is
/// read off at every horizon, so the estimates are nested.
pub fn coupled_distance_curve(
    scenario: &JumpSdeScenario,
    region_u: &Region,
    horizons: &[f64],
    n_paths: usize,
    threads: usize,
) -> Result<CouplingCurve> {
    if horizons.is_empty() || horizons.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::config("horizons must be a nonempty list of positive times"));
    }
    if !horizons.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::config("horizons must be strictly decreasing"));
    }
    let t_max = horizons[0];
    let per_path = run_paths(n_paths, threads, |i| -> Option<Vec<f64>> {
        let (grid, noise) = scenario.noise(t_max, i).ok()?;
        let x0 = scenario.initial.sample(scenario.key(i));
        let z = solve_strong(&scenario.coeffs, &noise, &grid, &x0).ok()?;
        let zu = solve_jump_only(&scenario.coeffs, &noise, region_u, &grid, &x0).ok()?;
        if !z.is_complete() || !zu.is_complete() {
            return None;
        }
        Some(horizons.iter().map(|&h| z.sup_distance(&zu, h).powi(2)).collect())
    });
    let ok: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let points = horizons
        .iter()
        .enumerate()
        .map(|(j, &h)| {
            let col: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (m, s) = mean_stderr(&col);
            CurvePoint {
                horizon: h,
                mean_sq_sup_distance: m,
                stderr: s,
            }
        })
        .collect();
    Ok(CouplingCurve {
        points,
        failed_paths: n_paths - ok.len(),
    })
}

/// Smallest `C > 0` such that `C (e^{C t} − 1) ≥ y` at every `(t, y)`.
pub fn fit_gronwall_envelope(points: &[(f64, f64)]) -> f64 {
    let envelope = |c: f64, t: f64| c * (c * t).exp_m1();
    let mut best: f64 = 0.0;
    for &(t, y) in points {
        if y <= 0.0 || t <= 0.0 {
            continue;
        }
        let mut hi = 1.0;
        while envelope(hi, t) < y {
            hi *= 2.0;
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if envelope(mid, t) < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        best = best.max(hi);
    }
    best
}

/// `P(first jump in (s₁−ε′, s₁)) · p_mark` for total jump rate `mass`.
pub fn predicted_first_jump_rate(mass: f64, s1: f64, eps: f64, p_mark: f64) -> f64 {
    ((-mass * (s1 - eps)).exp() - (-mass * s1).exp()) * p_mark
}

#[derive(Clone, Copy, Debug)]
pub struct ConditionedCouplingOptions {
    pub acceptance_floor: f64,
    pub max_trials: u64,
    pub batch: usize,
    pub threads: usize,
}

impl Default for ConditionedCouplingOptions {
    fn default() -> Self {
        Self {
            acceptance_floor: 1e-4,
            max_trials: 50_000_000,
            batch: 8192,
            threads: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConditionedCouplingReport {
    pub eps: f64,
    pub horizon: f64,
    pub trials: u64,
    /// Trials whose first jump lands in `(s₁−ε′, s₁)` with mark within ε′ of `u₁`.
    pub first_jump_hits: u64,
    pub first_jump_rate: f64,
    pub first_jump_stderr: f64,
    pub predicted_first_jump_rate: f64,
    /// Trials that also have no further jump before the horizon.
    pub accepted: u64,
    pub acceptance_rate: f64,
    pub predicted_acceptance_rate: f64,
    /// `max sup |Z^U − Z^{g,U}|` over accepted paths, excluding the window
    /// `[τ₁, s₁)` where the two paths carry the same jump at different times.
    pub max_sup_distance: f64,
    pub mean_sup_distance: f64,
    /// Same supremum including the window; it is at least the jump size.
    pub max_raw_sup_distance: f64,
}

/// Conditioned coupling of the jump-only process with the skeleton.
///
/// Patterns on `region_u` over `[0, horizon]` are drawn by rejection until
/// `n_accepted` of them have a first jump `τ₁` with `0 < s₁ − τ₁ < ε′`, a
/// mark within ε′ of `u₁`, and no second jump before `horizon`. For each
/// accepted pattern the jump-only path is compared with the skeleton whose
/// schedule is `{(s₁, u₁)}`.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_coupling_test(
    scenario: &JumpSdeScenario,
    region_u: &Region,
    head: (f64, &[f64]),
    eps: f64,
    horizon: f64,
    n_accepted: usize,
    opts: ConditionedCouplingOptions,
) -> Result<ConditionedCouplingReport> {
    let (s1, u1) = head;
    if !(eps > 0.0 && s1 - eps >= 0.0 && s1 <= horizon) {
        return Err(Error::config("need 0 ≤ s₁ − ε′ and s₁ ≤ horizon"));
    }
    let mass = scenario.measure.mass(region_u);
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(Error::config("conditioning needs a region of finite positive mass"));
    }
    let x0 = match &scenario.initial {
        crate::jump_sde::InitialLaw::Fixed { value } => value.clone(),
        _ => return Err(Error::config("conditioned coupling needs a fixed initial state")),
    };
    let space = scenario.measure.mark_space();
    let p_mark = scenario.measure.mass_within(region_u, u1, eps) / mass;
    let comp = scenario.compensator().restricted(region_u);

    enum Trial {
        Miss,
        FirstOnly,
        Accepted { off_window: f64, raw: f64 },
        Failed,
    }

    let trial = |i: u64| -> Trial {
        let key = RngStreamKey::new(scenario.seed, i, Substream::JumpTimes);
        let Ok(pattern) = sample_prm(&scenario.measure, region_u, horizon, key) else {
            return Trial::Failed;
        };
        let Some(first) = pattern.events().first() else {
            return Trial::Miss;
        };
        let tau1 = first.time;
        if !(s1 - tau1 > 0.0 && s1 - tau1 < eps && space.distance(&first.mark, u1) < eps) {
            return Trial::Miss;
        }
        if pattern.len() > 1 {
            return Trial::FirstOnly;
        }
        let run = || -> Result<(f64, f64)> {
            let grid = TimeGrid::with_times(horizon, scenario.dt, &[tau1, s1])?;
            let noise = NoiseRecord::without_brownian(&grid, pattern.clone(), comp.clone(), x0.len(), key)?;
            let zu = solve_jump_only(&scenario.coeffs, &noise, region_u, &grid, &x0)?;
            let skel = solve_skeleton(
                &scenario.coeffs,
                &[(s1, u1.to_vec())],
                scenario.measure.clone(),
                region_u,
                &grid,
                &x0,
            )?;
            if !zu.is_complete() || !skel.is_complete() {
                return Err(Error::Numeric {
                    time: horizon,
                    detail: "blow-up in conditioned coupling".into(),
                });
            }
            let off = zu.sup_distance_where(&skel, horizon, |t, left| {
                if left {
                    !(tau1 < t && t <= s1)
                } else {
                    !(tau1 <= t && t < s1)
                }
            });
            Ok((off, zu.sup_distance(&skel, horizon)))
        };
        match run() {
            Ok((off_window, raw)) => Trial::Accepted { off_window, raw },
            Err(_) => Trial::Failed,
        }
    };

    let mut trials = 0u64;
    let mut first_hits = 0u64;
    let mut distances = Vec::with_capacity(n_accepted);
    let mut raw_max: f64 = 0.0;
    let min_trials_for_floor = (10.0 / opts.acceptance_floor).ceil() as u64;
    'outer: while distances.len() < n_accepted {
        let start = trials;
        let batch = run_paths(opts.batch, opts.threads, |j| trial(start + j));
        for t in batch {
            trials += 1;
            match t {
                Trial::Miss | Trial::Failed => {}
                Trial::FirstOnly => first_hits += 1,
                Trial::Accepted { off_window, raw } => {
                    first_hits += 1;
                    distances.push(off_window);
                    raw_max = raw_max.max(raw);
                    if distances.len() == n_accepted {
                        break 'outer;
                    }
                }
            }
        }
        let rate = distances.len() as f64 / trials as f64;
        if (trials >= min_trials_for_floor && rate < opts.acceptance_floor) || trials >= opts.max_trials {
            return Err(Error::LowAcceptance {
                rate,
                floor: opts.acceptance_floor,
                trials,
            });
        }
    }

    let n = trials as f64;
    let first_rate = first_hits as f64 / n;
    let (mean, _) = mean_stderr(&distances);
    Ok(ConditionedCouplingReport {
        eps,
        horizon,
        trials,
        first_jump_hits: first_hits,
        first_jump_rate: first_rate,
        first_jump_stderr: (first_rate * (1.0 - first_rate) / n).sqrt(),
        predicted_first_jump_rate: predicted_first_jump_rate(mass, s1, eps, p_mark),
        accepted: distances.len() as u64,
        acceptance_rate: distances.len() as f64 / n,
        predicted_acceptance_rate: mass * eps * (-mass * horizon).exp() * p_mark,
        max_sup_distance: distances.iter().copied().fold(0.0, f64::max),
        mean_sup_distance: mean,
        max_raw_sup_distance: raw_max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_sde::{builtin, CoefficientSet, InitialLaw};
    use crate::random_measures::LevyMeasure;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn point_mass_scenario(coeffs: CoefficientSet) -> JumpSdeScenario {
        JumpSdeScenario {
            coeffs,
            measure: Arc::new(LevyMeasure::point_mass(vec![1.0], 1.0).unwrap()),
            region: Region::full(),
            initial: InitialLaw::Fixed { value: vec![0.0] },
            horizon: 0.3,
            dt: 1e-3,
            seed: 99,
        }
    }

    #[test]
    fn envelope_dominates_points() {
        let pts = [(0.5, 0.3), (0.25, 0.1), (0.125, 0.06), (0.0625, 0.02)];
        let c = fit_gronwall_envelope(&pts);
        for (t, y) in pts {
            assert!(c * (c * t).exp_m1() >= y * (1.0 - 1e-12));
        }
        let tighter = c * 0.99;
        assert!(pts.iter().any(|&(t, y)| tighter * (tighter * t).exp_m1() < y));
    }

    #[test]
    fn identical_equations_have_zero_distance() {
        let s = JumpSdeScenario {
            coeffs: CoefficientSet::zero(1)
                .with_drift(builtin::linear_drift(DMatrix::from_element(1, 1, -1.0)))
                .with_state_independent_jump(builtin::additive_jump(1.0)),
            measure: Arc::new(LevyMeasure::uniform_with_hole(-1.0, 1.0, -0.1, 0.1, 1.0).unwrap()),
            region: Region::full(),
            initial: InitialLaw::Gaussian { mean: vec![0.0], std: vec![1.0] },
            horizon: 0.5,
            dt: 1.0 / 256.0,
            seed: 1,
        };
        let curve = coupled_distance_curve(&s, &Region::full(), &[0.5, 0.25, 0.125], 200, 0).unwrap();
        assert!(curve.points.iter().all(|p| p.mean_sq_sup_distance == 0.0));
        assert_eq!(curve.failed_paths, 0);
    }

    #[test]
    fn horizons_validated() {
        let s = point_mass_scenario(CoefficientSet::zero(1));
        assert!(coupled_distance_curve(&s, &Region::full(), &[0.1, 0.2], 10, 0).is_err());
        assert!(coupled_distance_curve(&s, &Region::full(), &[], 10, 0).is_err());
    }

    #[test]
    fn zero_coefficients_give_zero_conditioned_distance() {
        let s = point_mass_scenario(CoefficientSet::zero(1));
        let r = conditioned_coupling_test(&s, &Region::full(), (0.2, &[1.0]), 0.1, 0.3, 50, Default::default()).unwrap();
        assert_eq!(r.accepted, 50);
        assert_eq!(r.max_sup_distance, 0.0);
        assert_eq!(r.max_raw_sup_distance, 0.0);
    }

    #[test]
    fn low_acceptance_aborts() {
        let s = point_mass_scenario(CoefficientSet::zero(1));
        let opts = ConditionedCouplingOptions {
            acceptance_floor: 0.5,
            batch: 256,
            ..Default::default()
        };
        let r = conditioned_coupling_test(&s, &Region::full(), (0.2, &[1.0]), 0.01, 0.3, 50, opts);
        assert!(matches!(r, Err(Error::LowAcceptance { .. })));
    }

    #[test]
    fn predicted_rates() {
        let p = predicted_first_jump_rate(1.0, 0.2, 0.05, 1.0);
        assert!((p - ((-0.15f64).exp() - (-0.2f64).exp())).abs() < 1e-15);
    }
}
