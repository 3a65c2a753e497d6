use std::sync::Arc;

use nalgebra::DMatrix;

use super::{CadlagPath, CoefficientSet, JumpRecord, NoiseRecord, TimeGrid};
use crate::error::{Error, Result};
use crate::random_measures::{
    Compensator, JumpEvent, LevyMeasure, MarkedPointPattern, Region, RngStreamKey, Substream,
};

#[derive(Clone, Copy, Debug, Default)]
pub struct SchemeOptions<'a> {
    pub use_diffusion: bool,
    /// Per-coordinate decay rates `μ_j`: the step is multiplied by `e^{−μ_j Δ}`
    /// (exponential Euler for a diagonal generator). `None` is plain Euler.
    pub decay_rates: Option<&'a [f64]>,
}

/// One-step scheme shared by every solver in the crate.
///
/// On each interval `[t_k, t_{k+1}]`:
/// `x ← D_Δ (x + ξ(x)Δ + η(x)ΔB − Δ Σ_q w_q ζ(x, u_q))`, then if a jump of the
/// pattern sits on `t_{k+1}`, `x ← x + ζ(x, mark)`. `D_Δ` is the diagonal
/// decay factor (identity without `decay_rates`) and `(u_q, w_q)` is the mark
/// rule of the noise compensator.
pub fn step_scheme(
    coeffs: &CoefficientSet,
    noise: &NoiseRecord,
    grid: &TimeGrid,
    initial: &[f64],
    opts: SchemeOptions<'_>,
) -> Result<CadlagPath> {
    let d = coeffs.dim();
    if initial.len() != d {
        return Err(Error::config(format!("initial state has length {}, expected {d}", initial.len())));
    }
    if opts.use_diffusion && noise.dim() != d {
        return Err(Error::config(format!("noise dimension {} does not match state dimension {d}", noise.dim())));
    }
    if noise.intervals() != grid.intervals() {
        return Err(Error::config("noise record was generated on a different grid"));
    }
    if (grid.horizon() - noise.pattern().horizon()).abs() > 1e-12 * grid.horizon().max(1.0) {
        return Err(Error::config("grid horizon does not match the noise horizon"));
    }
    if let Some(rates) = opts.decay_rates {
        if rates.len() != d {
            return Err(Error::config("decay rates must match the state dimension"));
        }
    }

    let nodes = grid.nodes();
    let mut jump_nodes: Vec<(usize, &JumpEvent)> = Vec::with_capacity(noise.pattern().len());
    for e in noise.pattern().events() {
        let k = grid
            .index_of(e.time)
            .ok_or_else(|| Error::config(format!("jump time {} is not a grid node", e.time)))?;
        jump_nodes.push((k, e));
    }

    let rule = noise.compensator().rule();
    let compensate = |x: &[f64], tmp: &mut [f64], out: &mut [f64]| {
        out.fill(0.0);
        for (u, w) in rule.iter() {
            coeffs.jump_into(x, u, tmp);
            for (o, t) in out.iter_mut().zip(tmp.iter()) {
                *o += w * t;
            }
        }
    };

    let mut x = initial.to_vec();
    let mut drift = vec![0.0; d];
    let mut comp = vec![0.0; d];
    let mut tmp = vec![0.0; d];
    let mut eta = DMatrix::zeros(d, d);
    let cached_comp = (coeffs.jump_is_state_independent() && !rule.is_empty()).then(|| {
        let mut c = vec![0.0; d];
        let mut t = vec![0.0; d];
        compensate(&x, &mut t, &mut c);
        c
    });

    let mut path = CadlagPath::new(grid.clone(), d, initial);
    let mut next_jump = jump_nodes.iter().peekable();
    for k in 0..grid.intervals() {
        let dt = nodes[k + 1] - nodes[k];
        coeffs.drift_into(&x, &mut drift);
        let mut inc: Vec<f64> = drift.iter().map(|v| v * dt).collect();
        if opts.use_diffusion {
            coeffs.diffusion_into(&x, &mut eta);
            let db = noise.increment(k);
            for (i, v) in inc.iter_mut().enumerate() {
                *v += (0..d).map(|j| eta[(i, j)] * db[j]).sum::<f64>();
            }
        }
        if !rule.is_empty() {
            match &cached_comp {
                Some(c) => comp.copy_from_slice(c),
                None => compensate(&x, &mut tmp, &mut comp),
            }
            for (v, c) in inc.iter_mut().zip(&comp) {
                *v -= c * dt;
            }
        }
        match opts.decay_rates {
            Some(rates) => {
                for ((xi, v), mu) in x.iter_mut().zip(&inc).zip(rates) {
                    *xi = (-mu * dt).exp() * (*xi + v);
                }
            }
            None => {
                for (xi, v) in x.iter_mut().zip(&inc) {
                    *xi += v;
                }
            }
        }

        if let Some(&&(node, event)) = next_jump.peek() {
            if node == k + 1 {
                next_jump.next();
                let pre = x.clone();
                coeffs.jump_into(&pre, &event.mark, &mut tmp);
                for (xi, j) in x.iter_mut().zip(&tmp) {
                    *xi += j;
                }
                if x.iter().all(|v| v.is_finite()) {
                    path.push_jump(JumpRecord {
                        node: k + 1,
                        time: nodes[k + 1],
                        pre,
                        post: x.clone(),
                        mark: event.mark.clone(),
                    });
                }
            }
        }

        if x.iter().any(|v| !v.is_finite()) {
            path.blow_up = Some(k + 1);
            return Ok(path);
        }
        path.push(&x);
    }
    Ok(path)
}

/// Euler–Maruyama approximation of
/// `dZ = ξ(Z)dt + η(Z)dB + ∫ ζ(Z₋, u) Ñ(dt, du)`, `Ñ` compensated by the noise
/// record's compensator.
///
/// A non-finite state ends the path early with [`CadlagPath::blow_up`] set.
pub fn solve_strong(coeffs: &CoefficientSet, noise: &NoiseRecord, grid: &TimeGrid, initial: &[f64]) -> Result<CadlagPath> {
    step_scheme(
        coeffs,
        noise,
        grid,
        initial,
        SchemeOptions {
            use_diffusion: coeffs.has_diffusion(),
            decay_rates: None,
        },
    )
}

/// Jump-only auxiliary process: no Brownian term and only jumps with marks in
/// `region`, sharing the jumps of `noise` that fall in it.
///
/// When `L₁` is declared, marks with `L₁‖u‖ ≥ 1` produce a warning on the
/// returned path; the solve still runs.
pub fn solve_jump_only(
    coeffs: &CoefficientSet,
    noise: &NoiseRecord,
    region: &Region,
    grid: &TimeGrid,
    initial: &[f64],
) -> Result<CadlagPath> {
    let restricted = noise.restrict(region);
    let mut warnings = Vec::new();
    if let Some(bounds) = coeffs.declared_lipschitz {
        let space = restricted.compensator().measure.mark_space();
        let rule = restricted.compensator().rule();
        let worst = restricted
            .pattern()
            .events()
            .iter()
            .map(|e| space.norm_of(&e.mark))
            .chain(rule.iter().map(|(u, _)| space.norm_of(u)))
            .fold(0.0, f64::max);
        if bounds.l1 * worst >= 1.0 {
            warnings.push(format!(
                "small-mark bound violated: L1·‖u‖ = {:.4} ≥ 1 on the jump-only region",
                bounds.l1 * worst
            ));
        }
    }
    let mut path = step_scheme(
        coeffs,
        &restricted,
        grid,
        initial,
        SchemeOptions {
            use_diffusion: false,
            decay_rates: None,
        },
    )?;
    path.warnings.extend(warnings);
    Ok(path)
}

/// Deterministic skeleton: `dz = [ξ(z) − ∫_U ζ(z,u) ν(du)] dt` with the
/// prescribed jumps `z ← z + ζ(z₋, u_i)` at the schedule times `s_i`.
///
/// Every schedule time must be a node of `grid`.
pub fn solve_skeleton(
    coeffs: &CoefficientSet,
    schedule: &[(f64, Vec<f64>)],
    measure: Arc<LevyMeasure>,
    region: &Region,
    grid: &TimeGrid,
    initial: &[f64],
) -> Result<CadlagPath> {
    let mut prev = 0.0;
    for (s, u) in schedule {
        if !(*s > prev) {
            return Err(Error::config(format!("skeleton schedule not strictly increasing at s = {s}")));
        }
        if *s > grid.horizon() {
            return Err(Error::config(format!("schedule time {s} beyond horizon {}", grid.horizon())));
        }
        if !measure.in_support(region, u) {
            return Err(Error::config(format!("schedule mark {u:?} not in the support of ν on the region")));
        }
        prev = *s;
    }
    let events = schedule
        .iter()
        .map(|(s, u)| JumpEvent { time: *s, mark: u.clone() })
        .collect();
    let pattern = MarkedPointPattern::new(grid.horizon(), events, Region::full())?;
    let compensator = Compensator::new(measure, *region);
    let key = RngStreamKey::new(0, 0, Substream::Brownian);
    let noise = NoiseRecord::without_brownian(grid, pattern, compensator, coeffs.dim(), key)?;
    step_scheme(
        coeffs,
        &noise,
        grid,
        initial,
        SchemeOptions {
            use_diffusion: false,
            decay_rates: None,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jump_sde::builtin;
    use crate::random_measures::sample_prm;

    fn key(i: u64) -> RngStreamKey {
        RngStreamKey::new(77, i, Substream::Brownian)
    }

    fn noise_for(nu: &Arc<LevyMeasure>, t: f64, dt: f64, dim: usize, i: u64) -> (TimeGrid, NoiseRecord) {
        let p = sample_prm(nu, &Region::full(), t, key(i)).unwrap();
        let grid = TimeGrid::spliced(t, dt, &p).unwrap();
        let comp = Compensator::new(nu.clone(), Region::full());
        let noise = NoiseRecord::generate(&grid, p, comp, dim, key(i)).unwrap();
        (grid, noise)
    }

    fn standard_nu() -> Arc<LevyMeasure> {
        Arc::new(LevyMeasure::uniform_with_hole(-1.0, 1.0, -0.1, 0.1, 1.0).unwrap())
    }

    #[test]
    fn zero_coefficients_give_constant_path() {
        let (grid, noise) = noise_for(&standard_nu(), 1.0, 0.1, 2, 1);
        let path = solve_strong(&CoefficientSet::zero(2), &noise, &grid, &[1.5, -2.0]).unwrap();
        assert!(path.is_complete());
        for k in 0..path.len() {
            assert_eq!(path.state(k), &[1.5, -2.0]);
        }
    }

    #[test]
    fn linear_decay_converges_at_first_order() {
        let c = CoefficientSet::zero(1).with_drift(builtin::linear_drift(DMatrix::from_element(1, 1, -1.0)));
        let nu = Arc::new(LevyMeasure::point_mass(vec![1.0], 0.0).unwrap());
        let exact = (-1.0f64).exp();
        let err = |dt: f64| {
            let (grid, noise) = noise_for(&nu, 1.0, dt, 1, 0);
            let p = solve_strong(&c, &noise, &grid, &[1.0]).unwrap();
            (p.terminal()[0] - exact).abs()
        };
        let (e1, e2, e3) = (err(0.01), err(0.005), err(0.0025));
        assert!(e1 < 0.01);
        for r in [e1 / e2, e2 / e3] {
            assert!((1.8..=2.2).contains(&r), "ratio {r}");
        }
    }

    #[test]
    fn ou_terminal_variance() {
        let c = CoefficientSet::zero(1)
            .with_drift(builtin::ou_drift(1.0, vec![0.0]))
            .with_diffusion(builtin::scalar_diffusion(1, 1.0));
        let nu = Arc::new(LevyMeasure::point_mass(vec![1.0], 0.0).unwrap());
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|i| {
                let (grid, noise) = noise_for(&nu, 1.0, 0.01, 1, i);
                solve_strong(&c, &noise, &grid, &[0.0]).unwrap().terminal()[0]
            })
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let target = (1.0 - (-2.0f64).exp()) / 2.0;
        let se = target * (2.0 / n as f64).sqrt();
        assert!((var - target).abs() < 3.0 * se, "var {var} target {target}");
    }

    #[test]
    fn jump_only_piecewise_affine() {
        // ν uniform of mass 2 on [0.2, 0.4] ⇒ ∫ u ν(du) = 0.6
        let nu = Arc::new(LevyMeasure::uniform_interval(0.2, 0.4, 2.0).unwrap());
        let c = CoefficientSet::zero(1).with_state_independent_jump(builtin::additive_jump(1.0));
        let p = MarkedPointPattern::new(1.0, vec![JumpEvent { time: 0.5, mark: vec![0.3] }], Region::full()).unwrap();
        let grid = TimeGrid::spliced(1.0, 0.1, &p).unwrap();
        let noise = NoiseRecord::generate(&grid, p, Compensator::new(nu, Region::full()), 1, key(0)).unwrap();
        let path = solve_jump_only(&c, &noise, &Region::full(), &grid, &[1.0]).unwrap();
        for k in 0..path.len() {
            let t = path.time(k);
            let expect = 1.0 - 0.6 * t + if t >= 0.5 { 0.3 } else { 0.0 };
            assert!((path.state(k)[0] - expect).abs() < 1e-12, "t={t}");
        }
        let k = grid.index_of(0.5).unwrap();
        assert!((path.left_limit(k)[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn jump_only_matches_strong_without_diffusion_on_full_region() {
        let c = CoefficientSet::zero(1)
            .with_drift(builtin::ou_drift(0.5, vec![1.0]))
            .with_jump(builtin::proportional_jump(0.3));
        for i in 0..20 {
            let (grid, noise) = noise_for(&standard_nu(), 1.0, 0.05, 1, i);
            let a = solve_strong(&c, &noise, &grid, &[0.4]).unwrap();
            let b = solve_jump_only(&c, &noise, &Region::full(), &grid, &[0.4]).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn jump_only_warns_on_large_marks() {
        let c = CoefficientSet::zero(1)
            .with_state_independent_jump(builtin::additive_jump(1.0))
            .with_lipschitz(2.0, 4.0);
        let (grid, noise) = noise_for(&standard_nu(), 1.0, 0.1, 1, 0);
        let p = solve_jump_only(&c, &noise, &Region::full(), &grid, &[0.0]).unwrap();
        assert_eq!(p.warnings.len(), 1);
        let p = solve_jump_only(&c, &noise, &Region::annulus(0.0, 0.4), &grid, &[0.0]).unwrap();
        assert!(p.warnings.is_empty());
    }

    #[test]
    fn skeleton_examples() {
        let nu = Arc::new(LevyMeasure::point_mass(vec![1.0], 0.7).unwrap());
        let grid = TimeGrid::with_times(1.0, 0.01, &[0.5]).unwrap();
        let zero = solve_skeleton(&CoefficientSet::zero(1), &[], nu.clone(), &Region::full(), &grid, &[2.0]).unwrap();
        assert!((0..zero.len()).all(|k| zero.state(k) == [2.0]));

        let c = CoefficientSet::zero(1).with_state_independent_jump(builtin::additive_jump(1.0));
        let line = solve_skeleton(&c, &[], nu.clone(), &Region::full(), &grid, &[2.0]).unwrap();
        for k in 0..line.len() {
            assert!((line.state(k)[0] - (2.0 - 0.7 * line.time(k))).abs() < 1e-12);
        }
        let stepped = solve_skeleton(&c, &[(0.5, vec![1.0])], nu.clone(), &Region::full(), &grid, &[2.0]).unwrap();
        assert!((stepped.terminal()[0] - (2.0 - 0.7 + 1.0)).abs() < 1e-12);
        assert_eq!(stepped.jumps().len(), 1);

        let unordered = [(0.5, vec![1.0]), (0.3, vec![1.0])];
        assert!(matches!(
            solve_skeleton(&c, &unordered, nu.clone(), &Region::full(), &grid, &[2.0]),
            Err(Error::Config(_))
        ));
        assert!(solve_skeleton(&c, &[(0.5, vec![0.5])], nu, &Region::full(), &grid, &[2.0]).is_err());
    }

    #[test]
    fn jump_records_are_bit_exact() {
        let c = CoefficientSet::zero(1)
            .with_drift(builtin::ou_drift(1.0, vec![0.0]))
            .with_jump(builtin::proportional_jump(0.37));
        let nu = Arc::new(LevyMeasure::uniform_interval(0.5, 3.0, 5.0).unwrap());
        for i in 0..10 {
            let (grid, noise) = noise_for(&nu, 1.0, 0.1, 1, i);
            let p = solve_strong(&c, &noise, &grid, &[1.0]).unwrap();
            assert_eq!(p.jumps().len(), noise.pattern().len());
            for j in p.jumps() {
                let z = c.jump(&j.pre, &j.mark);
                assert_eq!(j.post[0], j.pre[0] + z[0]);
                assert_eq!(p.state(j.node), j.post.as_slice());
            }
        }
    }

    #[test]
    fn blow_up_is_flagged() {
        let c = CoefficientSet::zero(1).with_drift(Arc::new(|x: &[f64], out: &mut [f64]| out[0] = x[0] * x[0] * x[0]));
        let nu = Arc::new(LevyMeasure::point_mass(vec![1.0], 0.0).unwrap());
        let (grid, noise) = noise_for(&nu, 1.0, 0.1, 1, 0);
        let p = solve_strong(&c, &noise, &grid, &[1e3]).unwrap();
        assert!(p.blow_up.is_some());
        assert!(!p.is_complete());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let (grid, noise) = noise_for(&standard_nu(), 1.0, 0.1, 1, 0);
        let c = CoefficientSet::zero(2).with_diffusion(builtin::scalar_diffusion(2, 1.0));
        assert!(matches!(solve_strong(&c, &noise, &grid, &[0.0, 0.0]), Err(Error::Config(_))));
        assert!(matches!(solve_strong(&CoefficientSet::zero(1), &noise, &grid, &[0.0, 0.0]), Err(Error::Config(_))));
    }
}
