//! Galerkin truncation of a diagonal evolution equation
//! `dX = (AX + b(X))dt + σ(X)dW + ∫ f(X₋, u) Ñ_λ(dt, du)` on sequence space,
//! with `A = −diag(λ_j)`, and its exponential-Euler mild solver.
//!
//! The state space is represented by its first `n` eigen-coordinates. The
//! cylindrical Brownian motion only ever appears through its leading
//! coordinates, and all pairings are Euclidean in those coordinates. (The
//! enlarged space with `2^{-i}`-weighted pairing used for the noise is a
//! modelling device with no runtime counterpart.)

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ensemble::{mean_stderr, run_paths};
use crate::error::{Error, Result};
use crate::jump_sde::{step_scheme, CadlagPath, CoefficientSet, InitialLaw, NoiseRecord, SchemeOptions, TimeGrid};
use crate::random_measures::{sample_prm, Compensator, LevyMeasure, Region, RngStreamKey, Substream};

/// Eigenvalues `0 < λ₁ < λ₂ < …` of `−A`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
    relaxed: bool,
}

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::config("spectrum must have at least one eigenvalue"));
        }
        if !(eigenvalues[0] > 0.0) || eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::config("eigenvalues must be positive and finite"));
        }
        if eigenvalues.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("eigenvalues must be strictly increasing"));
        }
        Ok(Self {
            eigenvalues,
            relaxed: false,
        })
    }

    /// `λ_j = c · j^p` for `j = 1..=n_max`.
    pub fn power(c: f64, p: f64, n_max: usize) -> Result<Self> {
        if !(c > 0.0 && p > 0.0) {
            return Err(Error::config("power spectrum needs c > 0 and p > 0"));
        }
        Self::new((1..=n_max).map(|j| c * (j as f64).powf(p)).collect())
    }

    /// All-zero spectrum (`A = 0`). Outside the admissible class; only for
    /// comparing the mild solver with plain Euler.
    pub fn zero_for_testing(n_max: usize) -> Self {
        Self {
            eigenvalues: vec![0.0; n_max],
            relaxed: true,
        }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn capacity(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_relaxed(&self) -> bool {
        self.relaxed
    }

    pub fn leading(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.capacity() {
            return Err(Error::config(format!(
                "truncation level {n} outside 1..={}",
                self.capacity()
            )));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues[..n].to_vec(),
            relaxed: self.relaxed,
        })
    }

    /// One-step damping factors `e^{−λ_j Δ}`.
    pub fn damping(&self, dt: f64) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| (-l * dt).exp()).collect()
    }

    /// `A g = −(λ_j g_j)_j` on the leading `g.len()` coordinates.
    pub fn apply_generator(&self, g: &[f64]) -> Result<Vec<f64>> {
        if g.len() > self.capacity() {
            return Err(Error::config("vector has more coordinates than the spectrum"));
        }
        Ok(g.iter().zip(&self.eigenvalues).map(|(gi, l)| -l * gi).collect())
    }
}

/// `x ↦ b(x)`; for an input of length `n` must return at least `n` entries.
pub type SequenceVector = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
/// `x ↦ σ(x)`; for an input of length `n` must return at least `n × n`.
pub type SequenceMatrix = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;
/// `(x, u) ↦ f(x, u)`; for an input of length `n` at least `n` entries.
pub type SequenceJump = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// Coefficients given on sequence space, evaluated on zero-padded truncations.
#[derive(Clone)]
pub struct SequenceCoefficients {
    pub drift: SequenceVector,
    pub diffusion: Option<SequenceMatrix>,
    pub jump: SequenceJump,
    pub state_independent_jump: bool,
}

impl fmt::Debug for SequenceCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SequenceCoefficients")
            .field("has_diffusion", &self.diffusion.is_some())
            .field("state_independent_jump", &self.state_independent_jump)
            .finish()
    }
}

impl SequenceCoefficients {
    pub fn zero() -> Self {
        Self {
            drift: Arc::new(|x| vec![0.0; x.len()]),
            diffusion: None,
            jump: Arc::new(|x, _| vec![0.0; x.len()]),
            state_independent_jump: true,
        }
    }
}

/// The `n`-mode system `dXⁿ = (A_n Xⁿ + b_n)dt + σ_n dW + ∫ f_n dÑ_λ`.
#[derive(Clone, Debug)]
pub struct GalerkinSystem {
    n: usize,
    pub coeffs: CoefficientSet,
    pub spectrum: Spectrum,
    source: SequenceCoefficients,
    full_spectrum: Spectrum,
}

impl GalerkinSystem {
    pub fn level(&self) -> usize {
        self.n
    }

    /// The system at level `m ≤ n`, rebuilt from the same sequence-space
    /// coefficients.
    pub fn project(&self, m: usize) -> Result<GalerkinSystem> {
        if m > self.n {
            return Err(Error::config(format!("cannot project level {} up to {m}", self.n)));
        }
        project_coefficients(&self.source, &self.full_spectrum, m)
    }
}

/// Builds the level-`n` Galerkin system: `b_n`, `f_n` are the first `n`
/// coordinates and `σ_n` the leading `n × n` block.
pub fn project_coefficients(source: &SequenceCoefficients, spectrum: &Spectrum, n: usize) -> Result<GalerkinSystem> {
    let leading = spectrum.leading(n)?;
    let zero = vec![0.0; n];
    if (source.drift)(&zero).len() < n {
        return Err(Error::config(format!("drift callback returned fewer than {n} coordinates")));
    }
    if let Some(s) = &source.diffusion {
        let m = s(&zero);
        if m.nrows() < n || m.ncols() < n {
            return Err(Error::config(format!("diffusion callback returned less than a {n}×{n} block")));
        }
    }

    let drift = source.drift.clone();
    let jump = source.jump.clone();
    let mut coeffs = CoefficientSet::zero(n).with_drift(Arc::new(move |x, out| {
        let b = drift(x);
        fill_prefix(out, &b);
    }));
    if let Some(s) = source.diffusion.clone() {
        coeffs = coeffs.with_diffusion(Arc::new(move |x, out| {
            let m = s(x);
            if m.nrows() < n || m.ncols() < n {
                out.fill(f64::NAN);
            } else {
                out.copy_from(&m.view((0, 0), (n, n)));
            }
        }));
    }
    let jump_map = Arc::new(move |x: &[f64], u: &[f64], out: &mut [f64]| {
        let f = jump(x, u);
        fill_prefix(out, &f);
    });
    coeffs = if source.state_independent_jump {
        coeffs.with_state_independent_jump(jump_map)
    } else {
        coeffs.with_jump(jump_map)
    };
    Ok(GalerkinSystem {
        n,
        coeffs,
        spectrum: leading,
        source: source.clone(),
        full_spectrum: spectrum.clone(),
    })
}

fn fill_prefix(out: &mut [f64], v: &[f64]) {
    if v.len() < out.len() {
        out.fill(f64::NAN);
    } else {
        out.copy_from_slice(&v[..out.len()]);
    }
}

/// Exponential Euler: `X_{k+1} = e^{ΔA_n}[X_k + b_n Δ + σ_n ΔW − Δ∫f_n λν]`,
/// jumps added at spliced nodes and damped from the next step on.
pub fn solve_mild(system: &GalerkinSystem, noise: &NoiseRecord, grid: &TimeGrid, initial: &[f64]) -> Result<CadlagPath> {
    step_scheme(
        &system.coeffs,
        noise,
        grid,
        initial,
        SchemeOptions {
            use_diffusion: system.coeffs.has_diffusion(),
            decay_rates: Some(system.spectrum.eigenvalues()),
        },
    )
}

/// A sequence-space scenario for truncation studies.
#[derive(Clone, Debug)]
pub struct SequenceScenario {
    pub coeffs: SequenceCoefficients,
    pub spectrum: Spectrum,
    pub measure: Arc<LevyMeasure>,
    pub region: Region,
    /// Law of the leading coordinates of `X₀`; must cover the reference level.
    pub initial: InitialLaw,
    pub dt: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergencePoint {
    pub n: usize,
    pub mean_sq_error: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    pub reference_level: usize,
    pub time: f64,
    pub points: Vec<ConvergencePoint>,
    pub failed_paths: usize,
}

impl ConvergenceCurve {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.points.windows(2).all(|w| w[1].mean_sq_error < w[0].mean_sq_error)
    }

    /// CSV with header `n,mean_sq_error,stderr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,mean_sq_error,stderr")?;
        for p in &self.points {
            writeln!(w, "{},{:e},{:e}", p.n, p.mean_sq_error, p.stderr)?;
        }
        Ok(())
    }
}

/// Monte Carlo `E‖Xⁿ_t − X^{n*}_t‖²` for each level `n`, all levels driven by
/// the same noise: Brownian coordinates are drawn once at the reference level
/// and lower levels use prefixes; the jump pattern is shared.
pub fn galerkin_convergence(
    scenario: &SequenceScenario,
    levels: &[usize],
    reference_level: usize,
    t: f64,
    n_paths: usize,
    threads: usize,
) -> Result<ConvergenceCurve> {
    if levels.is_empty() || levels.iter().any(|&n| n == 0 || n >= reference_level) {
        return Err(Error::config("reference level must strictly exceed every probed level"));
    }
    if scenario.initial.dim() < reference_level {
        return Err(Error::config("initial law must cover the reference level"));
    }
    if !(t > 0.0) {
        return Err(Error::config("time must be positive"));
    }
    scenario.initial.validate()?;
    let reference = project_coefficients(&scenario.coeffs, &scenario.spectrum, reference_level)?;
    let systems: Vec<GalerkinSystem> = levels.iter().map(|&n| reference.project(n)).collect::<Result<_>>()?;

    let per_path = run_paths(n_paths, threads, |i| -> Option<Vec<f64>> {
        let key = RngStreamKey::new(scenario.seed, i, Substream::Brownian);
        let pattern = sample_prm(&scenario.measure, &scenario.region, t, key).ok()?;
        let grid = TimeGrid::spliced(t, scenario.dt, &pattern).ok()?;
        let comp = Compensator::new(scenario.measure.clone(), scenario.region);
        let noise = NoiseRecord::generate(&grid, pattern, comp, reference_level, key).ok()?;
        let x0 = scenario.initial.sample(key);
        let x_ref = solve_mild(&reference, &noise, &grid, &x0[..reference_level]).ok()?;
        if !x_ref.is_complete() {
            return None;
        }
        let z_ref = x_ref.terminal();
        systems
            .iter()
            .map(|sys| {
                let n = sys.level();
                let path = solve_mild(sys, &noise.prefix(n).ok()?, &grid, &x0[..n]).ok()?;
                if !path.is_complete() {
                    return None;
                }
                let z = path.terminal();
                let head: f64 = z.iter().zip(z_ref).map(|(a, b)| (a - b) * (a - b)).sum();
                let tail: f64 = z_ref[n..].iter().map(|b| b * b).sum();
                Some(head + tail)
            })
            .collect()
    });

    let ok: Vec<&Vec<f64>> = per_path.iter().flatten().collect();
    let failed_paths = n_paths - ok.len();
    let points = levels
        .iter()
        .enumerate()
        .map(|(j, &n)| {
            let vals: Vec<f64> = ok.iter().map(|v| v[j]).collect();
            let (mean_sq_error, stderr) = mean_stderr(&vals);
            ConvergencePoint {
                n,
                mean_sq_error,
                stderr,
            }
        })
        .collect();
    Ok(ConvergenceCurve {
        reference_level,
        time: t,
        points,
        failed_paths,
    })
}
