use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::random_measures::{LevyMeasure, Region};

/// `x ↦ out`, writing a vector of the state dimension.
pub type VectorMap = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `x ↦ out`, writing a `d × d` matrix.
pub type MatrixMap = Arc<dyn Fn(&[f64], &mut DMatrix<f64>) + Send + Sync>;
/// `(x, u) ↦ out`.
pub type JumpMap = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;

/// Declared constants `(L₁, L₂)` of the global Lipschitz and linear growth bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzBounds {
    pub l1: f64,
    pub l2: f64,
}

/// Drift ξ, diffusion η and jump map ζ of `dZ = ξ dt + η dB + ∫ζ dÑ`.
#[derive(Clone)]
pub struct CoefficientSet {
    dim: usize,
    drift: VectorMap,
    diffusion: MatrixMap,
    jump: JumpMap,
    pub declared_lipschitz: Option<LipschitzBounds>,
    has_diffusion: bool,
    state_independent_jump: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dim", &self.dim)
            .field("declared_lipschitz", &self.declared_lipschitz)
            .field("has_diffusion", &self.has_diffusion)
            .field("state_independent_jump", &self.state_independent_jump)
            .finish()
    }
}

impl CoefficientSet {
    /// All-zero coefficients in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            drift: Arc::new(|_, out| out.fill(0.0)),
            diffusion: Arc::new(|_, out| out.fill(0.0)),
            jump: Arc::new(|_, _, out| out.fill(0.0)),
            declared_lipschitz: None,
            has_diffusion: false,
            state_independent_jump: true,
        }
    }

    pub fn with_drift(mut self, drift: VectorMap) -> Self {
        self.drift = drift;
        self
    }

    pub fn with_diffusion(mut self, diffusion: MatrixMap) -> Self {
        self.diffusion = diffusion;
        self.has_diffusion = true;
        self
    }

    pub fn with_jump(mut self, jump: JumpMap) -> Self {
        self.jump = jump;
        self.state_independent_jump = false;
        self
    }

    /// A jump map that ignores the state, so its compensator is constant.
    pub fn with_state_independent_jump(mut self, jump: JumpMap) -> Self {
        self.jump = jump;
        self.state_independent_jump = true;
        self
    }

    pub fn with_lipschitz(mut self, l1: f64, l2: f64) -> Self {
        self.declared_lipschitz = Some(LipschitzBounds { l1, l2 });
        self
    }

    /// Same drift and jumps, diffusion removed.
    pub fn without_diffusion(&self) -> Self {
        let mut c = self.clone();
        c.diffusion = Arc::new(|_, out| out.fill(0.0));
        c.has_diffusion = false;
        c
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_diffusion(&self) -> bool {
        self.has_diffusion
    }

    pub fn jump_is_state_independent(&self) -> bool {
        self.state_independent_jump
    }

    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut DMatrix<f64>) {
        (self.diffusion)(x, out)
    }

    pub fn jump_into(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        (self.jump)(x, u, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        self.diffusion_into(x, &mut out);
        out
    }

    pub fn jump(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.jump_into(x, u, &mut out);
        out
    }
}

/// Piecewise-linear scalar function through `(xs[i], ys[i])`, constant
/// outside the table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tabulated1d {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl Tabulated1d {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() || xs.len() < 2 {
            return Err(Error::config("tabulated function needs ≥ 2 points and equal-length columns"));
        }
        if !xs.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("tabulated abscissae must be strictly increasing"));
        }
        if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
            return Err(Error::config("tabulated values must be finite"));
        }
        Ok(Self { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let i = self.xs.partition_point(|&a| a <= x) - 1;
        let w = (x - self.xs[i]) / (self.xs[i + 1] - self.xs[i]);
        self.ys[i] + w * (self.ys[i + 1] - self.ys[i])
    }

    /// Largest slope; the Lipschitz constant of the interpolant.
    pub fn lipschitz(&self) -> f64 {
        self.xs
            .windows(2)
            .zip(self.ys.windows(2))
            .map(|(x, y)| ((y[1] - y[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }
}

/// Named coefficient constructors used by scenario files.
pub mod builtin {
    use super::*;

    /// `ξ(z) = M z + c`.
    pub fn affine_drift(matrix: DMatrix<f64>, offset: Vec<f64>) -> VectorMap {
        Arc::new(move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = offset[i] + (0..x.len()).map(|j| matrix[(i, j)] * x[j]).sum::<f64>();
            }
        })
    }

    pub fn linear_drift(matrix: DMatrix<f64>) -> VectorMap {
        let d = matrix.nrows();
        affine_drift(matrix, vec![0.0; d])
    }

    /// Ornstein–Uhlenbeck drift `θ(μ − z)`.
    pub fn ou_drift(theta: f64, mean: Vec<f64>) -> VectorMap {
        Arc::new(move |x, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = theta * (mean[i] - x[i]);
            }
        })
    }

    pub fn constant_drift(value: Vec<f64>) -> VectorMap {
        Arc::new(move |_, out| out.copy_from_slice(&value))
    }

    pub fn tabulated_drift(table: Tabulated1d) -> VectorMap {
        Arc::new(move |x, out| out[0] = table.eval(x[0]))
    }

    pub fn constant_diffusion(matrix: DMatrix<f64>) -> MatrixMap {
        Arc::new(move |_, out| out.copy_from(&matrix))
    }

    pub fn scalar_diffusion(dim: usize, s: f64) -> MatrixMap {
        constant_diffusion(DMatrix::identity(dim, dim) * s)
    }

    pub fn diagonal_diffusion(values: Vec<f64>) -> MatrixMap {
        constant_diffusion(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values)))
    }

    pub fn tabulated_diffusion(table: Tabulated1d) -> MatrixMap {
        Arc::new(move |x, out| out[(0, 0)] = table.eval(x[0]))
    }

    /// `ζ(z, u) = scale · u`; a one-dimensional mark is applied to every coordinate.
    pub fn additive_jump(scale: f64) -> JumpMap {
        Arc::new(move |_, u, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = scale * if u.len() == 1 { u[0] } else { u[i] };
            }
        })
    }

    /// `ζ(z, u) = scale · |u|`: jumps only move upwards.
    pub fn abs_additive_jump(scale: f64) -> JumpMap {
        Arc::new(move |_, u, out| {
            for (i, o) in out.iter_mut().enumerate() {
                *o = scale * if u.len() == 1 { u[0].abs() } else { u[i].abs() };
            }
        })
    }

    /// `ζ(z, u) = k · z · u` for a scalar mark.
    pub fn proportional_jump(k: f64) -> JumpMap {
        Arc::new(move |x, u, out| {
            for (o, xi) in out.iter_mut().zip(x) {
                *o = k * xi * u[0];
            }
        })
    }
}

/// Largest observed ratios against the Lipschitz and growth templates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct LipschitzProbe {
    /// `max (|ξ(z₁)−ξ(z₂)| + ‖η(z₁)−η(z₂)‖_HS) / |z₁−z₂|`
    pub drift_diffusion: f64,
    /// `max |ζ(z₁,u)−ζ(z₂,u)| / (|z₁−z₂| ‖u‖)`
    pub jump_state: f64,
    /// `max |ζ(z,u₁)−ζ(z,u₂)| / ((1+|z|) ‖u₁−u₂‖)`
    pub jump_mark: f64,
    /// `max (|ξ|² + ‖η‖² + ∫|ζ|²dν) / (1+|z|²)`
    pub growth: f64,
}

impl LipschitzProbe {
    pub fn l1(&self) -> f64 {
        self.drift_diffusion.max(self.jump_state).max(self.jump_mark)
    }

    /// Fails if a sampled quotient exceeds the declared constant by more than 1%.
    pub fn check(&self, declared: &LipschitzBounds) -> Result<()> {
        if self.l1() > declared.l1 * 1.01 {
            return Err(Error::model(format!(
                "sampled Lipschitz quotient {:.4} exceeds declared L1 = {}",
                self.l1(),
                declared.l1
            )));
        }
        if self.growth > declared.l2 * 1.01 {
            return Err(Error::model(format!(
                "sampled growth quotient {:.4} exceeds declared L2 = {}",
                self.growth, declared.l2
            )));
        }
        Ok(())
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Difference quotients of the coefficients over random pairs drawn from the
/// box `[-radius, radius]^d` and marks drawn from ν on `region`.
pub fn probe_lipschitz<R: Rng + ?Sized>(
    coeffs: &CoefficientSet,
    measure: &LevyMeasure,
    region: &Region,
    radius: f64,
    n_pairs: usize,
    rng: &mut R,
) -> Result<LipschitzProbe> {
    let d = coeffs.dim();
    let space = measure.mark_space();
    let has_marks = measure.mass(region) > 0.0;
    let rule = measure.rule(region);
    let mut probe = LipschitzProbe::default();
    let point = |rng: &mut R| -> Vec<f64> { (0..d).map(|_| radius * (2.0 * rng.random::<f64>() - 1.0)).collect() };
    for _ in 0..n_pairs {
        let z1 = point(rng);
        let z2 = point(rng);
        let dz = euclid(&z1, &z2);
        if dz == 0.0 {
            continue;
        }
        let dxi = euclid(&coeffs.drift(&z1), &coeffs.drift(&z2));
        let deta = (coeffs.diffusion(&z1) - coeffs.diffusion(&z2)).norm();
        probe.drift_diffusion = probe.drift_diffusion.max((dxi + deta) / dz);

        let z1_norm2: f64 = z1.iter().map(|x| x * x).sum();
        let jump_sq = rule.integrate(|u| coeffs.jump(&z1, u).iter().map(|x| x * x).sum());
        let growth = (coeffs.drift(&z1).iter().map(|x| x * x).sum::<f64>()
            + coeffs.diffusion(&z1).norm_squared()
            + jump_sq)
            / (1.0 + z1_norm2);
        probe.growth = probe.growth.max(growth);

        if has_marks {
            let u1 = measure.sample(region, rng)?;
            let u2 = measure.sample(region, rng)?;
            let nu1 = space.norm_of(&u1);
            if nu1 > 0.0 {
                let q = euclid(&coeffs.jump(&z1, &u1), &coeffs.jump(&z2, &u1)) / (dz * nu1);
                probe.jump_state = probe.jump_state.max(q);
            }
            let du = space.distance(&u1, &u2);
            if du > 0.0 {
                let q = euclid(&coeffs.jump(&z1, &u1), &coeffs.jump(&z1, &u2)) / ((1.0 + z1_norm2.sqrt()) * du);
                probe.jump_mark = probe.jump_mark.max(q);
            }
        }
    }
    Ok(probe)
}

/// Checks that all three maps return finite values at the given points and marks.
pub fn probe_finite(coeffs: &CoefficientSet, points: &[Vec<f64>], marks: &[Vec<f64>]) -> Result<()> {
    for z in points {
        let bad = coeffs.drift(z).iter().any(|v| !v.is_finite())
            || coeffs.diffusion(z).iter().any(|v| !v.is_finite())
            || marks
                .iter()
                .any(|u| coeffs.jump(z, u).iter().any(|v| !v.is_finite()));
        if bad {
            return Err(Error::model(format!("coefficients not finite at {z:?}")));
        }
    }
    Ok(())
}
