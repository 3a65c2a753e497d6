//! Turns scenario declarations into model objects.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::config::{
    DiffusionSpec, DriftSpec, ExecutionConfig, FieldSpec, GeneratorSpec, JumpSpec, LambdaSpec, MeasureSpec,
    ModelConfig, RegionSpec, RhoSpec, SequenceSpec,
};
use crate::error::{Error, Result};
use crate::girsanov::{
    ConstantField, EvolutionScenario, FieldRef, Generator, LinearField, QuadraticField, DEFAULT_LAMBDA_MARGIN,
};
use crate::jump_sde::{builtin, CoefficientSet, InitialLaw, JumpMap, JumpSdeScenario, MatrixMap, Tabulated1d, VectorMap};
use crate::random_measures::{LambdaFn, LevyMeasure, Region};
use crate::spectral_evolution::{SequenceCoefficients, SequenceScenario, Spectrum};

fn missing(field: &str) -> Error {
    Error::config(format!("model.{field} is required by this experiment"))
}

pub fn matrix(rows: &[Vec<f64>], d: usize, field: &str) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(Error::config(format!("{field} must be a {d}×{d} matrix")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

fn vector(v: &[f64], d: usize, field: &str) -> Result<Vec<f64>> {
    if v.len() != d {
        return Err(Error::config(format!("{field} must have length {d}")));
    }
    Ok(v.to_vec())
}

pub fn region(spec: &RegionSpec) -> Result<Region> {
    let lo = spec.min_norm.unwrap_or(0.0);
    let hi = spec.max_norm.unwrap_or(f64::INFINITY);
    if !(lo >= 0.0 && hi >= lo) {
        return Err(Error::config("region needs 0 ≤ min_norm ≤ max_norm"));
    }
    Ok(Region::annulus(lo, hi))
}

pub fn measure(spec: &MeasureSpec) -> Result<Arc<LevyMeasure>> {
    let m = match spec {
        MeasureSpec::PointMass { mark, weight } => LevyMeasure::point_mass(mark.clone(), *weight)?,
        MeasureSpec::Discrete { atoms } => LevyMeasure::discrete(atoms.clone())?,
        MeasureSpec::Uniform {
            lo,
            hi,
            mass,
            hole,
            quadrature_nodes,
        } => {
            let m = match hole {
                Some([a, b]) => LevyMeasure::uniform_with_hole(*lo, *hi, *a, *b, *mass)?,
                None => LevyMeasure::uniform_interval(*lo, *hi, *mass)?,
            };
            match quadrature_nodes {
                Some(n) => m.with_quadrature_nodes(*n),
                None => m,
            }
        }
    };
    Ok(Arc::new(m))
}

pub fn dimension(model: &ModelConfig) -> Result<usize> {
    match (model.dimension, &model.initial) {
        (Some(d), Some(init)) if init.dim() != d => Err(Error::config(format!(
            "model.initial has dimension {}, model.dimension is {d}",
            init.dim()
        ))),
        (Some(d), _) => Ok(d),
        (None, Some(init)) => Ok(init.dim()),
        (None, None) => Err(missing("dimension")),
    }
}

fn drift(spec: &DriftSpec, d: usize) -> Result<Option<VectorMap>> {
    Ok(match spec {
        DriftSpec::Zero => None,
        DriftSpec::Constant { value } => Some(builtin::constant_drift(vector(value, d, "drift.value")?)),
        DriftSpec::Linear { matrix: m } => Some(builtin::linear_drift(matrix(m, d, "drift.matrix")?)),
        DriftSpec::Affine { matrix: m, offset } => Some(builtin::affine_drift(
            matrix(m, d, "drift.matrix")?,
            vector(offset, d, "drift.offset")?,
        )),
        DriftSpec::Ou { theta, mean } => Some(builtin::ou_drift(*theta, vector(mean, d, "drift.mean")?)),
        DriftSpec::Tabulated { xs, ys } => {
            if d != 1 {
                return Err(Error::config("tabulated drift is one-dimensional"));
            }
            Some(builtin::tabulated_drift(Tabulated1d::new(xs.clone(), ys.clone())?))
        }
    })
}

fn diffusion(spec: &DiffusionSpec, d: usize) -> Result<Option<MatrixMap>> {
    Ok(match spec {
        DiffusionSpec::Zero => None,
        DiffusionSpec::Scalar { value } => Some(builtin::scalar_diffusion(d, *value)),
        DiffusionSpec::Diagonal { values } => Some(builtin::diagonal_diffusion(vector(values, d, "diffusion.values")?)),
        DiffusionSpec::Matrix { matrix: m } => Some(builtin::constant_diffusion(matrix(m, d, "diffusion.matrix")?)),
        DiffusionSpec::Tabulated { xs, ys } => {
            if d != 1 {
                return Err(Error::config("tabulated diffusion is one-dimensional"));
            }
            Some(builtin::tabulated_diffusion(Tabulated1d::new(xs.clone(), ys.clone())?))
        }
    })
}

/// The jump map and whether it ignores the state.
fn jump(spec: &JumpSpec) -> Option<(JumpMap, bool)> {
    match spec {
        JumpSpec::Zero => None,
        JumpSpec::Additive { scale } => Some((builtin::additive_jump(*scale), true)),
        JumpSpec::AbsAdditive { scale } => Some((builtin::abs_additive_jump(*scale), true)),
        JumpSpec::Proportional { k } => Some((builtin::proportional_jump(*k), false)),
    }
}

pub fn coefficients(model: &ModelConfig) -> Result<CoefficientSet> {
    let d = dimension(model)?;
    let mut c = CoefficientSet::zero(d);
    if let Some(f) = drift(&model.drift, d)? {
        c = c.with_drift(f);
    }
    if let Some(s) = diffusion(&model.diffusion, d)? {
        c = c.with_diffusion(s);
    }
    if let Some((j, independent)) = jump(&model.jump) {
        c = if independent {
            c.with_state_independent_jump(j)
        } else {
            c.with_jump(j)
        };
    }
    if let Some(b) = model.lipschitz {
        c = c.with_lipschitz(b.l1, b.l2);
    }
    Ok(c)
}

pub fn jump_scenario(model: &ModelConfig, exec: &ExecutionConfig) -> Result<JumpSdeScenario> {
    let initial = model.initial.clone().ok_or_else(|| missing("initial"))?;
    initial.validate()?;
    Ok(JumpSdeScenario {
        coeffs: coefficients(model)?,
        measure: measure(model.measure.as_ref().ok_or_else(|| missing("measure"))?)?,
        region: region(&model.region)?,
        initial,
        horizon: exec.horizon,
        dt: exec.dt,
        seed: exec.seed,
    })
}

pub fn lambda(spec: &LambdaSpec) -> LambdaFn {
    match *spec {
        LambdaSpec::Constant { value } => Arc::new(move |_| value),
        LambdaSpec::Exponential { rate } => Arc::new(move |u| (rate * u[0]).exp()),
        LambdaSpec::Affine { intercept, slope } => Arc::new(move |u| intercept + slope * u[0]),
    }
}

pub fn field(spec: &FieldSpec, d: usize) -> Result<FieldRef> {
    Ok(match spec {
        FieldSpec::Constant { value } => Arc::new(ConstantField { dim: d, value: *value }),
        FieldSpec::Linear { slope, offset } => Arc::new(LinearField {
            slope: vector(slope, d, "field.slope")?,
            offset: *offset,
        }),
        FieldSpec::Quadratic {
            matrix: m,
            linear,
            constant,
        } => Arc::new(QuadraticField::new(
            matrix(m, d, "field.matrix")?,
            vector(linear, d, "field.linear")?,
            *constant,
        )?),
    })
}

pub fn generator(spec: Option<&GeneratorSpec>, d: usize) -> Result<Generator> {
    let g = match spec {
        None => Generator::zero(d),
        Some(GeneratorSpec::Matrix { matrix: m }) => Generator::Matrix(matrix(m, d, "generator.matrix")?),
        Some(GeneratorSpec::Spectrum { eigenvalues }) => Generator::Spectral(Spectrum::new(eigenvalues.clone())?),
        Some(GeneratorSpec::PowerSpectrum { c, p, n_max }) => Generator::Spectral(Spectrum::power(*c, *p, *n_max)?),
    };
    g.check_dim(d)?;
    Ok(g)
}

pub fn spectrum(spec: Option<&GeneratorSpec>) -> Result<Spectrum> {
    match spec {
        Some(GeneratorSpec::Spectrum { eigenvalues }) => Spectrum::new(eigenvalues.clone()),
        Some(GeneratorSpec::PowerSpectrum { c, p, n_max }) => Spectrum::power(*c, *p, *n_max),
        _ => Err(Error::config("model.generator must be a spectrum for truncation studies")),
    }
}

/// The evolution scenario and its field `v` (when declared).
pub fn evolution(model: &ModelConfig, exec: &ExecutionConfig) -> Result<(EvolutionScenario, Option<FieldRef>)> {
    let d = dimension(model)?;
    let initial = model.initial.clone().ok_or_else(|| missing("initial"))?;
    let lam = lambda(model.lambda.as_ref().ok_or_else(|| missing("lambda"))?);
    let mu = measure(model.measure.as_ref().ok_or_else(|| missing("measure"))?)?;
    let v = model.field.as_ref().map(|f| field(f, d)).transpose()?;
    let sigma = diffusion(&model.diffusion, d)?.unwrap_or_else(|| Arc::new(|_, out: &mut DMatrix<f64>| out.fill(0.0)));

    let rho: VectorMap = match &model.rho {
        None => Arc::new(|_, out: &mut [f64]| out.fill(0.0)),
        Some(RhoSpec::Constant { value }) => builtin::constant_drift(vector(value, d, "rho.value")?),
        Some(RhoSpec::Tanh { scale }) => {
            let s = *scale;
            Arc::new(move |x, out| {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = s * xi.tanh();
                }
            })
        }
        Some(RhoSpec::FromField { shift }) => {
            let v = v.clone().ok_or_else(|| missing("field"))?;
            let sigma = sigma.clone();
            let shift = *shift;
            Arc::new(move |x, out| {
                let mut s = DMatrix::zeros(d, d);
                sigma(x, &mut s);
                let r = s.transpose() * DVector::from_vec(v.gradient(x));
                for (o, ri) in out.iter_mut().zip(r.iter()) {
                    *o = ri + shift;
                }
            })
        }
    };
    let (jump_map, independent) = jump(&model.jump).unwrap_or_else(|| {
        let zero: JumpMap = Arc::new(|_: &[f64], _: &[f64], out: &mut [f64]| out.fill(0.0));
        (zero, true)
    });

    let mut sc = EvolutionScenario::new(initial, mu, lam);
    sc.dim = d;
    sc.generator = generator(model.generator.as_ref(), d)?;
    sc.sigma = sigma;
    sc.rho = rho;
    sc.jump = jump_map;
    sc.jump_state_independent = independent;
    sc.region = region(&model.region)?;
    sc.horizon = exec.horizon;
    sc.dt = exec.dt;
    sc.seed = exec.seed;
    sc.lambda_margin = model.lambda_margin.unwrap_or(DEFAULT_LAMBDA_MARGIN);
    sc.validate()?;
    Ok((sc, v))
}

pub fn sequence(model: &ModelConfig, exec: &ExecutionConfig, reference_level: usize) -> Result<SequenceScenario> {
    let spec = model.sequence.as_ref().ok_or_else(|| missing("sequence"))?;
    let spectrum = spectrum(model.generator.as_ref())?;
    let n = reference_level;
    let (coeffs, initial) = match *spec {
        SequenceSpec::WeightedDiagonal { power } => {
            let w = move |j: usize| ((j + 1) as f64).powf(-power);
            let coeffs = SequenceCoefficients {
                drift: Arc::new(|x| vec![0.0; x.len()]),
                diffusion: Some(Arc::new(move |x| {
                    DMatrix::from_fn(x.len(), x.len(), |i, j| if i == j { w(i) } else { 0.0 })
                })),
                jump: Arc::new(move |x, u| (0..x.len()).map(|j| w(j) * u[0]).collect()),
                state_independent_jump: true,
            };
            (coeffs, InitialLaw::Fixed { value: (0..n).map(w).collect() })
        }
        SequenceSpec::FirstCoordinate { rate } => {
            let coeffs = SequenceCoefficients {
                drift: Arc::new(move |x| {
                    let mut v = vec![0.0; x.len()];
                    v[0] = -rate * x[0];
                    v
                }),
                diffusion: Some(Arc::new(|x| {
                    DMatrix::from_fn(x.len(), x.len(), |i, j| if i == 0 && j == 0 { 1.0 } else { 0.0 })
                })),
                jump: Arc::new(|x, u| {
                    let mut v = vec![0.0; x.len()];
                    v[0] = u[0];
                    v
                }),
                state_independent_jump: true,
            };
            let mut x0 = vec![0.0; n];
            x0[0] = 1.0;
            (coeffs, InitialLaw::Fixed { value: x0 })
        }
    };
    Ok(SequenceScenario {
        coeffs,
        spectrum,
        measure: measure(model.measure.as_ref().ok_or_else(|| missing("measure"))?)?,
        region: region(&model.region)?,
        initial: model.initial.clone().unwrap_or(initial),
        dt: exec.dt,
        seed: exec.seed,
    })
}
