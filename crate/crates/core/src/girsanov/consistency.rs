use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::{EvolutionScenario, Generator, ScalarField};
use crate::error::{Error, Result};
use crate::jump_sde::{CadlagPath, JumpMap, MatrixMap, NoiseRecord, VectorMap};
use crate::random_measures::{LambdaFn, LevyMeasure, QuadratureRule, Region};

const QUADRATURE_TOLERANCE: f64 = 1e-6;

/// The four terms of the integro-differential residual at one state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PideResidual {
    /// `½ Tr(σσ*∇²v)`.
    pub trace_term: f64,
    /// `½ |σ*∇v|²`.
    pub rho_term: f64,
    /// `⟨x, A∇v⟩`.
    pub generator_term: f64,
    /// `∫ [e^{Δv} − 1 − ⟨f, ∇v⟩e^{Δv}] ν(du)`, `Δv = v(x + f(x,u)) − v(x)`.
    pub jump_term: f64,
    pub total: f64,
    /// The jump integral moved by more than 10⁻⁶ (relative) when the
    /// quadrature nodes were doubled.
    pub quadrature_flagged: bool,
}

fn jump_integral(v: &dyn ScalarField, f: &JumpMap, rule: &QuadratureRule, x: &[f64], grad: &[f64]) -> f64 {
    let v0 = v.value(x);
    let mut fx = vec![0.0; x.len()];
    let mut shifted = vec![0.0; x.len()];
    rule.integrate(|u| {
        f(x, u, &mut fx);
        for ((s, a), b) in shifted.iter_mut().zip(x).zip(&fx) {
            *s = a + b;
        }
        let e = (v.value(&shifted) - v0).exp();
        let pair: f64 = fx.iter().zip(grad).map(|(a, b)| a * b).sum();
        e - 1.0 - pair * e
    })
}

/// Evaluates the integro-differential residual at `x`, with `ρ = σ*∇v`
/// substituted in the `½|ρ|²` term.
pub fn pide_residual(
    v: &dyn ScalarField,
    generator: &Generator,
    sigma: &MatrixMap,
    f: &JumpMap,
    intensity: &LevyMeasure,
    region: &Region,
    x: &[f64],
) -> Result<PideResidual> {
    let d = x.len();
    if v.dim() != d {
        return Err(Error::config("field and state dimensions differ"));
    }
    generator.check_dim(d)?;
    let mut s = DMatrix::zeros(d, d);
    sigma(x, &mut s);
    let grad = v.gradient(x);
    let g = DVector::from_column_slice(&grad);
    let rho = s.transpose() * &g;
    let trace_term = 0.5 * v.trace_form(x, &s);
    let rho_term = 0.5 * rho.norm_squared();
    let generator_term: f64 = x.iter().zip(generator.apply(&grad)).map(|(a, b)| a * b).sum();
    let base = intensity.rule(region);
    let jump_term = jump_integral(v, f, &base, x, &grad);
    let quadrature_flagged = if intensity.is_discrete() {
        false
    } else {
        let fine = intensity.rule_with_nodes(region, 2 * intensity.quadrature_nodes());
        let refined = jump_integral(v, f, &fine, x, &grad);
        let change = (refined - jump_term).abs();
        change > QUADRATURE_TOLERANCE * refined.abs() && change > 1e-14
    };
    Ok(PideResidual {
        trace_term,
        rho_term,
        generator_term,
        jump_term,
        total: trace_term + rho_term + generator_term + jump_term,
        quadrature_flagged,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointResidual {
    pub point: Vec<f64>,
    pub residual: f64,
    pub quadrature_flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsistencyReport {
    /// `max_x |ρ(x) − σ*(x)∇v(x)|`.
    pub e1_max_residual: f64,
    pub e1_argmax: Vec<f64>,
    /// `max_{x,u} |λ(u) − e^{v(x+f(x,u)) − v(x)}|` over quadrature marks.
    pub e2_max_residual: f64,
    pub e2_argmax_point: Vec<f64>,
    pub e2_argmax_mark: Vec<f64>,
    /// `max_u (max_x Δv − min_x Δv)`; zero when the increment does not depend
    /// on the state.
    pub e2_x_spread: f64,
    /// `|residual|` of the integro-differential equation at each point.
    pub e3_residuals: Vec<PointResidual>,
    pub e3_max_residual: f64,
    pub e3_argmax: Vec<f64>,
    pub sample_points: Vec<Vec<f64>>,
    /// Marks where λ falls outside `(0, 1)`.
    pub structural_violations: Vec<String>,
}

impl ConsistencyReport {
    pub fn max_residual(&self) -> f64 {
        self.e1_max_residual.max(self.e2_max_residual).max(self.e3_max_residual)
    }
}

/// The path-independence conditions evaluated at `sample_points`.
#[allow(clippy::too_many_arguments)]
pub fn check_consistency(
    v: &dyn ScalarField,
    generator: &Generator,
    sigma: &MatrixMap,
    rho: &VectorMap,
    f: &JumpMap,
    lambda: &LambdaFn,
    intensity: &LevyMeasure,
    region: &Region,
    sample_points: &[Vec<f64>],
) -> Result<ConsistencyReport> {
    if sample_points.is_empty() {
        return Err(Error::config("consistency check needs at least one sample point"));
    }
    if sample_points.iter().flatten().any(|c| !c.is_finite()) {
        return Err(Error::config("sample points must be finite"));
    }
    let d = v.dim();
    let rule = intensity.rule(region);
    let marks: Vec<Vec<f64>> = rule.iter().map(|(u, _)| u.to_vec()).collect();

    let mut structural_violations = Vec::new();
    let lambdas: Vec<f64> = marks
        .iter()
        .map(|u| {
            let l = lambda(u);
            if !(l > 0.0 && l < 1.0) {
                structural_violations.push(format!("λ({u:?}) = {l} is outside (0, 1)"));
            }
            l
        })
        .collect();

    let mut report = ConsistencyReport {
        e1_max_residual: 0.0,
        e1_argmax: sample_points[0].clone(),
        e2_max_residual: 0.0,
        e2_argmax_point: sample_points[0].clone(),
        e2_argmax_mark: marks.first().cloned().unwrap_or_default(),
        e2_x_spread: 0.0,
        e3_residuals: Vec::with_capacity(sample_points.len()),
        e3_max_residual: 0.0,
        e3_argmax: sample_points[0].clone(),
        sample_points: sample_points.to_vec(),
        structural_violations,
    };
    let mut dv_range = vec![(f64::INFINITY, f64::NEG_INFINITY); marks.len()];
    let mut s = DMatrix::zeros(d, d);
    let mut r = vec![0.0; d];
    let mut fx = vec![0.0; d];
    for x in sample_points {
        if x.len() != d {
            return Err(Error::config("sample point dimension differs from the field dimension"));
        }
        sigma(x, &mut s);
        rho(x, &mut r);
        let target = s.transpose() * DVector::from_vec(v.gradient(x));
        let e1 = r.iter().zip(target.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if e1 > report.e1_max_residual {
            report.e1_max_residual = e1;
            report.e1_argmax = x.clone();
        }

        let v0 = v.value(x);
        for (q, u) in marks.iter().enumerate() {
            f(x, u, &mut fx);
            let shifted: Vec<f64> = x.iter().zip(&fx).map(|(a, b)| a + b).collect();
            let dv = v.value(&shifted) - v0;
            dv_range[q].0 = dv_range[q].0.min(dv);
            dv_range[q].1 = dv_range[q].1.max(dv);
            let e2 = (lambdas[q] - dv.exp()).abs();
            if e2 > report.e2_max_residual {
                report.e2_max_residual = e2;
                report.e2_argmax_point = x.clone();
                report.e2_argmax_mark = u.clone();
            }
        }

        let res = pide_residual(v, generator, sigma, f, intensity, region, x)?;
        let abs = res.total.abs();
        if abs > report.e3_max_residual {
            report.e3_max_residual = abs;
            report.e3_argmax = x.clone();
        }
        report.e3_residuals.push(PointResidual {
            point: x.clone(),
            residual: abs,
            quadrature_flagged: res.quadrature_flagged,
        });
    }
    report.e2_x_spread = dv_range.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max);
    Ok(report)
}

/// Final values of the six terms of the Itô expansion of `v(X_t) − v(X₀)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ItoTerms {
    /// `∫⟨AX, ∇v⟩ ds`.
    pub generator: f64,
    /// `∫⟨b, ∇v⟩ ds` with `b = σρ`.
    pub drift: f64,
    /// `∫⟨σ*∇v, dW⟩`.
    pub brownian: f64,
    /// `∫∫[Δv − ⟨f, ∇v⟩] λν(du) ds`.
    pub jump_compensator: f64,
    /// `∫∫ Δv Ñ_λ(ds, du)`.
    pub compensated_jumps: f64,
    /// `½∫Tr(σσ*∇²v) ds`.
    pub trace: f64,
}

impl ItoTerms {
    fn sum(&self) -> f64 {
        self.generator + self.drift + self.brownian + self.jump_compensator + self.compensated_jumps + self.trace
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ItoGap {
    pub gap: f64,
    pub time: f64,
    pub terms: ItoTerms,
}

/// Sup over nodes of `|v(X_t) − v(X₀) − (sum of the six Itô terms)|`.
///
/// `ds` integrals use the midpoint of `X_{t_k}` and `X_{t_{k+1}−}` on each
/// interval and the noise compensator's mark rule; the Brownian integral is
/// left-point and the jump sum is exact at the recorded left limits.
pub fn ito_decomposition_gap(
    path: &CadlagPath,
    noise: &NoiseRecord,
    v: &dyn ScalarField,
    scenario: &EvolutionScenario,
) -> Result<ItoGap> {
    let grid = path.grid();
    if noise.intervals() != grid.intervals() {
        return Err(Error::config("path and noise are not on the same grid"));
    }
    let d = scenario.dim;
    if v.dim() != d || path.dim() != d {
        return Err(Error::config("field, path and scenario dimensions differ"));
    }
    let rule = noise.compensator().rule();
    let nodes = grid.nodes();
    let v0 = v.value(path.initial());
    let mut terms = ItoTerms::default();
    let mut best = ItoGap {
        gap: 0.0,
        time: 0.0,
        terms: ItoTerms::default(),
    };
    let mut shifted = vec![0.0; d];
    for k in 0..grid.intervals() {
        let dt = nodes[k + 1] - nodes[k];
        let xk = path.state(k);
        let right = path.left_limit(k + 1);
        let mid: Vec<f64> = xk.iter().zip(right).map(|(a, b)| 0.5 * (a + b)).collect();
        let g_mid = v.gradient(&mid);
        let pair = |a: &[f64]| a.iter().zip(&g_mid).map(|(p, q)| p * q).sum::<f64>();

        terms.generator += dt * pair(&scenario.generator.apply(&mid));
        terms.drift += dt * pair(&scenario.b_at(&mid));
        let s_left = scenario.sigma_at(xk);
        let sg = s_left.transpose() * DVector::from_vec(v.gradient(xk));
        terms.brownian += sg.iter().zip(noise.increment(k)).map(|(a, b)| a * b).sum::<f64>();
        terms.trace += 0.5 * dt * v.trace_form(&mid, &scenario.sigma_at(&mid));

        let v_mid = v.value(&mid);
        let (mut comp, mut dv_rate) = (0.0, 0.0);
        for (u, w) in rule.iter() {
            let fx = scenario.jump_at(&mid, u);
            for ((s, a), b) in shifted.iter_mut().zip(&mid).zip(&fx) {
                *s = a + b;
            }
            let dv = v.value(&shifted) - v_mid;
            comp += w * (dv - pair(&fx));
            dv_rate += w * dv;
        }
        terms.jump_compensator += dt * comp;
        terms.compensated_jumps -= dt * dv_rate;
        if let Some(j) = path.jump_at(k + 1) {
            let fx = scenario.jump_at(&j.pre, &j.mark);
            let post: Vec<f64> = j.pre.iter().zip(&fx).map(|(a, b)| a + b).collect();
            terms.compensated_jumps += v.value(&post) - v.value(&j.pre);
        }

        let gap = (v.value(path.state(k + 1)) - v0 - terms.sum()).abs();
        if gap > best.gap || gap.is_nan() {
            best.gap = gap;
            best.time = nodes[k + 1];
        }
    }
    best.terms = terms;
    Ok(best)
}
