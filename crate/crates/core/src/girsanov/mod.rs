//! Girsanov densities for the λ-thinned evolution equation and the
//! path-independence conditions.
//!
//! For `dX = (AX + σρ(X))dt + σ(X)dW + ∫ f(X₋,u) Ñ_λ(dt,du)` the density is
//!
//! `log Λ_t = −∫⟨ρ(X), dW⟩ − ½∫|ρ(X)|² ds − ∫∫ log λ dN_λ − ∫∫(1 − λ) dν ds`,
//!
//! and `Λ_t = exp{v(X₀) − v(X_t)}` holds exactly when `ρ = σ*∇v`,
//! `λ(u) = e^{v(x+f(x,u)) − v(x)}` and `v` solves the integro-differential
//! equation evaluated by [`pide_residual`].

mod consistency;
mod density;
mod field;
mod scenario;

use std::sync::Arc;

pub use consistency::{
    check_consistency, ito_decomposition_gap, pide_residual, ConsistencyReport, ItoGap, ItoTerms, PideResidual,
    PointResidual,
};
pub use density::{
    accumulate_log_density, martingale_check, path_independence_gap, DensityRecord, MartingaleOptions,
    MartingalePoint, MartingaleReport, PathGap,
};
pub use field::{
    axis_probe_points, check_derivatives, ConstantField, FieldRef, LinearField, QuadraticField, ScalarField,
};
pub use scenario::{EvolutionScenario, Generator, DEFAULT_LAMBDA_MARGIN, DEFAULT_RHO_BOUND};

use crate::jump_sde::InitialLaw;
use crate::random_measures::LevyMeasure;

/// Positive root `s` of `½s² + 2e⁻¹ − 1 = 0`, i.e. `√(2(1 − 2/e))`.
pub const KEYSTONE_SIGMA: f64 = 0.726_967_836_506_011_3;

/// One-dimensional scenario satisfying all three path-independence
/// conditions for `v(x) = −x`: `A = 0`, `σ ≡ s`, `f(x,u) = u`, `ν = δ₁`,
/// `λ ≡ e⁻¹` and `ρ = −s + rho_shift`.
pub fn keystone_scenario(rho_shift: f64, dt: f64, seed: u64) -> EvolutionScenario {
    let s = KEYSTONE_SIGMA;
    let measure = Arc::new(LevyMeasure::point_mass(vec![1.0], 1.0).expect("valid point mass"));
    EvolutionScenario {
        sigma: Arc::new(move |_, out| out.fill(s)),
        rho: Arc::new(move |_, out| out[0] = -s + rho_shift),
        jump: Arc::new(|_, u, out| out[0] = u[0]),
        dt,
        seed,
        ..EvolutionScenario::new(
            InitialLaw::Fixed { value: vec![0.0] },
            measure,
            Arc::new(|_| (-1.0f64).exp()),
        )
    }
}

pub fn keystone_field() -> LinearField {
    LinearField {
        slope: vec![-1.0],
        offset: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{median, run_paths};
    use crate::jump_sde::{JumpMap, MatrixMap};
    use crate::random_measures::{LambdaFn, Region};
    use nalgebra::DMatrix;

    fn lam(c: f64) -> LambdaFn {
        Arc::new(move |_| c)
    }

    fn unit_mass() -> Arc<LevyMeasure> {
        Arc::new(LevyMeasure::point_mass(vec![1.0], 1.0).unwrap())
    }

    fn fixed(x: f64) -> InitialLaw {
        InitialLaw::Fixed { value: vec![x] }
    }

    #[test]
    fn keystone_sigma_solves_scalar_equation() {
        // independent bisection on ½s² + 2/e − 1
        let g = |s: f64| 0.5 * s * s + 2.0 * (-1.0f64).exp() - 1.0;
        let (mut lo, mut hi) = (0.0, 2.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((lo - KEYSTONE_SIGMA).abs() < 1e-15);
        let sc = keystone_scenario(0.0, 0.01, 0);
        let r = pide_residual(&keystone_field(), &sc.generator, &sc.sigma, &sc.jump, &sc.measure, &sc.region, &[0.3]).unwrap();
        assert!(r.total.abs() < 1e-15);
    }

    #[test]
    fn near_identity_density_is_zero() {
        let mut sc = EvolutionScenario::new(fixed(0.0), unit_mass(), lam(1.0 - 1e-12));
        sc.lambda_margin = 1e-13;
        sc.jump = Arc::new(|_, u, out| out[0] = u[0]);
        for i in 0..50 {
            let (path, noise) = sc.simulate(i).unwrap();
            let rec = accumulate_log_density(&path, &noise, &sc.rho, &sc.lambda, &sc.measure, &sc.region).unwrap();
            assert_eq!(rec.log_density[0], 0.0);
            assert!(rec.log_density.iter().all(|v| v.abs() < 1e-9));
        }
    }

    #[test]
    fn constant_rho_matches_exponential_martingale() {
        let c = 0.7;
        let mut sc = EvolutionScenario::new(fixed(0.0), unit_mass(), lam(0.5));
        sc.region = Region::empty();
        sc.rho = Arc::new(move |_, out| out[0] = c);
        sc.sigma = Arc::new(|_, out| out.fill(1.0));
        let (path, noise) = sc.simulate(3).unwrap();
        let rec = accumulate_log_density(&path, &noise, &sc.rho, &sc.lambda, &sc.measure, &sc.region).unwrap();
        let w = noise.brownian_path();
        for k in 0..path.len() {
            let exact = -c * w[k][0] - 0.5 * c * c * path.time(k);
            assert!((rec.log_density[k] - exact).abs() < 1e-12);
        }
        let report = martingale_check(&sc, 10_000, &[1.0], MartingaleOptions::default()).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn half_thinning_compensator_and_martingale() {
        let m = 2.0;
        let measure = Arc::new(LevyMeasure::uniform_interval(0.5, 1.5, m).unwrap());
        let mut sc = EvolutionScenario::new(fixed(0.0), measure, lam(0.5));
        sc.jump = Arc::new(|_, u, out| out[0] = u[0]);
        let (path, noise) = sc.simulate(0).unwrap();
        let rec = accumulate_log_density(&path, &noise, &sc.rho, &sc.lambda, &sc.measure, &sc.region).unwrap();
        assert!((rec.jump_compensator.last().unwrap() - m / 2.0).abs() < 1e-12);
        let expected_t3 = noise.pattern().len() as f64 * 0.5f64.ln();
        assert!((rec.jump_log_sum.last().unwrap() - expected_t3).abs() < 1e-12);
        let report = martingale_check(&sc, 10_000, &[1.0], MartingaleOptions::default()).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn density_rejects_lambda_outside_unit_interval() {
        let sc = EvolutionScenario::new(fixed(0.0), unit_mass(), lam(0.5));
        let (path, noise) = sc.simulate(0).unwrap();
        assert!(matches!(
            accumulate_log_density(&path, &noise, &sc.rho, &lam(1.0), &sc.measure, &sc.region),
            Err(crate::Error::Model(_))
        ));
        let mut bad = sc.clone();
        bad.lambda = lam(1.0 - 1e-9);
        assert!(martingale_check(&bad, 100, &[1.0], MartingaleOptions::default()).is_err());
    }

    #[test]
    fn deterministic_scenario_has_unit_density() {
        let mut sc = EvolutionScenario::new(fixed(1.0), unit_mass(), lam(0.5));
        sc.region = Region::empty();
        let r = martingale_check(&sc, 500, &[0.5, 1.0], MartingaleOptions::default()).unwrap();
        for p in &r.points {
            assert_eq!(p.mean, 1.0);
            assert_eq!(p.stderr, 0.0);
        }
        assert!(r.passed);
        let (path, noise) = sc.simulate(0).unwrap();
        let rec = accumulate_log_density(&path, &noise, &sc.rho, &sc.lambda, &sc.measure, &sc.region).unwrap();
        let q = QuadraticField::new(DMatrix::from_element(1, 1, 3.0), vec![1.0], 2.0).unwrap();
        assert_eq!(path_independence_gap(&path, &rec, &q).unwrap().gap, 0.0);
    }

    fn ou_with_jumps() -> EvolutionScenario {
        let measure = Arc::new(LevyMeasure::uniform_with_hole(-1.0, 1.0, -0.1, 0.1, 1.0).unwrap());
        let mut sc = EvolutionScenario::new(fixed(0.5), measure, Arc::new(|u: &[f64]| 0.5 + 0.3 * u[0]));
        sc.generator = Generator::Matrix(DMatrix::from_element(1, 1, -1.0));
        sc.sigma = Arc::new(|_, out| out.fill(0.5));
        sc.rho = Arc::new(|x, out| out[0] = 0.8 * x[0].tanh());
        sc.jump = Arc::new(|_, u, out| out[0] = u[0]);
        sc.seed = 11;
        sc
    }

    #[test]
    fn ou_with_jumps_is_a_martingale() {
        let r = martingale_check(&ou_with_jumps(), 4000, &[0.25, 0.5, 1.0], MartingaleOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn omitted_compensator_biases_the_mean() {
        let measure = Arc::new(LevyMeasure::uniform_interval(0.5, 1.5, 1.0).unwrap());
        let mut sc = EvolutionScenario::new(fixed(0.0), measure, lam(0.3));
        sc.jump = Arc::new(|_, u, out| out[0] = u[0]);
        let opts = MartingaleOptions {
            omit_jump_compensator: true,
            threads: 0,
        };
        let r = martingale_check(&sc, 10_000, &[1.0], opts).unwrap();
        assert!(!r.passed);
        let p = &r.points[0];
        let predicted = (1.0f64 * 0.7).exp();
        assert!((p.mean - predicted).abs() < 3.0 * p.stderr, "{p:?} vs {predicted}");
    }

    #[test]
    fn rho_bound_rejects_scenario() {
        let mut sc = ou_with_jumps();
        sc.rho_bound = 0.1;
        assert!(martingale_check(&sc, 100, &[1.0], MartingaleOptions::default()).is_err());
    }

    #[test]
    fn keystone_gap_is_small_and_perturbation_is_large() {
        let gaps = |shift: f64| {
            let sc = keystone_scenario(shift, 2f64.powi(-7), 5);
            let v = keystone_field();
            run_paths(200, 0, |i| {
                let (path, noise) = sc.simulate(i).unwrap();
                let rec = accumulate_log_density(&path, &noise, &sc.rho, &sc.lambda, &sc.measure, &sc.region).unwrap();
                path_independence_gap(&path, &rec, &v).unwrap().gap
            })
        };
        let consistent = median(&gaps(0.0));
        let perturbed = median(&gaps(0.5));
        assert!(consistent < 1e-12, "{consistent}");
        assert!(perturbed > 0.1, "{perturbed}");
    }

    fn sigma_const(s: f64) -> MatrixMap {
        Arc::new(move |_, out| out.fill(s))
    }

    fn additive() -> JumpMap {
        Arc::new(|_, u, out| out[0] = u[0])
    }

    #[test]
    fn residual_of_constant_field_is_zero() {
        let nu = LevyMeasure::uniform_interval(-1.0, 1.0, 2.0).unwrap();
        let r = pide_residual(
            &ConstantField { dim: 1, value: 4.0 },
            &Generator::Matrix(DMatrix::from_element(1, 1, -3.0)),
            &sigma_const(2.0),
            &additive(),
            &nu,
            &Region::full(),
            &[0.7],
        )
        .unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn point_mass_residual_term_by_term() {
        let (s, m) = (0.9, 1.7);
        let nu = LevyMeasure::point_mass(vec![1.0], m).unwrap();
        let v = LinearField { slope: vec![-1.0], offset: 0.0 };
        let r = pide_residual(&v, &Generator::zero(1), &sigma_const(s), &additive(), &nu, &Region::full(), &[0.4]).unwrap();
        assert_eq!(r.trace_term, 0.0);
        assert_eq!(r.generator_term, 0.0);
        assert!((r.rho_term - 0.5 * s * s).abs() <= 1e-12 * 0.5 * s * s);
        let jump = m * (2.0 * (-1.0f64).exp() - 1.0);
        assert!((r.jump_term - jump).abs() <= 1e-12 * jump.abs());
        assert!(!r.quadrature_flagged);
    }

    #[test]
    fn quadratic_differential_terms_match_finite_differences() {
        let q = QuadraticField::new(DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.8]), vec![0.2, -0.4], 0.0).unwrap();
        let sig = DMatrix::from_row_slice(2, 2, &[0.6, 0.1, 0.0, 0.4]);
        let sm = sig.clone();
        let sigma: MatrixMap = Arc::new(move |_, out| out.copy_from(&sm));
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.2, 0.0, -2.0]);
        let nu = LevyMeasure::point_mass(vec![1.0, 0.0], 1.0).unwrap();
        let zero_jump: JumpMap = Arc::new(|_, _, out| out.fill(0.0));
        let x = [0.7, -0.3];
        let r = pide_residual(&q, &Generator::Matrix(a.clone()), &sigma, &zero_jump, &nu, &Region::empty(), &x).unwrap();
        assert_eq!(r.jump_term, 0.0);

        let h = 1e-4;
        let val = |p: &[f64]| q.value(p);
        let grad_fd = |p: &[f64]| -> Vec<f64> {
            (0..2)
                .map(|i| {
                    let mut a = p.to_vec();
                    let mut b = p.to_vec();
                    a[i] += h;
                    b[i] -= h;
                    (val(&a) - val(&b)) / (2.0 * h)
                })
                .collect()
        };
        let mut hess = DMatrix::zeros(2, 2);
        for i in 0..2 {
            for j in 0..2 {
                let mut pp = x.to_vec();
                let mut pm = x.to_vec();
                let mut mp = x.to_vec();
                let mut mm = x.to_vec();
                pp[i] += h;
                pp[j] += h;
                pm[i] += h;
                pm[j] -= h;
                mp[i] -= h;
                mp[j] += h;
                mm[i] -= h;
                mm[j] -= h;
                hess[(i, j)] = (val(&pp) - val(&pm) - val(&mp) + val(&mm)) / (4.0 * h * h);
            }
        }
        let g = grad_fd(&x);
        let sst = &sig * sig.transpose();
        let trace_fd = 0.5 * (&sst * &hess).trace();
        let gv = nalgebra::DVector::from_vec(g.clone());
        let rho_fd = 0.5 * (sig.transpose() * &gv).norm_squared();
        let gen_fd = nalgebra::DVector::from_column_slice(&x).dot(&(&a * &gv));
        for (got, want) in [(r.trace_term, trace_fd), (r.rho_term, rho_fd), (r.generator_term, gen_fd)] {
            assert!((got - want).abs() <= 1e-5 * want.abs(), "{got} vs {want}");
        }
    }

    #[test]
    fn generator_term_is_linear_in_the_operator() {
        let q = QuadraticField::new(DMatrix::identity(2, 2), vec![0.5, 0.0], 0.0).unwrap();
        let a = Generator::Matrix(DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, 0.0, -3.0]));
        let nu = LevyMeasure::uniform_interval(-1.0, 1.0, 1.0).unwrap();
        let f: JumpMap = Arc::new(|_, u, out| {
            out[0] = u[0];
            out[1] = 0.5 * u[0];
        });
        let x = [0.3, -1.2];
        let one = pide_residual(&q, &a, &sigma_const(0.3), &f, &nu, &Region::full(), &x).unwrap();
        let two = pide_residual(&q, &a.scaled(2.0).unwrap(), &sigma_const(0.3), &f, &nu, &Region::full(), &x).unwrap();
        assert_eq!(two.generator_term, 2.0 * one.generator_term);
        assert_eq!(two.trace_term, one.trace_term);
        assert_eq!(two.jump_term, one.jump_term);

        let spectral = Generator::Spectral(crate::spectral_evolution::Spectrum::new(vec![1.0, 2.0]).unwrap());
        let s1 = pide_residual(&q, &spectral, &sigma_const(0.3), &f, &nu, &Region::full(), &x).unwrap();
        let s2 = pide_residual(&q, &spectral.scaled(2.0).unwrap(), &sigma_const(0.3), &f, &nu, &Region::full(), &x).unwrap();
        assert_eq!(s2.generator_term, 2.0 * s1.generator_term);
    }

    #[test]
    fn discontinuous_integrand_is_flagged() {
        let nu = LevyMeasure::uniform_interval(-1.0, 1.0, 1.0).unwrap();
        let f: JumpMap = Arc::new(|_, u, out| out[0] = if u[0] > 0.37 { 1.0 } else { 0.0 });
        let v = QuadraticField::new(DMatrix::identity(1, 1), vec![0.0], 0.0).unwrap();
        let r = pide_residual(&v, &Generator::zero(1), &sigma_const(0.0), &f, &nu, &Region::full(), &[0.5]).unwrap();
        assert!(r.quadrature_flagged);
        let smooth = pide_residual(&v, &Generator::zero(1), &sigma_const(0.0), &additive(), &nu, &Region::full(), &[0.5]).unwrap();
        assert!(!smooth.quadrature_flagged);
    }

    #[test]
    fn consistency_report_examples() {
        let c = -0.8;
        let v = LinearField { slope: vec![c], offset: 0.3 };
        let nu = LevyMeasure::uniform_interval(0.1, 1.0, 1.0).unwrap();
        let s = 0.6;
        let rho: crate::jump_sde::VectorMap = Arc::new(move |_, out| out[0] = s * c);
        let exact: LambdaFn = Arc::new(move |u| (c * u[0]).exp());
        let points = vec![vec![-1.0], vec![0.0], vec![0.5], vec![2.0]];
        let rep = check_consistency(&v, &Generator::zero(1), &sigma_const(s), &rho, &additive(), &exact, &nu, &Region::full(), &points).unwrap();
        assert_eq!(rep.e1_max_residual, 0.0);
        assert!(rep.e2_max_residual < 1e-15);
        assert!(rep.e2_x_spread < 1e-15);
        assert!(rep.structural_violations.is_empty());
        assert_eq!(rep.e3_residuals.len(), 4);

        let shifted: LambdaFn = Arc::new(move |u| (c * u[0]).exp() + 0.01);
        let rep = check_consistency(&v, &Generator::zero(1), &sigma_const(s), &rho, &additive(), &shifted, &nu, &Region::full(), &points).unwrap();
        assert!((rep.e2_max_residual - 0.01).abs() < 1e-15);

        let too_big: LambdaFn = Arc::new(|_| 1.2);
        let rep = check_consistency(&v, &Generator::zero(1), &sigma_const(s), &rho, &additive(), &too_big, &nu, &Region::full(), &points).unwrap();
        assert!(!rep.structural_violations.is_empty());

        let q = QuadraticField::new(DMatrix::identity(1, 1), vec![0.0], 0.0).unwrap();
        let rep = check_consistency(&q, &Generator::zero(1), &sigma_const(s), &rho, &additive(), &exact, &nu, &Region::full(), &points).unwrap();
        assert!(rep.e2_x_spread > 1.0);
        assert!(rep.e1_max_residual > 0.0);
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("e3_residuals"));
    }

    fn ito_scenario(dt: f64, sigma: f64) -> EvolutionScenario {
        let mut sc = EvolutionScenario::new(fixed(1.0), unit_mass(), lam(0.5));
        sc.region = Region::empty();
        sc.generator = Generator::Matrix(DMatrix::from_element(1, 1, -1.0));
        sc.sigma = sigma_const(sigma);
        sc.dt = dt;
        sc
    }

    fn ito_median(sc: &EvolutionScenario, v: &dyn ScalarField, n: usize) -> f64 {
        let gaps: Vec<f64> = (0..n as u64)
            .map(|i| {
                let (path, noise) = sc.simulate(i).unwrap();
                ito_decomposition_gap(&path, &noise, v, sc).unwrap().gap
            })
            .collect();
        median(&gaps)
    }

    #[test]
    fn ito_gap_constant_field_is_exactly_zero() {
        let mut sc = ou_with_jumps();
        sc.dt = 0.05;
        let (path, noise) = sc.simulate(2).unwrap();
        let g = ito_decomposition_gap(&path, &noise, &ConstantField { dim: 1, value: 1.0 }, &sc).unwrap();
        assert_eq!(g.gap, 0.0);
    }

    #[test]
    fn ito_gap_linear_drift_is_first_order() {
        let v = LinearField { slope: vec![2.0], offset: 0.0 };
        let coarse = ito_median(&ito_scenario(0.02, 0.0), &v, 1);
        let fine = ito_median(&ito_scenario(0.01, 0.0), &v, 1);
        let ratio = coarse / fine;
        assert!((1.8..2.2).contains(&ratio), "{coarse} / {fine}");
    }

    #[test]
    fn ito_gap_quadratic_with_noise_decreases() {
        let v = QuadraticField::new(DMatrix::identity(1, 1), vec![0.0], 0.0).unwrap();
        let a = ito_median(&ito_scenario(0.02, 0.5), &v, 200);
        let b = ito_median(&ito_scenario(0.01, 0.5), &v, 200);
        let c = ito_median(&ito_scenario(0.005, 0.5), &v, 200);
        assert!(a > b && b > c, "{a} {b} {c}");
    }

    #[test]
    fn ito_gap_with_jumps_decreases() {
        let mut sc = ou_with_jumps();
        let v = QuadraticField::new(DMatrix::identity(1, 1), vec![0.1], 0.0).unwrap();
        sc.dt = 0.02;
        let a = ito_median(&sc, &v, 200);
        sc.dt = 0.005;
        let b = ito_median(&sc, &v, 200);
        assert!(b < a, "{a} {b}");
    }
}
