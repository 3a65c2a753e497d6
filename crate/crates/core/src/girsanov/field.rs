use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// A `C²` scalar function `v` on the state space.
pub trait ScalarField: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// `Tr(σσ* ∇²v)(x)`.
    fn trace_form(&self, x: &[f64], sigma: &DMatrix<f64>) -> f64 {
        (sigma.transpose() * self.hessian(x) * sigma).trace()
    }
}

pub type FieldRef = Arc<dyn ScalarField>;

#[derive(Clone, Debug, PartialEq)]
pub struct ConstantField {
    pub dim: usize,
    pub value: f64,
}

impl ScalarField for ConstantField {
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, _: &[f64]) -> f64 {
        self.value
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim, self.dim)
    }
}

/// `v(x) = ⟨slope, x⟩ + offset`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearField {
    pub slope: Vec<f64>,
    pub offset: f64,
}

impl ScalarField for LinearField {
    fn dim(&self) -> usize {
        self.slope.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.slope.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.offset
    }
    fn gradient(&self, _: &[f64]) -> Vec<f64> {
        self.slope.clone()
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(self.dim(), self.dim())
    }
}

/// `v(x) = ½⟨x, Qx⟩ + ⟨ℓ, x⟩ + c` with `Q` symmetric.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticField {
    matrix: DMatrix<f64>,
    linear: Vec<f64>,
    constant: f64,
}

impl QuadraticField {
    pub fn new(matrix: DMatrix<f64>, linear: Vec<f64>, constant: f64) -> Result<Self> {
        let d = linear.len();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::config("quadratic field: matrix and linear part sizes differ"));
        }
        if (&matrix - matrix.transpose()).amax() > 1e-12 * matrix.amax().max(1.0) {
            return Err(Error::config("quadratic field: matrix must be symmetric"));
        }
        Ok(Self {
            matrix,
            linear,
            constant,
        })
    }
}

impl ScalarField for QuadraticField {
    fn dim(&self) -> usize {
        self.linear.len()
    }
    fn value(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.matrix * &xv)) + self.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.constant
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.matrix * DVector::from_column_slice(x);
        g.iter().zip(&self.linear).map(|(a, b)| a + b).collect()
    }
    fn hessian(&self, _: &[f64]) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

fn fd_step(xi: f64) -> f64 {
    1e-5 * xi.abs().max(1.0)
}

/// Compares `∇v` and `∇²v` with central finite differences at each point.
///
/// Tolerances are `max(10⁻⁶, 10⁻⁴|∇v|)` for the gradient and
/// `max(10⁻⁶, 10⁻⁴ max|∇²v|)` for the Hessian.
pub fn check_derivatives(field: &dyn ScalarField, points: &[Vec<f64>]) -> Result<()> {
    let d = field.dim();
    for x in points {
        if x.len() != d {
            return Err(Error::config("probe point dimension differs from the field dimension"));
        }
        let g = field.gradient(x);
        let h = field.hessian(x);
        let g_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let g_tol = 1e-6f64.max(1e-4 * g_norm);
        let h_tol = 1e-6f64.max(1e-4 * h.amax());
        let mut xp = x.clone();
        for i in 0..d {
            let step = fd_step(x[i]);
            xp[i] = x[i] + step;
            let (vp, gp) = (field.value(&xp), field.gradient(&xp));
            xp[i] = x[i] - step;
            let (vm, gm) = (field.value(&xp), field.gradient(&xp));
            xp[i] = x[i];
            let fd = (vp - vm) / (2.0 * step);
            if (fd - g[i]).abs() > g_tol {
                return Err(Error::model(format!(
                    "gradient coordinate {i} at {x:?}: analytic {} vs finite difference {fd}",
                    g[i]
                )));
            }
            for j in 0..d {
                let fd = (gp[j] - gm[j]) / (2.0 * step);
                if (fd - h[(j, i)]).abs() > h_tol {
                    return Err(Error::model(format!(
                        "hessian entry ({j}, {i}) at {x:?}: analytic {} vs finite difference {fd}",
                        h[(j, i)]
                    )));
                }
            }
        }
    }
    Ok(())
}

/// The origin plus `±radius` along each axis.
pub fn axis_probe_points(dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; dim]];
    for i in 0..dim {
        for s in [-1.0, 1.0] {
            let mut p = vec![0.0; dim];
            p[i] = s * radius;
            pts.push(p);
        }
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug)]
    struct WrongGradient;

    impl ScalarField for WrongGradient {
        fn dim(&self) -> usize {
            1
        }
        fn value(&self, x: &[f64]) -> f64 {
            x[0].sin()
        }
        fn gradient(&self, x: &[f64]) -> Vec<f64> {
            vec![x[0].cos() + 0.01]
        }
        fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
            DMatrix::from_element(1, 1, -x[0].sin())
        }
    }

    #[test]
    fn builtin_fields_pass_derivative_checks() {
        let pts = axis_probe_points(2, 1.5);
        check_derivatives(&ConstantField { dim: 2, value: 3.0 }, &pts).unwrap();
        check_derivatives(&LinearField { slope: vec![-1.0, 2.0], offset: 0.5 }, &pts).unwrap();
        let q = QuadraticField::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), vec![1.0, -1.0], 0.0).unwrap();
        check_derivatives(&q, &pts).unwrap();
    }

    #[test]
    fn wrong_gradient_is_caught() {
        assert!(check_derivatives(&WrongGradient, &axis_probe_points(1, 1.0)).is_err());
    }

    #[test]
    fn quadratic_requires_symmetry() {
        assert!(QuadraticField::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]), vec![0.0; 2], 0.0).is_err());
    }

    #[test]
    fn trace_form_of_quadratic() {
        let q = QuadraticField::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]), vec![0.0; 2], 0.0).unwrap();
        let sigma = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        // σσ* = diag(1, 0.25); Tr(diag(1,0.25)·diag(2,4)) = 2 + 1
        assert!((q.trace_form(&[0.3, 0.1], &sigma) - 3.0).abs() < 1e-15);
    }
}
