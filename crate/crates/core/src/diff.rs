//! Central finite differences and analytic-derivative checks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative step for first derivatives.
pub const DEFAULT_STEP: f64 = 1e-5;

fn step_for(h: f64, x: f64) -> f64 {
    h * x.abs().max(1.0)
}

fn eval(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("function at {:?}", x.as_slice())))
    }
}

/// Central-difference gradient with per-coordinate step `h * max(1, |x_i|)`.
pub fn fd_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Result<DVector<f64>> {
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        let hi = step_for(h, x[i]);
        probe[i] = x[i] + hi;
        let fp = eval(f, &probe)?;
        probe[i] = x[i] - hi;
        let fm = eval(f, &probe)?;
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * hi);
    }
    Ok(grad)
}

/// Central-difference Hessian (second differences on the diagonal, four-point
/// stencil off it).
pub fn fd_hessian(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>> {
    let n = x.len();
    let f0 = eval(f, x)?;
    let mut hess = DMatrix::zeros(n, n);
    let mut p = x.clone();
    for i in 0..n {
        let hi = step_for(h, x[i]);
        p[i] = x[i] + hi;
        let fp = eval(f, &p)?;
        p[i] = x[i] - hi;
        let fm = eval(f, &p)?;
        p[i] = x[i];
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (hi * hi);
        for j in 0..i {
            let hj = step_for(h, x[j]);
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                p[i] = x[i] + si * hi;
                p[j] = x[j] + sj * hj;
                let v = eval(f, &p);
                p[i] = x[i];
                p[j] = x[j];
                v
            };
            let v =
                (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Max over entries of `|analytic - numeric| / max(1, |analytic|)`.
pub fn check_gradient(
    f: &dyn Fn(&DVector<f64>) -> f64,
    analytic_grad: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let numeric = fd_gradient(f, x, h)?;
    let analytic = analytic_grad(x);
    if analytic.len() != numeric.len() {
        return Err(Error::Dimension(format!(
            "analytic gradient has {} entries, expected {}",
            analytic.len(),
            numeric.len()
        )));
    }
    Ok(max_relative_error(analytic.as_slice(), numeric.as_slice()))
}

/// Same error measure as [`check_gradient`], for a Hessian.
pub fn check_hessian(
    f: &dyn Fn(&DVector<f64>) -> f64,
    analytic_hess: &dyn Fn(&DVector<f64>) -> DMatrix<f64>,
    x: &DVector<f64>,
    h: f64,
) -> Result<f64> {
    let numeric = fd_hessian(f, x, h)?;
    let analytic = analytic_hess(x);
    if analytic.shape() != numeric.shape() {
        return Err(Error::Dimension(format!("{:?} vs {:?}", analytic.shape(), numeric.shape())));
    }
    Ok(max_relative_error(analytic.as_slice(), numeric.as_slice()))
}

fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(1.0)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_gradient_is_exact() {
        let f = |x: &DVector<f64>| x[0] * x[0];
        let g = |x: &DVector<f64>| DVector::from_element(1, 2.0 * x[0]);
        let err = check_gradient(&f, &g, &DVector::from_element(1, 3.0), 1e-5).unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let f = |_: &DVector<f64>| 4.2;
        let g = |x: &DVector<f64>| DVector::zeros(x.len());
        let err = check_gradient(&f, &g, &DVector::from_vec(vec![0.3, -1.0]), 1e-5).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let f = |x: &DVector<f64>| x[0].ln();
        let g = |x: &DVector<f64>| DVector::from_element(1, 1.0 / x[0]);
        assert!(check_gradient(&f, &g, &DVector::from_element(1, 0.0), 1e-5).is_err());
    }

    #[test]
    fn hessian_of_cubic_polynomial() {
        let f = |x: &DVector<f64>| x[0] * x[0] * x[1] + x[1].powi(3);
        let h = |x: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0 * x[1], 2.0 * x[0], 2.0 * x[0], 6.0 * x[1]]);
        let err = check_hessian(&f, &h, &DVector::from_vec(vec![0.7, -1.3]), 1e-4).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
