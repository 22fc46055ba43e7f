//! Central finite-difference verification of analytic gradients.
//!
//! Double precision only: the truncation error of the central difference is
//! O(h^2) and the roundoff error O(eps/h), which at h = 1e-5 leaves roughly
//! ten significant digits in f64 but nothing usable in f32.

use super::Tensor;
use crate::error::{Error, Result};

/// Worst coordinate found by a finite-difference sweep.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    /// Largest relative error over all checked coordinates.
    pub max_rel_err: f64,
    /// Flat index of the coordinate attaining it.
    pub worst_coord: usize,
    /// Central-difference estimate at that coordinate.
    pub numeric: f64,
    /// Supplied analytic gradient at that coordinate.
    pub analytic: f64,
}

/// Relative disagreement with a floor so that coordinates whose true
/// gradient is negligibly small do not amplify finite-difference noise.
fn rel_err(numeric: f64, analytic: f64) -> f64 {
    (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-6)
}

/// Compares `analytic` against central finite differences of `f` around
/// `point`, perturbing every coordinate by `h * max(1, |x_i|)`.
pub fn finite_difference_check<F>(
    mut f: F,
    point: &Tensor<f64>,
    analytic: &Tensor<f64>,
    h: f64,
) -> Result<GradCheck>
where
    F: FnMut(&Tensor<f64>) -> Result<f64>,
{
    if point.shape() != analytic.shape() {
        return Err(Error::Shape(format!(
            "analytic gradient shape {:?} does not match point {:?}",
            analytic.shape(),
            point.shape()
        )));
    }
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::Numeric(format!("step size {h} must be positive")));
    }
    let mut x = point.clone();
    let mut worst = GradCheck {
        max_rel_err: 0.0,
        worst_coord: 0,
        numeric: 0.0,
        analytic: if analytic.len() > 0 { analytic.data()[0] } else { 0.0 },
    };
    for i in 0..point.len() {
        let xi = point.data()[i];
        let hi = h * xi.abs().max(1.0);
        x.data_mut()[i] = xi + hi;
        let f_plus = f(&x)?;
        x.data_mut()[i] = xi - hi;
        let f_minus = f(&x)?;
        x.data_mut()[i] = xi;
        let numeric = (f_plus - f_minus) / (2.0 * hi);
        if !numeric.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite finite-difference quotient at coordinate {i}"
            )));
        }
        let err = rel_err(numeric, analytic.data()[i]);
        if err > worst.max_rel_err {
            worst = GradCheck {
                max_rel_err: err,
                worst_coord: i,
                numeric,
                analytic: analytic.data()[i],
            };
        }
    }
    Ok(worst)
}

/// Default perturbation size used throughout the verification suite.
pub const DEFAULT_H: f64 = 1e-5;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    #[test]
    fn quadratic_gradient_verifies() {
        let mut rng = stream(42, "gradcheck-test", 0);
        let shape = vec![2, 3, 4, 4];
        let a = Tensor::from_fn(shape.clone(), |_| rng.random_range(0.5..2.0));
        let x = Tensor::from_fn(shape.clone(), |_| rng.random_range(-2.0..2.0));
        let analytic = Tensor::new(
            shape.clone(),
            x.data()
                .iter()
                .zip(a.data())
                .map(|(&xi, &ai)| 2.0 * ai * xi)
                .collect(),
        )
        .unwrap();
        let report = finite_difference_check(
            |p| {
                Ok(p
                    .data()
                    .iter()
                    .zip(a.data())
                    .map(|(&xi, &ai)| ai * xi * xi)
                    .sum())
            },
            &x,
            &analytic,
            DEFAULT_H,
        )
        .unwrap();
        assert!(report.max_rel_err < 1e-8, "err {}", report.max_rel_err);
    }

    #[test]
    fn detects_a_wrong_gradient() {
        let x = Tensor::new(vec![3], vec![0.7, -1.3, 2.1]).unwrap();
        // claim the gradient of sum(x^2) is 2.1*x instead of 2*x
        let wrong = x.map(|v| 2.1 * v);
        let report = finite_difference_check(
            |p| Ok(p.data().iter().map(|v| v * v).sum()),
            &x,
            &wrong,
            DEFAULT_H,
        )
        .unwrap();
        assert!(report.max_rel_err > 1e-3, "err {}", report.max_rel_err);
    }

    #[test]
    fn rejects_shape_mismatch_and_bad_step() {
        let x = Tensor::<f64>::zeros(vec![2]);
        let g = Tensor::<f64>::zeros(vec![3]);
        assert!(finite_difference_check(|_| Ok(0.0), &x, &g, 1e-5).is_err());
        let g2 = Tensor::<f64>::zeros(vec![2]);
        assert!(finite_difference_check(|_| Ok(0.0), &x, &g2, 0.0).is_err());
        assert!(finite_difference_check(|_| Ok(0.0), &x, &g2, f64::NAN).is_err());
    }
}
