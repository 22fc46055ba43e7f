//! Generalized Dice Loss over a batch of per-pixel class probabilities.
//!
//! The loss weights each class by the inverse square of its reference area,
//! so rare classes contribute as much as dominant ones. Classes with no
//! reference pixels in the batch are excluded from both sums instead of
//! receiving an unbounded 1/0^2 weight.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Stabilizer added to the numerator and denominator of the loss ratio.
pub const GDL_EPSILON: f64 = 1e-6;

/// Per-class area-inverse weights for one batch.
#[derive(Debug, Clone)]
pub struct GdlWeights<T: Scalar> {
    /// `1 / (sum_n r_ln)^2` per class; zero for excluded classes.
    pub weight: Vec<T>,
    /// Whether the class has any reference pixels in the batch.
    pub included: Vec<bool>,
}

impl<T: Scalar> GdlWeights<T> {
    /// Computes weights from a one-hot reference batch (NCHW).
    pub fn compute(onehot: &Tensor<T>) -> Result<Self> {
        let (batch, chans, _, _) = onehot.dims4()?;
        let mut weight = vec![T::zero(); chans];
        let mut included = vec![false; chans];
        let mut any = false;
        for c in 0..chans {
            let mut area = T::zero();
            for n in 0..batch {
                for &v in onehot.plane(n, c) {
                    if v != T::zero() && v != T::one() {
                        return Err(Error::Data(format!(
                            "reference tensor is not one-hot: found value {v} in class {c}"
                        )));
                    }
                    area = area + v;
                }
            }
            if area > T::zero() {
                weight[c] = T::one() / (area * area);
                included[c] = true;
                any = true;
            }
        }
        if !any {
            return Err(Error::Data(
                "every class is absent from the reference batch".into(),
            ));
        }
        Ok(Self { weight, included })
    }
}

/// Generalized Dice Loss and its gradient with respect to the predictions.
///
/// With `A = sum_l w_l sum_n r_ln p_ln` and `B = sum_l w_l sum_n (r_ln + p_ln)`
/// over included classes, the loss is `1 - (2A + eps) / (B + eps)`, which is
/// exactly zero for a perfect prediction. The gradient for an included class
/// is `w_l ((2A + eps) - 2 r_ln (B + eps)) / (B + eps)^2` and zero otherwise.
///
/// `predictions` are expected in `[0, 1]`; the pixel index `n` ranges over
/// every pixel of the whole batch.
pub fn generalized_dice_loss<T: Scalar>(
    predictions: &Tensor<T>,
    onehot: &Tensor<T>,
) -> Result<(T, Tensor<T>)> {
    if predictions.shape() != onehot.shape() {
        return Err(Error::Shape(format!(
            "prediction shape {:?} does not match reference {:?}",
            predictions.shape(),
            onehot.shape()
        )));
    }
    let (batch, chans, _, _) = predictions.dims4()?;
    let weights = GdlWeights::compute(onehot)?;
    let eps = T::from_f64(GDL_EPSILON);

    let mut num = T::zero();
    let mut den = T::zero();
    for c in 0..chans {
        if !weights.included[c] {
            continue;
        }
        let w = weights.weight[c];
        let mut intersect = T::zero();
        let mut total = T::zero();
        for n in 0..batch {
            let p = predictions.plane(n, c);
            let r = onehot.plane(n, c);
            for (&pv, &rv) in p.iter().zip(r) {
                intersect = intersect + rv * pv;
                total = total + rv + pv;
            }
        }
        num = num + w * intersect;
        den = den + w * total;
    }

    let two = T::from_f64(2.0);
    let ratio_num = two * num + eps;
    let ratio_den = den + eps;
    let loss = T::one() - ratio_num / ratio_den;
    if !loss.is_finite() {
        return Err(Error::Numeric("generalized dice loss is not finite".into()));
    }

    let den_sq = ratio_den * ratio_den;
    let mut grad = Tensor::zeros(predictions.shape().to_vec());
    for c in 0..chans {
        if !weights.included[c] {
            continue;
        }
        let w = weights.weight[c];
        for n in 0..batch {
            let r = onehot.plane(n, c).to_vec();
            let g = grad.plane_mut(n, c);
            for (gv, rv) in g.iter_mut().zip(r) {
                *gv = w * (ratio_num - two * rv * ratio_den) / den_sq;
            }
        }
    }
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::gradcheck::{finite_difference_check, DEFAULT_H};
    use rand::Rng;

    /// Random one-hot reference over `chans` classes; every pixel gets the
    /// class drawn by the stream, so some classes may be absent.
    fn random_onehot(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, "loss-test-onehot", 0);
        let (batch, chans, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        let mut t = Tensor::zeros(shape.to_vec());
        for n in 0..batch {
            for p in 0..h * w {
                let c = rng.random_range(0..chans);
                t.data_mut()[(n * chans + c) * h * w + p] = 1.0;
            }
        }
        t
    }

    fn random_probs(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = stream(seed, "loss-test-probs", 0);
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(0.05..0.95))
    }

    #[test]
    fn weights_are_inverse_squared_areas() {
        // 1x3x2x2: class 0 covers 3 pixels, class 1 covers 1, class 2 absent
        let mut r = Tensor::<f64>::zeros(vec![1, 3, 2, 2]);
        r.plane_mut(0, 0)[..3].copy_from_slice(&[1.0, 1.0, 1.0]);
        r.plane_mut(0, 1)[3] = 1.0;
        let w = GdlWeights::compute(&r).unwrap();
        assert_eq!(w.included, vec![true, true, false]);
        assert!((w.weight[0] - 1.0 / 9.0).abs() < 1e-15);
        assert!((w.weight[1] - 1.0).abs() < 1e-15);
        assert_eq!(w.weight[2], 0.0);
    }

    #[test]
    fn weights_reject_non_onehot_and_empty() {
        let r = Tensor::<f64>::filled(vec![1, 1, 1, 1], 0.5);
        assert!(GdlWeights::compute(&r).is_err());
        let empty = Tensor::<f64>::zeros(vec![1, 2, 2, 2]);
        assert!(GdlWeights::compute(&empty).is_err());
    }

    #[test]
    fn perfect_prediction_has_zero_loss() {
        for seed in 0..5 {
            let r = random_onehot(&[2, 7, 4, 4], seed);
            let (loss, _) = generalized_dice_loss(&r, &r).unwrap();
            assert!(loss.abs() <= 1e-6, "seed {seed}: loss {loss}");
            assert_eq!(loss, 0.0, "seed {seed}: the ratio should be exactly 1");
        }
    }

    #[test]
    fn single_pixel_hit_and_miss() {
        let r = Tensor::<f64>::new(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap();
        let hit = Tensor::<f64>::new(vec![1, 2, 1, 1], vec![1.0, 0.0]).unwrap();
        let miss = Tensor::<f64>::new(vec![1, 2, 1, 1], vec![0.0, 1.0]).unwrap();
        let (l_hit, _) = generalized_dice_loss(&hit, &r).unwrap();
        let (l_miss, _) = generalized_dice_loss(&miss, &r).unwrap();
        assert_eq!(l_hit, 0.0);
        assert!((l_miss - 1.0).abs() < 1e-5, "miss loss {l_miss}");
    }

    #[test]
    fn matches_hand_evaluation() {
        // two pixels, two classes, both present with area 1 so both weights
        // are 1; worked by hand from the ratio definition
        let r = Tensor::new(vec![1, 2, 1, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let p = Tensor::new(vec![1, 2, 1, 2], vec![0.6, 0.3, 0.4, 0.7]).unwrap();
        let a: f64 = 0.6 + 0.7;
        let b: f64 = (1.0 + 0.9) + (1.0 + 1.1);
        let expected = 1.0 - (2.0 * a + 1e-6) / (b + 1e-6);
        let (loss, _) = generalized_dice_loss(&p, &r).unwrap();
        assert!((loss - expected).abs() < 1e-12, "loss {loss} vs {expected}");
    }

    #[test]
    fn loss_stays_in_unit_interval() {
        for seed in 0..10 {
            let shape = [2, 5, 3, 3];
            let r = random_onehot(&shape, seed);
            let p = random_probs(&shape, seed + 50);
            let (loss, _) = generalized_dice_loss(&p, &r).unwrap();
            assert!((0.0..=1.0).contains(&loss), "seed {seed}: loss {loss}");
        }
    }

    #[test]
    fn gradient_pulls_predictions_toward_reference() {
        let shape = [1, 4, 3, 3];
        let r = random_onehot(&shape, 9);
        let p = random_probs(&shape, 10);
        let (_, grad) = generalized_dice_loss(&p, &r).unwrap();
        let w = GdlWeights::compute(&r).unwrap();
        let (_, chans, h, wd) = r.dims4().unwrap();
        for c in 0..chans {
            for i in 0..h * wd {
                let g = grad.plane(0, c)[i];
                if !w.included[c] {
                    assert_eq!(g, 0.0);
                } else if r.plane(0, c)[i] == 1.0 {
                    assert!(g < 0.0, "gradient should push p up where r is 1");
                } else {
                    assert!(g > 0.0, "gradient should push p down where r is 0");
                }
            }
        }
    }

    #[test]
    fn invariant_under_class_relabeling() {
        let shape = [2, 4, 3, 3];
        let r = random_onehot(&shape, 21);
        let p = random_probs(&shape, 22);
        let perm = [2usize, 0, 3, 1];
        let permute = |t: &Tensor<f64>| {
            let mut out = Tensor::zeros(t.shape().to_vec());
            for n in 0..shape[0] {
                for (c, &src) in perm.iter().enumerate() {
                    out.plane_mut(n, c).copy_from_slice(t.plane(n, src));
                }
            }
            out
        };
        let (loss, grad) = generalized_dice_loss(&p, &r).unwrap();
        let (loss_p, grad_p) = generalized_dice_loss(&permute(&p), &permute(&r)).unwrap();
        // summation order changes with the permutation, so only up to roundoff
        assert!((loss - loss_p).abs() < 1e-12);
        let expected = permute(&grad);
        for (a, b) in expected.data().iter().zip(grad_p.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..5 {
            let shape = [1, 4, 3, 3];
            let r = random_onehot(&shape, 100 + seed);
            let p = random_probs(&shape, 200 + seed);
            let (_, analytic) = generalized_dice_loss(&p, &r).unwrap();
            let report = finite_difference_check(
                |q| generalized_dice_loss(q, &r).map(|(l, _)| l),
                &p,
                &analytic,
                DEFAULT_H,
            )
            .unwrap();
            assert!(
                report.max_rel_err < 1e-5,
                "seed {seed}: rel err {} at {} (num {} vs ana {})",
                report.max_rel_err,
                report.worst_coord,
                report.numeric,
                report.analytic
            );
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let r = random_onehot(&[1, 2, 2, 2], 1);
        let p = Tensor::<f64>::zeros(vec![1, 3, 2, 2]);
        assert!(generalized_dice_loss(&p, &r).is_err());
    }
}
