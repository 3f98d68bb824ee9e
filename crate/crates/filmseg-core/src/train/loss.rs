//! Pixel-wise binary cross-entropy over foreground probability maps.

use ndarray::Array3;
use thiserror::Error;

use crate::raster::BitMask;
use crate::scalar::Scalar;

/// Probabilities are pinned to `[EPS, 1 − EPS]` before the logarithm so a
/// saturated pixel cannot produce an infinite loss.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("probability map {probs:?} does not match target map {targets:?}")]
    ShapeMismatch {
        probs: Vec<usize>,
        targets: Vec<usize>,
    },
}

/// Mean binary cross-entropy over every pixel of every map in the batch,
/// with the gradient with respect to each probability.
///
/// The loss accumulates in `f64` regardless of the working scalar; the
/// gradient divides by the pixel count so it matches the mean.
///
/// # Errors
///
/// [`LossError::ShapeMismatch`] when the two arrays differ in shape.
pub fn pixel_bce<S: Scalar>(
    probs: &Array3<S>,
    targets: &Array3<S>,
) -> Result<(f64, Array3<S>), LossError> {
    if probs.dim() != targets.dim() {
        return Err(LossError::ShapeMismatch {
            probs: probs.shape().to_vec(),
            targets: targets.shape().to_vec(),
        });
    }
    let n = probs.len() as f64;
    let mut total = 0.0f64;
    let mut d = Array3::<S>::zeros(probs.raw_dim());
    for ((&p, &g), dv) in probs.iter().zip(targets.iter()).zip(d.iter_mut()) {
        let p = p.to_f64().unwrap().clamp(BCE_EPS, 1.0 - BCE_EPS);
        let g = g.to_f64().unwrap();
        total -= g * p.ln() + (1.0 - g) * (1.0 - p).ln();
        *dv = S::from((p - g) / (p * (1.0 - p)) / n).unwrap();
    }
    Ok((total / n, d))
}

/// Stacks binary masks into a `(B, H, W)` array of 0/1 targets.
pub fn targets_from_masks<S: Scalar>(masks: &[&BitMask]) -> Array3<S> {
    let (h, w) = (masks[0].h, masks[0].w);
    let mut t = Array3::zeros((masks.len(), h, w));
    for (bi, m) in masks.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if m.get(y, x) {
                    t[[bi, y, x]] = S::one();
                }
            }
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    #[test]
    fn perfect_prediction_scores_almost_zero() {
        let mut rng = rng_for(7, "bce-test", 0);
        let mut t = Array3::<f64>::zeros((2, 4, 4));
        for v in t.iter_mut() {
            *v = (rng.gen_range(0.0..1.0) < 0.5) as u8 as f64;
        }
        let (loss, _) = pixel_bce(&t.clone(), &t).unwrap();
        assert!(loss >= 0.0 && loss <= 1e-6, "loss = {loss}");
    }

    #[test]
    fn coin_flip_prediction_scores_ln_two() {
        let probs = Array3::<f64>::from_elem((1, 8, 8), 0.5);
        let mut targets = Array3::<f64>::zeros((1, 8, 8));
        for (i, v) in targets.iter_mut().enumerate() {
            *v = (i % 3 == 0) as u8 as f64;
        }
        let (loss, _) = pixel_bce(&probs, &targets).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
    }

    #[test]
    fn matches_a_double_loop_oracle() {
        let mut rng = rng_for(7, "bce-test", 1);
        let mut probs = Array3::<f64>::zeros((3, 8, 8));
        let mut targets = Array3::<f64>::zeros((3, 8, 8));
        for v in probs.iter_mut() {
            *v = rng.gen_range(0.001..0.999);
        }
        for v in targets.iter_mut() {
            *v = (rng.gen_range(0.0..1.0) < 0.4) as u8 as f64;
        }

        let mut expect = 0.0;
        for b in 0..3 {
            for y in 0..8 {
                for x in 0..8 {
                    let p = probs[[b, y, x]];
                    let g = targets[[b, y, x]];
                    expect += -(g * p.ln() + (1.0 - g) * (1.0 - p).ln());
                }
            }
        }
        expect /= (3 * 8 * 8) as f64;

        let (loss, _) = pixel_bce(&probs, &targets).unwrap();
        assert!((loss - expect).abs() < 1e-10);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = rng_for(7, "bce-test", 2);
        let mut probs = Array3::<f64>::zeros((1, 4, 4));
        let mut targets = Array3::<f64>::zeros((1, 4, 4));
        for v in probs.iter_mut() {
            *v = rng.gen_range(0.05..0.95);
        }
        for v in targets.iter_mut() {
            *v = (rng.gen_range(0.0..1.0) < 0.5) as u8 as f64;
        }
        let (_, grad) = pixel_bce(&probs, &targets).unwrap();

        let h = 1e-6;
        for y in 0..4 {
            for x in 0..4 {
                let mut plus = probs.clone();
                plus[[0, y, x]] += h;
                let mut minus = probs.clone();
                minus[[0, y, x]] -= h;
                let fd = (pixel_bce(&plus, &targets).unwrap().0
                    - pixel_bce(&minus, &targets).unwrap().0)
                    / (2.0 * h);
                let a = grad[[0, y, x]];
                let rel = (a - fd).abs() / fd.abs().max(1e-12);
                assert!(rel < 1e-3, "({y},{x}): analytic {a} vs fd {fd}");
            }
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let a = Array3::<f64>::zeros((1, 4, 4));
        let b = Array3::<f64>::zeros((1, 4, 5));
        assert!(matches!(
            pixel_bce(&a, &b),
            Err(LossError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn mask_stacking_preserves_pixel_positions() {
        let mut m = BitMask::zeros(3, 4);
        m.set(1, 2, true);
        m.set(0, 0, true);
        let t: Array3<f64> = targets_from_masks(&[&m, &m]);
        assert_eq!(t.dim(), (2, 3, 4));
        assert_eq!(t[[0, 1, 2]], 1.0);
        assert_eq!(t[[1, 0, 0]], 1.0);
        assert_eq!(t[[0, 2, 3]], 0.0);
        assert_eq!(t.sum(), 4.0);
    }
}
