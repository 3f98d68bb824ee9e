//! Mask head: patch-grid tokens to a full-resolution two-class map.
//!
//! The final decoder state is reshaped onto the patch grid and upsampled by
//! two transposed convolutions (kernel = stride = √patch each, so two
//! stages exactly undo the patch-embedding downsample), ending in two
//! channels. Per-pixel class probabilities come from the two-channel
//! softmax, which for two classes reduces to `σ(z_fg − z_bg)` — this form
//! is used because it is exactly shift-invariant in the logits.

use ndarray::{Array2, Array3, Array4, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use crate::nn::{gelu, gelu_backward, qualify, sigmoid, ConvTranspose2d, ParamWalk};
use crate::raster::BitMask;
use crate::scalar::Scalar;

/// Background and foreground.
pub const HEAD_CHANNELS: usize = 2;

#[derive(Clone, Debug)]
pub struct MaskHead<S: Scalar> {
    pub tc1: ConvTranspose2d<S>,
    pub tc2: ConvTranspose2d<S>,
}

pub struct HeadCache<S: Scalar> {
    x4: Array4<S>,
    t1: Array4<S>,
    g1: Array4<S>,
}

fn gelu4<S: Scalar>(x: &Array4<S>) -> Array4<S> {
    let flat = ArrayView2::from_shape((1, x.len()), x.as_slice().unwrap())
        .unwrap()
        .to_owned();
    Array4::from_shape_vec(x.raw_dim(), gelu(&flat).into_raw_vec_and_offset().0).unwrap()
}

fn gelu4_backward<S: Scalar>(x: &Array4<S>, dy: &Array4<S>) -> Array4<S> {
    let xf = ArrayView2::from_shape((1, x.len()), x.as_slice().unwrap())
        .unwrap()
        .to_owned();
    let df = ArrayView2::from_shape((1, dy.len()), dy.as_slice().unwrap())
        .unwrap()
        .to_owned();
    Array4::from_shape_vec(
        x.raw_dim(),
        gelu_backward(&xf, &df).into_raw_vec_and_offset().0,
    )
    .unwrap()
}

impl<S: Scalar> MaskHead<S> {
    /// `k` is the per-stage upsample factor; two stages reach `k²` (= patch).
    pub fn new(rng: &mut ChaCha12Rng, d: usize, mid: usize, k: usize) -> Self {
        MaskHead {
            tc1: ConvTranspose2d::new(rng, d, mid, k),
            tc2: ConvTranspose2d::new(rng, mid, HEAD_CHANNELS, k),
        }
    }

    /// `tokens: (B·grid², D)` in row-major grid order → logits
    /// `(B, 2, grid·k², grid·k²)`.
    pub fn forward(&self, tokens: &Array2<S>, b: usize, grid: usize) -> (Array4<S>, HeadCache<S>) {
        let d = tokens.ncols();
        let p = grid * grid;
        assert_eq!(tokens.nrows(), b * p, "token count off the patch grid");
        let mut x4 = Array4::zeros((b, d, grid, grid));
        for bi in 0..b {
            for gy in 0..grid {
                for gx in 0..grid {
                    let row = tokens.row(bi * p + gy * grid + gx);
                    for j in 0..d {
                        x4[[bi, j, gy, gx]] = row[j];
                    }
                }
            }
        }
        let t1 = self.tc1.forward(&x4);
        let g1 = gelu4(&t1);
        let logits = self.tc2.forward(&g1);
        (logits, HeadCache { x4, t1, g1 })
    }

    /// Returns the gradient w.r.t. the input tokens, `(B·grid², D)`.
    pub fn backward(&mut self, cache: &HeadCache<S>, d_logits: &Array4<S>) -> Array2<S> {
        let d_g1 = self.tc2.backward(&cache.g1, d_logits);
        let d_t1 = gelu4_backward(&cache.t1, &d_g1);
        let d_x4 = self.tc1.backward(&cache.x4, &d_t1);

        let (b, d, grid, _) = d_x4.dim();
        let p = grid * grid;
        let mut d_tokens = Array2::zeros((b * p, d));
        for bi in 0..b {
            for gy in 0..grid {
                for gx in 0..grid {
                    let mut row = d_tokens.row_mut(bi * p + gy * grid + gx);
                    for j in 0..d {
                        row[j] = d_x4[[bi, j, gy, gx]];
                    }
                }
            }
        }
        d_tokens
    }
}

impl<S: Scalar> ParamWalk<S> for MaskHead<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.tc1.walk(&qualify(prefix, "tc1"), f);
        self.tc2.walk(&qualify(prefix, "tc2"), f);
    }
    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.tc1.walk_mut(&qualify(prefix, "tc1"), f);
        self.tc2.walk_mut(&qualify(prefix, "tc2"), f);
    }
    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.tc1.walk_pairs(&qualify(prefix, "tc1"), f);
        self.tc2.walk_pairs(&qualify(prefix, "tc2"), f);
    }
}

/// Foreground probability per pixel: channel-softmax of the two logits,
/// computed as `σ(z₁ − z₀)`. `(B, 2, H, W)` → `(B, H, W)`.
pub fn foreground_probs<S: Scalar>(logits: &Array4<S>) -> Array3<S> {
    let (b, c, h, w) = logits.dim();
    assert_eq!(c, HEAD_CHANNELS, "mask head emits two channels");
    let mut p = Array3::zeros((b, h, w));
    for bi in 0..b {
        for i in 0..h {
            for j in 0..w {
                p[[bi, i, j]] = sigmoid(logits[[bi, 1, i, j]] - logits[[bi, 0, i, j]]);
            }
        }
    }
    p
}

/// Backward of [`foreground_probs`]: gradient w.r.t. the two-channel logits.
pub fn foreground_probs_backward<S: Scalar>(
    probs: &Array3<S>,
    d_probs: &Array3<S>,
) -> Array4<S> {
    let (b, h, w) = probs.dim();
    let mut d_logits = Array4::zeros((b, HEAD_CHANNELS, h, w));
    for bi in 0..b {
        for i in 0..h {
            for j in 0..w {
                let p = probs[[bi, i, j]];
                let dz = d_probs[[bi, i, j]] * p * (S::one() - p);
                d_logits[[bi, 1, i, j]] = dz;
                d_logits[[bi, 0, i, j]] = -dz;
            }
        }
    }
    d_logits
}

/// A per-pixel two-class prediction for one image.
#[derive(Clone, Debug)]
pub struct PredictionMask<S: Scalar> {
    /// Foreground probability per pixel, `(H, W)`, in `[0, 1]`.
    pub prob_map: Array2<S>,
    /// Hard mask: `prob_map > 0.5`.
    pub binary_mask: BitMask,
    /// Raw two-channel logits `(2, H, W)`, kept for training losses.
    pub logits: Array3<S>,
}

impl<S: Scalar> PredictionMask<S> {
    /// Builds the prediction for sample `bi` of a batched logit tensor.
    pub fn from_logits(logits: &Array4<S>, bi: usize) -> Self {
        let (_, _, h, w) = logits.dim();
        let probs = foreground_probs(logits);
        let mut prob_map = Array2::zeros((h, w));
        let mut binary = BitMask::zeros(h, w);
        let mut own = Array3::zeros((HEAD_CHANNELS, h, w));
        let half = S::one() / (S::one() + S::one());
        for i in 0..h {
            for j in 0..w {
                let p = probs[[bi, i, j]];
                prob_map[[i, j]] = p;
                binary.set(i, j, p > half);
                own[[0, i, j]] = logits[[bi, 0, i, j]];
                own[[1, i, j]] = logits[[bi, 1, i, j]];
            }
        }
        PredictionMask {
            prob_map,
            binary_mask: binary,
            logits: own,
        }
    }

    /// Wraps an already-hard mask as a prediction: probabilities 0/1 and a
    /// unit logit margin. Used where a mask source other than the decoder
    /// (an oracle, a detector candidate) must flow through mask-consuming
    /// code paths.
    pub fn from_binary(mask: &BitMask) -> Self {
        let (h, w) = (mask.h, mask.w);
        let mut prob_map = Array2::zeros((h, w));
        let mut logits = Array3::zeros((HEAD_CHANNELS, h, w));
        for i in 0..h {
            for j in 0..w {
                if mask.get(i, j) {
                    prob_map[[i, j]] = S::one();
                    logits[[1, i, j]] = S::one();
                } else {
                    logits[[0, i, j]] = S::one();
                }
            }
        }
        PredictionMask {
            prob_map,
            binary_mask: mask.clone(),
            logits,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    #[test]
    fn sixty_four_tokens_upsample_to_the_full_frame() {
        let mut rng = rng_for(9, "head", 0);
        let head: MaskHead<f32> = MaskHead::new(&mut rng, 8, 4, 4);
        let tokens = Array2::from_shape_simple_fn((64, 8), || rng.gen_range(-1.0..1.0));
        let (logits, _) = head.forward(&tokens, 1, 8);
        assert_eq!(logits.dim(), (1, 2, 128, 128));
    }

    #[test]
    fn probabilities_match_the_two_class_softmax_and_sum_to_one() {
        let mut rng = rng_for(9, "head", 1);
        let logits = Array4::from_shape_simple_fn((2, 2, 3, 3), || rng.gen_range(-6.0..6.0));
        let p: Array3<f64> = foreground_probs(&logits);
        for bi in 0..2 {
            for i in 0..3 {
                for j in 0..3 {
                    let z0: f64 = logits[[bi, 0, i, j]];
                    let z1 = logits[[bi, 1, i, j]];
                    let m = z0.max(z1);
                    let soft = (z1 - m).exp() / ((z0 - m).exp() + (z1 - m).exp());
                    assert!((p[[bi, i, j]] - soft).abs() < 1e-12);
                    let bg = 1.0 - p[[bi, i, j]];
                    assert!((p[[bi, i, j]] + bg - 1.0).abs() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn shifting_both_channels_leaves_probabilities_unchanged() {
        let mut rng = rng_for(9, "head", 2);
        let logits: Array4<f64> =
            Array4::from_shape_simple_fn((1, 2, 4, 4), || rng.gen_range(-3.0..3.0));
        let shifted = &logits + 17.25;
        let a = foreground_probs(&logits);
        let b = foreground_probs(&shifted);
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn probability_gradient_matches_finite_differences() {
        let mut rng = rng_for(9, "head", 3);
        let logits: Array4<f64> =
            Array4::from_shape_simple_fn((1, 2, 2, 2), || rng.gen_range(-2.0..2.0));
        let weights: Array3<f64> =
            Array3::from_shape_simple_fn((1, 2, 2), || rng.gen_range(-1.0..1.0));
        let probs = foreground_probs(&logits);
        let d_logits = foreground_probs_backward(&probs, &weights);

        let h = 1e-6;
        for c in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    let mut lp = logits.clone();
                    let mut lm = logits.clone();
                    lp[[0, c, i, j]] += h;
                    lm[[0, c, i, j]] -= h;
                    let f = |l: &Array4<f64>| {
                        (&foreground_probs(l) * &weights).sum()
                    };
                    let fd = (f(&lp) - f(&lm)) / (2.0 * h);
                    assert!(
                        (fd - d_logits[[0, c, i, j]]).abs() < 1e-8,
                        "channel {c} pixel ({i},{j}): fd {fd} vs {}",
                        d_logits[[0, c, i, j]]
                    );
                }
            }
        }
    }

    #[test]
    fn hard_mask_thresholds_strictly_above_one_half() {
        let mut logits: Array4<f64> = Array4::zeros((1, 2, 2, 2));
        logits[[0, 1, 0, 0]] = 4.0; // clearly foreground
        logits[[0, 1, 0, 1]] = -4.0; // clearly background
        // (1,0) and (1,1) sit exactly at p = 0.5 → not foreground.
        let m = PredictionMask::from_logits(&logits, 0);
        assert!(m.binary_mask.get(0, 0));
        assert!(!m.binary_mask.get(1, 0));
        assert!(!m.binary_mask.get(0, 1));
        assert!(!m.binary_mask.get(1, 1));
        assert_eq!(m.prob_map[[1, 0]], 0.5);
        assert_eq!(m.logits.dim(), (2, 2, 2));
    }
}
