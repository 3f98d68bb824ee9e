//! Multi-head self-attention over stacked batches, with an optional
//! key-padding mask.

use ndarray::{s, Array2, Array3, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use super::act::{softmax_rows, softmax_rows_backward};
use super::linear::Linear;
use super::{qualify, ParamWalk};
use crate::scalar::{sc, Scalar};

#[derive(Clone, Debug)]
pub struct MultiHeadAttention<S: Scalar> {
    pub wq: Linear<S>,
    pub wk: Linear<S>,
    pub wv: Linear<S>,
    pub wo: Linear<S>,
    pub n_heads: usize,
}

/// Intermediate activations kept for the backward pass.
pub struct AttnCache<S: Scalar> {
    q: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    /// Post-softmax attention, one `(T, T)` slab per `(sample, head)`.
    attn: Array3<S>,
    /// Concatenated per-head context, before the output projection.
    ctx: Array2<S>,
}

impl<S: Scalar> MultiHeadAttention<S> {
    pub fn new(rng: &mut ChaCha12Rng, d_model: usize, n_heads: usize) -> Self {
        assert!(
            d_model % n_heads == 0,
            "d_model {d_model} must divide evenly into {n_heads} heads"
        );
        MultiHeadAttention {
            wq: Linear::new(rng, d_model, d_model),
            wk: Linear::new(rng, d_model, d_model),
            wv: Linear::new(rng, d_model, d_model),
            wo: Linear::new(rng, d_model, d_model),
            n_heads,
        }
    }

    /// Self-attention over `x: (B*T, C)`.
    ///
    /// `key_valid` (shape `(B, T)`, nonzero = real token) masks *keys* only:
    /// no query, padded or not, can attend to a padded position, so the
    /// outputs at real positions are independent of how much padding
    /// follows. Rows for padded queries still produce values, but every
    /// consumer discards them.
    pub fn forward(
        &self,
        x: &Array2<S>,
        b: usize,
        t: usize,
        key_valid: Option<&Array2<u8>>,
    ) -> (Array2<S>, AttnCache<S>) {
        let c = x.ncols();
        let h = self.n_heads;
        let dh = c / h;
        let scale: S = sc(1.0 / (dh as f64).sqrt());

        let q = self.wq.forward(x);
        let k = self.wk.forward(x);
        let v = self.wv.forward(x);

        let mut attn = Array3::zeros((b * h, t, t));
        let mut ctx = Array2::zeros((b * t, c));
        for bi in 0..b {
            let rows = s![bi * t..(bi + 1) * t, ..];
            for hi in 0..h {
                let cols = s![.., hi * dh..(hi + 1) * dh];
                let qh = q.slice(rows).slice_move(cols);
                let kh = k.slice(rows).slice_move(cols);
                let vh = v.slice(rows).slice_move(cols);

                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                if let Some(valid) = key_valid {
                    for j in 0..t {
                        if valid[[bi, j]] == 0 {
                            scores.column_mut(j).fill(S::neg_infinity());
                        }
                    }
                }
                let a = softmax_rows(&scores);
                ctx.slice_mut(rows)
                    .slice_move(cols)
                    .assign(&a.dot(&vh));
                attn.slice_mut(s![bi * h + hi, .., ..]).assign(&a);
            }
        }
        let y = self.wo.forward(&ctx);
        (y, AttnCache { q, k, v, attn, ctx })
    }

    /// Backward pass; accumulates projection gradients and returns `dx`.
    pub fn backward(
        &mut self,
        x: &Array2<S>,
        cache: &AttnCache<S>,
        dy: &Array2<S>,
        b: usize,
        t: usize,
    ) -> Array2<S> {
        let c = x.ncols();
        let h = self.n_heads;
        let dh = c / h;
        let scale: S = sc(1.0 / (dh as f64).sqrt());

        let dctx = self.wo.backward(&cache.ctx, dy);
        let mut dq = Array2::zeros((b * t, c));
        let mut dk = Array2::zeros((b * t, c));
        let mut dv = Array2::zeros((b * t, c));

        for bi in 0..b {
            let rows = s![bi * t..(bi + 1) * t, ..];
            for hi in 0..h {
                let cols = s![.., hi * dh..(hi + 1) * dh];
                let qh = cache.q.slice(rows).slice_move(cols);
                let kh = cache.k.slice(rows).slice_move(cols);
                let vh = cache.v.slice(rows).slice_move(cols);
                let a = cache.attn.slice(s![bi * h + hi, .., ..]);
                let dctxh = dctx.slice(rows).slice_move(cols);

                // ctx_h = A·V_h
                let da = dctxh.dot(&vh.t());
                dv.slice_mut(rows)
                    .slice_move(cols)
                    .assign(&a.t().dot(&dctxh));

                // Masked keys have a == 0 across their column, so the
                // softmax backward already sends zero gradient their way.
                let mut dscores = softmax_rows_backward(&a.to_owned(), &da);
                dscores *= scale;
                dq.slice_mut(rows)
                    .slice_move(cols)
                    .assign(&dscores.dot(&kh));
                dk.slice_mut(rows)
                    .slice_move(cols)
                    .assign(&dscores.t().dot(&qh));
            }
        }

        let mut dx = self.wq.backward(x, &dq);
        dx += &self.wk.backward(x, &dk);
        dx += &self.wv.backward(x, &dv);
        dx
    }
}

impl<S: Scalar> ParamWalk<S> for MultiHeadAttention<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.wq.walk(&qualify(prefix, "wq"), f);
        self.wk.walk(&qualify(prefix, "wk"), f);
        self.wv.walk(&qualify(prefix, "wv"), f);
        self.wo.walk(&qualify(prefix, "wo"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.wq.walk_mut(&qualify(prefix, "wq"), f);
        self.wk.walk_mut(&qualify(prefix, "wk"), f);
        self.wv.walk_mut(&qualify(prefix, "wv"), f);
        self.wo.walk_mut(&qualify(prefix, "wo"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.wq.walk_pairs(&qualify(prefix, "wq"), f);
        self.wk.walk_pairs(&qualify(prefix, "wk"), f);
        self.wv.walk_pairs(&qualify(prefix, "wv"), f);
        self.wo.walk_pairs(&qualify(prefix, "wo"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use ndarray::Array2;
    use rand::Rng;

    fn random_x(rng: &mut ChaCha12Rng, n: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((n, c), || rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn output_at_valid_positions_ignores_padded_keys() {
        let mut rng = rng_for(3, "attn-test", 0);
        let attn: MultiHeadAttention<f64> = MultiHeadAttention::new(&mut rng, 8, 2);
        let t = 5;
        let real = 3; // tokens 0..3 are real, 3..5 padding

        let mut x = random_x(&mut rng, t, 8);
        let valid =
            Array2::from_shape_fn((1, t), |(_, j)| if j < real { 1u8 } else { 0u8 });
        let (y1, _) = attn.forward(&x, 1, t, Some(&valid));

        // Scribble over the padded rows; the real rows must not move.
        for j in real..t {
            for c in 0..8 {
                x[[j, c]] += 7.0 + c as f64;
            }
        }
        let (y2, _) = attn.forward(&x, 1, t, Some(&valid));
        for i in 0..real {
            for c in 0..8 {
                assert_eq!(y1[[i, c]], y2[[i, c]]);
            }
        }
    }

    #[test]
    fn batched_forward_equals_per_sample_forward() {
        let mut rng = rng_for(3, "attn-test", 1);
        let attn: MultiHeadAttention<f64> = MultiHeadAttention::new(&mut rng, 8, 2);
        let t = 4;
        let x0 = random_x(&mut rng, t, 8);
        let x1 = random_x(&mut rng, t, 8);
        let mut stacked = Array2::zeros((2 * t, 8));
        stacked.slice_mut(s![..t, ..]).assign(&x0);
        stacked.slice_mut(s![t.., ..]).assign(&x1);

        let (yb, _) = attn.forward(&stacked, 2, t, None);
        let (y0, _) = attn.forward(&x0, 1, t, None);
        let (y1, _) = attn.forward(&x1, 1, t, None);
        for i in 0..t {
            for c in 0..8 {
                assert!((yb[[i, c]] - y0[[i, c]]).abs() < 1e-12);
                assert!((yb[[t + i, c]] - y1[[i, c]]).abs() < 1e-12);
            }
        }
    }
}
