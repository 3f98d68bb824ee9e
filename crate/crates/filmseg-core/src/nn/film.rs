//! Feature-wise linear modulation conditioned on a query embedding.
//!
//! Two small affine nets map the conditioning vector `q` to per-channel
//! scale `α(q)` and shift `β(q)`; tokens are transformed as `α ∘ x + β`
//! with one `(α, β)` pair per sample, broadcast over its tokens. Both nets
//! initialize to constants (`α ≡ 1`, `β ≡ 0`), so an untrained layer is an
//! exact identity and conditioning grows in only as training moves the
//! weights.

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};

use super::linear::Linear;
use super::{qualify, ParamWalk};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Film<S: Scalar> {
    pub alpha: Linear<S>,
    pub beta: Linear<S>,
}

pub struct FilmCache<S: Scalar> {
    /// `(B, D)` scale per sample.
    pub alpha_out: Array2<S>,
    /// `(B, D)` shift per sample.
    pub beta_out: Array2<S>,
}

impl<S: Scalar> Film<S> {
    /// Identity-initialized modulation from `d_cond` to channel width `d`.
    pub fn identity(d_cond: usize, d: usize) -> Self {
        Film {
            alpha: Linear::zero_with_bias(d_cond, d, S::one()),
            beta: Linear::zero_with_bias(d_cond, d, S::zero()),
        }
    }

    /// `x: (B*T, D)` tokens, `q: (B, d_cond)` conditioning vectors.
    pub fn forward(&self, x: &Array2<S>, q: &Array2<S>, b: usize, t: usize) -> (Array2<S>, FilmCache<S>) {
        let alpha_out = self.alpha.forward(q);
        let beta_out = self.beta.forward(q);
        let mut y = Array2::zeros(x.raw_dim());
        for bi in 0..b {
            let a = alpha_out.row(bi);
            let be = beta_out.row(bi);
            for ti in 0..t {
                let r = bi * t + ti;
                for j in 0..x.ncols() {
                    y[[r, j]] = a[j] * x[[r, j]] + be[j];
                }
            }
        }
        (y, FilmCache { alpha_out, beta_out })
    }

    /// Returns `(dx, dq)`; accumulates gradients in the two affine nets.
    pub fn backward(
        &mut self,
        x: &Array2<S>,
        q: &Array2<S>,
        cache: &FilmCache<S>,
        dy: &Array2<S>,
        b: usize,
        t: usize,
    ) -> (Array2<S>, Array2<S>) {
        let d = x.ncols();
        let mut dx = Array2::zeros(x.raw_dim());
        let mut d_alpha = Array2::zeros((b, d));
        let mut d_beta = Array2::zeros((b, d));
        for bi in 0..b {
            let a = cache.alpha_out.row(bi);
            for ti in 0..t {
                let r = bi * t + ti;
                for j in 0..d {
                    let g = dy[[r, j]];
                    dx[[r, j]] = g * a[j];
                    d_alpha[[bi, j]] += g * x[[r, j]];
                    d_beta[[bi, j]] += g;
                }
            }
        }
        let mut dq = self.alpha.backward(q, &d_alpha);
        dq += &self.beta.backward(q, &d_beta);
        (dx, dq)
    }
}

impl<S: Scalar> ParamWalk<S> for Film<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.alpha.walk(&qualify(prefix, "alpha"), f);
        self.beta.walk(&qualify(prefix, "beta"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.alpha.walk_mut(&qualify(prefix, "alpha"), f);
        self.beta.walk_mut(&qualify(prefix, "beta"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.alpha.walk_pairs(&qualify(prefix, "alpha"), f);
        self.beta.walk_pairs(&qualify(prefix, "beta"), f);
    }
}
