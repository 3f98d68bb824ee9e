//! Pre-norm transformer block: attention and MLP sublayers on a residual
//! stream.

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use super::act::{gelu, gelu_backward};
use super::attention::{AttnCache, MultiHeadAttention};
use super::linear::Linear;
use super::norm::{LayerNorm, LnCache};
use super::{qualify, ParamWalk};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct TransformerBlock<S: Scalar> {
    pub ln1: LayerNorm<S>,
    pub attn: MultiHeadAttention<S>,
    pub ln2: LayerNorm<S>,
    pub fc1: Linear<S>,
    pub fc2: Linear<S>,
}

pub struct BlockCache<S: Scalar> {
    ln1_out: Array2<S>,
    ln1_cache: LnCache<S>,
    attn_cache: AttnCache<S>,
    ln2_out: Array2<S>,
    ln2_cache: LnCache<S>,
    fc1_out: Array2<S>,
    gelu_out: Array2<S>,
}

impl<S: Scalar> TransformerBlock<S> {
    pub fn new(rng: &mut ChaCha12Rng, d_model: usize, n_heads: usize, d_mlp: usize) -> Self {
        TransformerBlock {
            ln1: LayerNorm::new(d_model),
            attn: MultiHeadAttention::new(rng, d_model, n_heads),
            ln2: LayerNorm::new(d_model),
            fc1: Linear::new(rng, d_model, d_mlp),
            fc2: Linear::new(rng, d_mlp, d_model),
        }
    }

    /// `h = x + attn(ln1(x))`, `y = h + fc2(gelu(fc1(ln2(h))))`.
    pub fn forward(
        &self,
        x: &Array2<S>,
        b: usize,
        t: usize,
        key_valid: Option<&Array2<u8>>,
    ) -> (Array2<S>, BlockCache<S>) {
        let (ln1_out, ln1_cache) = self.ln1.forward(x);
        let (attn_out, attn_cache) = self.attn.forward(&ln1_out, b, t, key_valid);
        let h = x + &attn_out;

        let (ln2_out, ln2_cache) = self.ln2.forward(&h);
        let fc1_out = self.fc1.forward(&ln2_out);
        let gelu_out = gelu(&fc1_out);
        let mlp_out = self.fc2.forward(&gelu_out);
        let y = &h + &mlp_out;

        (
            y,
            BlockCache {
                ln1_out,
                ln1_cache,
                attn_cache,
                ln2_out,
                ln2_cache,
                fc1_out,
                gelu_out,
            },
        )
    }

    pub fn backward(
        &mut self,
        cache: &BlockCache<S>,
        dy: &Array2<S>,
        b: usize,
        t: usize,
    ) -> Array2<S> {
        // MLP sublayer.
        let d_gelu = self.fc2.backward(&cache.gelu_out, dy);
        let d_fc1 = gelu_backward(&cache.fc1_out, &d_gelu);
        let d_ln2_out = self.fc1.backward(&cache.ln2_out, &d_fc1);
        let mut dh = self.ln2.backward(&cache.ln2_cache, &d_ln2_out);
        dh += dy; // residual

        // Attention sublayer.
        let d_ln1_out = self
            .attn
            .backward(&cache.ln1_out, &cache.attn_cache, &dh, b, t);
        let mut dx = self.ln1.backward(&cache.ln1_cache, &d_ln1_out);
        dx += &dh; // residual
        dx
    }
}

impl<S: Scalar> ParamWalk<S> for TransformerBlock<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.ln1.walk(&qualify(prefix, "ln1"), f);
        self.attn.walk(&qualify(prefix, "attn"), f);
        self.ln2.walk(&qualify(prefix, "ln2"), f);
        self.fc1.walk(&qualify(prefix, "fc1"), f);
        self.fc2.walk(&qualify(prefix, "fc2"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.ln1.walk_mut(&qualify(prefix, "ln1"), f);
        self.attn.walk_mut(&qualify(prefix, "attn"), f);
        self.ln2.walk_mut(&qualify(prefix, "ln2"), f);
        self.fc1.walk_mut(&qualify(prefix, "fc1"), f);
        self.fc2.walk_mut(&qualify(prefix, "fc2"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.ln1.walk_pairs(&qualify(prefix, "ln1"), f);
        self.attn.walk_pairs(&qualify(prefix, "attn"), f);
        self.ln2.walk_pairs(&qualify(prefix, "ln2"), f);
        self.fc1.walk_pairs(&qualify(prefix, "fc1"), f);
        self.fc2.walk_pairs(&qualify(prefix, "fc2"), f);
    }
}
