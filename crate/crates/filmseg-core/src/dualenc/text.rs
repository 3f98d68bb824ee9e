//! Text transformer with padding-aware attention and a pooled, unit-norm
//! sentence embedding.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::tokenizer::Encoded;
use crate::nn::{
    init, l2_normalize_rows, l2_normalize_rows_backward, qualify, BlockCache, Embedding,
    LayerNorm, Linear, LnCache, ParamWalk, TransformerBlock,
};
use crate::scalar::{sc, Scalar};

/// How the per-token states collapse to one sentence vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextPool {
    /// The end-marker token's state.
    Eos,
    /// Mean over the real tokens and the end marker.
    Mean,
}

#[derive(Clone, Debug)]
pub struct TextTower<S: Scalar> {
    pub embed: Embedding<S>,
    pub pos: Array2<S>,
    pub g_pos: Array2<S>,
    pub blocks: Vec<TransformerBlock<S>>,
    pub ln_f: LayerNorm<S>,
    pub proj: Linear<S>,
    pub max_len: usize,
    pub d_model: usize,
    pub pool: TextPool,
}

/// Batch outputs: post-norm token states `(B·L, d)` and the pooled
/// unit-norm embedding `(B, d_e)`.
#[derive(Clone, Debug)]
pub struct TextEncoding<S: Scalar> {
    pub states: Array2<S>,
    pub pooled: Array2<S>,
}

pub struct TextCache<S: Scalar> {
    ids: Vec<u32>,
    eos_pos: Vec<usize>,
    block_caches: Vec<BlockCache<S>>,
    ln_f_cache: LnCache<S>,
    pooled_pre_proj: Array2<S>,
    pooled_unit: Array2<S>,
    pooled_norms: Array1<S>,
    b: usize,
}

impl<S: Scalar> TextTower<S> {
    pub fn new(
        rng: &mut ChaCha12Rng,
        vocab_size: usize,
        max_len: usize,
        d_model: usize,
        n_heads: usize,
        mlp_hidden: usize,
        n_blocks: usize,
        d_embed: usize,
        pool: TextPool,
    ) -> Self {
        TextTower {
            embed: Embedding::new(rng, vocab_size, d_model),
            pos: init::normal2(rng, (max_len, d_model), init::INIT_STD),
            g_pos: Array2::zeros((max_len, d_model)),
            blocks: (0..n_blocks)
                .map(|_| TransformerBlock::new(rng, d_model, n_heads, mlp_hidden))
                .collect(),
            ln_f: LayerNorm::new(d_model),
            proj: Linear::new(rng, d_model, d_embed),
            max_len,
            d_model,
            pool,
        }
    }

    /// Keys at or before each sample's end marker are attendable; padding
    /// never is.
    fn key_mask(&self, batch: &[Encoded]) -> Array2<u8> {
        let mut m = Array2::zeros((batch.len(), self.max_len));
        for (i, e) in batch.iter().enumerate() {
            for j in 0..=e.eos_pos {
                m[[i, j]] = 1;
            }
        }
        m
    }

    pub fn forward(&self, batch: &[Encoded]) -> (TextEncoding<S>, TextCache<S>) {
        let b = batch.len();
        let l = self.max_len;
        let d = self.d_model;
        let mut ids = Vec::with_capacity(b * l);
        for e in batch {
            assert_eq!(e.ids.len(), l, "encoded length must match the tower");
            ids.extend_from_slice(&e.ids);
        }
        let key_valid = self.key_mask(batch);

        let mut x = self.embed.forward(&ids);
        for i in 0..b {
            for j in 0..l {
                let mut row = x.row_mut(i * l + j);
                row += &self.pos.row(j);
            }
        }

        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&x, b, l, Some(&key_valid));
            block_caches.push(cache);
            x = y;
        }

        let (states, ln_f_cache) = self.ln_f.forward(&x);

        let mut pooled_pre_proj = Array2::zeros((b, d));
        for (i, e) in batch.iter().enumerate() {
            match self.pool {
                TextPool::Eos => {
                    pooled_pre_proj
                        .row_mut(i)
                        .assign(&states.row(i * l + e.eos_pos));
                }
                TextPool::Mean => {
                    let n = sc::<S>((e.eos_pos + 1) as f64);
                    for j in 0..=e.eos_pos {
                        pooled_pre_proj
                            .row_mut(i)
                            .scaled_add(S::one() / n, &states.row(i * l + j));
                    }
                }
            }
        }
        let projected = self.proj.forward(&pooled_pre_proj);
        let (pooled_unit, pooled_norms) = l2_normalize_rows(&projected);

        (
            TextEncoding {
                states,
                pooled: pooled_unit.clone(),
            },
            TextCache {
                ids,
                eos_pos: batch.iter().map(|e| e.eos_pos).collect(),
                block_caches,
                ln_f_cache,
                pooled_pre_proj,
                pooled_unit,
                pooled_norms,
                b,
            },
        )
    }

    /// Accumulates gradients from the pooled embedding and/or the raw token
    /// states (the latter feeds masked-word training heads).
    pub fn backward(
        &mut self,
        cache: &TextCache<S>,
        d_pooled: Option<&Array2<S>>,
        d_states: Option<&Array2<S>>,
    ) {
        let b = cache.b;
        let l = self.max_len;
        let d = self.d_model;

        let mut d_ln_out = match d_states {
            Some(ds) => ds.clone(),
            None => Array2::zeros((b * l, d)),
        };
        if let Some(dp) = d_pooled {
            let d_proj_out =
                l2_normalize_rows_backward(&cache.pooled_unit, &cache.pooled_norms, dp);
            let d_pre = self.proj.backward(&cache.pooled_pre_proj, &d_proj_out);
            for i in 0..b {
                match self.pool {
                    TextPool::Eos => {
                        let mut row = d_ln_out.row_mut(i * l + cache.eos_pos[i]);
                        row += &d_pre.row(i);
                    }
                    TextPool::Mean => {
                        let n = sc::<S>((cache.eos_pos[i] + 1) as f64);
                        for j in 0..=cache.eos_pos[i] {
                            d_ln_out
                                .row_mut(i * l + j)
                                .scaled_add(S::one() / n, &d_pre.row(i));
                        }
                    }
                }
            }
        }

        let mut d_rows = self.ln_f.backward(&cache.ln_f_cache, &d_ln_out);
        for k in (0..self.blocks.len()).rev() {
            d_rows = self.blocks[k].backward(&cache.block_caches[k], &d_rows, b, l);
        }

        for i in 0..b {
            for j in 0..l {
                self.g_pos
                    .row_mut(j)
                    .scaled_add(S::one(), &d_rows.row(i * l + j));
            }
        }
        self.embed.backward(&cache.ids, &d_rows);
    }
}

impl<S: Scalar> ParamWalk<S> for TextTower<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.embed.walk(&qualify(prefix, "embed"), f);
        f(&qualify(prefix, "pos"), self.pos.view().into_dyn());
        for (i, blk) in self.blocks.iter().enumerate() {
            blk.walk(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk(&qualify(prefix, "ln_f"), f);
        self.proj.walk(&qualify(prefix, "proj"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.embed.walk_mut(&qualify(prefix, "embed"), f);
        f(&qualify(prefix, "pos"), self.pos.view_mut().into_dyn());
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.walk_mut(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk_mut(&qualify(prefix, "ln_f"), f);
        self.proj.walk_mut(&qualify(prefix, "proj"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.embed.walk_pairs(&qualify(prefix, "embed"), f);
        f(
            &qualify(prefix, "pos"),
            self.pos.view_mut().into_dyn(),
            self.g_pos.view_mut().into_dyn(),
        );
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.walk_pairs(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk_pairs(&qualify(prefix, "ln_f"), f);
        self.proj.walk_pairs(&qualify(prefix, "proj"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::super::tokenizer::Vocabulary;
    use super::*;
    use crate::nn::gradcheck::{check_grads, FD_STEP};
    use crate::nn::{collect_grads, zero_grads};
    use crate::rng::{rng_for, stream};

    fn vocab() -> Vocabulary {
        Vocabulary::from_words(
            ["grab", "the", "red", "blue", "pen", "cup", "small"].map(String::from),
        )
    }

    fn tiny_tower(pool: TextPool) -> TextTower<f64> {
        let mut rng = rng_for(8, stream::ENCODER_INIT, 1);
        TextTower::new(&mut rng, vocab().size(), 10, 6, 2, 12, 2, 5, pool)
    }

    #[test]
    fn masked_padding_content_never_reaches_the_embedding() {
        for pool in [TextPool::Eos, TextPool::Mean] {
            let tower = tiny_tower(pool);
            let v = vocab();
            let clean = v.encode("grab the red pen", 10);
            // Same sentence, but the padding slots hold arbitrary token ids.
            // They are masked as keys and never pooled, so nothing changes.
            let mut garbled = clean.clone();
            for j in clean.eos_pos + 1..10 {
                garbled.ids[j] = v.id_of("cup").unwrap();
            }
            let (a, _) = tower.forward(std::slice::from_ref(&clean));
            let (b, _) = tower.forward(std::slice::from_ref(&garbled));
            for j in 0..5 {
                assert!(
                    (a.pooled[[0, j]] - b.pooled[[0, j]]).abs() < 1e-12,
                    "{pool:?} pooled[{j}] leaks padding content"
                );
            }
        }
    }

    #[test]
    fn batched_forward_matches_single_runs() {
        let tower = tiny_tower(TextPool::Eos);
        let v = vocab();
        let batch = [
            v.encode("grab the red pen", 10),
            v.encode("the small blue cup", 10),
            v.encode("cup", 10),
        ];
        let (full, _) = tower.forward(&batch);
        for (i, e) in batch.iter().enumerate() {
            let (one, _) = tower.forward(std::slice::from_ref(e));
            for j in 0..5 {
                assert!((full.pooled[[i, j]] - one.pooled[[0, j]]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pooled_and_state_gradients_pass_finite_differences() {
        for pool in [TextPool::Eos, TextPool::Mean] {
            let mut tower = tiny_tower(pool);
            let v = vocab();
            let batch = [
                v.encode("grab the red pen", 10),
                v.encode("small cup", 10),
            ];
            let wp = Array2::from_shape_fn((2, 5), |(i, j)| ((i * 5 + j) as f64 * 0.23).sin());
            let ws = Array2::from_shape_fn((20, 6), |(i, j)| ((i * 6 + j) as f64 * 0.07).cos());

            let mut loss = |tw: &mut TextTower<f64>| {
                let (enc, _) = tw.forward(&batch);
                (&enc.pooled * &wp).sum() + (&enc.states * &ws).sum() * 0.3
            };

            zero_grads(&mut tower);
            let (_, cache) = tower.forward(&batch);
            tower.backward(&cache, Some(&wp), Some(&ws.mapv(|v| v * 0.3)));
            let grads = collect_grads(&mut tower);
            let report = check_grads(&mut tower, &mut loss, &grads, FD_STEP, Some(6));
            assert!(
                report.max_rel_err < 1e-3,
                "{pool:?}: worst {} at {}",
                report.max_rel_err,
                report.worst
            );
        }
    }
}
