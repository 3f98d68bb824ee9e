//! The fusion stack: per-tap reduction, per-stage text conditioning, and
//! the inter-stage transformer blocks.
//!
//! Stage recurrence (one stage per tap, `D_0 = 0`, `T_0 = identity`):
//!
//! ```text
//! D_i = fuse(P'_i + T_{i−1}(D_{i−1}), q)        i = 1..K
//! ```
//!
//! where `P'_i` is the i-th consumed tap after its learned reduction and
//! `T_{i−1}` is a transformer block (so `K` taps use `K−1` blocks). `fuse`
//! is the configured variant: feature-wise modulation at every stage, at
//! the first stage only, or a gated cross-attention read of the single
//! text token.

use ndarray::{Array2, Array4, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use super::head::HeadCache;
use super::{Decoder, DecoderError, FusionVariant, TapOrder};
use crate::nn::{qualify, sigmoid, BlockCache, FilmCache, Linear, ParamWalk};
use crate::scalar::{sc, Scalar};

/// Text conditioning via a gated attention read. With a single text token
/// the softmax over keys is a constant, so a plain attention head would
/// inject the same vector into every query; the logistic gate on the
/// query·key score keeps the injection query-dependent:
/// `y = x + σ(W_q x · W_k q / √D) · W_o(W_v q)`.
#[derive(Clone, Debug)]
pub struct CrossAttnGate<S: Scalar> {
    pub wq: Linear<S>,
    pub wk: Linear<S>,
    pub wv: Linear<S>,
    pub wo: Linear<S>,
}

pub struct XattnCache<S: Scalar> {
    qx: Array2<S>,
    k: Array2<S>,
    v: Array2<S>,
    ov: Array2<S>,
    gate: Vec<S>,
}

impl<S: Scalar> CrossAttnGate<S> {
    pub fn new(rng: &mut ChaCha12Rng, d: usize, d_cond: usize) -> Self {
        CrossAttnGate {
            wq: Linear::new(rng, d, d),
            wk: Linear::new(rng, d_cond, d),
            wv: Linear::new(rng, d_cond, d),
            wo: Linear::new(rng, d, d),
        }
    }

    /// `x: (B*T, D)` tokens, `q: (B, d_cond)`.
    pub fn forward(
        &self,
        x: &Array2<S>,
        q: &Array2<S>,
        b: usize,
        t: usize,
    ) -> (Array2<S>, XattnCache<S>) {
        let d = x.ncols();
        let scale = sc::<S>(1.0 / (d as f64).sqrt());
        let qx = self.wq.forward(x);
        let k = self.wk.forward(q);
        let v = self.wv.forward(q);
        let ov = self.wo.forward(&v);

        let mut y = x.clone();
        let mut gate = Vec::with_capacity(b * t);
        for bi in 0..b {
            let kb = k.row(bi);
            let ob = ov.row(bi);
            for ti in 0..t {
                let r = bi * t + ti;
                let mut s = S::zero();
                for j in 0..d {
                    s += qx[[r, j]] * kb[j];
                }
                let g = sigmoid(s * scale);
                gate.push(g);
                for j in 0..d {
                    y[[r, j]] += g * ob[j];
                }
            }
        }
        (y, XattnCache { qx, k, v, ov, gate })
    }

    /// Returns `(dx, dq)`; accumulates parameter gradients.
    pub fn backward(
        &mut self,
        x: &Array2<S>,
        q: &Array2<S>,
        cache: &XattnCache<S>,
        dy: &Array2<S>,
        b: usize,
        t: usize,
    ) -> (Array2<S>, Array2<S>) {
        let d = x.ncols();
        let scale = sc::<S>(1.0 / (d as f64).sqrt());
        let mut d_qx = Array2::zeros((b * t, d));
        let mut d_k = Array2::zeros((b, d));
        let mut d_ov = Array2::zeros((b, d));

        for bi in 0..b {
            let kb = cache.k.row(bi);
            let ob = cache.ov.row(bi);
            for ti in 0..t {
                let r = bi * t + ti;
                let g = cache.gate[r];
                let mut dg = S::zero();
                for j in 0..d {
                    let grad = dy[[r, j]];
                    dg += grad * ob[j];
                    d_ov[[bi, j]] += g * grad;
                }
                let ds = dg * g * (S::one() - g) * scale;
                for j in 0..d {
                    d_qx[[r, j]] = ds * kb[j];
                    d_k[[bi, j]] += ds * cache.qx[[r, j]];
                }
            }
        }

        let mut dx = dy.clone();
        dx += &self.wq.backward(x, &d_qx);
        let d_v = self.wo.backward(&cache.v, &d_ov);
        let mut dq = self.wk.backward(q, &d_k);
        dq += &self.wv.backward(q, &d_v);
        (dx, dq)
    }
}

impl<S: Scalar> ParamWalk<S> for CrossAttnGate<S> {
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

struct StageCache<S: Scalar> {
    /// `P'_i`: the consumed tap after reduction.
    reduced: Array2<S>,
    /// `T_{i−1}(D_{i−1})`; all-zeros at stage 0 where `T_0 = id`, `D_0 = 0`.
    t_out: Array2<S>,
    block_cache: Option<BlockCache<S>>,
    /// `P'_i + T_{i−1}(D_{i−1})`, the fusion input.
    pre: Array2<S>,
    film_cache: Option<FilmCache<S>>,
    xattn_cache: Option<XattnCache<S>>,
    /// `D_i`.
    state: Array2<S>,
}

pub struct DecodeCache<S: Scalar> {
    pub b: usize,
    /// Taps in consumption order (clones of the caller's arrays).
    taps_used: Vec<Array2<S>>,
    q: Array2<S>,
    stages: Vec<StageCache<S>>,
    head: HeadCache<S>,
}

/// One stage of the recurrence, cloned out for instrumentation.
#[derive(Clone, Debug)]
pub struct StageTrace<S: Scalar> {
    pub reduced: Array2<S>,
    pub t_out: Array2<S>,
    pub pre: Array2<S>,
    pub state: Array2<S>,
}

impl<S: Scalar> Decoder<S> {
    /// Stage index → index into the caller's tap list.
    fn consume_order(&self) -> Vec<usize> {
        let k = self.config.taps.len();
        match self.config.tap_order {
            TapOrder::Ascending => (0..k).collect(),
            TapOrder::Descending => (0..k).rev().collect(),
        }
    }

    fn check_inputs(
        &self,
        taps: &[Array2<S>],
        q: &Array2<S>,
        b: usize,
    ) -> Result<(), DecoderError> {
        let k = self.config.taps.len();
        if taps.len() != k {
            return Err(DecoderError::ProjectionMismatch {
                expected: k,
                got: taps.len(),
            });
        }
        let p = self.config.n_tokens();
        for (i, tap) in taps.iter().enumerate() {
            if tap.dim() != (b * p, self.config.d_model_v) {
                return Err(DecoderError::BadShape(format!(
                    "tap {i} is {:?}, expected ({}, {})",
                    tap.dim(),
                    b * p,
                    self.config.d_model_v
                )));
            }
        }
        if q.dim() != (b, self.config.d_embed) {
            return Err(DecoderError::BadShape(format!(
                "query embedding is {:?}, expected ({b}, {})",
                q.dim(),
                self.config.d_embed
            )));
        }
        Ok(())
    }

    /// Runs the fusion stack and mask head. `taps` are the encoder's
    /// intermediate projections in tap order, each `(B·P, d_model_v)`;
    /// `q` is `(B, d_embed)`. Returns per-pixel logits `(B, 2, H, W)`.
    pub fn forward(
        &self,
        taps: &[Array2<S>],
        q: &Array2<S>,
        b: usize,
    ) -> Result<(Array4<S>, DecodeCache<S>), DecoderError> {
        self.check_inputs(taps, q, b)?;
        let p = self.config.n_tokens();
        let order = self.consume_order();

        let mut stages: Vec<StageCache<S>> = Vec::with_capacity(order.len());
        let mut taps_used = Vec::with_capacity(order.len());
        let mut state: Array2<S> = Array2::zeros((b * p, self.config.d));

        for (i, &src) in order.iter().enumerate() {
            let tap = &taps[src];
            let reduced = self.reduces[i].forward(tap);
            let (t_out, block_cache) = if i == 0 {
                (Array2::zeros((b * p, self.config.d)), None)
            } else {
                let (out, c) = self.blocks[i - 1].forward(&state, b, p, None);
                (out, Some(c))
            };
            let pre = &reduced + &t_out;

            let (next, film_cache, xattn_cache) = match self.config.variant {
                FusionVariant::HierarchicalFilm => {
                    let (y, c) = self.films[i].forward(&pre, q, b, p);
                    (y, Some(c), None)
                }
                FusionVariant::SingleFilm if i == 0 => {
                    let (y, c) = self.films[0].forward(&pre, q, b, p);
                    (y, Some(c), None)
                }
                FusionVariant::SingleFilm => (pre.clone(), None, None),
                FusionVariant::CrossAttention => {
                    let (y, c) = self.xattns[i].forward(&pre, q, b, p);
                    (y, None, Some(c))
                }
            };

            taps_used.push(tap.clone());
            stages.push(StageCache {
                reduced,
                t_out,
                block_cache,
                pre,
                film_cache,
                xattn_cache,
                state: next.clone(),
            });
            state = next;
        }

        let (logits, head) = self.head.forward(&state, b, self.config.grid());
        Ok((
            logits,
            DecodeCache {
                b,
                taps_used,
                q: q.clone(),
                stages,
                head,
            },
        ))
    }

    /// Backward from per-pixel logit gradients. Accumulates parameter
    /// gradients and returns `(d_taps, d_q)` with `d_taps` in the caller's
    /// original tap order (for finetuning through the encoder).
    pub fn backward(
        &mut self,
        cache: &DecodeCache<S>,
        d_logits: &Array4<S>,
    ) -> (Vec<Array2<S>>, Array2<S>) {
        let b = cache.b;
        let p = self.config.n_tokens();
        let k = self.config.taps.len();
        let order = self.consume_order();

        let mut d_state = self.head.backward(&cache.head, d_logits);
        let mut d_taps: Vec<Array2<S>> =
            vec![Array2::zeros((b * p, self.config.d_model_v)); k];
        let mut d_q = Array2::zeros((b, self.config.d_embed));

        for i in (0..order.len()).rev() {
            let stage = &cache.stages[i];
            let d_pre = match self.config.variant {
                FusionVariant::HierarchicalFilm => {
                    let fc = stage.film_cache.as_ref().unwrap();
                    let (dx, dq) =
                        self.films[i].backward(&stage.pre, &cache.q, fc, &d_state, b, p);
                    d_q += &dq;
                    dx
                }
                FusionVariant::SingleFilm if i == 0 => {
                    let fc = stage.film_cache.as_ref().unwrap();
                    let (dx, dq) =
                        self.films[0].backward(&stage.pre, &cache.q, fc, &d_state, b, p);
                    d_q += &dq;
                    dx
                }
                FusionVariant::SingleFilm => d_state.clone(),
                FusionVariant::CrossAttention => {
                    let xc = stage.xattn_cache.as_ref().unwrap();
                    let (dx, dq) =
                        self.xattns[i].backward(&stage.pre, &cache.q, xc, &d_state, b, p);
                    d_q += &dq;
                    dx
                }
            };

            // pre = reduced + t_out: the gradient splits unchanged.
            d_taps[order[i]] = self.reduces[i].backward(&cache.taps_used[i], &d_pre);
            if i > 0 {
                let bc = stage.block_cache.as_ref().unwrap();
                d_state = self.blocks[i - 1].backward(bc, &d_pre, b, p);
            }
        }

        (d_taps, d_q)
    }

    /// Clones the intermediate stage values out of a forward cache, for
    /// verifying the recurrence term by term.
    pub fn trace(&self, cache: &DecodeCache<S>) -> Vec<StageTrace<S>> {
        cache
            .stages
            .iter()
            .map(|s| StageTrace {
                reduced: s.reduced.clone(),
                t_out: s.t_out.clone(),
                pre: s.pre.clone(),
                state: s.state.clone(),
            })
            .collect()
    }
}
