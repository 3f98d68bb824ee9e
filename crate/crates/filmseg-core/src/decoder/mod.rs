//! Trainable segmentation decoder over a frozen dual encoder.
//!
//! The decoder consumes the encoder's intermediate visual projections (one
//! per configured tap) plus the pooled text embedding, fuses them stage by
//! stage ([`fuse`]), and upsamples the final state to a per-pixel two-class
//! map ([`head`]). Three fusion variants are provided for ablation:
//! feature-wise modulation at every stage (the default), modulation at the
//! first stage only, and gated cross-attention.
//!
//! Checkpoints bind the decoder to the exact encoder weights it was trained
//! against via the encoder's parameter fingerprint; loading refuses a
//! mismatched pairing.

pub mod fuse;
pub mod head;

use ndarray::Axis;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use fuse::{CrossAttnGate, DecodeCache, StageTrace, XattnCache};
pub use head::{
    foreground_probs, foreground_probs_backward, MaskHead, PredictionMask, HEAD_CHANNELS,
};

use crate::dualenc::{DualEncoder, EncoderConfig};
use crate::io::container::{self, Container, ContainerError};
use crate::nn::{self, qualify, Film, Linear, ParamWalk, TransformerBlock};
use crate::raster::RgbImage;
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;

use ndarray::{ArrayViewD, ArrayViewMutD};

/// Checkpoint container kind for decoder weights.
pub const DECODER_KIND: &str = "decoder";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionVariant {
    /// Modulation before every stage.
    HierarchicalFilm,
    /// Modulation at stage 1 only; later stages consume raw sums.
    SingleFilm,
    /// Gated cross-attention read of the text token at every stage.
    CrossAttention,
}

/// Which end of the tap list feeds stage 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TapOrder {
    /// Shallowest tap first (the default).
    Ascending,
    Descending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// Input image side; must match the encoder.
    pub image_hw: usize,
    /// Encoder patch size; fixes the token grid and the upsample factor.
    pub patch: usize,
    /// Width of the encoder's visual projections (tap feature size).
    pub d_model_v: usize,
    /// Width of the pooled text embedding.
    pub d_embed: usize,
    /// Encoder block indices whose projections are consumed, ascending.
    pub taps: Vec<usize>,
    /// Decoder working width `D`.
    pub d: usize,
    pub n_heads: usize,
    /// Hidden width of the inter-stage transformer blocks' MLPs.
    pub mlp_hidden: usize,
    /// Channel count between the two upsampling stages of the mask head.
    pub head_mid: usize,
    pub variant: FusionVariant,
    pub tap_order: TapOrder,
}

fn int_sqrt(n: usize) -> Option<usize> {
    let k = (n as f64).sqrt().round() as usize;
    (k * k == n).then_some(k)
}

impl DecoderConfig {
    /// Geometry copied from an encoder config; `width` selects the decoder
    /// preset (64 for speed, 128 for the wider variant).
    pub fn for_encoder(enc: &EncoderConfig, width: usize) -> Self {
        DecoderConfig {
            image_hw: enc.image_hw,
            patch: enc.patch,
            d_model_v: enc.d_model_v,
            d_embed: enc.d_embed,
            taps: enc.taps.clone(),
            d: width,
            n_heads: 4,
            mlp_hidden: width * 3 / 2,
            head_mid: (width / 4).max(2),
            variant: FusionVariant::HierarchicalFilm,
            tap_order: TapOrder::Ascending,
        }
    }

    pub fn with_variant(mut self, variant: FusionVariant) -> Self {
        self.variant = variant;
        self
    }

    /// Patch-grid side length.
    pub fn grid(&self) -> usize {
        self.image_hw / self.patch
    }

    /// Tokens per image (`grid²`).
    pub fn n_tokens(&self) -> usize {
        self.grid() * self.grid()
    }

    /// Per-stage factor of the two mask-head upsamples (`√patch`).
    pub fn upsample_k(&self) -> usize {
        int_sqrt(self.patch).expect("validated configs have square patch")
    }

    pub fn validate(&self) -> Result<(), DecoderError> {
        let bad = |m: String| Err(DecoderError::BadConfig(m));
        if self.taps.is_empty() {
            return bad("tap set is empty".into());
        }
        if !self.taps.windows(2).all(|w| w[0] < w[1]) {
            return bad(format!("taps {:?} must be strictly ascending", self.taps));
        }
        if self.d == 0 || self.n_heads == 0 || self.d % self.n_heads != 0 {
            return bad(format!(
                "width {} must be a positive multiple of {} heads",
                self.d, self.n_heads
            ));
        }
        if self.patch == 0 || self.image_hw == 0 || self.image_hw % self.patch != 0 {
            return bad(format!(
                "image side {} is not a multiple of patch {}",
                self.image_hw, self.patch
            ));
        }
        if int_sqrt(self.patch).is_none() {
            return bad(format!(
                "patch {} has no integer square root; two equal upsample stages cannot reach it",
                self.patch
            ));
        }
        if self.d_model_v == 0 || self.d_embed == 0 || self.mlp_hidden == 0 || self.head_mid == 0
        {
            return bad("all widths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DecoderError {
    #[error("invalid decoder config: {0}")]
    BadConfig(String),
    #[error("decoder got {got} projections for {expected} taps")]
    ProjectionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    BadShape(String),
    #[error(
        "decoder is bound to encoder fingerprint {stored:.8}… but the current encoder is {current:.8}…"
    )]
    FingerprintMismatch { stored: String, current: String },
    #[error("encoder and decoder configs disagree: {0}")]
    ConfigMismatch(String),
    #[error("malformed decoder checkpoint: {0}")]
    BadHeader(String),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Tensors(#[from] nn::LoadError),
}

#[derive(Debug)]
pub struct Decoder<S: Scalar> {
    pub config: DecoderConfig,
    /// Per-stage tap reduction `d_model_v → D`, indexed by consumption order.
    reduces: Vec<Linear<S>>,
    /// Hierarchical: one per stage. Single: exactly one. Cross-attention: none.
    films: Vec<Film<S>>,
    /// Cross-attention: one per stage; empty otherwise.
    xattns: Vec<CrossAttnGate<S>>,
    /// `K−1` inter-stage blocks (`T_1 .. T_{K−1}`).
    blocks: Vec<TransformerBlock<S>>,
    head: MaskHead<S>,
    encoder_fingerprint: String,
}

impl<S: Scalar> Decoder<S> {
    /// Fresh decoder bound to `encoder_fingerprint`. Weight init draws from
    /// the decoder-init stream of `master_seed` in a fixed order (reducers,
    /// conditioners, blocks, head).
    pub fn new(
        config: DecoderConfig,
        encoder_fingerprint: impl Into<String>,
        master_seed: u64,
    ) -> Result<Self, DecoderError> {
        config.validate()?;
        let mut rng = rng_for(master_seed, stream::DECODER_INIT, 0);
        let k = config.taps.len();

        let reduces = (0..k)
            .map(|_| Linear::new(&mut rng, config.d_model_v, config.d))
            .collect();
        let films = match config.variant {
            FusionVariant::HierarchicalFilm => (0..k)
                .map(|_| Film::identity(config.d_embed, config.d))
                .collect(),
            FusionVariant::SingleFilm => vec![Film::identity(config.d_embed, config.d)],
            FusionVariant::CrossAttention => Vec::new(),
        };
        let xattns = match config.variant {
            FusionVariant::CrossAttention => (0..k)
                .map(|_| CrossAttnGate::new(&mut rng, config.d, config.d_embed))
                .collect(),
            _ => Vec::new(),
        };
        let blocks = (1..k)
            .map(|_| TransformerBlock::new(&mut rng, config.d, config.n_heads, config.mlp_hidden))
            .collect();
        let head = MaskHead::new(&mut rng, config.d, config.head_mid, config.upsample_k());

        Ok(Decoder {
            config,
            reduces,
            films,
            xattns,
            blocks,
            head,
            encoder_fingerprint: encoder_fingerprint.into(),
        })
    }

    /// The encoder fingerprint this decoder is bound to.
    pub fn encoder_fingerprint(&self) -> &str {
        &self.encoder_fingerprint
    }

    /// Re-binds the decoder to a different encoder digest. Joint
    /// finetuning moves the encoder, so the pairing recorded at
    /// construction goes stale; call this with the finetuned digest
    /// before checkpointing.
    pub fn rebind_encoder(&mut self, fingerprint: impl Into<String>) {
        self.encoder_fingerprint = fingerprint.into();
    }

    pub fn fingerprint(&self) -> String {
        nn::fingerprint(self)
    }

    pub fn trainable_params(&self) -> usize {
        nn::param_count(self)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), DecoderError> {
        let c = Container {
            kind: DECODER_KIND.to_string(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            meta: serde_json::json!({
                "encoder_fingerprint": self.encoder_fingerprint,
                "fingerprint": self.fingerprint(),
            }),
            tensors: nn::collect_tensors(self),
        };
        container::write_file(path, &c)?;
        Ok(())
    }

    /// Loads a checkpoint. When `current_encoder_fingerprint` is given, the
    /// stored binding must match it exactly; pass `None` only for
    /// inspection tooling that pairs the decoder itself.
    pub fn load(
        path: &std::path::Path,
        current_encoder_fingerprint: Option<&str>,
    ) -> Result<Self, DecoderError> {
        let c = container::read_file(path, Some(DECODER_KIND))?;
        let config: DecoderConfig = serde_json::from_value(c.config.clone())
            .map_err(|e| DecoderError::BadHeader(e.to_string()))?;
        let stored = c.meta["encoder_fingerprint"]
            .as_str()
            .ok_or_else(|| DecoderError::BadHeader("missing encoder fingerprint".into()))?
            .to_string();
        if let Some(current) = current_encoder_fingerprint {
            if current != stored {
                return Err(DecoderError::FingerprintMismatch {
                    stored,
                    current: current.to_string(),
                });
            }
        }
        let mut dec = Decoder::new(config, stored, 0)?;
        nn::load_tensors(&mut dec, &c.tensors)?;
        Ok(dec)
    }
}

impl<S: Scalar> ParamWalk<S> for Decoder<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        for (i, r) in self.reduces.iter().enumerate() {
            r.walk(&qualify(prefix, &format!("reduce{i}")), f);
        }
        for (i, m) in self.films.iter().enumerate() {
            m.walk(&qualify(prefix, &format!("film{i}")), f);
        }
        for (i, x) in self.xattns.iter().enumerate() {
            x.walk(&qualify(prefix, &format!("xattn{i}")), f);
        }
        for (i, b) in self.blocks.iter().enumerate() {
            b.walk(&qualify(prefix, &format!("block{i}")), f);
        }
        self.head.walk(&qualify(prefix, "head"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        for (i, r) in self.reduces.iter_mut().enumerate() {
            r.walk_mut(&qualify(prefix, &format!("reduce{i}")), f);
        }
        for (i, m) in self.films.iter_mut().enumerate() {
            m.walk_mut(&qualify(prefix, &format!("film{i}")), f);
        }
        for (i, x) in self.xattns.iter_mut().enumerate() {
            x.walk_mut(&qualify(prefix, &format!("xattn{i}")), f);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.walk_mut(&qualify(prefix, &format!("block{i}")), f);
        }
        self.head.walk_mut(&qualify(prefix, "head"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        for (i, r) in self.reduces.iter_mut().enumerate() {
            r.walk_pairs(&qualify(prefix, &format!("reduce{i}")), f);
        }
        for (i, m) in self.films.iter_mut().enumerate() {
            m.walk_pairs(&qualify(prefix, &format!("film{i}")), f);
        }
        for (i, x) in self.xattns.iter_mut().enumerate() {
            x.walk_pairs(&qualify(prefix, &format!("xattn{i}")), f);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.walk_pairs(&qualify(prefix, &format!("block{i}")), f);
        }
        self.head.walk_pairs(&qualify(prefix, "head"), f);
    }
}

/// Checks that a decoder's geometry agrees with the encoder it will read.
pub fn ensure_compatible(enc: &EncoderConfig, dec: &DecoderConfig) -> Result<(), DecoderError> {
    let m = |msg: String| Err(DecoderError::ConfigMismatch(msg));
    if enc.image_hw != dec.image_hw || enc.patch != dec.patch {
        return m(format!(
            "frame geometry {}/{} vs {}/{}",
            enc.image_hw, enc.patch, dec.image_hw, dec.patch
        ));
    }
    if enc.d_model_v != dec.d_model_v {
        return m(format!(
            "visual width {} vs {}",
            enc.d_model_v, dec.d_model_v
        ));
    }
    if enc.d_embed != dec.d_embed {
        return m(format!("embedding width {} vs {}", enc.d_embed, dec.d_embed));
    }
    if enc.taps != dec.taps {
        return m(format!("tap sets {:?} vs {:?}", enc.taps, dec.taps));
    }
    Ok(())
}

/// Full inference pipeline for one image and one query string.
pub fn predict_mask<S: Scalar>(
    enc: &DualEncoder<S>,
    dec: &Decoder<S>,
    image: &RgbImage,
    query: &str,
) -> Result<PredictionMask<S>, DecoderError> {
    ensure_compatible(&enc.config, &dec.config)?;
    let patches = enc.vision.patch_rows(&[image]);
    let (venc, _) = enc.vision.forward(&patches, 1, &dec.config.taps);
    let q = enc.encode_text(query).insert_axis(Axis(0));
    let (logits, _) = dec.forward(&venc.taps, &q, 1)?;
    Ok(PredictionMask::from_logits(&logits, 0))
}
