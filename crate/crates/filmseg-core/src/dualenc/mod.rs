//! Frozen-capable dual encoder: a vision transformer and a text transformer
//! meeting in one shared embedding space.
//!
//! The towers are trained contrastively ([`pretrain`]) and then frozen; the
//! segmentation decoder consumes the vision tower's intermediate taps and
//! the text tower's pooled embedding. A learnable contrastive temperature
//! rides along as a third (tiny) parameter group.

pub mod pretrain;
pub mod text;
pub mod tokenizer;
pub mod vision;

use ndarray::{Array1, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::container::{self, Container, ContainerError};
use crate::nn::{self, qualify, LoadError, ParamWalk};
use crate::raster::RgbImage;
use crate::rng::{rng_for, stream};
use crate::scalar::{sc, Scalar};

pub use pretrain::{
    contrastive_pretrain, pretrain_disjoint, PretrainConfig, PretrainError, PretrainReport,
};
pub use text::{TextCache, TextEncoding, TextPool, TextTower};
pub use tokenizer::{Encoded, Vocabulary, EOS, MASK, PAD, UNK};
pub use vision::{VisionCache, VisionEncoding, VisionTower};

pub const ENCODER_KIND: &str = "dual-encoder";

/// Where the text tower's weights came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextProvenance {
    /// Both towers trained together on image–text pairs.
    Joint,
    /// Text tower trained alone on masked-word prediction, then held fixed
    /// while the vision tower aligned to it.
    Disjoint,
}

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("tap index {0} is outside the tower depth 1..={1}")]
    BadTap(usize, usize),
    #[error("taps must be strictly ascending, got {0:?}")]
    UnorderedTaps(Vec<usize>),
    #[error("image side {0} is not divisible by patch {1}")]
    BadPatch(usize, usize),
    #[error("attention width {0} is not divisible by head count {1}")]
    BadHeads(usize, usize),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error(transparent)]
    Tensors(#[from] LoadError),
    #[error("checkpoint header is not a valid encoder description: {0}")]
    BadHeader(String),
}

/// Architecture of both towers and the shared embedding space.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub image_hw: usize,
    pub patch: usize,
    pub d_model_v: usize,
    pub n_blocks_v: usize,
    pub n_heads_v: usize,
    pub mlp_hidden_v: usize,
    pub d_model_t: usize,
    pub n_blocks_t: usize,
    pub n_heads_t: usize,
    pub mlp_hidden_t: usize,
    pub max_text_len: usize,
    pub d_embed: usize,
    /// 1-based vision blocks whose patch features feed the decoder.
    pub taps: Vec<usize>,
    pub pool: TextPool,
}

impl EncoderConfig {
    /// Default lab-scale towers. The text tower is deliberately wide in the
    /// MLP: with only 20 token positions those parameters are cheap to run,
    /// which keeps capacity high while the frozen-tower budget stays small
    /// relative to compute.
    pub fn base() -> Self {
        EncoderConfig {
            image_hw: 128,
            patch: 16,
            d_model_v: 64,
            n_blocks_v: 10,
            n_heads_v: 4,
            mlp_hidden_v: 128,
            d_model_t: 64,
            n_blocks_t: 4,
            n_heads_t: 4,
            mlp_hidden_t: 1536,
            max_text_len: 20,
            d_embed: 64,
            taps: vec![1, 3, 5, 7, 9],
            pool: TextPool::Eos,
        }
    }

    /// A deeper, wider vision tower for the backend-capacity ablation.
    pub fn large() -> Self {
        EncoderConfig {
            d_model_v: 96,
            n_blocks_v: 12,
            mlp_hidden_v: 192,
            ..Self::base()
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.image_hw % self.patch != 0 {
            return Err(EncoderError::BadPatch(self.image_hw, self.patch));
        }
        if self.d_model_v % self.n_heads_v != 0 {
            return Err(EncoderError::BadHeads(self.d_model_v, self.n_heads_v));
        }
        if self.d_model_t % self.n_heads_t != 0 {
            return Err(EncoderError::BadHeads(self.d_model_t, self.n_heads_t));
        }
        if !self.taps.windows(2).all(|w| w[0] < w[1]) {
            return Err(EncoderError::UnorderedTaps(self.taps.clone()));
        }
        for &t in &self.taps {
            if t == 0 || t > self.n_blocks_v {
                return Err(EncoderError::BadTap(t, self.n_blocks_v));
            }
        }
        Ok(())
    }
}

/// The learnable contrastive temperature: one parameter holding
/// `log(scale)`, applied as `exp(·)` capped at 100.
#[derive(Clone, Debug)]
pub struct ContrastiveScale<S: Scalar> {
    pub ls: Array1<S>,
    pub g: Array1<S>,
}

pub const MAX_LOGIT_SCALE: f64 = 100.0;

impl<S: Scalar> ContrastiveScale<S> {
    pub fn new() -> Self {
        ContrastiveScale {
            ls: Array1::zeros(1),
            g: Array1::zeros(1),
        }
    }

    /// The multiplier on cosine similarities, `min(exp(ls), 100)`.
    pub fn value(&self) -> S {
        self.ls[0].exp().min(sc(MAX_LOGIT_SCALE))
    }

    /// Whether the cap is active (gradient to `ls` is zero there).
    pub fn capped(&self) -> bool {
        self.ls[0].exp() > sc::<S>(MAX_LOGIT_SCALE)
    }
}

impl<S: Scalar> Default for ContrastiveScale<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ParamWalk<S> for ContrastiveScale<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        f(&qualify(prefix, "logit_scale"), self.ls.view().into_dyn());
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        f(&qualify(prefix, "logit_scale"), self.ls.view_mut().into_dyn());
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        f(
            &qualify(prefix, "logit_scale"),
            self.ls.view_mut().into_dyn(),
            self.g.view_mut().into_dyn(),
        );
    }
}

pub struct DualEncoder<S: Scalar> {
    pub config: EncoderConfig,
    pub vocab: Vocabulary,
    pub vision: VisionTower<S>,
    pub text: TextTower<S>,
    pub scale: ContrastiveScale<S>,
    pub provenance: TextProvenance,
    frozen: bool,
}

impl<S: Scalar> DualEncoder<S> {
    /// Builds freshly initialized towers; all weights derive from
    /// `master_seed` through the encoder-init stream.
    pub fn new(
        config: EncoderConfig,
        vocab: Vocabulary,
        master_seed: u64,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        let mut rng = rng_for(master_seed, stream::ENCODER_INIT, 0);
        let vision = VisionTower::new(
            &mut rng,
            config.image_hw,
            config.patch,
            config.d_model_v,
            config.n_heads_v,
            config.mlp_hidden_v,
            config.n_blocks_v,
            config.d_embed,
        );
        let text = TextTower::new(
            &mut rng,
            vocab.size(),
            config.max_text_len,
            config.d_model_t,
            config.n_heads_t,
            config.mlp_hidden_t,
            config.n_blocks_t,
            config.d_embed,
            config.pool,
        );
        Ok(DualEncoder {
            config,
            vocab,
            vision,
            text,
            scale: ContrastiveScale::new(),
            provenance: TextProvenance::Joint,
            frozen: false,
        })
    }

    pub fn tokenize(&self, text: &str) -> Encoded {
        self.vocab.encode(text, self.config.max_text_len)
    }

    /// Tap features and global embedding for one image.
    pub fn encode_image(&self, img: &RgbImage) -> VisionEncoding<S> {
        let patches = self.vision.patch_rows(&[img]);
        self.vision.forward(&patches, 1, &self.config.taps).0
    }

    /// Batch form of [`Self::encode_image`] (with cache, for training).
    pub fn encode_images(&self, imgs: &[&RgbImage]) -> (VisionEncoding<S>, VisionCache<S>) {
        let patches = self.vision.patch_rows(imgs);
        self.vision.forward(&patches, imgs.len(), &self.config.taps)
    }

    /// The pooled unit-norm embedding of one query string.
    pub fn encode_text(&self, text: &str) -> Array1<S> {
        let e = self.tokenize(text);
        let (enc, _) = self.text.forward(std::slice::from_ref(&e));
        enc.pooled.row(0).to_owned()
    }

    /// Batch text encoding (with cache, for training).
    pub fn encode_texts(&self, batch: &[Encoded]) -> (TextEncoding<S>, TextCache<S>) {
        self.text.forward(batch)
    }

    /// Weight digest over every parameter in walk order; frozen towers must
    /// keep this byte-identical across downstream training.
    pub fn fingerprint(&self) -> String {
        nn::fingerprint(self)
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// Reverses [`freeze`](Self::freeze) — the explicit opt-out for the
    /// joint-finetuning baseline, which starts from the same pretrained
    /// (and normally frozen) checkpoint. The frozen-feature training loop
    /// still refuses thawed encoders, so thawing cannot silently leak
    /// encoder updates into a frozen-regime run.
    pub fn thaw(&mut self) {
        self.frozen = false;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), EncoderError> {
        let c = Container {
            kind: ENCODER_KIND.to_string(),
            config: serde_json::to_value(&self.config).expect("config serializes"),
            meta: serde_json::json!({
                "vocab": self.vocab,
                "provenance": self.provenance,
                "frozen": self.frozen,
                "fingerprint": self.fingerprint(),
            }),
            tensors: nn::collect_tensors(self),
        };
        container::write_file(path, &c)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self, EncoderError> {
        let c = container::read_file(path, Some(ENCODER_KIND))?;
        let config: EncoderConfig = serde_json::from_value(c.config.clone())
            .map_err(|e| EncoderError::BadHeader(e.to_string()))?;
        let vocab: Vocabulary = serde_json::from_value(c.meta["vocab"].clone())
            .map_err(|e| EncoderError::BadHeader(format!("vocab: {e}")))?;
        let provenance: TextProvenance =
            serde_json::from_value(c.meta["provenance"].clone())
                .map_err(|e| EncoderError::BadHeader(format!("provenance: {e}")))?;
        let frozen = c.meta["frozen"].as_bool().unwrap_or(false);
        let mut enc = DualEncoder::new(config, vocab, 0)?;
        nn::load_tensors(&mut enc, &c.tensors)?;
        enc.provenance = provenance;
        enc.frozen = frozen;
        Ok(enc)
    }
}

impl<S: Scalar> ParamWalk<S> for DualEncoder<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.vision.walk(&qualify(prefix, "vision"), f);
        self.text.walk(&qualify(prefix, "text"), f);
        self.scale.walk(prefix, f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.vision.walk_mut(&qualify(prefix, "vision"), f);
        self.text.walk_mut(&qualify(prefix, "text"), f);
        self.scale.walk_mut(prefix, f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.vision.walk_pairs(&qualify(prefix, "vision"), f);
        self.text.walk_pairs(&qualify(prefix, "text"), f);
        self.scale.walk_pairs(prefix, f);
    }
}
