//! Training: losses, schedules, and the decoder training loops.
//!
//! Two regimes share one configuration type. [`train_decoder`] keeps the
//! dual encoder frozen — features are computed once up front and the
//! encoder's weight digest is re-checked every epoch — while
//! [`train_full_finetune`] backpropagates through both towers. A tenth of
//! the provided samples are held out (by seed, not epoch) as a validation
//! slice whose mean IoU is recorded after each epoch.

pub mod loss;
pub mod schedule;

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Array3};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::{
    ensure_compatible, foreground_probs, foreground_probs_backward, Decoder, DecoderConfig,
    DecoderError, PredictionMask,
};
use crate::dualenc::DualEncoder;
use crate::evalkit::iou;
use crate::nn::{param_count, zero_grads, Adam, ParamWalk};
use crate::rng::{rng_for, stream};
use crate::scalar::Scalar;
use crate::scenegen::SplitData;

pub use loss::{pixel_bce, targets_from_masks, LossError, BCE_EPS};
pub use schedule::{lr_at_step, ScheduleError};

/// Fewest samples a training run will accept: enough for a nonempty
/// validation slice at the one-in-ten split.
pub const MIN_TRAIN_SAMPLES: usize = 10;

/// Hyperparameters for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Cosine schedule start.
    pub base_lr: f64,
    /// Cosine schedule floor.
    pub min_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// `true` for the frozen-encoder regime, `false` for full finetuning;
    /// each entry point insists on its own setting so a config cannot be
    /// silently reused across regimes.
    pub freeze_encoder: bool,
    /// Free-form label echoed into the report (e.g. which ablation arm
    /// this run belongs to).
    pub variant_tag: String,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            base_lr: 3e-4,
            min_lr: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed,
            freeze_encoder: true,
            variant_tag: String::new(),
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::BadConfig("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::BadConfig("batch_size must be positive".into()));
        }
        if !(self.base_lr > self.min_lr && self.min_lr >= 0.0) {
            return Err(TrainError::BadConfig(format!(
                "need base_lr > min_lr >= 0, got {} and {}",
                self.base_lr, self.min_lr
            )));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(TrainError::BadConfig(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.eps <= 0.0 {
            return Err(TrainError::BadConfig("eps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("bad training config: {0}")]
    BadConfig(String),
    #[error("the frozen-encoder loop needs an encoder with freeze() applied")]
    EncoderNotFrozen,
    #[error("full finetuning cannot run on a frozen encoder")]
    EncoderFrozen,
    #[error("need at least {need} samples, got {have}")]
    TooFewSamples { have: usize, need: usize },
    #[error("loss went non-finite at epoch {epoch}, batch {batch} (lr {lr:.3e})")]
    NonFiniteLoss { epoch: usize, batch: usize, lr: f64 },
    #[error("frozen encoder weights changed during epoch {epoch}")]
    EncoderDrift { epoch: usize },
    #[error(transparent)]
    Decoder(#[from] DecoderError),
}

/// Everything a finished run reports: losses, validation IoU per epoch,
/// identity digests, and parameter accounting.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub decoder_config: DecoderConfig,
    pub dataset_hash: String,
    pub encoder_fingerprint_before: String,
    pub encoder_fingerprint_after: String,
    pub decoder_fingerprint: String,
    pub epoch_losses: Vec<f64>,
    pub val_ious: Vec<f64>,
    pub encoder_params: usize,
    pub decoder_params: usize,
    /// Trainable decoder size as a fraction of the frozen encoder.
    pub decoder_param_ratio: f64,
    pub wall_clock_secs: f64,
    pub checkpoint_path: Option<String>,
}

/// Encoder outputs for every sample, computed once when the encoder is
/// frozen: per-tap token features `(n·P, d_model_v)` and pooled query
/// embeddings `(n, d_embed)`.
struct Precomputed<S: Scalar> {
    taps: Vec<Array2<S>>,
    q: Array2<S>,
}

fn precompute<S: Scalar>(
    enc: &DualEncoder<S>,
    data: &SplitData,
    chunk: usize,
) -> Precomputed<S> {
    let n = data.samples.len();
    let p = enc.vision.n_patches();
    let k = enc.config.taps.len();
    let mut taps: Vec<Array2<S>> =
        vec![Array2::zeros((n * p, enc.config.d_model_v)); k];
    let mut q = Array2::zeros((n, enc.config.d_embed));

    let mut at = 0;
    while at < n {
        let hi = (at + chunk).min(n);
        let images: Vec<_> = data.samples[at..hi].iter().map(|s| &s.image).collect();
        let (venc, _) = enc
            .vision
            .forward(&enc.vision.patch_rows(&images), images.len(), &enc.config.taps);
        for (dst, src) in taps.iter_mut().zip(&venc.taps) {
            dst.slice_mut(ndarray::s![at * p..hi * p, ..]).assign(src);
        }
        let encoded: Vec<_> = data.samples[at..hi]
            .iter()
            .map(|s| enc.tokenize(&s.query.text))
            .collect();
        let (tenc, _) = enc.encode_texts(&encoded);
        q.slice_mut(ndarray::s![at..hi, ..]).assign(&tenc.pooled);
        at = hi;
    }
    Precomputed { taps, q }
}

/// Collects each sample's `p` consecutive rows into one `(B·p, d)` batch.
fn gather_block_rows<S: Scalar>(src: &Array2<S>, idx: &[usize], p: usize) -> Array2<S> {
    let mut out = Array2::zeros((idx.len() * p, src.ncols()));
    for (bi, &i) in idx.iter().enumerate() {
        out.slice_mut(ndarray::s![bi * p..(bi + 1) * p, ..])
            .assign(&src.slice(ndarray::s![i * p..(i + 1) * p, ..]));
    }
    out
}

fn gather_rows<S: Scalar>(src: &Array2<S>, idx: &[usize]) -> Array2<S> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (bi, &i) in idx.iter().enumerate() {
        out.row_mut(bi).assign(&src.row(i));
    }
    out
}

fn batch_targets<S: Scalar>(data: &SplitData, idx: &[usize]) -> Array3<S> {
    let masks: Vec<_> = idx.iter().map(|&i| &data.samples[i].mask).collect();
    targets_from_masks(&masks)
}

/// Seed-fixed one-in-ten validation holdout. Returns `(train, val)` index
/// lists; the split depends on the seed alone, never the epoch.
fn split_train_val(n: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_for(seed, stream::VAL_SPLIT, 0));
    let n_val = n / 10;
    let val = idx[..n_val].to_vec();
    let train = idx[n_val..].to_vec();
    (train, val)
}

fn mean_val_iou_precomputed<S: Scalar>(
    dec: &Decoder<S>,
    pre: &Precomputed<S>,
    data: &SplitData,
    val_idx: &[usize],
    chunk: usize,
    p: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for ids in val_idx.chunks(chunk) {
        let taps: Vec<Array2<S>> = pre
            .taps
            .iter()
            .map(|t| gather_block_rows(t, ids, p))
            .collect();
        let q = gather_rows(&pre.q, ids);
        let (logits, _) = dec.forward(&taps, &q, ids.len())?;
        for (bi, &i) in ids.iter().enumerate() {
            let m = PredictionMask::from_logits(&logits, bi);
            total += iou(&m.binary_mask, &data.samples[i].mask)
                .expect("prediction and target share the frame size");
        }
    }
    Ok(total / val_idx.len() as f64)
}

fn mean_val_iou_live<S: Scalar>(
    enc: &DualEncoder<S>,
    dec: &Decoder<S>,
    data: &SplitData,
    val_idx: &[usize],
    chunk: usize,
) -> Result<f64, TrainError> {
    let mut total = 0.0;
    for ids in val_idx.chunks(chunk) {
        let images: Vec<_> = ids.iter().map(|&i| &data.samples[i].image).collect();
        let (venc, _) = enc
            .vision
            .forward(&enc.vision.patch_rows(&images), ids.len(), &enc.config.taps);
        let encoded: Vec<_> = ids
            .iter()
            .map(|&i| enc.tokenize(&data.samples[i].query.text))
            .collect();
        let (tenc, _) = enc.encode_texts(&encoded);
        let (logits, _) = dec.forward(&venc.taps, &tenc.pooled, ids.len())?;
        for (bi, &i) in ids.iter().enumerate() {
            let m = PredictionMask::from_logits(&logits, bi);
            total += iou(&m.binary_mask, &data.samples[i].mask)
                .expect("prediction and target share the frame size");
        }
    }
    Ok(total / val_idx.len() as f64)
}

fn adam_from<S: Scalar>(cfg: &TrainConfig) -> Adam<S> {
    let mut a = Adam::new();
    a.beta1 = S::from(cfg.beta1).unwrap();
    a.beta2 = S::from(cfg.beta2).unwrap();
    a.eps = S::from(cfg.eps).unwrap();
    a
}

fn check_sizes(n: usize, batch: usize) -> Result<(), TrainError> {
    if n < MIN_TRAIN_SAMPLES {
        return Err(TrainError::TooFewSamples {
            have: n,
            need: MIN_TRAIN_SAMPLES,
        });
    }
    let n_train = n - n / 10;
    if n_train < batch {
        return Err(TrainError::TooFewSamples {
            have: n_train,
            need: batch,
        });
    }
    Ok(())
}

/// Trains the decoder against a frozen encoder.
///
/// Encoder features are computed once up front; the encoder's weight
/// digest is captured before the first step and re-verified after every
/// epoch, so any accidental mutation aborts the run rather than leaking
/// into results.
///
/// # Errors
///
/// Config and size problems surface before any step runs. During the run:
/// [`TrainError::NonFiniteLoss`] on a NaN/Inf batch loss,
/// [`TrainError::EncoderDrift`] if the digest moves.
pub fn train_decoder<S: Scalar>(
    enc: &DualEncoder<S>,
    dec: &mut Decoder<S>,
    data: &SplitData,
    cfg: &TrainConfig,
    dataset_hash: &str,
    checkpoint: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if !cfg.freeze_encoder {
        return Err(TrainError::BadConfig(
            "this loop never updates the encoder; set freeze_encoder".into(),
        ));
    }
    if !enc.is_frozen() {
        return Err(TrainError::EncoderNotFrozen);
    }
    ensure_compatible(&enc.config, &dec.config)?;
    let fp_before = enc.fingerprint();
    if dec.encoder_fingerprint() != fp_before {
        return Err(DecoderError::FingerprintMismatch {
            stored: dec.encoder_fingerprint().to_string(),
            current: fp_before,
        }
        .into());
    }
    let n = data.samples.len();
    check_sizes(n, cfg.batch_size)?;

    let start = Instant::now();
    let p = enc.vision.n_patches();
    let pre = precompute(enc, data, cfg.batch_size.max(8));
    let (train_idx, val_idx) = split_train_val(n, cfg.seed);

    let bpe = train_idx.len() / cfg.batch_size;
    let total_steps = bpe * cfg.epochs;
    let mut adam = adam_from::<S>(cfg);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut val_ious = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_for(cfg.seed, stream::TRAIN_SHUFFLE, epoch as u64));
        let mut epoch_loss = 0.0;

        for (batch, ids) in order.chunks_exact(cfg.batch_size).enumerate() {
            let taps: Vec<Array2<S>> = pre
                .taps
                .iter()
                .map(|t| gather_block_rows(t, ids, p))
                .collect();
            let q = gather_rows(&pre.q, ids);
            let targets = batch_targets::<S>(data, ids);

            let (logits, cache) = dec.forward(&taps, &q, ids.len())?;
            let probs = foreground_probs(&logits);
            let (loss, d_probs) =
                pixel_bce(&probs, &targets).expect("probability and target maps share a shape");
            let lr = lr_at_step(step, total_steps, cfg.base_lr, cfg.min_lr)
                .expect("step stays inside the schedule horizon");
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch, lr });
            }

            zero_grads(dec);
            let d_logits = foreground_probs_backward(&probs, &d_probs);
            dec.backward(&cache, &d_logits);
            adam.step(S::from(lr).unwrap(), dec);
            step += 1;
            epoch_loss += loss;
        }

        if enc.fingerprint() != fp_before {
            return Err(TrainError::EncoderDrift { epoch });
        }
        epoch_losses.push(epoch_loss / bpe as f64);
        val_ious.push(mean_val_iou_precomputed(
            dec,
            &pre,
            data,
            &val_idx,
            cfg.batch_size,
            p,
        )?);
    }

    let checkpoint_path = match checkpoint {
        Some(path) => {
            dec.save(path)?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let encoder_params = param_count(enc);
    let decoder_params = dec.trainable_params();
    Ok(TrainReport {
        config: cfg.clone(),
        decoder_config: dec.config.clone(),
        dataset_hash: dataset_hash.to_string(),
        encoder_fingerprint_before: fp_before.clone(),
        encoder_fingerprint_after: fp_before,
        decoder_fingerprint: dec.fingerprint(),
        epoch_losses,
        val_ious,
        encoder_params,
        decoder_params,
        decoder_param_ratio: decoder_params as f64 / encoder_params as f64,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        checkpoint_path,
    })
}

/// Both towers plus the decoder as one optimizable unit.
struct EncDec<'a, S: Scalar> {
    enc: &'a mut DualEncoder<S>,
    dec: &'a mut Decoder<S>,
}

impl<S: Scalar> ParamWalk<S> for EncDec<'_, S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ndarray::ArrayViewD<'_, S>)) {
        self.enc.walk(&crate::nn::qualify(prefix, "enc"), f);
        self.dec.walk(&crate::nn::qualify(prefix, "dec"), f);
    }

    fn walk_mut(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, S>),
    ) {
        self.enc.walk_mut(&crate::nn::qualify(prefix, "enc"), f);
        self.dec.walk_mut(&crate::nn::qualify(prefix, "dec"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ndarray::ArrayViewMutD<'_, S>, ndarray::ArrayViewMutD<'_, S>),
    ) {
        self.enc.walk_pairs(&crate::nn::qualify(prefix, "enc"), f);
        self.dec.walk_pairs(&crate::nn::qualify(prefix, "dec"), f);
    }
}

/// Trains the decoder and both encoder towers jointly.
///
/// Images and queries are re-encoded every batch (the encoder moves), tap
/// gradients flow back through the vision tower keyed by block index, and
/// the pooled-query gradient flows through the text tower. On success the
/// decoder is re-bound to the finetuned encoder's digest so a subsequent
/// checkpoint pairs with the encoder that actually produced it.
///
/// # Errors
///
/// As [`train_decoder`], except the freeze contract inverts:
/// [`TrainError::EncoderFrozen`] when the encoder cannot move.
pub fn train_full_finetune<S: Scalar>(
    enc: &mut DualEncoder<S>,
    dec: &mut Decoder<S>,
    data: &SplitData,
    cfg: &TrainConfig,
    dataset_hash: &str,
    checkpoint: Option<&Path>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    if cfg.freeze_encoder {
        return Err(TrainError::BadConfig(
            "full finetuning updates the encoder; clear freeze_encoder".into(),
        ));
    }
    if enc.is_frozen() {
        return Err(TrainError::EncoderFrozen);
    }
    ensure_compatible(&enc.config, &dec.config)?;
    let fp_before = enc.fingerprint();
    if dec.encoder_fingerprint() != fp_before {
        return Err(DecoderError::FingerprintMismatch {
            stored: dec.encoder_fingerprint().to_string(),
            current: fp_before,
        }
        .into());
    }
    let n = data.samples.len();
    check_sizes(n, cfg.batch_size)?;

    let start = Instant::now();
    let (train_idx, val_idx) = split_train_val(n, cfg.seed);
    let bpe = train_idx.len() / cfg.batch_size;
    let total_steps = bpe * cfg.epochs;
    let mut adam = adam_from::<S>(cfg);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut val_ious = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        order.shuffle(&mut rng_for(cfg.seed, stream::TRAIN_SHUFFLE, epoch as u64));
        let mut epoch_loss = 0.0;

        for (batch, ids) in order.chunks_exact(cfg.batch_size).enumerate() {
            let images: Vec<_> = ids.iter().map(|&i| &data.samples[i].image).collect();
            let patches = enc.vision.patch_rows(&images);
            let (venc, vcache) = enc.vision.forward(&patches, ids.len(), &enc.config.taps);
            let encoded: Vec<_> = ids
                .iter()
                .map(|&i| enc.tokenize(&data.samples[i].query.text))
                .collect();
            let (tenc, tcache) = enc.encode_texts(&encoded);
            let targets = batch_targets::<S>(data, ids);

            let (logits, cache) = dec.forward(&venc.taps, &tenc.pooled, ids.len())?;
            let probs = foreground_probs(&logits);
            let (loss, d_probs) =
                pixel_bce(&probs, &targets).expect("probability and target maps share a shape");
            let lr = lr_at_step(step, total_steps, cfg.base_lr, cfg.min_lr)
                .expect("step stays inside the schedule horizon");
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, batch, lr });
            }

            let mut both = EncDec { enc, dec };
            zero_grads(&mut both);
            let d_logits = foreground_probs_backward(&probs, &d_probs);
            let (d_taps, d_q) = both.dec.backward(&cache, &d_logits);
            let tap_grads: Vec<(usize, Array2<S>)> = both
                .dec
                .config
                .taps
                .iter()
                .zip(d_taps)
                .map(|(&block, g)| (block, g))
                .collect();
            both.enc.vision.backward(&vcache, None, &tap_grads);
            both.enc.text.backward(&tcache, Some(&d_q), None);
            adam.step(S::from(lr).unwrap(), &mut both);
            step += 1;
            epoch_loss += loss;
        }

        epoch_losses.push(epoch_loss / bpe as f64);
        val_ious.push(mean_val_iou_live(enc, dec, data, &val_idx, cfg.batch_size)?);
    }

    let fp_after = enc.fingerprint();
    dec.rebind_encoder(&fp_after);
    let checkpoint_path = match checkpoint {
        Some(path) => {
            dec.save(path)?;
            Some(path.display().to_string())
        }
        None => None,
    };

    let encoder_params = param_count(enc);
    let decoder_params = dec.trainable_params();
    Ok(TrainReport {
        config: cfg.clone(),
        decoder_config: dec.config.clone(),
        dataset_hash: dataset_hash.to_string(),
        encoder_fingerprint_before: fp_before,
        encoder_fingerprint_after: fp_after,
        decoder_fingerprint: dec.fingerprint(),
        epoch_losses,
        val_ious,
        encoder_params,
        decoder_params,
        decoder_param_ratio: decoder_params as f64 / encoder_params as f64,
        wall_clock_secs: start.elapsed().as_secs_f64(),
        checkpoint_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::FusionVariant;
    use crate::dualenc::{EncoderConfig, Vocabulary};
    use crate::scenegen::{build_split, vocabulary, Catalog, Split};

    fn tiny_encoder_config() -> EncoderConfig {
        let mut c = EncoderConfig::base();
        c.d_model_v = 16;
        c.n_heads_v = 2;
        c.mlp_hidden_v = 24;
        c.n_blocks_v = 2;
        c.taps = vec![1, 2];
        c.d_model_t = 16;
        c.n_heads_t = 2;
        c.mlp_hidden_t = 24;
        c.n_blocks_t = 1;
        c.d_embed = 8;
        c
    }

    fn tiny_decoder_config(enc: &EncoderConfig) -> DecoderConfig {
        DecoderConfig::for_encoder(enc, 16)
    }

    fn tiny_data(n: usize, seed: u64) -> SplitData {
        let catalog = Catalog::standard();
        let mut cfg = crate::scenegen::DatasetConfig::new(seed);
        cfg.n_train = n;
        build_split(&catalog, &cfg, Split::Train).expect("split builds")
    }

    fn fresh_pair(seed: u64) -> (DualEncoder<f32>, Decoder<f32>) {
        let ec = tiny_encoder_config();
        let vocab = Vocabulary::from_words(vocabulary(&Catalog::standard()));
        let enc = DualEncoder::<f32>::new(ec.clone(), vocab, seed).expect("encoder builds");
        let dec = Decoder::new(tiny_decoder_config(&ec), enc.fingerprint(), seed)
            .expect("decoder builds");
        (enc, dec)
    }

    #[test]
    fn frozen_loop_learns_and_reruns_bit_identically() {
        let data = tiny_data(24, 41);
        let (mut enc, mut dec) = fresh_pair(41);
        enc.freeze();

        let mut cfg = TrainConfig::new(41);
        cfg.epochs = 2;
        cfg.batch_size = 8;
        cfg.base_lr = 3e-3;
        cfg.min_lr = 1e-5;

        let dir = tempfile::tempdir().unwrap();
        let ckpt = dir.path().join("dec.ckpt");

        let report = train_decoder(&enc, &mut dec, &data, &cfg, "hash0", Some(&ckpt))
            .expect("training runs");

        assert_eq!(report.epoch_losses.len(), 2);
        assert_eq!(report.val_ious.len(), 2);
        assert!(report.epoch_losses.iter().all(|l| l.is_finite()));
        assert!(
            report.epoch_losses[1] < report.epoch_losses[0],
            "loss should fall: {:?}",
            report.epoch_losses
        );
        assert!(report.val_ious.iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(
            report.encoder_fingerprint_before,
            report.encoder_fingerprint_after
        );
        assert!(ckpt.is_file());
        assert!(report.decoder_param_ratio > 0.0);
        assert_eq!(report.decoder_params, dec.trainable_params());

        // A twin run from a freshly initialized decoder (same seed)
        // reproduces losses and weights bit for bit.
        let (_, mut dec2) = fresh_pair(41);
        let report2 =
            train_decoder(&enc, &mut dec2, &data, &cfg, "hash0", None).expect("rerun");
        assert_eq!(report.epoch_losses, report2.epoch_losses);
        assert_eq!(report.val_ious, report2.val_ious);
        assert_eq!(dec.fingerprint(), dec2.fingerprint());

        // The saved checkpoint reloads against the frozen encoder.
        let loaded =
            Decoder::<f32>::load(&ckpt, Some(&enc.fingerprint())).expect("checkpoint loads");
        assert_eq!(loaded.fingerprint(), dec.fingerprint());
    }

    #[test]
    fn freeze_contract_is_enforced_both_ways() {
        let data = tiny_data(12, 43);
        let (mut enc, mut dec) = fresh_pair(43);
        let mut cfg = TrainConfig::new(43);
        cfg.epochs = 1;
        cfg.batch_size = 4;

        // Frozen loop refuses an unfrozen encoder...
        assert!(matches!(
            train_decoder(&enc, &mut dec, &data, &cfg, "h", None),
            Err(TrainError::EncoderNotFrozen)
        ));
        // ...and a config that asks for finetuning.
        enc.freeze();
        let mut loose = cfg.clone();
        loose.freeze_encoder = false;
        assert!(matches!(
            train_decoder(&enc, &mut dec, &data, &loose, "h", None),
            Err(TrainError::BadConfig(_))
        ));
        // The finetune loop inverts both checks.
        assert!(matches!(
            train_full_finetune(&mut enc, &mut dec, &data, &loose, "h", None),
            Err(TrainError::EncoderFrozen)
        ));
        let (mut enc2, mut dec2) = fresh_pair(43);
        assert!(matches!(
            train_full_finetune(&mut enc2, &mut dec2, &data, &cfg, "h", None),
            Err(TrainError::BadConfig(_))
        ));
        // A decoder bound to some other encoder is rejected up front.
        let mut stranger =
            Decoder::<f32>::new(tiny_decoder_config(&tiny_encoder_config()), "feed", 7)
                .expect("decoder builds");
        assert!(matches!(
            train_decoder(&enc, &mut stranger, &data, &cfg, "h", None),
            Err(TrainError::Decoder(DecoderError::FingerprintMismatch { .. }))
        ));
        // Too few samples for the batch size.
        let mut big = cfg.clone();
        big.batch_size = 64;
        let (mut enc3, mut dec3) = fresh_pair(43);
        enc3.freeze();
        assert!(matches!(
            train_decoder(&enc3, &mut dec3, &data, &big, "h", None),
            Err(TrainError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn finetuning_moves_the_encoder_and_rebinds_the_decoder() {
        let data = tiny_data(12, 47);
        let (mut enc, mut dec) = fresh_pair(47);
        let mut cfg = TrainConfig::new(47);
        cfg.epochs = 1;
        cfg.batch_size = 4;
        cfg.base_lr = 1e-3;
        cfg.freeze_encoder = false;

        let report = train_full_finetune(&mut enc, &mut dec, &data, &cfg, "h", None)
            .expect("finetune runs");
        assert_ne!(
            report.encoder_fingerprint_before,
            report.encoder_fingerprint_after
        );
        assert_eq!(report.encoder_fingerprint_after, enc.fingerprint());
        assert_eq!(dec.encoder_fingerprint(), enc.fingerprint());
        assert!(report.epoch_losses[0].is_finite());
    }

    #[test]
    fn runaway_learning_rates_abort_with_the_failing_step() {
        let data = tiny_data(12, 53);
        let (mut enc, mut dec) = fresh_pair(53);
        enc.freeze();
        let mut cfg = TrainConfig::new(53);
        cfg.epochs = 4;
        cfg.batch_size = 4;
        cfg.base_lr = 1e14;
        cfg.min_lr = 1e12;

        match train_decoder(&enc, &mut dec, &data, &cfg, "h", None) {
            Err(TrainError::NonFiniteLoss { lr, .. }) => assert!(lr > 0.0),
            other => panic!("expected a non-finite abort, got {other:?}"),
        }
    }

    #[test]
    fn config_validation_rejects_inverted_rates() {
        let mut cfg = TrainConfig::new(1);
        cfg.base_lr = 1e-5;
        cfg.min_lr = 1e-3;
        assert!(matches!(cfg.validate(), Err(TrainError::BadConfig(_))));
        let mut cfg = TrainConfig::new(1);
        cfg.epochs = 0;
        assert!(cfg.validate().is_err());
        assert!(TrainConfig::new(1).validate().is_ok());

        // Variant tags ride through serialization with the rest.
        let mut cfg = TrainConfig::new(5);
        cfg.variant_tag = "hierarchical_film".into();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: TrainConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(cfg, back);
        let _ = FusionVariant::HierarchicalFilm;
    }
}
