//! Encoder pretraining: symmetric in-batch contrastive alignment, plus a
//! variant whose text tower never sees images (masked-word training first,
//! then vision-only alignment against the fixed text tower).

use ndarray::{Array2, ArrayViewD, ArrayViewMutD};
use rand::Rng;
use thiserror::Error;

use super::tokenizer::{Encoded, MASK};
use super::vision::VisionTower;
use super::{ContrastiveScale, DualEncoder, TextProvenance};
use crate::nn::{qualify, zero_grads, Adam, Linear, ParamWalk};
use crate::raster::RgbImage;
use crate::rng::{rng_for, stream};
use crate::scalar::{sc, Scalar};
use crate::scenegen::CaptionedImage;
use crate::train::lr_at_step;

#[derive(Clone, Debug, PartialEq)]
pub struct PretrainConfig {
    pub master_seed: u64,
    /// Pairs drawn from the corpus (train + heldout).
    pub n_pairs: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub lr_min: f64,
    /// Pairs reserved (from the corpus tail) for retrieval evaluation.
    pub heldout: usize,
    /// Masked-word phase knobs (text-only provenance).
    pub mlm_epochs: usize,
    pub mlm_lr: f64,
    pub mlm_mask_frac: f64,
}

impl PretrainConfig {
    pub fn new(master_seed: u64) -> Self {
        PretrainConfig {
            master_seed,
            n_pairs: 2048,
            batch_size: 32,
            epochs: 6,
            lr: 1e-3,
            lr_min: 1e-5,
            heldout: 64,
            mlm_epochs: 4,
            mlm_lr: 1e-3,
            mlm_mask_frac: 0.15,
        }
    }
}

#[derive(Debug, Error)]
pub enum PretrainError {
    #[error("in-batch contrast needs at least 2 pairs per batch, got {0}")]
    BatchTooSmall(usize),
    #[error("corpus holds {have} pairs but the run needs {needed}")]
    CorpusTooSmall { have: usize, needed: usize },
    #[error("held-out slice of {heldout} leaves no full training batch from {n_pairs} pairs")]
    NothingToTrainOn { n_pairs: usize, heldout: usize },
    #[error("non-finite contrastive loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PretrainReport {
    /// Mean contrastive loss per epoch (the alignment phase).
    pub epoch_losses: Vec<f64>,
    /// Loss of the very first batch, before any update. With unit-norm
    /// random embeddings this sits near `ln(batch_size)`.
    pub step0_loss: f64,
    pub retrieval_image_to_text: f64,
    pub retrieval_text_to_image: f64,
    pub final_temperature: f64,
    pub wall_clock_secs: f64,
    /// Mean masked-word loss per epoch; empty for joint provenance.
    pub mlm_epoch_losses: Vec<f64>,
}

/// Symmetric cross-entropy over a square similarity-logit matrix whose
/// diagonal pairs match. Returns the scalar loss and `∂loss/∂logits`.
fn symmetric_ce<S: Scalar>(logits: &Array2<S>) -> (f64, Array2<S>) {
    let b = logits.nrows();
    assert_eq!(b, logits.ncols());
    let inv_b = 1.0 / b as f64;

    // Loss in f64 through the log-sum-exp form, both directions.
    let mut loss = 0.0;
    for dir in 0..2 {
        for i in 0..b {
            let row: Vec<f64> = (0..b)
                .map(|j| {
                    let v = if dir == 0 { logits[[i, j]] } else { logits[[j, i]] };
                    v.to_f64().unwrap()
                })
                .collect();
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += (lse - row[i]) * inv_b;
        }
    }
    loss *= 0.5;

    // Gradient: ½·(row-softmax + col-softmax − 2I)/B.
    let p_rows = crate::nn::softmax_rows(logits);
    let p_cols = crate::nn::softmax_rows(&logits.t().to_owned());
    let half_inv_b = sc::<S>(0.5 * inv_b);
    let mut d = Array2::zeros((b, b));
    for i in 0..b {
        for j in 0..b {
            let mut g = p_rows[[i, j]] + p_cols[[j, i]];
            if i == j {
                g -= sc::<S>(2.0);
            }
            d[[i, j]] = g * half_inv_b;
        }
    }
    (loss, d)
}

/// Top-1 retrieval accuracy in both directions for matched pairs.
fn retrieval_top1<S: Scalar>(img: &Array2<S>, txt: &Array2<S>) -> (f64, f64) {
    let sims = img.dot(&txt.t());
    let n = sims.nrows();
    let mut i2t = 0usize;
    let mut t2i = 0usize;
    for i in 0..n {
        let row_best = (0..n)
            .max_by(|&a, &c| sims[[i, a]].partial_cmp(&sims[[i, c]]).unwrap())
            .unwrap();
        let col_best = (0..n)
            .max_by(|&a, &c| sims[[a, i]].partial_cmp(&sims[[c, i]]).unwrap())
            .unwrap();
        i2t += (row_best == i) as usize;
        t2i += (col_best == i) as usize;
    }
    (i2t as f64 / n as f64, t2i as f64 / n as f64)
}

fn shuffled(n: usize, rng: &mut rand_chacha::ChaCha12Rng) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
    order
}

fn encode_images_chunked<S: Scalar>(
    vision: &VisionTower<S>,
    imgs: &[&RgbImage],
    chunk: usize,
) -> Array2<S> {
    let d = {
        let pr = vision.patch_rows(&imgs[..1]);
        vision.forward(&pr, 1, &[]).0.global.ncols()
    };
    let mut out = Array2::zeros((imgs.len(), d));
    for (ci, group) in imgs.chunks(chunk).enumerate() {
        let pr = vision.patch_rows(group);
        let (enc, _) = vision.forward(&pr, group.len(), &[]);
        for (k, row) in enc.global.outer_iter().enumerate() {
            out.row_mut(ci * chunk + k).assign(&row);
        }
    }
    out
}

fn encode_texts_chunked<S: Scalar>(
    enc: &DualEncoder<S>,
    texts: &[Encoded],
    chunk: usize,
) -> Array2<S> {
    let mut out = Array2::zeros((texts.len(), enc.config.d_embed));
    for (ci, group) in texts.chunks(chunk).enumerate() {
        let (t, _) = enc.text.forward(group);
        for (k, row) in t.pooled.outer_iter().enumerate() {
            out.row_mut(ci * chunk + k).assign(&row);
        }
    }
    out
}

fn check_sizes(corpus: &[CaptionedImage], cfg: &PretrainConfig) -> Result<(), PretrainError> {
    if cfg.batch_size < 2 {
        return Err(PretrainError::BatchTooSmall(cfg.batch_size));
    }
    if corpus.len() < cfg.n_pairs {
        return Err(PretrainError::CorpusTooSmall {
            have: corpus.len(),
            needed: cfg.n_pairs,
        });
    }
    if cfg.heldout + cfg.batch_size > cfg.n_pairs {
        return Err(PretrainError::NothingToTrainOn {
            n_pairs: cfg.n_pairs,
            heldout: cfg.heldout,
        });
    }
    Ok(())
}

/// Trains both towers jointly with the symmetric in-batch objective.
pub fn contrastive_pretrain<S: Scalar>(
    enc: &mut DualEncoder<S>,
    corpus: &[CaptionedImage],
    cfg: &PretrainConfig,
) -> Result<PretrainReport, PretrainError> {
    check_sizes(corpus, cfg)?;
    let start = std::time::Instant::now();
    let pairs = &corpus[..cfg.n_pairs];
    let n_train = cfg.n_pairs - cfg.heldout;
    let encoded: Vec<Encoded> = pairs.iter().map(|p| enc.tokenize(&p.caption)).collect();

    let bpe = n_train / cfg.batch_size;
    let total_steps = bpe * cfg.epochs;
    let mut adam: Adam<S> = Adam::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut step0_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.master_seed, stream::PRETRAIN_SHUFFLE, epoch as u64);
        let order = shuffled(n_train, &mut rng);
        let mut sum = 0.0;
        for bi in 0..bpe {
            let idx = &order[bi * cfg.batch_size..(bi + 1) * cfg.batch_size];
            let imgs: Vec<&RgbImage> = idx.iter().map(|&i| &pairs[i].image).collect();
            let texts: Vec<Encoded> = idx.iter().map(|&i| encoded[i].clone()).collect();

            let patches = enc.vision.patch_rows(&imgs);
            let (venc, vcache) = enc.vision.forward(&patches, imgs.len(), &[]);
            let (tenc, tcache) = enc.text.forward(&texts);

            let s = enc.scale.value();
            let logits = venc.global.dot(&tenc.pooled.t()) * s;
            let (loss, d_logits) = symmetric_ce(&logits);
            if !loss.is_finite() {
                return Err(PretrainError::NonFinite { epoch, batch: bi });
            }
            if step == 0 {
                step0_loss = loss;
            }
            sum += loss;

            let d_img = d_logits.dot(&tenc.pooled) * s;
            let d_txt = d_logits.t().dot(&venc.global) * s;
            let d_scale_sum = (&d_logits * &logits).sum() / s;

            zero_grads(enc);
            enc.vision.backward(&vcache, Some(&d_img), &[]);
            enc.text.backward(&tcache, Some(&d_txt), None);
            if !enc.scale.capped() {
                enc.scale.g[0] += d_scale_sum * s;
            }

            let lr = lr_at_step(step, total_steps, cfg.lr, cfg.lr_min)
                .expect("step stays within the horizon");
            adam.step(sc(lr), enc);
            step += 1;
        }
        epoch_losses.push(sum / bpe as f64);
    }

    let held = &pairs[n_train..];
    let held_imgs: Vec<&RgbImage> = held.iter().map(|p| &p.image).collect();
    let img_emb = encode_images_chunked(&enc.vision, &held_imgs, cfg.batch_size);
    let txt_emb = encode_texts_chunked(enc, &encoded[n_train..], cfg.batch_size);
    let (i2t, t2i) = retrieval_top1(&img_emb, &txt_emb);

    Ok(PretrainReport {
        epoch_losses,
        step0_loss,
        retrieval_image_to_text: i2t,
        retrieval_text_to_image: t2i,
        final_temperature: enc.scale.value().to_f64().unwrap(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        mlm_epoch_losses: Vec::new(),
    })
}

/// Adam target for the masked-word phase: text tower plus throwaway head.
struct TextAndHead<'a, S: Scalar> {
    tower: &'a mut super::text::TextTower<S>,
    head: &'a mut Linear<S>,
}

impl<S: Scalar> ParamWalk<S> for TextAndHead<'_, S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.tower.walk(&qualify(prefix, "tower"), f);
        self.head.walk(&qualify(prefix, "head"), f);
    }
    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.tower.walk_mut(&qualify(prefix, "tower"), f);
        self.head.walk_mut(&qualify(prefix, "head"), f);
    }
    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.tower.walk_pairs(&qualify(prefix, "tower"), f);
        self.head.walk_pairs(&qualify(prefix, "head"), f);
    }
}

/// Adam target for the alignment phase with a fixed text tower.
struct VisionAndScale<'a, S: Scalar> {
    vision: &'a mut VisionTower<S>,
    scale: &'a mut ContrastiveScale<S>,
}

impl<S: Scalar> ParamWalk<S> for VisionAndScale<'_, S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.vision.walk(&qualify(prefix, "vision"), f);
        self.scale.walk(prefix, f);
    }
    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.vision.walk_mut(&qualify(prefix, "vision"), f);
        self.scale.walk_mut(prefix, f);
    }
    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.vision.walk_pairs(&qualify(prefix, "vision"), f);
        self.scale.walk_pairs(prefix, f);
    }
}

/// Masked-word training of the text tower alone. Each real token is masked
/// with probability `mask_frac` (80% mask token, 10% random word, 10%
/// unchanged) and a linear head predicts the original id.
fn mlm_train<S: Scalar>(
    enc: &mut DualEncoder<S>,
    encoded: &[Encoded],
    cfg: &PretrainConfig,
) -> Result<Vec<f64>, PretrainError> {
    let d = enc.config.d_model_t;
    let v = enc.vocab.size();
    let l = enc.config.max_text_len;
    let word_ids = enc.vocab.word_id_range();
    let mut head: Linear<S> = {
        let mut rng = rng_for(cfg.master_seed, stream::ENCODER_INIT, 1);
        Linear::new(&mut rng, d, v)
    };
    let mut adam: Adam<S> = Adam::new();
    let bpe = encoded.len() / cfg.batch_size;
    let total_steps = (bpe * cfg.mlm_epochs).max(1);
    let mut losses = Vec::with_capacity(cfg.mlm_epochs);
    let mut step = 0usize;

    for epoch in 0..cfg.mlm_epochs {
        let mut rng = rng_for(cfg.master_seed, stream::MLM_MASK, epoch as u64);
        let order = shuffled(encoded.len(), &mut rng);
        let mut sum = 0.0;
        let mut counted = 0usize;
        for bi in 0..bpe {
            let idx = &order[bi * cfg.batch_size..(bi + 1) * cfg.batch_size];
            let mut batch: Vec<Encoded> = idx.iter().map(|&i| encoded[i].clone()).collect();
            // Pick positions and corrupt them.
            let mut targets: Vec<(usize, u32)> = Vec::new();
            for (si, e) in batch.iter_mut().enumerate() {
                for p in 0..e.n_real {
                    if rng.gen_range(0.0..1.0) < cfg.mlm_mask_frac {
                        targets.push((si * l + p, e.ids[p]));
                        let r: f64 = rng.gen_range(0.0..1.0);
                        if r < 0.8 {
                            e.ids[p] = MASK;
                        } else if r < 0.9 {
                            e.ids[p] = rng.gen_range(word_ids.clone());
                        }
                    }
                }
            }
            if targets.is_empty() {
                continue;
            }

            let (tenc, tcache) = enc.text.forward(&batch);
            let mut x_sel = Array2::zeros((targets.len(), d));
            for (k, (row, _)) in targets.iter().enumerate() {
                x_sel.row_mut(k).assign(&tenc.states.row(*row));
            }
            let logits = head.forward(&x_sel);

            let m = targets.len();
            let inv_m = 1.0 / m as f64;
            let mut loss = 0.0;
            let probs = crate::nn::softmax_rows(&logits);
            let mut d_logits = probs.clone();
            for (k, (_, tid)) in targets.iter().enumerate() {
                let row: Vec<f64> = logits.row(k).iter().map(|x| x.to_f64().unwrap()).collect();
                let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = mx + row.iter().map(|x| (x - mx).exp()).sum::<f64>().ln();
                loss += (lse - row[*tid as usize]) * inv_m;
                d_logits[[k, *tid as usize]] -= S::one();
            }
            d_logits *= sc::<S>(inv_m);
            if !loss.is_finite() {
                return Err(PretrainError::NonFinite { epoch, batch: bi });
            }

            zero_grads(&mut enc.text);
            head.gw.fill(S::zero());
            head.gb.fill(S::zero());
            let d_sel = head.backward(&x_sel, &d_logits);
            let mut d_states = Array2::zeros((batch.len() * l, d));
            for (k, (row, _)) in targets.iter().enumerate() {
                d_states.row_mut(*row).assign(&d_sel.row(k));
            }
            enc.text.backward(&tcache, None, Some(&d_states));

            let lr = lr_at_step(step, total_steps, cfg.mlm_lr, cfg.lr_min)
                .expect("step stays within the horizon");
            let mut target = TextAndHead {
                tower: &mut enc.text,
                head: &mut head,
            };
            adam.step(sc(lr), &mut target);
            step += 1;
            sum += loss;
            counted += 1;
        }
        losses.push(if counted > 0 { sum / counted as f64 } else { 0.0 });
    }
    Ok(losses)
}

/// Disjoint-provenance pretraining: the text tower learns from captions
/// alone (masked words), then stays fixed while the vision tower and the
/// temperature align to it contrastively.
pub fn pretrain_disjoint<S: Scalar>(
    enc: &mut DualEncoder<S>,
    corpus: &[CaptionedImage],
    cfg: &PretrainConfig,
) -> Result<PretrainReport, PretrainError> {
    check_sizes(corpus, cfg)?;
    let start = std::time::Instant::now();
    let pairs = &corpus[..cfg.n_pairs];
    let n_train = cfg.n_pairs - cfg.heldout;
    let encoded: Vec<Encoded> = pairs.iter().map(|p| enc.tokenize(&p.caption)).collect();

    let mlm_epoch_losses = mlm_train(enc, &encoded[..n_train], cfg)?;

    // Text is now fixed: embed every caption once.
    let txt_emb = encode_texts_chunked(enc, &encoded, cfg.batch_size);

    let bpe = n_train / cfg.batch_size;
    let total_steps = bpe * cfg.epochs;
    let mut adam: Adam<S> = Adam::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut step = 0usize;
    let mut step0_loss = f64::NAN;

    for epoch in 0..cfg.epochs {
        let mut rng = rng_for(cfg.master_seed, stream::PRETRAIN_SHUFFLE, epoch as u64);
        let order = shuffled(n_train, &mut rng);
        let mut sum = 0.0;
        for bi in 0..bpe {
            let idx = &order[bi * cfg.batch_size..(bi + 1) * cfg.batch_size];
            let imgs: Vec<&RgbImage> = idx.iter().map(|&i| &pairs[i].image).collect();
            let mut txt = Array2::zeros((idx.len(), enc.config.d_embed));
            for (k, &i) in idx.iter().enumerate() {
                txt.row_mut(k).assign(&txt_emb.row(i));
            }

            let patches = enc.vision.patch_rows(&imgs);
            let (venc, vcache) = enc.vision.forward(&patches, imgs.len(), &[]);
            let s = enc.scale.value();
            let logits = venc.global.dot(&txt.t()) * s;
            let (loss, d_logits) = symmetric_ce(&logits);
            if !loss.is_finite() {
                return Err(PretrainError::NonFinite { epoch, batch: bi });
            }
            if step == 0 {
                step0_loss = loss;
            }
            sum += loss;

            let d_img = d_logits.dot(&txt) * s;
            let d_scale_sum = (&d_logits * &logits).sum() / s;

            zero_grads(&mut enc.vision);
            enc.scale.g.fill(S::zero());
            enc.vision.backward(&vcache, Some(&d_img), &[]);
            if !enc.scale.capped() {
                enc.scale.g[0] += d_scale_sum * s;
            }

            let lr = lr_at_step(step, total_steps, cfg.lr, cfg.lr_min)
                .expect("step stays within the horizon");
            let mut target = VisionAndScale {
                vision: &mut enc.vision,
                scale: &mut enc.scale,
            };
            adam.step(sc(lr), &mut target);
            step += 1;
        }
        epoch_losses.push(sum / bpe as f64);
    }

    let held_imgs: Vec<&RgbImage> = pairs[n_train..].iter().map(|p| &p.image).collect();
    let img_emb = encode_images_chunked(&enc.vision, &held_imgs, cfg.batch_size);
    let mut held_txt = Array2::zeros((cfg.heldout, enc.config.d_embed));
    for k in 0..cfg.heldout {
        held_txt.row_mut(k).assign(&txt_emb.row(n_train + k));
    }
    let (i2t, t2i) = retrieval_top1(&img_emb, &held_txt);

    enc.provenance = TextProvenance::Disjoint;
    Ok(PretrainReport {
        epoch_losses,
        step0_loss,
        retrieval_image_to_text: i2t,
        retrieval_text_to_image: t2i,
        final_temperature: enc.scale.value().to_f64().unwrap(),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        mlm_epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::fingerprint;
    use crate::scenegen::{build_caption_corpus, vocabulary, Catalog};

    use super::super::tokenizer::Vocabulary;
    use super::super::{EncoderConfig, TextPool};

    fn tiny_encoder(seed: u64) -> DualEncoder<f32> {
        let config = EncoderConfig {
            image_hw: 128,
            patch: 16,
            d_model_v: 16,
            n_blocks_v: 2,
            n_heads_v: 2,
            mlp_hidden_v: 32,
            d_model_t: 16,
            n_blocks_t: 2,
            n_heads_t: 2,
            mlp_hidden_t: 32,
            max_text_len: 20,
            d_embed: 16,
            taps: vec![1, 2],
            pool: TextPool::Eos,
        };
        let vocab = Vocabulary::from_words(vocabulary(&Catalog::standard()));
        DualEncoder::new(config, vocab, seed).unwrap()
    }

    fn tiny_cfg(seed: u64) -> PretrainConfig {
        PretrainConfig {
            master_seed: seed,
            n_pairs: 72,
            batch_size: 8,
            epochs: 3,
            lr: 1e-3,
            lr_min: 1e-5,
            heldout: 16,
            mlm_epochs: 2,
            mlm_lr: 1e-3,
            mlm_mask_frac: 0.2,
        }
    }

    #[test]
    fn first_batch_loss_sits_near_log_batch_size() {
        let corpus = build_caption_corpus(&Catalog::standard(), 72, 50).unwrap();
        let mut enc = tiny_encoder(50);
        let r = contrastive_pretrain(&mut enc, &corpus, &tiny_cfg(50)).unwrap();
        let expect = (8f64).ln();
        assert!(
            (r.step0_loss - expect).abs() < 0.3,
            "step-0 loss {} too far from ln(8) = {expect:.3}",
            r.step0_loss
        );
    }

    #[test]
    fn loss_falls_and_the_run_is_deterministic() {
        let corpus = build_caption_corpus(&Catalog::standard(), 72, 51).unwrap();
        let mut a = tiny_encoder(51);
        let ra = contrastive_pretrain(&mut a, &corpus, &tiny_cfg(51)).unwrap();
        assert!(
            ra.epoch_losses.last().unwrap() < ra.epoch_losses.first().unwrap(),
            "losses {:?} did not improve",
            ra.epoch_losses
        );

        let mut b = tiny_encoder(51);
        let rb = contrastive_pretrain(&mut b, &corpus, &tiny_cfg(51)).unwrap();
        assert_eq!(ra.epoch_losses, rb.epoch_losses);
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn config_errors_are_specific() {
        let corpus = build_caption_corpus(&Catalog::standard(), 20, 52).unwrap();
        let mut enc = tiny_encoder(52);
        let mut cfg = tiny_cfg(52);
        cfg.batch_size = 1;
        assert!(matches!(
            contrastive_pretrain(&mut enc, &corpus, &cfg),
            Err(PretrainError::BatchTooSmall(1))
        ));
        let mut cfg = tiny_cfg(52);
        cfg.n_pairs = 72;
        assert!(matches!(
            contrastive_pretrain(&mut enc, &corpus, &cfg),
            Err(PretrainError::CorpusTooSmall { have: 20, needed: 72 })
        ));
        let mut cfg = tiny_cfg(52);
        cfg.n_pairs = 20;
        cfg.heldout = 19;
        assert!(matches!(
            contrastive_pretrain(&mut enc, &corpus, &cfg),
            Err(PretrainError::NothingToTrainOn { .. })
        ));
    }

    #[test]
    fn disjoint_keeps_the_text_tower_fixed_during_alignment() {
        let corpus = build_caption_corpus(&Catalog::standard(), 72, 53).unwrap();
        let mut enc = tiny_encoder(53);
        let vision_before = fingerprint(&enc.vision);
        let r = pretrain_disjoint(&mut enc, &corpus, &tiny_cfg(53)).unwrap();

        assert_eq!(r.mlm_epoch_losses.len(), 2);
        assert!(
            r.mlm_epoch_losses[1] < r.mlm_epoch_losses[0],
            "masked-word losses {:?} did not improve",
            r.mlm_epoch_losses
        );
        assert_eq!(enc.provenance, TextProvenance::Disjoint);
        assert_ne!(fingerprint(&enc.vision), vision_before, "vision must move");

        // Alignment must not have touched the text tower: rerun just the
        // masked-word phase on a twin and compare text fingerprints.
        let mut twin = tiny_encoder(53);
        let encoded: Vec<Encoded> = corpus[..72]
            .iter()
            .map(|p| twin.tokenize(&p.caption))
            .collect();
        mlm_train(&mut twin, &encoded[..56], &tiny_cfg(53)).unwrap();
        assert_eq!(fingerprint(&enc.text), fingerprint(&twin.text));
    }
}
