//! The end-to-end experiment pipeline and its verdicts, shared by the
//! command-line `repro` entry point and the integration test suite.
//!
//! One [`run_pipeline`] call takes a resolved configuration and an output
//! directory and produces every artifact of a full study at one seed:
//! the written dataset, a contrastively pretrained and frozen encoder,
//! three trained decoder arms (hierarchical fusion on the frozen encoder,
//! the cross-attention fusion baseline, and a joint full-finetune of the
//! hierarchical variant), metric reports for each arm on both test
//! splits, detector-alone and hybrid reports on the held-out-category
//! split, and an optional stepwise-interaction summary. Everything on
//! disk is byte-stable for a fixed configuration: rerunning into a fresh
//! directory reproduces every file exactly (wall-clock fields are zeroed
//! in written reports for that reason).
//!
//! [`trend_verdicts`] condenses a batch of such runs (one per seed) into
//! the study's headline claims — pass/fail per claim with the numbers
//! behind each verdict.

use std::fs;
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Resolved};
use crate::decoder::{Decoder, DecoderError};
use crate::dualenc::{
    contrastive_pretrain, pretrain_disjoint, DualEncoder, EncoderError, PretrainError,
    PretrainReport, TextProvenance, Vocabulary,
};
use crate::evalkit::{
    evaluate, run_sa_trial, sa_score, DecoderPredictor, DetectorTop1Predictor, EvalError,
    HybridPredictor, MaskPredictor, MetricsReport, RunIdentity, SaTrial,
};
use crate::raster::BitMask;
use crate::scenegen::{
    build_caption_corpus, build_dataset, compute_mrq, render_scene_image, vocabulary, Catalog,
    Dataset, PersistError, SceneError, SplitData,
};
use crate::train::{train_decoder, train_full_finetune, TrainError, TrainReport};
use crate::Real;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Persist(#[from] PersistError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Pretrain(#[from] PretrainError),
    #[error(transparent)]
    Decoder(#[from] DecoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("pipeline io: {0}")]
    Io(#[from] std::io::Error),
}

/// One trained decoder arm with its reports on both test splits.
#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub tag: String,
    pub train: TrainReport,
    pub seen: MetricsReport,
    pub unseen: MetricsReport,
}

/// Everything a single-seed pipeline run produces in memory.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub seed: u64,
    pub config_hash: String,
    pub dataset_hash: String,
    pub pretrain: PretrainReport,
    /// Hierarchical fusion on the frozen encoder — the reference arm.
    pub frozen: VariantOutcome,
    /// Cross-attention fusion on the frozen encoder.
    pub cross: VariantOutcome,
    /// Hierarchical fusion with the encoder finetuned jointly.
    pub finetune: VariantOutcome,
    /// The attribute-blind detector alone, held-out-category split.
    pub detector_unseen: MetricsReport,
    /// Detector candidates reranked by the frozen arm's masks.
    pub hybrid_unseen: MetricsReport,
}

/// Writes `value` as pretty JSON plus trailing newline.
///
/// # Errors
///
/// Propagates file-system failures.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), std::io::Error> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    fs::write(path, text)
}

fn write_train_report(dir: &Path, report: &TrainReport) -> Result<(), std::io::Error> {
    let mut stable = report.clone();
    stable.wall_clock_secs = 0.0;
    write_json(&dir.join("train_report.json"), &stable)
}

/// The seeds of the canonical replication battery.
pub const TREND_SEEDS: [u64; 3] = [13, 17, 23];

/// Arm tags used across reports and directories.
pub const TAG_FROZEN: &str = "hierarchical_film";
pub const TAG_CROSS: &str = "cross_attention";
pub const TAG_FINETUNE: &str = "hierarchical_film_finetune";

/// Builds the dataset per the configuration and persists it under
/// `dir`, returning it with its content hash.
///
/// # Errors
///
/// Generation and persistence failures.
pub fn generate_and_write_dataset(
    settings: &Resolved,
    dir: &Path,
) -> Result<(Dataset, String), PipelineError> {
    let catalog = Catalog::standard();
    let ds = build_dataset(&catalog, &settings.dataset_config())?;
    fs::create_dir_all(dir)?;
    let hash = crate::scenegen::write_dataset(&ds, dir)?;
    Ok((ds, hash))
}

/// Builds a fresh dual encoder and pretrains it on a captioned-scene
/// corpus under the configured provenance regime. The encoder comes back
/// **unfrozen**; callers freeze it for the frozen-feature arms.
///
/// # Errors
///
/// Configuration, generation, and pretraining failures.
pub fn pretrain_encoder(
    settings: &Resolved,
) -> Result<(DualEncoder<Real>, PretrainReport), PipelineError> {
    let catalog = Catalog::standard();
    let cfg = settings.pretrain_config();
    let corpus = build_caption_corpus(&catalog, cfg.n_pairs, settings.seed())?;
    let vocab = Vocabulary::from_words(vocabulary(&catalog));
    let mut enc = DualEncoder::<Real>::new(settings.encoder_config()?, vocab, settings.seed())?;
    let report = match settings.provenance()? {
        TextProvenance::Joint => contrastive_pretrain(&mut enc, &corpus, &cfg)?,
        TextProvenance::Disjoint => pretrain_disjoint(&mut enc, &corpus, &cfg)?,
    };
    Ok((enc, report))
}

/// Trains one decoder arm and evaluates it on both test splits, writing
/// the checkpoint and training report under `out/<tag>`.
///
/// The arm's variant comes from the settings' `decoder.variant`; its
/// freeze flag from `train.freeze_encoder`. A frozen arm trains against
/// the given encoder untouched; the finetune arm mutates `enc`, so pass
/// a dedicated (thawed) copy for it.
///
/// # Errors
///
/// Training, evaluation, and persistence failures.
#[allow(clippy::too_many_arguments)]
pub fn run_arm(
    settings: &Resolved,
    enc: &mut DualEncoder<Real>,
    ds: &Dataset,
    dataset_hash: &str,
    out: &Path,
    tag: &str,
) -> Result<VariantOutcome, PipelineError> {
    let arm_dir = out.join(tag);
    fs::create_dir_all(&arm_dir)?;

    let dec_cfg = settings.decoder_config(&enc.config)?;
    let mut dec = Decoder::new(dec_cfg, enc.fingerprint(), settings.seed())?;
    let mut train_cfg = settings.train_config();
    train_cfg.variant_tag = tag.to_string();

    let ckpt = arm_dir.join("decoder.ckpt");
    let train = if train_cfg.freeze_encoder {
        train_decoder(enc, &mut dec, &ds.train, &train_cfg, dataset_hash, Some(&ckpt))?
    } else {
        let report =
            train_full_finetune(enc, &mut dec, &ds.train, &train_cfg, dataset_hash, Some(&ckpt))?;
        enc.save(&arm_dir.join("encoder_finetuned.ckpt"))?;
        report
    };
    write_train_report(&arm_dir, &train)?;

    let predictor = DecoderPredictor::new(enc, &dec, tag);
    let identity = RunIdentity {
        variant_tag: tag.to_string(),
        checkpoint_fingerprint: predictor.fingerprint(),
        dataset_hash: dataset_hash.to_string(),
        seed: settings.seed(),
    };
    let metrics = settings.metrics_config();
    let seen = evaluate(&predictor, &ds.test_seen, &metrics, &identity)?;
    let unseen = evaluate(&predictor, &ds.test_unseen, &metrics, &identity)?;

    Ok(VariantOutcome {
        tag: tag.to_string(),
        train,
        seen,
        unseen,
    })
}

/// Runs the stepwise-interaction protocol with a decoder over the scenes
/// of `data`: up to `n_trials` trials, one per scene in id order, each
/// targeting the first object with a computable minimal description.
///
/// # Errors
///
/// Prediction failures; scenes without a distinguishable target are
/// skipped, not errors.
pub fn sa_trials_over_split(
    enc: &DualEncoder<Real>,
    dec: &Decoder<Real>,
    catalog: &Catalog,
    data: &SplitData,
    n_trials: usize,
    seed: u64,
) -> Result<Vec<SaTrial>, PipelineError> {
    let mut trials = Vec::new();
    for scene in data.scenes.values() {
        if trials.len() >= n_trials {
            break;
        }
        let Some(target) = scene
            .objects
            .iter()
            .find(|o| compute_mrq(scene, o.id).is_ok())
            .map(|o| o.id)
        else {
            continue;
        };
        let image = render_scene_image(catalog, scene);
        let mut predict = |q: &str| -> Result<BitMask, EvalError> {
            Ok(crate::decoder::predict_mask(enc, dec, &image, q)?.binary_mask)
        };
        trials.push(run_sa_trial(scene, catalog, target, &mut predict, seed)?);
    }
    Ok(trials)
}

/// Runs the full single-seed study into `out`; see the module docs for
/// the artifact layout. `progress` receives one line per completed
/// stage.
///
/// # Errors
///
/// The first failure of any stage.
pub fn run_pipeline(
    settings: &Resolved,
    out: &Path,
    progress: &mut dyn FnMut(&str),
) -> Result<PipelineOutput, PipelineError> {
    let seed = settings.seed();
    let catalog = Catalog::standard();
    fs::create_dir_all(out)?;
    fs::write(out.join("config.snapshot"), settings.snapshot())?;
    let config_hash = settings.config_hash();

    let (ds, dataset_hash) = generate_and_write_dataset(settings, &out.join("dataset"))?;
    progress(&format!(
        "dataset written: {} train / {} seen / {} unseen samples, hash {}",
        ds.train.samples.len(),
        ds.test_seen.samples.len(),
        ds.test_unseen.samples.len(),
        &dataset_hash[..12]
    ));

    let (mut enc, pretrain) = pretrain_encoder(settings)?;
    enc.freeze();
    let encoder_path = out.join("encoder.ckpt");
    enc.save(&encoder_path)?;
    {
        let mut stable = pretrain.clone();
        stable.wall_clock_secs = 0.0;
        write_json(&out.join("pretrain_report.json"), &stable)?;
    }
    progress(&format!(
        "encoder pretrained: retrieval i→t {:.3}, t→i {:.3}; frozen and saved",
        pretrain.retrieval_image_to_text, pretrain.retrieval_text_to_image
    ));

    let frozen = run_arm(settings, &mut enc, &ds, &dataset_hash, out, TAG_FROZEN)?;
    progress(&format!(
        "arm {TAG_FROZEN}: seen IoU {:.3}, unseen IoU {:.3}",
        frozen.seen.mean_iou, frozen.unseen.mean_iou
    ));

    let cross = {
        let mut s = settings.clone();
        s.apply("decoder.variant", "cross_attention")?;
        run_arm(&s, &mut enc, &ds, &dataset_hash, out, TAG_CROSS)?
    };
    progress(&format!(
        "arm {TAG_CROSS}: seen IoU {:.3}, unseen IoU {:.3}",
        cross.seen.mean_iou, cross.unseen.mean_iou
    ));

    let finetune = {
        let mut s = settings.clone();
        s.apply("train.freeze_encoder", "false")?;
        let mut enc_ft = DualEncoder::<Real>::load(&encoder_path)?;
        enc_ft.thaw();
        run_arm(&s, &mut enc_ft, &ds, &dataset_hash, out, TAG_FINETUNE)?
    };
    progress(&format!(
        "arm {TAG_FINETUNE}: seen IoU {:.3}, unseen IoU {:.3}",
        finetune.seen.mean_iou, finetune.unseen.mean_iou
    ));

    // Reload the frozen arm's decoder for the hybrid and interaction
    // stages.
    let dec_frozen = Decoder::<Real>::load(
        &out.join(TAG_FROZEN).join("decoder.ckpt"),
        Some(&enc.fingerprint()),
    )?;

    let metrics = settings.metrics_config();
    let det_cfg = settings.detector_config();
    let detector = DetectorTop1Predictor {
        catalog: &catalog,
        config: det_cfg.clone(),
        seed,
    };
    let det_identity = RunIdentity {
        variant_tag: detector.tag(),
        checkpoint_fingerprint: detector.fingerprint(),
        dataset_hash: dataset_hash.clone(),
        seed,
    };
    let detector_unseen = evaluate(&detector, &ds.test_unseen, &metrics, &det_identity)?;
    progress(&format!(
        "detector alone: unseen IoU {:.3}",
        detector_unseen.mean_iou
    ));

    let hybrid = HybridPredictor {
        enc: &enc,
        dec: &dec_frozen,
        catalog: &catalog,
        config: det_cfg,
        seed,
        tag: "hybrid".into(),
    };
    let hyb_identity = RunIdentity {
        variant_tag: hybrid.tag(),
        checkpoint_fingerprint: hybrid.fingerprint(),
        dataset_hash: dataset_hash.clone(),
        seed,
    };
    let hybrid_unseen = evaluate(&hybrid, &ds.test_unseen, &metrics, &hyb_identity)?;
    progress(&format!("hybrid: unseen IoU {:.3}", hybrid_unseen.mean_iou));

    let mut frozen = frozen;
    if settings.sa_trials() > 0 {
        let trials = sa_trials_over_split(
            &enc,
            &dec_frozen,
            &catalog,
            &ds.test_unseen,
            settings.sa_trials(),
            seed,
        )?;
        if !trials.is_empty() {
            let summary = sa_score(&trials)?;
            progress(&format!(
                "interaction score over {} trials: {:.1}",
                summary.n_trials, summary.mean_sa
            ));
            frozen.unseen.sa = Some(summary);
        }
    }

    let reports = vec![
        frozen.seen.clone(),
        frozen.unseen.clone(),
        cross.seen.clone(),
        cross.unseen.clone(),
        finetune.seen.clone(),
        finetune.unseen.clone(),
        detector_unseen.clone(),
        hybrid_unseen.clone(),
    ];
    crate::evalkit::emit_report(&reports, &out.join("reports"))?;

    write_json(
        &out.join("run.json"),
        &serde_json::json!({
            "command": "pipeline",
            "seed": seed,
            "config_hash": config_hash,
            "dataset_hash": dataset_hash,
        }),
    )?;

    Ok(PipelineOutput {
        seed,
        config_hash,
        dataset_hash,
        pretrain,
        frozen,
        cross,
        finetune,
        detector_unseen,
        hybrid_unseen,
    })
}

/// Overrides for a minutes-scale smoke profile: tiny dataset, short
/// schedules, narrow decoder. The smoke run exercises every stage and
/// artifact, not the headline numbers.
pub fn smoke_overrides() -> Vec<&'static str> {
    vec![
        "dataset.n_train=48",
        "dataset.n_test_seen=16",
        "dataset.n_test_unseen=16",
        "pretrain.n_pairs=96",
        "pretrain.heldout=16",
        "pretrain.batch_size=16",
        "pretrain.epochs=2",
        "pretrain.mlm_epochs=1",
        "decoder.width=32",
        "train.epochs=3",
        "train.batch_size=8",
        "eval.sa_trials=4",
    ]
}

/// One pass/fail verdict over a batch of seeded runs.
#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn bucket_mean(report: &MetricsReport, a: usize) -> Option<f64> {
    report
        .buckets
        .iter()
        .find(|b| b.attribute_count == a)
        .map(|b| b.mean_iou)
}

fn fmt_per_seed(outs: &[PipelineOutput], f: impl Fn(&PipelineOutput) -> String) -> String {
    outs.iter()
        .map(|o| format!("seed {}: {}", o.seed, f(o)))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Judges the study's trend claims over one pipeline run per seed.
/// Majority claims need the ordering in more than half the seeds; level
/// claims must hold at every seed.
pub fn trend_verdicts(outs: &[PipelineOutput]) -> Vec<CriterionOutcome> {
    let mut verdicts = Vec::new();
    let n = outs.len();
    let majority = n / 2 + 1;

    let seen_target = 0.75;
    verdicts.push(CriterionOutcome {
        name: "seen-split grounding: hierarchical arm mean IoU >= 0.75",
        passed: outs.iter().all(|o| o.frozen.seen.mean_iou >= seen_target),
        detail: fmt_per_seed(outs, |o| format!("{:.3}", o.frozen.seen.mean_iou)),
    });

    let wins = outs
        .iter()
        .filter(|o| o.frozen.unseen.mean_iou > o.finetune.unseen.mean_iou)
        .count();
    verdicts.push(CriterionOutcome {
        name: "frozen encoder generalizes: unseen IoU above the full finetune in most seeds",
        passed: wins >= majority,
        detail: format!(
            "{wins}/{n} seeds; {}",
            fmt_per_seed(outs, |o| format!(
                "frozen {:.3} vs finetune {:.3}",
                o.frozen.unseen.mean_iou, o.finetune.unseen.mean_iou
            ))
        ),
    });

    let wins = outs
        .iter()
        .filter(|o| o.frozen.unseen.mean_iou >= o.cross.unseen.mean_iou)
        .count();
    verdicts.push(CriterionOutcome {
        name: "fusion ordering: hierarchical FiLM at or above cross-attention on unseen in most seeds",
        passed: wins >= majority,
        detail: format!(
            "{wins}/{n} seeds; {}",
            fmt_per_seed(outs, |o| format!(
                "film {:.3} vs xattn {:.3}",
                o.frozen.unseen.mean_iou, o.cross.unseen.mean_iou
            ))
        ),
    });

    let falloff = 0.10;
    verdicts.push(CriterionOutcome {
        name: "detector falloff: richest-query bucket at least 10 IoU points under the plainest",
        passed: outs.iter().all(|o| {
            match (
                bucket_mean(&o.detector_unseen, 1),
                bucket_mean(&o.detector_unseen, 4),
            ) {
                (Some(a1), Some(a4)) => a1 - a4 >= falloff,
                _ => false,
            }
        }),
        detail: fmt_per_seed(outs, |o| {
            format!(
                "A1 {:.3} vs A4 {:.3}",
                bucket_mean(&o.detector_unseen, 1).unwrap_or(f64::NAN),
                bucket_mean(&o.detector_unseen, 4).unwrap_or(f64::NAN)
            )
        }),
    });

    let hybrid_ok = |o: &PipelineOutput| {
        let floor = o
            .detector_unseen
            .mean_iou
            .max(o.frozen.unseen.mean_iou)
            - 0.01;
        let overall = o.hybrid_unseen.mean_iou >= floor;
        let rich = [3usize, 4].iter().all(|&a| {
            match (bucket_mean(&o.hybrid_unseen, a), bucket_mean(&o.detector_unseen, a)) {
                (Some(h), Some(d)) => h > d,
                _ => false,
            }
        });
        overall && rich
    };
    let wins = outs.iter().filter(|o| hybrid_ok(o)).count();
    verdicts.push(CriterionOutcome {
        name: "hybrid gain: within a point of the best single stage overall and above the detector on attribute-rich buckets in most seeds",
        passed: wins >= majority,
        detail: format!(
            "{wins}/{n} seeds; {}",
            fmt_per_seed(outs, |o| format!(
                "hybrid {:.3} vs det {:.3} / dec {:.3}",
                o.hybrid_unseen.mean_iou, o.detector_unseen.mean_iou, o.frozen.unseen.mean_iou
            ))
        ),
    });

    let ratio_cap = 0.15;
    verdicts.push(CriterionOutcome {
        name: "parameter economy: trainable decoder under 15% of the total parameter count",
        passed: outs
            .iter()
            .all(|o| o.frozen.train.decoder_param_ratio < ratio_cap),
        detail: fmt_per_seed(outs, |o| {
            format!("{:.1}%", 100.0 * o.frozen.train.decoder_param_ratio)
        }),
    });

    verdicts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::resolve;

    #[test]
    fn smoke_profile_overrides_apply_cleanly() {
        let r = resolve(None, smoke_overrides()).unwrap();
        assert_eq!(r.dataset_config().n_train, 48);
        assert_eq!(r.train_config().epochs, 3);
        let enc = r.encoder_config().unwrap();
        assert_eq!(r.decoder_config(&enc).unwrap().d, 32);
    }
}
