//! `filmseg` — command line front end for the referring-segmentation lab.
//!
//! Every subcommand resolves its configuration the same way (defaults,
//! then an optional `--config` file, then `--set KEY=VALUE` overrides,
//! then the `--seed` shorthand), writes the resolved snapshot beside its
//! artifacts, and stamps a `run.json` manifest with the configuration
//! hash, dataset hash, and seed. Exit codes: 0 success, 1 usage error,
//! 2 configuration error, 3 runtime failure, 4 replication-claim
//! failure. Any nonzero exit also emits a one-line JSON error record on
//! stderr and, best-effort, an `error.json` in the output directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use filmseg_core::accept::{
    generate_and_write_dataset, pretrain_encoder, run_arm, run_pipeline, sa_trials_over_split,
    smoke_overrides, trend_verdicts, write_json, PipelineError, PipelineOutput, TREND_SEEDS,
};
use filmseg_core::config::{resolve, ConfigError, Resolved, ABLATION_AXES};
use filmseg_core::decoder::{Decoder, FusionVariant};
use filmseg_core::dualenc::DualEncoder;
use filmseg_core::evalkit::{
    emit_report, evaluate, sa_score, DecoderPredictor, DetectorTop1Predictor, HybridPredictor,
    MaskPredictor, MetricsReport, ReportFile, RunIdentity, REPORT_SCHEMA_VERSION,
};
use filmseg_core::io::hash::sha256_file;
use filmseg_core::scenegen::{dataset_hash, load_dataset, Catalog, Dataset, SplitData};
use filmseg_core::train::{train_decoder, train_full_finetune};
use filmseg_core::Real;

#[derive(Parser)]
#[command(
    name = "filmseg",
    version,
    about = "Synthetic tabletop referring-segmentation lab: data, encoders, decoders, reports"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines (# comments allowed).
    #[arg(short, long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, later wins.
    #[arg(short = 's', long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`, applied after every --set.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Directory all artifacts are written under.
    #[arg(short, long, global = true, value_name = "DIR", default_value = "runs/out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the three-split dataset under OUT/dataset.
    GenData,
    /// Pretrain the dual encoder; writes OUT/encoder.ckpt frozen.
    Pretrain,
    /// Train one decoder against a pretrained encoder checkpoint.
    Train {
        /// Dataset directory (as written by gen-data).
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        /// Encoder checkpoint (as written by pretrain).
        #[arg(long, value_name = "FILE")]
        encoder: PathBuf,
    },
    /// Evaluate a decoder checkpoint on one dataset split.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        encoder: PathBuf,
        #[arg(long, value_name = "FILE")]
        decoder: PathBuf,
        /// Split to score.
        #[arg(long, value_parser = ["train", "test_seen", "test_unseen"], default_value = "test_unseen")]
        split: String,
        /// Report label; defaults to the checkpoint's fusion variant.
        #[arg(long, value_name = "NAME")]
        tag: Option<String>,
    },
    /// Score decoder, detector, and hybrid selector side by side on the
    /// held-out-category split.
    HybridEval {
        #[arg(long, value_name = "DIR")]
        data: PathBuf,
        #[arg(long, value_name = "FILE")]
        encoder: PathBuf,
        #[arg(long, value_name = "FILE")]
        decoder: PathBuf,
    },
    /// Sweep one configuration axis over a shared dataset; one report
    /// per arm.
    Ablate {
        /// Axis to sweep; see `ablate --axis help`.
        #[arg(long, value_name = "AXIS")]
        axis: String,
    },
    /// Merge report.json files from earlier runs into one combined
    /// report.
    Report {
        /// Report directories (or report.json files) to merge.
        #[arg(long, value_name = "PATH", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Rerun the study end to end and check the headline claims.
    ///
    /// The full profile runs the canonical seed battery (or a single
    /// seed when --seed is given) and judges the claims; the smoke
    /// profile runs a minutes-scale configuration twice and checks that
    /// every artifact is reproduced byte for byte.
    Repro {
        #[arg(long, value_parser = ["full", "smoke"], default_value = "full")]
        profile: String,
    },
}

/// A classified failure: what to print, what to record, how to exit.
struct Failure {
    code: i32,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: 1, kind: "usage", message: message.into() }
    }
    fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, kind: "config", message: message.into() }
    }
    fn runtime(message: impl Into<String>) -> Self {
        Failure { code: 3, kind: "runtime", message: message.into() }
    }
    fn claims(message: impl Into<String>) -> Self {
        Failure { code: 4, kind: "claims", message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::config(e.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            other => Failure::runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::runtime(e.to_string())
    }
}

/// Errors from core stages funnel through `PipelineError`'s
/// conversions so they classify consistently.
macro_rules! via_pipeline {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                PipelineError::from(e).into()
            }
        }
    )*};
}
via_pipeline!(
    filmseg_core::scenegen::SceneError,
    filmseg_core::scenegen::PersistError,
    filmseg_core::dualenc::EncoderError,
    filmseg_core::dualenc::PretrainError,
    filmseg_core::decoder::DecoderError,
    filmseg_core::train::TrainError,
    filmseg_core::evalkit::EvalError
);

fn emit_error_record(out: Option<&Path>, kind: &str, message: &str, code: i32) {
    let record = serde_json::json!({
        "error": { "kind": kind, "message": message, "exit_code": code }
    });
    eprintln!("{record}");
    if let Some(dir) = out {
        if fs::create_dir_all(dir).is_ok() {
            let _ = write_json(&dir.join("error.json"), &record);
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();

    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                std::process::exit(0);
            }
            emit_error_record(None, "usage", &e.to_string(), 1);
            std::process::exit(1);
        }
    };

    let out_dir = cli.common.out.clone();
    if let Err(f) = run(cli) {
        emit_error_record(Some(&out_dir), f.kind, &f.message, f.code);
        std::process::exit(f.code);
    }
}

/// Resolves the effective configuration from the shared flags.
fn settings_for(common: &Common) -> Result<Resolved, Failure> {
    let file_text = match &common.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| {
            Failure::config(format!("cannot read config file {}: {e}", p.display()))
        })?),
        None => None,
    };
    let mut overrides: Vec<String> = common.set.clone();
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    Ok(resolve(file_text.as_deref(), overrides.iter().map(String::as_str))?)
}

/// Writes the resolved snapshot and the run manifest into `out`.
fn finish(
    out: &Path,
    command: &str,
    settings: &Resolved,
    dataset_hash: &str,
) -> Result<(), Failure> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.snapshot"), settings.snapshot())?;
    write_json(
        &out.join("run.json"),
        &serde_json::json!({
            "command": command,
            "seed": settings.seed(),
            "config_hash": settings.config_hash(),
            "dataset_hash": dataset_hash,
        }),
    )?;
    Ok(())
}

fn variant_tag(v: FusionVariant) -> &'static str {
    match v {
        FusionVariant::HierarchicalFilm => "hierarchical_film",
        FusionVariant::SingleFilm => "single_film",
        FusionVariant::CrossAttention => "cross_attention",
    }
}

fn split_data<'d>(ds: &'d Dataset, split: &str) -> &'d SplitData {
    match split {
        "train" => &ds.train,
        "test_seen" => &ds.test_seen,
        _ => &ds.test_unseen,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let out = cli.common.out.clone();
    match cli.command {
        Command::GenData => {
            let settings = settings_for(&cli.common)?;
            let (ds, hash) = generate_and_write_dataset(&settings, &out.join("dataset"))?;
            log::info!(
                "dataset written: {} train / {} seen / {} unseen samples, hash {hash}",
                ds.train.samples.len(),
                ds.test_seen.samples.len(),
                ds.test_unseen.samples.len()
            );
            finish(&out, "gen-data", &settings, &hash)
        }
        Command::Pretrain => {
            let settings = settings_for(&cli.common)?;
            fs::create_dir_all(&out)?;
            let (mut enc, report) = pretrain_encoder(&settings)?;
            enc.freeze();
            enc.save(&out.join("encoder.ckpt"))?;
            log::info!(
                "pretrained in {:.1}s: retrieval image→text {:.3}, text→image {:.3}",
                report.wall_clock_secs,
                report.retrieval_image_to_text,
                report.retrieval_text_to_image
            );
            let mut stable = report;
            stable.wall_clock_secs = 0.0;
            write_json(&out.join("pretrain_report.json"), &stable)?;
            finish(&out, "pretrain", &settings, "")
        }
        Command::Train { data, encoder } => {
            let settings = settings_for(&cli.common)?;
            fs::create_dir_all(&out)?;
            let ds = load_dataset(&data)?;
            let hash = dataset_hash(&data)?;
            let mut enc = DualEncoder::<Real>::load(&encoder)?;
            let cfg = settings.train_config();
            if cfg.freeze_encoder {
                enc.freeze();
            } else {
                enc.thaw();
            }
            let mut dec = Decoder::new(
                settings.decoder_config(&enc.config)?,
                enc.fingerprint(),
                settings.seed(),
            )?;
            let ckpt = out.join("decoder.ckpt");
            let report = if cfg.freeze_encoder {
                train_decoder(&enc, &mut dec, &ds.train, &cfg, &hash, Some(&ckpt))?
            } else {
                let r = train_full_finetune(&mut enc, &mut dec, &ds.train, &cfg, &hash, Some(&ckpt))?;
                enc.save(&out.join("encoder_finetuned.ckpt"))?;
                r
            };
            log::info!(
                "trained {} epochs in {:.1}s: final validation IoU {:.3}, decoder holds {:.1}% of parameters",
                report.epoch_losses.len(),
                report.wall_clock_secs,
                report.val_ious.last().copied().unwrap_or(f64::NAN),
                100.0 * report.decoder_param_ratio
            );
            let mut stable = report;
            stable.wall_clock_secs = 0.0;
            write_json(&out.join("train_report.json"), &stable)?;
            finish(&out, "train", &settings, &hash)
        }
        Command::Eval { data, encoder, decoder, split, tag } => {
            let settings = settings_for(&cli.common)?;
            let ds = load_dataset(&data)?;
            let hash = dataset_hash(&data)?;
            let enc = DualEncoder::<Real>::load(&encoder)?;
            let dec = Decoder::<Real>::load(&decoder, Some(&enc.fingerprint()))?;
            let tag = tag.unwrap_or_else(|| variant_tag(dec.config.variant).to_string());
            let predictor = DecoderPredictor::new(&enc, &dec, &tag);
            let identity = RunIdentity {
                variant_tag: tag.clone(),
                checkpoint_fingerprint: predictor.fingerprint(),
                dataset_hash: hash.clone(),
                seed: settings.seed(),
            };
            let part = split_data(&ds, &split);
            let mut report = evaluate(&predictor, part, &settings.metrics_config(), &identity)?;
            if settings.sa_trials() > 0 {
                let catalog = Catalog::standard();
                let trials = sa_trials_over_split(
                    &enc,
                    &dec,
                    &catalog,
                    part,
                    settings.sa_trials(),
                    settings.seed(),
                )?;
                if !trials.is_empty() {
                    report.sa = Some(sa_score(&trials)?);
                }
            }
            log::info!("{tag} on {split}: mean IoU {:.3}", report.mean_iou);
            if let Some(sa) = &report.sa {
                log::info!("interaction score over {} trials: {:.1}", sa.n_trials, sa.mean_sa);
            }
            emit_report(&[report], &out.join("reports"))?;
            finish(&out, "eval", &settings, &hash)
        }
        Command::HybridEval { data, encoder, decoder } => {
            let settings = settings_for(&cli.common)?;
            let ds = load_dataset(&data)?;
            let hash = dataset_hash(&data)?;
            let enc = DualEncoder::<Real>::load(&encoder)?;
            let dec = Decoder::<Real>::load(&decoder, Some(&enc.fingerprint()))?;
            let catalog = Catalog::standard();
            let metrics = settings.metrics_config();
            let det_cfg = settings.detector_config();
            let seed = settings.seed();
            let part = &ds.test_unseen;

            let dec_tag = variant_tag(dec.config.variant).to_string();
            let dec_pred = DecoderPredictor::new(&enc, &dec, &dec_tag);
            let det_pred = DetectorTop1Predictor {
                catalog: &catalog,
                config: det_cfg.clone(),
                seed,
            };
            let hyb_pred = HybridPredictor {
                enc: &enc,
                dec: &dec,
                catalog: &catalog,
                config: det_cfg,
                seed,
                tag: "hybrid".into(),
            };

            let mut reports = Vec::new();
            for (tag, pred) in [
                (dec_tag.clone(), &dec_pred as &dyn MaskPredictor),
                (det_pred.tag(), &det_pred as &dyn MaskPredictor),
                (hyb_pred.tag(), &hyb_pred as &dyn MaskPredictor),
            ] {
                let identity = RunIdentity {
                    variant_tag: tag.clone(),
                    checkpoint_fingerprint: pred.fingerprint(),
                    dataset_hash: hash.clone(),
                    seed,
                };
                let report = evaluate(pred, part, &metrics, &identity)?;
                log::info!("{tag} on test_unseen: mean IoU {:.3}", report.mean_iou);
                reports.push(report);
            }
            emit_report(&reports, &out.join("reports"))?;
            finish(&out, "hybrid-eval", &settings, &hash)
        }
        Command::Ablate { axis } => {
            let base = settings_for(&cli.common)?;
            let arms = filmseg_core::config::ablation_axis(&axis).ok_or_else(|| {
                Failure::usage(format!(
                    "unknown ablation axis '{axis}'; known axes: {}",
                    ABLATION_AXES.join(", ")
                ))
            })?;
            fs::create_dir_all(&out)?;
            let (ds, hash) = generate_and_write_dataset(&base, &out.join("dataset"))?;
            log::info!("shared dataset hash {hash}");

            // Arms that leave the encoder-side configuration untouched
            // share one pretrained encoder; the rest pretrain their own.
            let encoder_key = |s: &Resolved| -> String {
                s.snapshot()
                    .lines()
                    .filter(|l| {
                        l.starts_with("encoder.") || l.starts_with("pretrain.") || l.starts_with("seed")
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            };
            let mut encoders: BTreeMap<String, DualEncoder<Real>> = BTreeMap::new();

            let mut reports = Vec::new();
            for (label, overrides) in &arms {
                let mut s = base.clone();
                s.apply_overrides(overrides.iter().map(String::as_str))?;
                let key = encoder_key(&s);
                let reuse = s.train_config().freeze_encoder;
                if !encoders.contains_key(&key) || !reuse {
                    let (enc, report) = pretrain_encoder(&s)?;
                    log::info!(
                        "arm {label}: encoder pretrained, retrieval image→text {:.3}",
                        report.retrieval_image_to_text
                    );
                    encoders.insert(key.clone(), enc);
                }
                let enc = encoders.get_mut(&key).expect("just inserted");
                if s.train_config().freeze_encoder {
                    enc.freeze();
                }
                let arm = run_arm(&s, enc, &ds, &hash, &out, label)?;
                log::info!(
                    "arm {label}: seen IoU {:.3}, unseen IoU {:.3}",
                    arm.seen.mean_iou,
                    arm.unseen.mean_iou
                );
                reports.push(arm.seen);
                reports.push(arm.unseen);
            }
            emit_report(&reports, &out.join("reports"))?;
            finish(&out, "ablate", &base, &hash)
        }
        Command::Report { inputs } => {
            let settings = settings_for(&cli.common)?;
            let mut all: Vec<MetricsReport> = Vec::new();
            for input in &inputs {
                let path = if input.extension().is_some_and(|e| e == "json") {
                    input.clone()
                } else {
                    input.join("reports").join("report.json")
                };
                let path = if path.exists() || input.extension().is_some() {
                    path
                } else {
                    input.join("report.json")
                };
                let text = fs::read_to_string(&path).map_err(|e| {
                    Failure::runtime(format!("cannot read {}: {e}", path.display()))
                })?;
                let file: ReportFile = serde_json::from_str(&text).map_err(|e| {
                    Failure::runtime(format!("cannot parse {}: {e}", path.display()))
                })?;
                if file.schema_version != REPORT_SCHEMA_VERSION {
                    return Err(Failure::runtime(format!(
                        "{}: report schema {} but this build writes {}",
                        path.display(),
                        file.schema_version,
                        REPORT_SCHEMA_VERSION
                    )));
                }
                all.extend(file.reports);
            }
            if all.is_empty() {
                return Err(Failure::runtime("no reports found in the given inputs"));
            }
            log::info!("merged {} reports from {} inputs", all.len(), inputs.len());
            let shared_hash = all
                .iter()
                .map(|r| r.identity.dataset_hash.clone())
                .collect::<std::collections::BTreeSet<_>>();
            let hash = if shared_hash.len() == 1 {
                shared_hash.into_iter().next().unwrap_or_default()
            } else {
                String::new()
            };
            emit_report(&all, &out.join("reports"))?;
            finish(&out, "report", &settings, &hash)
        }
        Command::Repro { profile } => {
            if profile == "smoke" {
                repro_smoke(&cli.common, &out)
            } else {
                repro_full(&cli.common, &out)
            }
        }
    }
}

/// Full replication: run the pipeline at each battery seed (or just the
/// one from --seed) and judge the headline claims. Claim failures exit 4.
fn repro_full(common: &Common, out: &Path) -> Result<(), Failure> {
    let base = settings_for(common)?;
    let seeds: Vec<u64> = match common.seed {
        Some(s) => vec![s],
        None => TREND_SEEDS.to_vec(),
    };
    fs::create_dir_all(out)?;

    let mut outputs: Vec<PipelineOutput> = Vec::new();
    for &seed in &seeds {
        let mut s = base.clone();
        s.apply("seed", &seed.to_string())?;
        let dir = out.join(format!("seed-{seed}"));
        log::info!("=== seed {seed} → {} ===", dir.display());
        let o = run_pipeline(&s, &dir, &mut |msg| log::info!("[seed {seed}] {msg}"))?;
        outputs.push(o);
    }

    let verdicts = trend_verdicts(&outputs);
    let mut failed = 0usize;
    for v in &verdicts {
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!("{status}  {}", v.name);
        println!("      {}", v.detail);
        if !v.passed {
            failed += 1;
        }
    }
    write_json(&out.join("verdicts.json"), &verdicts)?;
    finish(out, "repro", &base, "")?;
    if failed > 0 {
        return Err(Failure::claims(format!(
            "{failed} of {} replication claims failed; see verdicts.json",
            verdicts.len()
        )));
    }
    println!("all {} replication claims hold over seeds {seeds:?}", verdicts.len());
    Ok(())
}

/// Smoke replication: run a minutes-scale profile twice and require the
/// two artifact trees to match byte for byte.
fn repro_smoke(common: &Common, out: &Path) -> Result<(), Failure> {
    let file_text = match &common.config {
        Some(p) => Some(fs::read_to_string(p).map_err(|e| {
            Failure::config(format!("cannot read config file {}: {e}", p.display()))
        })?),
        None => None,
    };
    // Profile overrides sit between the file and the user's --set, so
    // explicit --set still wins.
    let mut overrides: Vec<String> =
        smoke_overrides().into_iter().map(str::to_string).collect();
    overrides.extend(common.set.iter().cloned());
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    let settings = resolve(file_text.as_deref(), overrides.iter().map(String::as_str))?;

    fs::create_dir_all(out)?;
    let dir_a = out.join("a");
    let dir_b = out.join("b");
    let out_a = run_pipeline(&settings, &dir_a, &mut |msg| log::info!("[a] {msg}"))?;
    let out_b = run_pipeline(&settings, &dir_b, &mut |msg| log::info!("[b] {msg}"))?;

    let mut checks: Vec<(String, bool, String)> = Vec::new();
    checks.push((
        "dataset hash stable across runs".into(),
        out_a.dataset_hash == out_b.dataset_hash,
        format!("{} vs {}", out_a.dataset_hash, out_b.dataset_hash),
    ));

    let files_a = hash_tree(&dir_a)?;
    let files_b = hash_tree(&dir_b)?;
    let mut mismatch: Vec<String> = Vec::new();
    for (rel, h) in &files_a {
        match files_b.get(rel) {
            Some(h2) if h2 == h => {}
            Some(_) => mismatch.push(format!("{rel} differs")),
            None => mismatch.push(format!("{rel} missing in second run")),
        }
    }
    for rel in files_b.keys() {
        if !files_a.contains_key(rel) {
            mismatch.push(format!("{rel} missing in first run"));
        }
    }
    checks.push((
        format!("both runs byte-identical over {} files", files_a.len()),
        mismatch.is_empty(),
        if mismatch.is_empty() {
            "ok".into()
        } else {
            mismatch.join("; ")
        },
    ));

    for required in [
        "config.snapshot",
        "run.json",
        "encoder.ckpt",
        "pretrain_report.json",
        "hierarchical_film/decoder.ckpt",
        "hierarchical_film/train_report.json",
        "cross_attention/decoder.ckpt",
        "hierarchical_film_finetune/decoder.ckpt",
        "hierarchical_film_finetune/encoder_finetuned.ckpt",
        "reports/report.json",
        "reports/summary.tsv",
        "reports/per_attr.tsv",
        "reports/plot_attr_iou.tsv",
    ] {
        checks.push((
            format!("artifact present: {required}"),
            dir_a.join(required).is_file(),
            String::new(),
        ));
    }

    let mut failed = 0usize;
    for (name, ok, detail) in &checks {
        let status = if *ok { "PASS" } else { "FAIL" };
        if detail.is_empty() || *ok {
            println!("{status}  {name}");
        } else {
            println!("{status}  {name}\n      {detail}");
        }
        if !ok {
            failed += 1;
        }
    }
    finish(out, "repro", &settings, &out_a.dataset_hash)?;
    if failed > 0 {
        return Err(Failure::claims(format!(
            "{failed} of {} smoke checks failed",
            checks.len()
        )));
    }
    println!("smoke replication clean: {} checks", checks.len());
    Ok(())
}

/// Relative path → content digest for every file under `root`.
fn hash_tree(root: &Path) -> Result<BTreeMap<String, String>, Failure> {
    fn walk(
        root: &Path,
        dir: &Path,
        acc: &mut BTreeMap<String, String>,
    ) -> Result<(), Failure> {
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let path = entry.path();
            if path.is_dir() {
                walk(root, &path, acc)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("walk stays under root")
                    .to_string_lossy()
                    .into_owned();
                let digest = sha256_file(&path)?;
                acc.insert(rel, digest);
            }
        }
        Ok(())
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc)?;
    Ok(acc)
}
