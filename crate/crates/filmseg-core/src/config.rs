//! Run configuration: one flat dotted-key schema shared by config files
//! and command-line overrides, resolved with documented precedence and
//! serialized back out as a byte-stable snapshot.
//!
//! A config file is plain text, one `key = value` per line, `#` starting
//! a comment. Every key has a typed default; resolution applies the file
//! first and command-line overrides second, so the precedence is
//! command line > file > default. Unknown keys and ill-typed values are
//! errors that name the offender. [`Resolved::snapshot`] renders the full
//! resolved state as sorted `key = value` lines — itself a valid config
//! file — and [`Resolved::config_hash`] digests it, so any artifact can
//! carry the exact configuration that produced it.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::decoder::{DecoderConfig, FusionVariant};
use crate::detector::DetectorConfig;
use crate::dualenc::{EncoderConfig, PretrainConfig, TextProvenance};
use crate::evalkit::MetricsConfig;
use crate::io::hash::sha256_hex;
use crate::scenegen::DatasetConfig;
use crate::train::TrainConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("config key '{key}' wants {want}, got '{got}'")]
    TypeMismatch {
        key: String,
        want: &'static str,
        got: String,
    },
    #[error("config key '{key}' allows {allowed}, got '{got}'")]
    BadValue {
        key: String,
        allowed: &'static str,
        got: String,
    },
    #[error("config line {line_no} is not 'key = value': '{content}'")]
    BadLine { line_no: usize, content: String },
}

/// A typed config value; the default's kind fixes what overrides must
/// parse as.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    U64(u64),
    F64(f64),
    Bool(bool),
    Str(String),
    /// Comma-separated unsigned integers, e.g. tap sets.
    List(Vec<u64>),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::U64(v) => write!(f, "{v}"),
            Value::F64(v) => write!(f, "{v}"),
            Value::Bool(v) => write!(f, "{v}"),
            Value::Str(v) => write!(f, "{v}"),
            Value::List(v) => {
                let words: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "{}", words.join(","))
            }
        }
    }
}

impl Value {
    fn kind(&self) -> &'static str {
        match self {
            Value::U64(_) => "an unsigned integer",
            Value::F64(_) => "a number",
            Value::Bool(_) => "true or false",
            Value::Str(_) => "a word",
            Value::List(_) => "comma-separated unsigned integers",
        }
    }

    /// Parses `raw` as this value's kind.
    fn parse_as(&self, key: &str, raw: &str) -> Result<Value, ConfigError> {
        let raw = raw.trim();
        let mismatch = || ConfigError::TypeMismatch {
            key: key.to_string(),
            want: self.kind(),
            got: raw.to_string(),
        };
        Ok(match self {
            Value::U64(_) => Value::U64(raw.parse().map_err(|_| mismatch())?),
            Value::F64(_) => {
                let v: f64 = raw.parse().map_err(|_| mismatch())?;
                if !v.is_finite() {
                    return Err(mismatch());
                }
                Value::F64(v)
            }
            Value::Bool(_) => Value::Bool(raw.parse().map_err(|_| mismatch())?),
            Value::Str(_) => Value::Str(raw.to_string()),
            Value::List(_) => Value::List(
                raw.split(',')
                    .map(|w| w.trim().parse().map_err(|_| mismatch()))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }
}

/// Documented defaults for every key, in one place.
fn default_entries() -> Vec<(&'static str, Value)> {
    vec![
        ("seed", Value::U64(13)),
        ("dataset.n_train", Value::U64(800)),
        ("dataset.n_test_seen", Value::U64(200)),
        ("dataset.n_test_unseen", Value::U64(200)),
        ("dataset.image_hw", Value::U64(128)),
        ("encoder.preset", Value::Str("base".into())),
        ("encoder.taps", Value::List(vec![1, 3, 5, 7, 9])),
        ("encoder.provenance", Value::Str("joint".into())),
        ("pretrain.n_pairs", Value::U64(2048)),
        ("pretrain.batch_size", Value::U64(32)),
        ("pretrain.epochs", Value::U64(6)),
        ("pretrain.lr", Value::F64(1e-3)),
        ("pretrain.lr_min", Value::F64(1e-5)),
        ("pretrain.heldout", Value::U64(64)),
        ("pretrain.mlm_epochs", Value::U64(4)),
        ("pretrain.mlm_lr", Value::F64(1e-3)),
        ("pretrain.mlm_mask_frac", Value::F64(0.15)),
        ("decoder.width", Value::U64(64)),
        ("decoder.variant", Value::Str("hierarchical_film".into())),
        ("train.epochs", Value::U64(30)),
        ("train.batch_size", Value::U64(16)),
        ("train.base_lr", Value::F64(3e-4)),
        ("train.min_lr", Value::F64(1e-5)),
        ("train.freeze_encoder", Value::Bool(true)),
        ("detector.top_k", Value::U64(3)),
        ("detector.boundary_noise", Value::U64(2)),
        ("detector.score_noise", Value::F64(0.15)),
        ("detector.category_recall", Value::F64(0.9)),
        ("detector.iou_floor", Value::F64(0.7)),
        ("eval.thresholds", Value::List(vec![50, 60, 70, 80, 90])),
        ("eval.empty_pair_is_match", Value::Bool(true)),
        ("eval.sa_trials", Value::U64(24)),
    ]
}

/// The fully resolved configuration: every key present, every value
/// typed.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    map: BTreeMap<String, Value>,
}

impl Default for Resolved {
    fn default() -> Self {
        Resolved {
            map: default_entries()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        }
    }
}

impl Resolved {
    /// Applies one `key = value` override.
    ///
    /// # Errors
    ///
    /// [`ConfigError::UnknownKey`] for keys outside the schema;
    /// [`ConfigError::TypeMismatch`] when the value does not parse as the
    /// key's kind.
    pub fn apply(&mut self, key: &str, raw: &str) -> Result<(), ConfigError> {
        let key = key.trim();
        let current = self
            .map
            .get(key)
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let parsed = current.parse_as(key, raw)?;
        self.map.insert(key.to_string(), parsed);
        Ok(())
    }

    /// Applies a config file's text: `key = value` lines, blank lines and
    /// `#` comments ignored.
    ///
    /// # Errors
    ///
    /// [`ConfigError::BadLine`] for lines without a `=`; key and value
    /// errors as in [`apply`](Self::apply).
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, raw)) = line.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line_no: i + 1,
                    content: line.to_string(),
                });
            };
            self.apply(key, raw)?;
        }
        Ok(())
    }

    /// Applies `key=value` strings as given on a command line.
    pub fn apply_overrides<'a>(
        &mut self,
        pairs: impl IntoIterator<Item = &'a str>,
    ) -> Result<(), ConfigError> {
        for pair in pairs {
            let Some((key, raw)) = pair.split_once('=') else {
                return Err(ConfigError::BadLine {
                    line_no: 0,
                    content: pair.to_string(),
                });
            };
            self.apply(key, raw)?;
        }
        Ok(())
    }

    /// The resolved state as sorted `key = value` lines — itself a valid
    /// config file reproducing this exact state.
    pub fn snapshot(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.map {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    /// SHA-256 over the snapshot bytes.
    pub fn config_hash(&self) -> String {
        sha256_hex(self.snapshot().as_bytes())
    }

    fn u64(&self, key: &str) -> u64 {
        match &self.map[key] {
            Value::U64(v) => *v,
            other => unreachable!("{key} holds {other:?}"),
        }
    }

    fn usize(&self, key: &str) -> usize {
        self.u64(key) as usize
    }

    fn f64(&self, key: &str) -> f64 {
        match &self.map[key] {
            Value::F64(v) => *v,
            other => unreachable!("{key} holds {other:?}"),
        }
    }

    fn bool(&self, key: &str) -> bool {
        match &self.map[key] {
            Value::Bool(v) => *v,
            other => unreachable!("{key} holds {other:?}"),
        }
    }

    fn str(&self, key: &str) -> &str {
        match &self.map[key] {
            Value::Str(v) => v,
            other => unreachable!("{key} holds {other:?}"),
        }
    }

    fn list(&self, key: &str) -> &[u64] {
        match &self.map[key] {
            Value::List(v) => v,
            other => unreachable!("{key} holds {other:?}"),
        }
    }

    pub fn seed(&self) -> u64 {
        self.u64("seed")
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        let mut c = DatasetConfig::new(self.seed());
        c.n_train = self.usize("dataset.n_train");
        c.n_test_seen = self.usize("dataset.n_test_seen");
        c.n_test_unseen = self.usize("dataset.n_test_unseen");
        c.h = self.usize("dataset.image_hw");
        c.w = self.usize("dataset.image_hw");
        c
    }

    /// # Errors
    ///
    /// [`ConfigError::BadValue`] when `encoder.preset` names no preset.
    pub fn encoder_config(&self) -> Result<EncoderConfig, ConfigError> {
        let mut c = match self.str("encoder.preset") {
            "base" => EncoderConfig::base(),
            "large" => EncoderConfig::large(),
            other => {
                return Err(ConfigError::BadValue {
                    key: "encoder.preset".into(),
                    allowed: "base|large",
                    got: other.to_string(),
                })
            }
        };
        c.image_hw = self.usize("dataset.image_hw");
        c.taps = self.list("encoder.taps").iter().map(|&t| t as usize).collect();
        Ok(c)
    }

    /// # Errors
    ///
    /// [`ConfigError::BadValue`] when `encoder.provenance` names no
    /// pretraining regime.
    pub fn provenance(&self) -> Result<TextProvenance, ConfigError> {
        match self.str("encoder.provenance") {
            "joint" => Ok(TextProvenance::Joint),
            "disjoint" => Ok(TextProvenance::Disjoint),
            other => Err(ConfigError::BadValue {
                key: "encoder.provenance".into(),
                allowed: "joint|disjoint",
                got: other.to_string(),
            }),
        }
    }

    pub fn pretrain_config(&self) -> PretrainConfig {
        let mut c = PretrainConfig::new(self.seed());
        c.n_pairs = self.usize("pretrain.n_pairs");
        c.batch_size = self.usize("pretrain.batch_size");
        c.epochs = self.usize("pretrain.epochs");
        c.lr = self.f64("pretrain.lr");
        c.lr_min = self.f64("pretrain.lr_min");
        c.heldout = self.usize("pretrain.heldout");
        c.mlm_epochs = self.usize("pretrain.mlm_epochs");
        c.mlm_lr = self.f64("pretrain.mlm_lr");
        c.mlm_mask_frac = self.f64("pretrain.mlm_mask_frac");
        c
    }

    /// # Errors
    ///
    /// [`ConfigError::BadValue`] when `decoder.variant` names no fusion
    /// variant.
    pub fn fusion_variant(&self) -> Result<FusionVariant, ConfigError> {
        match self.str("decoder.variant") {
            "hierarchical_film" => Ok(FusionVariant::HierarchicalFilm),
            "single_film" => Ok(FusionVariant::SingleFilm),
            "cross_attention" => Ok(FusionVariant::CrossAttention),
            other => Err(ConfigError::BadValue {
                key: "decoder.variant".into(),
                allowed: "hierarchical_film|single_film|cross_attention",
                got: other.to_string(),
            }),
        }
    }

    /// Decoder geometry derived from the (already resolved) encoder
    /// config plus the width and variant keys.
    ///
    /// # Errors
    ///
    /// [`ConfigError::BadValue`] from the variant key.
    pub fn decoder_config(&self, enc: &EncoderConfig) -> Result<DecoderConfig, ConfigError> {
        let mut c = DecoderConfig::for_encoder(enc, self.usize("decoder.width"));
        c.variant = self.fusion_variant()?;
        Ok(c)
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut c = TrainConfig::new(self.seed());
        c.epochs = self.usize("train.epochs");
        c.batch_size = self.usize("train.batch_size");
        c.base_lr = self.f64("train.base_lr");
        c.min_lr = self.f64("train.min_lr");
        c.freeze_encoder = self.bool("train.freeze_encoder");
        c.variant_tag = self.str("decoder.variant").to_string();
        c
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            top_k: self.usize("detector.top_k"),
            boundary_noise: self.usize("detector.boundary_noise"),
            score_noise: self.f64("detector.score_noise"),
            category_recall: self.f64("detector.category_recall"),
            iou_floor: self.f64("detector.iou_floor"),
        }
    }

    pub fn metrics_config(&self) -> MetricsConfig {
        MetricsConfig {
            thresholds: self
                .list("eval.thresholds")
                .iter()
                .map(|&t| t as f64)
                .collect(),
            empty_pair_is_match: self.bool("eval.empty_pair_is_match"),
        }
    }

    /// Stepwise-interaction trials to run during evaluation; 0 skips the
    /// protocol.
    pub fn sa_trials(&self) -> usize {
        self.usize("eval.sa_trials")
    }
}

/// Builds the resolved configuration from an optional file body and
/// command-line `key=value` overrides, in that precedence order.
///
/// # Errors
///
/// Any parse, unknown-key, or type error from either source.
pub fn resolve<'a>(
    file_text: Option<&str>,
    overrides: impl IntoIterator<Item = &'a str>,
) -> Result<Resolved, ConfigError> {
    let mut r = Resolved::default();
    if let Some(text) = file_text {
        r.apply_text(text)?;
    }
    r.apply_overrides(overrides)?;
    Ok(r)
}

/// The sweep values for one ablation axis: `(value label, overrides)`
/// per arm. Every arm varies exactly one knob against the resolved base.
pub fn ablation_axis(axis: &str) -> Option<Vec<(String, Vec<String>)>> {
    let arms: Vec<(&str, &str)> = match axis {
        "fusion_variant" => vec![
            ("hierarchical_film", "decoder.variant=hierarchical_film"),
            ("single_film", "decoder.variant=single_film"),
            ("cross_attention", "decoder.variant=cross_attention"),
        ],
        "decoder_width" => vec![
            ("w32", "decoder.width=32"),
            ("w64", "decoder.width=64"),
            ("w128", "decoder.width=128"),
        ],
        "tap_set" => vec![
            ("k13579", "encoder.taps=1,3,5,7,9"),
            ("k159", "encoder.taps=1,5,9"),
            ("k9", "encoder.taps=9"),
        ],
        "backend" => vec![
            ("base", "encoder.preset=base"),
            ("large", "encoder.preset=large"),
        ],
        "text_provenance" => vec![
            ("joint", "encoder.provenance=joint"),
            ("disjoint", "encoder.provenance=disjoint"),
        ],
        _ => return None,
    };
    Some(
        arms.into_iter()
            .map(|(label, ov)| (label.to_string(), vec![ov.to_string()]))
            .collect(),
    )
}

/// Names of all sweepable axes, for help text and validation.
pub const ABLATION_AXES: [&str; 5] = [
    "fusion_variant",
    "decoder_width",
    "tap_set",
    "backend",
    "text_provenance",
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_sources_resolve_to_the_documented_defaults() {
        let r = resolve(Some(""), []).unwrap();
        assert_eq!(r, Resolved::default());
        assert_eq!(r.seed(), 13);
        let d = r.dataset_config();
        assert_eq!((d.n_train, d.n_test_seen, d.n_test_unseen), (800, 200, 200));
        assert_eq!((d.h, d.w), (128, 128));
        let enc = r.encoder_config().unwrap();
        assert_eq!(enc.d_model_v, 64);
        assert_eq!(enc.taps, vec![1, 3, 5, 7, 9]);
        let dec = r.decoder_config(&enc).unwrap();
        assert_eq!(dec.d, 64);
        assert_eq!(dec.variant, FusionVariant::HierarchicalFilm);
        let t = r.train_config();
        assert!(t.freeze_encoder);
        assert_eq!(t.epochs, 30);
        assert_eq!(r.metrics_config().thresholds, vec![50.0, 60.0, 70.0, 80.0, 90.0]);
        assert_eq!(r.detector_config(), DetectorConfig::default());
    }

    #[test]
    fn overrides_beat_the_file_which_beats_defaults() {
        let file = "train.epochs = 5\ndecoder.width = 96   # file says 96\n";
        let r = resolve(Some(file), ["decoder.width=128"]).unwrap();
        assert_eq!(r.train_config().epochs, 5);
        let enc = r.encoder_config().unwrap();
        assert_eq!(r.decoder_config(&enc).unwrap().d, 128);
        // Untouched keys stay at their defaults.
        assert_eq!(r.train_config().batch_size, 16);
        // The snapshot records the winning value.
        assert!(r.snapshot().contains("decoder.width = 128\n"));
    }

    #[test]
    fn unknown_keys_and_bad_types_name_the_offender() {
        assert_eq!(
            resolve(Some("decoder.depthh = 3"), []),
            Err(ConfigError::UnknownKey("decoder.depthh".into()))
        );
        assert_eq!(
            resolve(None, ["train.epochs=soon"]),
            Err(ConfigError::TypeMismatch {
                key: "train.epochs".into(),
                want: "an unsigned integer",
                got: "soon".into(),
            })
        );
        assert!(matches!(
            resolve(None, ["encoder.taps=1,two,3"]),
            Err(ConfigError::TypeMismatch { .. })
        ));
        assert!(matches!(
            resolve(Some("just words"), []),
            Err(ConfigError::BadLine { line_no: 1, .. })
        ));
        assert!(matches!(
            resolve(None, ["train.base_lr=inf"]),
            Err(ConfigError::TypeMismatch { .. })
        ));

        let r = resolve(None, ["decoder.variant=bilinear"]).unwrap();
        assert!(matches!(
            r.fusion_variant(),
            Err(ConfigError::BadValue { .. })
        ));
        let r = resolve(None, ["encoder.preset=huge"]).unwrap();
        assert!(matches!(r.encoder_config(), Err(ConfigError::BadValue { .. })));
        let r = resolve(None, ["encoder.provenance=scratch"]).unwrap();
        assert!(matches!(r.provenance(), Err(ConfigError::BadValue { .. })));
    }

    #[test]
    fn snapshots_are_sorted_reparseable_and_hash_stable() {
        let r = resolve(
            Some("eval.sa_trials = 4\n\n# comment only\n"),
            ["train.base_lr=0.0005", "encoder.taps=1,5,9"],
        )
        .unwrap();
        let snap = r.snapshot();

        // Sorted unique keys, full coverage.
        let keys: Vec<&str> = snap.lines().map(|l| l.split(" = ").next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(keys, sorted);
        assert_eq!(keys.len(), default_entries().len());

        // The snapshot is itself a config file reproducing the state.
        let back = resolve(Some(&snap), []).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.config_hash(), r.config_hash());
        assert_eq!(back.snapshot(), snap);

        // Hashes react to any change.
        let other = resolve(Some(&snap), ["seed=14"]).unwrap();
        assert_ne!(other.config_hash(), r.config_hash());
    }

    #[test]
    fn every_ablation_axis_produces_applicable_arms() {
        for axis in ABLATION_AXES {
            let arms = ablation_axis(axis).unwrap();
            assert!(arms.len() >= 2, "{axis} needs at least two arms");
            for (label, overrides) in &arms {
                let r =
                    resolve(None, overrides.iter().map(String::as_str)).unwrap_or_else(|e| {
                        panic!("{axis}/{label} overrides fail to apply: {e}")
                    });
                // Each arm yields a working model configuration.
                let enc = r.encoder_config().unwrap();
                r.decoder_config(&enc).unwrap();
                r.provenance().unwrap();
            }
        }
        assert!(ablation_axis("optimizer").is_none());
    }

    #[test]
    fn float_values_survive_the_snapshot_round_trip_exactly() {
        let r = resolve(None, ["pretrain.mlm_mask_frac=0.1500000000000000222"]).unwrap();
        let snap = r.snapshot();
        let back = resolve(Some(&snap), []).unwrap();
        assert_eq!(back.pretrain_config().mlm_mask_frac, r.pretrain_config().mlm_mask_frac);
    }
}
