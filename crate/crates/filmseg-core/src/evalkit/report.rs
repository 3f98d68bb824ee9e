//! Report assembly: runs a mask predictor over a labeled split,
//! aggregates overlap metrics overall and per attribute-count bucket, and
//! writes the result as a versioned record plus flat tables and plot
//! series.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{iou, precision_at, EvalError, MetricsConfig, SaSummary};
use crate::raster::BitMask;
use crate::scenegen::{Split, SplitData};

/// Version stamp on the emitted report record.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Anything that can produce a mask for each sample of a split. The
/// sample index comes with the whole split so predictors can reach the
/// scene table; implementations must be pure in `&self` — per-sample
/// randomness belongs in seeds derived from the sample, not in mutable
/// state — so evaluation order never matters.
pub trait MaskPredictor {
    /// Short model label used in table rows ("hierarchical_film",
    /// "detector_top1", ...).
    fn tag(&self) -> String;
    /// Digest of the weights (or configuration, for weight-free
    /// predictors) this predictor answers with.
    fn fingerprint(&self) -> String;
    /// Predicts a binary mask for `data.samples[index]`.
    ///
    /// # Errors
    ///
    /// Implementation-specific; anything lookup, inference, or shape
    /// related.
    fn predict(&self, data: &SplitData, index: usize) -> Result<BitMask, EvalError>;
}

/// Provenance pinned to a report: which variant, which weights, which
/// dataset, which seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunIdentity {
    pub variant_tag: String,
    pub checkpoint_fingerprint: String,
    pub dataset_hash: String,
    pub seed: u64,
}

/// Per-sample outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub sample_id: u64,
    /// Attributes in the query, head noun included.
    pub attribute_count: usize,
    pub iou: f64,
}

/// Mean IoU over the samples whose queries carry a given attribute count.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub attribute_count: usize,
    pub n_samples: usize,
    pub mean_iou: f64,
}

/// One P@X column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrecisionEntry {
    pub threshold: f64,
    /// Percentage of samples whose IoU strictly exceeds the threshold.
    pub value: f64,
}

/// Full evaluation outcome for one predictor on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub split: Split,
    pub n_samples: usize,
    pub mean_iou: f64,
    pub precision: Vec<PrecisionEntry>,
    pub buckets: Vec<BucketRow>,
    pub rows: Vec<SampleRow>,
    pub identity: RunIdentity,
    /// Stepwise-interaction summary, when that protocol also ran.
    pub sa: Option<SaSummary>,
}

/// The versioned on-disk record: every report of a run in one file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub reports: Vec<MetricsReport>,
}

fn split_label(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::TestSeen => "test_seen",
        Split::TestUnseen => "test_unseen",
    }
}

/// Runs `predictor` over every sample of `data` and aggregates: mean IoU,
/// P@X for each configured threshold, and per-attribute-count bucket
/// means whose sample counts sum to the split size.
///
/// # Errors
///
/// [`EvalError::EmptySplit`] on a sample-less split;
/// [`EvalError::FingerprintMismatch`] when `identity` claims a different
/// checkpoint digest than the predictor reports; invalid
/// [`MetricsConfig`] and per-sample prediction failures pass through.
pub fn evaluate(
    predictor: &dyn MaskPredictor,
    data: &SplitData,
    cfg: &MetricsConfig,
    identity: &RunIdentity,
) -> Result<MetricsReport, EvalError> {
    cfg.validate()?;
    if data.samples.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    let actual = predictor.fingerprint();
    if identity.checkpoint_fingerprint != actual {
        return Err(EvalError::FingerprintMismatch {
            claimed: identity.checkpoint_fingerprint.clone(),
            actual,
        });
    }

    let mut rows = Vec::with_capacity(data.samples.len());
    for (index, sample) in data.samples.iter().enumerate() {
        let pred = predictor.predict(data, index)?;
        let mut overlap = iou(&pred, &sample.mask)?;
        if !cfg.empty_pair_is_match && pred.area() == 0 && sample.mask.area() == 0 {
            overlap = 0.0;
        }
        rows.push(SampleRow {
            sample_id: sample.sample_id,
            attribute_count: sample.query.attributes.count(),
            iou: overlap,
        });
    }

    let ious: Vec<f64> = rows.iter().map(|r| r.iou).collect();
    let mean_iou = ious.iter().sum::<f64>() / ious.len() as f64;
    let precision = cfg
        .thresholds
        .iter()
        .map(|&threshold| {
            precision_at(&ious, threshold).map(|value| PrecisionEntry { threshold, value })
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut grouped: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for row in &rows {
        let entry = grouped.entry(row.attribute_count).or_insert((0, 0.0));
        entry.0 += 1;
        entry.1 += row.iou;
    }
    let buckets = grouped
        .into_iter()
        .map(|(attribute_count, (n_samples, sum))| BucketRow {
            attribute_count,
            n_samples,
            mean_iou: sum / n_samples as f64,
        })
        .collect();

    Ok(MetricsReport {
        split: data.samples[0].split,
        n_samples: rows.len(),
        mean_iou,
        precision,
        buckets,
        rows,
        identity: identity.clone(),
        sa: None,
    })
}

/// Writes `reports` into `dir` as four files: `report.json` (the
/// versioned record), `summary.tsv` (one row per report: overall mean IoU
/// and the P@X columns), `per_attr.tsv` (one row per report and
/// attribute-count bucket), and `plot_attr_iou.tsv` (attribute count
/// against mean IoU, one series per model tag and split). Output is
/// byte-stable: identical inputs produce identical files.
///
/// # Errors
///
/// [`EvalError::MixedThresholds`] when the reports disagree on their
/// precision columns; [`EvalError::Io`] when the directory or a file
/// cannot be written.
pub fn emit_report(reports: &[MetricsReport], dir: &Path) -> Result<(), EvalError> {
    let reference: Vec<f64> = reports
        .first()
        .map(|r| r.precision.iter().map(|e| e.threshold).collect())
        .unwrap_or_default();
    for report in reports {
        let thresholds: Vec<f64> = report.precision.iter().map(|e| e.threshold).collect();
        if thresholds != reference {
            return Err(EvalError::MixedThresholds);
        }
    }

    fs::create_dir_all(dir)?;
    let record = ReportFile {
        schema_version: REPORT_SCHEMA_VERSION,
        reports: reports.to_vec(),
    };
    let mut json = serde_json::to_string_pretty(&record).expect("report record serializes");
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;

    let mut summary = String::from("model\tsplit\tn_samples\tmean_iou");
    for t in &reference {
        let _ = write!(summary, "\tp@{t}");
    }
    summary.push('\n');
    for r in reports {
        let _ = write!(
            summary,
            "{}\t{}\t{}\t{:.6}",
            r.identity.variant_tag,
            split_label(r.split),
            r.n_samples,
            r.mean_iou
        );
        for e in &r.precision {
            let _ = write!(summary, "\t{:.6}", e.value);
        }
        summary.push('\n');
    }
    fs::write(dir.join("summary.tsv"), summary)?;

    let mut per_attr = String::from("model\tsplit\tattribute_count\tn_samples\tmean_iou\n");
    let mut plot = String::from("model\tsplit\tattribute_count\tmean_iou\n");
    for r in reports {
        for b in &r.buckets {
            let _ = writeln!(
                per_attr,
                "{}\t{}\t{}\t{}\t{:.6}",
                r.identity.variant_tag,
                split_label(r.split),
                b.attribute_count,
                b.n_samples,
                b.mean_iou
            );
            let _ = writeln!(
                plot,
                "{}\t{}\t{}\t{:.6}",
                r.identity.variant_tag,
                split_label(r.split),
                b.attribute_count,
                b.mean_iou
            );
        }
    }
    fs::write(dir.join("per_attr.tsv"), per_attr)?;
    fs::write(dir.join("plot_attr_iou.tsv"), plot)?;
    Ok(())
}
