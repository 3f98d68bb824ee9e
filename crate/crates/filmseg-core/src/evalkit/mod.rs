//! Evaluation kit: overlap metrics, attribute extraction, grounding
//! accuracy reports, and the stepwise-interaction score.

use thiserror::Error;

pub mod attrs;
pub mod metrics;
pub mod predictors;
pub mod report;
pub mod sa;

pub use attrs::{extract_attributes, AttrError};
pub use metrics::{iou, precision_at, MetricError, MetricsConfig};
pub use predictors::{DecoderPredictor, DetectorTop1Predictor, HybridPredictor};
pub use report::{
    emit_report, evaluate, BucketRow, MaskPredictor, MetricsReport, PrecisionEntry, ReportFile,
    RunIdentity, SampleRow, REPORT_SCHEMA_VERSION,
};
pub use sa::{run_sa_trial, sa_score, SaAttempt, SaSummary, SaTrial, SA_SUCCESS_IOU};

/// Umbrella error for evaluation runs.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation split holds no samples")]
    EmptySplit,
    #[error("run identity claims checkpoint digest {claimed} but the predictor reports {actual}")]
    FingerprintMismatch { claimed: String, actual: String },
    #[error("interaction trial {trial_index} breaks protocol: {reason}")]
    ProtocolViolation { trial_index: usize, reason: String },
    #[error("split data holds no scene {scene_id}")]
    MissingScene { scene_id: u64 },
    #[error("reports disagree on their precision threshold lists")]
    MixedThresholds,
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Detect(#[from] crate::detector::DetectorError),
    #[error(transparent)]
    Attr(#[from] AttrError),
    #[error(transparent)]
    Scene(#[from] crate::scenegen::SceneError),
    #[error(transparent)]
    Decode(#[from] crate::decoder::DecoderError),
    #[error("report io: {0}")]
    Io(#[from] std::io::Error),
}
