//! Stepwise-interaction scoring: how many attributes beyond the minimal
//! uniquely-referring description a grounder needs before it locks on.
//!
//! A trial starts at the target's minimal uniquely-referring attribute
//! count and re-queries with one more attribute after each miss, up to
//! four attributes total. Grounding on the first attempt scores 100 and
//! each extra attempt costs 25 points; a trial that never grounds scores
//! 0, so per-trial scores live in {0, 25, 50, 75, 100}.

use serde::{Deserialize, Serialize};

use super::{iou, EvalError};
use crate::raster::BitMask;
use crate::rng::{rng_for, stream};
use crate::scenegen::{compute_mrq, generate_query, Catalog, Scene, SceneError};

/// A predicted mask counts as grounding the target when its overlap with
/// the target's visible mask reaches this IoU. The score needs a binary
/// success signal and pixel masks are what the pipeline produces, so
/// overlap at the usual localization threshold stands in for "the robot
/// grasped the right object".
pub const SA_SUCCESS_IOU: f64 = 0.5;

/// One query attempt within a trial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaAttempt {
    /// Attributes in the query, head noun included.
    pub attribute_count: usize,
    pub success: bool,
}

/// A full interaction trial against one target.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SaTrial {
    pub scene_id: u64,
    pub target_id: u32,
    /// The target's minimal uniquely-referring attribute count.
    pub mrq_count: usize,
    pub attempts: Vec<SaAttempt>,
}

impl SaTrial {
    /// Checks the protocol: at least one attempt, the first at exactly
    /// `mrq_count` attributes, counts ascending by one up to four, and no
    /// attempt after a success.
    fn validate(&self, trial_index: usize) -> Result<(), EvalError> {
        let fail = |reason: String| EvalError::ProtocolViolation {
            trial_index,
            reason,
        };
        if !(1..=4).contains(&self.mrq_count) {
            return Err(fail(format!("mrq_count {} outside 1..=4", self.mrq_count)));
        }
        if self.attempts.is_empty() {
            return Err(fail("no attempts recorded".into()));
        }
        for (i, attempt) in self.attempts.iter().enumerate() {
            let expected = self.mrq_count + i;
            if attempt.attribute_count != expected {
                return Err(fail(format!(
                    "attempt {i} used {} attributes, expected {expected}",
                    attempt.attribute_count
                )));
            }
            if attempt.attribute_count > 4 {
                return Err(fail(format!(
                    "attempt {i} used {} attributes, over the cap of 4",
                    attempt.attribute_count
                )));
            }
            if attempt.success && i + 1 != self.attempts.len() {
                return Err(fail(format!(
                    "attempt {i} succeeded but the trial kept querying"
                )));
            }
        }
        Ok(())
    }

    /// 100 minus 25 per failed attempt before the first success; 0 when
    /// the trial never grounds.
    pub fn score(&self) -> f64 {
        match self.attempts.iter().position(|a| a.success) {
            Some(i) => 100.0 - 25.0 * i as f64,
            None => 0.0,
        }
    }
}

/// Aggregate over a batch of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaSummary {
    pub n_trials: usize,
    pub mean_sa: f64,
    pub per_trial: Vec<f64>,
    /// The IoU bar a prediction had to clear to count as grounding —
    /// recorded so reports carry the success criterion alongside the
    /// scores.
    pub success_iou: f64,
}

/// Validates every trial and averages their scores.
///
/// # Errors
///
/// [`EvalError::EmptySplit`] with no trials;
/// [`EvalError::ProtocolViolation`] naming the first malformed trial.
pub fn sa_score(trials: &[SaTrial]) -> Result<SaSummary, EvalError> {
    if trials.is_empty() {
        return Err(EvalError::EmptySplit);
    }
    for (i, trial) in trials.iter().enumerate() {
        trial.validate(i)?;
    }
    let per_trial: Vec<f64> = trials.iter().map(SaTrial::score).collect();
    let mean_sa = per_trial.iter().sum::<f64>() / per_trial.len() as f64;
    Ok(SaSummary {
        n_trials: trials.len(),
        mean_sa,
        per_trial,
        success_iou: SA_SUCCESS_IOU,
    })
}

/// Runs one interaction trial: queries `predict` starting at the minimal
/// uniquely-referring attribute count and adds one attribute per miss,
/// stopping at the first mask whose IoU with the target's visible mask
/// reaches [`SA_SUCCESS_IOU`], at four attributes, or when no unique
/// query with the next count exists.
///
/// Query sampling draws from one stream per `(scene, target)`, derived
/// from `master_seed` with the target id folded into the high bits of the
/// stream index — collision-free while scene ids stay below 2^48 and
/// target ids below 2^16, far past this lab's scale.
///
/// # Errors
///
/// Scene lookup and minimal-description failures surface as
/// [`EvalError::Scene`]; predictor and overlap errors pass through.
pub fn run_sa_trial(
    scene: &Scene,
    catalog: &Catalog,
    target_id: u32,
    predict: &mut dyn FnMut(&str) -> Result<BitMask, EvalError>,
    master_seed: u64,
) -> Result<SaTrial, EvalError> {
    let target = scene.object(target_id)?;
    let mrq_count = compute_mrq(scene, target_id)?.count();
    let mut rng = rng_for(
        master_seed,
        stream::SA_TRIAL,
        scene.id ^ (u64::from(target_id) << 48),
    );

    let mut attempts = Vec::new();
    for a in mrq_count..=4 {
        let query = match generate_query(scene, catalog, target_id, a, &mut rng) {
            Ok(q) => q,
            Err(SceneError::QueryInfeasible { .. }) => break,
            Err(e) => return Err(e.into()),
        };
        let mask = predict(&query.text)?;
        let success = iou(&mask, &target.visible_mask)? >= SA_SUCCESS_IOU;
        attempts.push(SaAttempt {
            attribute_count: a,
            success,
        });
        if success {
            break;
        }
    }
    Ok(SaTrial {
        scene_id: scene.id,
        target_id,
        mrq_count,
        attempts,
    })
}
