//! Simulated open-set detector and hybrid mask selection.
//!
//! The detector stands in for an off-the-shelf open-vocabulary detection
//! model. It is oracle-backed — it reads scene ground truth — but
//! deliberately degraded: it understands only the query's head noun (the
//! first word that names a catalog category) and ignores every other
//! attribute, its candidate masks carry boundary noise, its ranking score
//! is area plus noise, and it sometimes confuses the category outright.
//! That combination reproduces the characteristic failure of category-level
//! detectors on attribute-rich referring queries — candidates are fine,
//! ranking is blind — which is exactly the gap hybrid selection exploits.
//!
//! [`hybrid_select`] picks, from a candidate list, the mask with maximum
//! IoU against the segmentation decoder's own prediction, so the decoder
//! arbitrates *which* candidate was meant while the detector contributes
//! crisp (if noisy) instance masks.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decoder::PredictionMask;
use crate::evalkit::{iou, MetricError};
use crate::raster::{rle, BitMask};
use crate::scalar::Scalar;
use crate::scenegen::{normalize_words, Catalog, Scene, SceneObject};

/// One detector proposal: a mask and its (noisy) confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionCandidate {
    pub mask: BitMask,
    /// Confidence in `[0, 1]`: area-normalized rank plus noise, clamped.
    pub score: f64,
    /// Ground-truth object the mask came from. Diagnostics only — the
    /// selection logic never reads it.
    pub source_id: u32,
}

/// Serializable mirror of [`DetectionCandidate`] for audit records; the
/// mask travels as hex-encoded run-length bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub source_id: u32,
    pub score: f64,
    pub mask_rle_hex: String,
}

impl From<&DetectionCandidate> for CandidateRecord {
    fn from(c: &DetectionCandidate) -> Self {
        let bytes = rle::encode(&c.mask);
        let mut hex = String::with_capacity(bytes.len() * 2);
        for b in bytes {
            hex.push_str(&format!("{b:02x}"));
        }
        CandidateRecord {
            source_id: c.source_id,
            score: c.score,
            mask_rle_hex: hex,
        }
    }
}

impl CandidateRecord {
    /// # Errors
    ///
    /// [`DetectorError::BadRecord`] when the hex or run-length payload does
    /// not decode.
    pub fn to_candidate(&self) -> Result<DetectionCandidate, DetectorError> {
        if self.mask_rle_hex.len() % 2 != 0 {
            return Err(DetectorError::BadRecord("odd hex length".into()));
        }
        let bytes: Result<Vec<u8>, _> = (0..self.mask_rle_hex.len() / 2)
            .map(|i| u8::from_str_radix(&self.mask_rle_hex[2 * i..2 * i + 2], 16))
            .collect();
        let bytes = bytes.map_err(|e| DetectorError::BadRecord(e.to_string()))?;
        let mask = rle::decode(&bytes).map_err(|e| DetectorError::BadRecord(e.to_string()))?;
        Ok(DetectionCandidate {
            mask,
            score: self.score,
            source_id: self.source_id,
        })
    }
}

/// Fidelity knobs for the simulated detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Number of candidates returned.
    pub top_k: usize,
    /// Maximum dilation/erosion radius; each mask draws a radius uniformly
    /// from `0..=boundary_noise`.
    pub boundary_noise: usize,
    /// Standard deviation of the Gaussian added to each area score.
    pub score_noise: f64,
    /// Probability that the queried category is recognized; otherwise the
    /// detector reports instances of some other category in the scene.
    pub category_recall: f64,
    /// Perturbed masks keep at least this IoU with the original.
    pub iou_floor: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            top_k: 3,
            boundary_noise: 2,
            score_noise: 0.15,
            category_recall: 0.9,
            iou_floor: 0.7,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if self.top_k == 0 {
            return Err(DetectorError::BadConfig("top_k must be at least 1".into()));
        }
        if self.score_noise < 0.0 {
            return Err(DetectorError::BadConfig(
                "score_noise must be nonnegative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.category_recall) {
            return Err(DetectorError::BadConfig(
                "category_recall must lie in [0, 1]".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.iou_floor) {
            return Err(DetectorError::BadConfig(
                "iou_floor must lie in [0, 1]".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("bad detector config: {0}")]
    BadConfig(String),
    #[error("candidate record does not decode: {0}")]
    BadRecord(String),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Chebyshev dilation: a pixel is set if any pixel within `r` (max-norm)
/// is set in the input.
pub fn dilate(mask: &BitMask, r: usize) -> BitMask {
    if r == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.h, mask.w);
    // Separable: horizontal pass, then vertical.
    let mut rows = BitMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows.set(y, x, (lo..=hi).any(|xx| mask.get(y, xx)));
        }
    }
    let mut out = BitMask::zeros(h, w);
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out.set(y, x, (lo..=hi).any(|yy| rows.get(yy, x)));
        }
    }
    out
}

/// Chebyshev erosion: a pixel survives only if every pixel within `r`
/// (max-norm) is set; beyond the frame counts as background, so erosion
/// always eats the border.
pub fn erode(mask: &BitMask, r: usize) -> BitMask {
    if r == 0 {
        return mask.clone();
    }
    let (h, w) = (mask.h, mask.w);
    let mut rows = BitMask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let keep = x >= r && x + r < w && (x - r..=x + r).all(|xx| mask.get(y, xx));
            rows.set(y, x, keep);
        }
    }
    let mut out = BitMask::zeros(h, w);
    for y in 0..h {
        let eroded_row = y < r || y + r >= h;
        for x in 0..w {
            let keep = !eroded_row && (y - r..=y + r).all(|yy| rows.get(yy, x));
            out.set(y, x, keep);
        }
    }
    out
}

/// Randomly dilates or erodes by a radius drawn from `0..=max_radius`,
/// backing the radius off until the result keeps at least `iou_floor`
/// overlap with the original. Radius 0 is the identity, so the backoff
/// always terminates.
pub fn perturb_mask(
    mask: &BitMask,
    max_radius: usize,
    iou_floor: f64,
    rng: &mut ChaCha12Rng,
) -> BitMask {
    let mut radius = rng.gen_range(0..=max_radius);
    let grow: bool = rng.gen();
    loop {
        let candidate = if grow {
            dilate(mask, radius)
        } else {
            erode(mask, radius)
        };
        let overlap = iou(&candidate, mask).expect("same frame");
        if overlap >= iou_floor || radius == 0 {
            return candidate;
        }
        radius -= 1;
    }
}

/// The first query word that names a catalog category, if any.
fn head_noun(catalog: &Catalog, query_text: &str) -> Option<usize> {
    normalize_words(query_text)
        .iter()
        .find_map(|w| catalog.lookup(w))
}

/// Runs the simulated detector on one scene.
///
/// Only the head noun is parsed from the query — every other token is
/// ignored, which is the point: candidates are category-level. Scores are
/// visible-area fractions plus Gaussian noise, clamped to `[0, 1]`.
/// With probability `1 − category_recall` the detector "recognizes" a
/// different category present in the scene instead. A query with no
/// category word at all (or naming a category the scene lacks) falls back
/// to proposing the largest objects overall.
///
/// Randomness is consumed in a fixed order — recall draw, then per object
/// in scene order: score noise, perturb radius, perturb direction — so the
/// output depends only on the scene, the head noun, and the rng state,
/// never on the query's other tokens.
pub fn detect_topk(
    scene: &Scene,
    catalog: &Catalog,
    query_text: &str,
    config: &DetectorConfig,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<DetectionCandidate>, DetectorError> {
    config.validate()?;
    let noise = Normal::new(0.0, config.score_noise)
        .map_err(|e| DetectorError::BadConfig(e.to_string()))?;

    let pool: Vec<&SceneObject> = match head_noun(catalog, query_text) {
        Some(mut category) => {
            let recognized = rng.gen::<f64>() < config.category_recall;
            if !recognized {
                // Category confusion: report some other category present
                // in the scene (sorted for a stable pick), if one exists.
                let mut others: Vec<usize> = scene
                    .objects
                    .iter()
                    .map(|o| o.category)
                    .filter(|&c| c != category)
                    .collect();
                others.sort_unstable();
                others.dedup();
                if !others.is_empty() {
                    category = others[rng.gen_range(0..others.len())];
                }
            }
            let members: Vec<&SceneObject> = scene
                .objects
                .iter()
                .filter(|o| o.category == category)
                .collect();
            if members.is_empty() {
                largest_overall(scene, config.top_k)
            } else {
                members
            }
        }
        None => largest_overall(scene, config.top_k),
    };

    let max_area = pool
        .iter()
        .map(|o| o.visible_mask.area())
        .max()
        .unwrap_or(0)
        .max(1) as f64;

    let mut candidates: Vec<DetectionCandidate> = pool
        .iter()
        .map(|o| {
            let base = o.visible_mask.area() as f64 / max_area;
            let score = (base + noise.sample(rng)).clamp(0.0, 1.0);
            let mask = perturb_mask(
                &o.visible_mask,
                config.boundary_noise,
                config.iou_floor,
                rng,
            );
            DetectionCandidate {
                mask,
                score,
                source_id: o.id,
            }
        })
        .collect();

    candidates.sort_by(|a, b| {
        b.score
            .partial_cmp(&a.score)
            .expect("scores are finite")
            .then(a.source_id.cmp(&b.source_id))
    });
    candidates.truncate(config.top_k);
    Ok(candidates)
}

/// Fallback pool: the `k` largest visible objects, area descending
/// (id-ascending on ties).
fn largest_overall(scene: &Scene, k: usize) -> Vec<&SceneObject> {
    let mut all: Vec<&SceneObject> = scene.objects.iter().collect();
    all.sort_by(|a, b| {
        b.visible_mask
            .area()
            .cmp(&a.visible_mask.area())
            .then(a.id.cmp(&b.id))
    });
    all.truncate(k);
    all
}

/// Where the hybrid output came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HybridChoice {
    /// Index into the candidate list.
    Candidate(usize),
    /// The decoder's own mask (no candidate overlapped, or none existed).
    Own,
}

/// The hybrid selector's pick.
#[derive(Clone, Debug)]
pub struct HybridSelection {
    pub mask: BitMask,
    pub choice: HybridChoice,
}

/// Picks the candidate whose mask maximally overlaps (IoU) the decoder's
/// prediction; ties break toward the higher detector score, then the lower
/// list index. When every overlap is exactly zero — or the list is
/// empty — the decoder's own mask is returned and a warning is logged.
///
/// # Errors
///
/// [`MetricError::ShapeMismatch`] when a candidate's frame differs from
/// the prediction's.
pub fn hybrid_select<S: Scalar>(
    own: &PredictionMask<S>,
    candidates: &[DetectionCandidate],
) -> Result<HybridSelection, MetricError> {
    if candidates.is_empty() {
        log::warn!("hybrid selection got no candidates; keeping the decoder mask");
        return Ok(HybridSelection {
            mask: own.binary_mask.clone(),
            choice: HybridChoice::Own,
        });
    }
    let mut best: Option<(f64, f64, usize)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let overlap = iou(&c.mask, &own.binary_mask)?;
        let better = match best {
            None => true,
            Some((bo, bs, _)) => {
                overlap > bo || (overlap == bo && c.score > bs)
                // equal overlap and score → keep the earlier index
            }
        };
        if better {
            best = Some((overlap, c.score, i));
        }
    }
    let (overlap, _, idx) = best.expect("nonempty list yields a best");
    if overlap == 0.0 {
        log::warn!("no candidate overlaps the decoder mask; keeping the decoder mask");
        return Ok(HybridSelection {
            mask: own.binary_mask.clone(),
            choice: HybridChoice::Own,
        });
    }
    Ok(HybridSelection {
        mask: candidates[idx].mask.clone(),
        choice: HybridChoice::Candidate(idx),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{rng_for, stream};
    use crate::scenegen::{generate_scene, SceneSpec};

    fn default_cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    fn scene_with(pool: Vec<usize>, n_cats: (usize, usize), clutter: u8, id: u64) -> Scene {
        let catalog = Catalog::standard();
        let mut spec = SceneSpec::new(pool, clutter);
        spec.n_categories = n_cats;
        generate_scene(&catalog, &spec, id, 777).expect("scene generates")
    }

    #[test]
    fn morphology_basics() {
        // A single pixel dilated by 1 becomes a 3×3 block.
        let mut m = BitMask::zeros(7, 7);
        m.set(3, 3, true);
        let d = dilate(&m, 1);
        assert_eq!(d.area(), 9);
        for y in 2..=4 {
            for x in 2..=4 {
                assert!(d.get(y, x));
            }
        }
        // Erosion back recovers the point; erosion of the point kills it.
        assert_eq!(erode(&d, 1), m);
        assert_eq!(erode(&m, 1).area(), 0);

        // Radius 0 is the identity on both.
        assert_eq!(dilate(&d, 0), d);
        assert_eq!(erode(&d, 0), d);

        // Eroding the full frame strictly shrinks it (the border goes).
        let mut full = BitMask::zeros(8, 8);
        for v in full.data.iter_mut() {
            *v = 1;
        }
        let e = erode(&full, 1);
        assert!(e.area() < full.area());
        assert_eq!(e.area(), 36); // 6×6 interior survives
    }

    #[test]
    fn perturbation_honors_the_overlap_floor() {
        let catalog = Catalog::standard();
        let mut rng = rng_for(501, stream::DETECTOR, 0);
        let mut changed = 0;
        let mut trials = 0;
        for i in 0..125 {
            let scene = scene_with(catalog.seen_ids(), (2, 3), 2, 9000 + i);
            for o in &scene.objects {
                if o.visible_mask.area() == 0 {
                    continue;
                }
                let p = perturb_mask(&o.visible_mask, 2, 0.7, &mut rng);
                let overlap = iou(&p, &o.visible_mask).unwrap();
                assert!(overlap >= 0.7, "floor violated: {overlap}");
                if p != o.visible_mask {
                    changed += 1;
                }
                trials += 1;
                if trials >= 500 {
                    break;
                }
            }
            if trials >= 500 {
                break;
            }
        }
        assert!(trials >= 500, "wanted 500 perturbation trials, got {trials}");
        // The noise is real: a solid majority of draws actually moved the mask.
        assert!(changed > trials / 3, "only {changed}/{trials} masks changed");
    }

    #[test]
    fn single_instance_scene_yields_that_instance_near_gt() {
        let catalog = Catalog::standard();
        // One category, one instance, no confusion possible.
        let scene = scene_with(vec![0], (1, 1), 1, 1);
        assert_eq!(scene.objects.len(), 1);
        let name = catalog.name(0).to_string();
        let mut cfg = default_cfg();
        cfg.category_recall = 1.0;
        let mut rng = rng_for(501, stream::DETECTOR, 1);
        let got = detect_topk(&scene, &catalog, &format!("the {name}"), &cfg, &mut rng).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].source_id, scene.objects[0].id);
        let overlap = iou(&got[0].mask, &scene.objects[0].visible_mask).unwrap();
        assert!(overlap >= cfg.iou_floor);
        assert!((0.0..=1.0).contains(&got[0].score));
    }

    #[test]
    fn output_ignores_every_token_but_the_head_noun() {
        let catalog = Catalog::standard();
        let scene = scene_with(catalog.seen_ids(), (3, 3), 2, 2);
        let cat = scene.objects[0].category;
        let name = catalog.name(cat).to_string();
        let cfg = default_cfg();

        let paraphrases = [
            format!("the {name}"),
            format!("please pick up the small red {name} on the left side"),
            format!("that {name} behind everything else"),
        ];
        let runs: Vec<Vec<DetectionCandidate>> = paraphrases
            .iter()
            .map(|q| {
                let mut rng = rng_for(501, stream::DETECTOR, 2);
                detect_topk(&scene, &catalog, q, &cfg, &mut rng).unwrap()
            })
            .collect();
        assert_eq!(runs[0], runs[1], "attributes must not steer the detector");
        assert_eq!(runs[0], runs[2]);

        // No category word at all → the largest-objects fallback, which
        // is again invariant to the wording.
        let mut rng = rng_for(501, stream::DETECTOR, 2);
        let a = detect_topk(&scene, &catalog, "grab that thing", &cfg, &mut rng).unwrap();
        let mut rng = rng_for(501, stream::DETECTOR, 2);
        let b = detect_topk(&scene, &catalog, "the big one please", &cfg, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(!a.is_empty());
        // The fallback pool is exactly the largest objects: every returned
        // candidate comes from the top-k by visible area.
        let mut by_area: Vec<&SceneObject> = scene.objects.iter().collect();
        by_area.sort_by(|x, y| {
            y.visible_mask
                .area()
                .cmp(&x.visible_mask.area())
                .then(x.id.cmp(&y.id))
        });
        let biggest: Vec<u32> = by_area.iter().take(cfg.top_k).map(|o| o.id).collect();
        for c in &a {
            assert!(biggest.contains(&c.source_id));
        }
    }

    #[test]
    fn top1_overlap_with_the_target_falls_like_one_over_clutter() {
        let catalog = Catalog::standard();
        let mut cfg = default_cfg();
        cfg.boundary_noise = 0; // exact masks; the ranking is the only noise
        cfg.category_recall = 1.0;

        for (l, expect) in [(2u8, 0.5), (3u8, 1.0 / 3.0)] {
            let mut total = 0.0;
            let n = 1000;
            for t in 0..n {
                // Single-category scenes with exactly `l` instances.
                let scene = scene_with(vec![3], (1, 1), l, 10_000 + l as u64 * 2000 + t);
                let members: Vec<&SceneObject> =
                    scene.objects.iter().filter(|o| o.category == 3).collect();
                assert_eq!(members.len(), l as usize);
                let mut rng = rng_for(501, stream::DETECTOR, 100 + l as u64 * 10_000 + t);
                // The target is any one instance, uniformly.
                let target = members[rng.gen_range(0..members.len())];
                let got = detect_topk(
                    &scene,
                    &catalog,
                    &format!("the {}", catalog.name(3)),
                    &cfg,
                    &mut rng,
                )
                .unwrap();
                total += iou(&got[0].mask, &target.visible_mask).unwrap();
            }
            let mean = total / n as f64;
            assert!(
                (mean - expect).abs() < 0.05,
                "clutter {l}: mean top-1 IoU {mean} vs expected {expect}"
            );
        }
    }

    #[test]
    fn mean_top1_overlap_degrades_with_clutter() {
        let catalog = Catalog::standard();
        let cfg = default_cfg();
        let mut means = Vec::new();
        for l in 1u8..=3 {
            let mut total = 0.0;
            let n = 500;
            for t in 0..n {
                let scene = scene_with(vec![5], (1, 1), l, 40_000 + l as u64 * 1000 + t);
                let members: Vec<&SceneObject> =
                    scene.objects.iter().filter(|o| o.category == 5).collect();
                let mut rng = rng_for(501, stream::DETECTOR, 200 + l as u64 * 10_000 + t);
                let target = members[rng.gen_range(0..members.len())];
                let got = detect_topk(
                    &scene,
                    &catalog,
                    &format!("the {}", catalog.name(5)),
                    &cfg,
                    &mut rng,
                )
                .unwrap();
                total += iou(&got[0].mask, &target.visible_mask).unwrap();
            }
            means.push(total / n as f64);
        }
        assert!(
            means[0] >= means[1] && means[1] >= means[2],
            "top-1 IoU should not improve with clutter: {means:?}"
        );
        // And the drop from no distractors to two is substantial.
        assert!(means[0] - means[2] > 0.2, "degradation too weak: {means:?}");
    }

    #[test]
    fn hybrid_selection_is_argmax_overlap_with_documented_tiebreaks() {
        fn rand_mask(fill: f64, rng: &mut rand_chacha::ChaCha12Rng) -> BitMask {
            let mut m = BitMask::zeros(8, 8);
            for v in m.data.iter_mut() {
                *v = (rng.gen::<f64>() < fill) as u8;
            }
            m
        }

        let mut rng = rng_for(501, stream::DETECTOR, 3);
        for trial in 0..500u64 {
            let own_mask = rand_mask(0.4, &mut rng);
            let own = PredictionMask::<f32>::from_binary(&own_mask);
            let n = 1 + (trial % 4) as usize;
            let candidates: Vec<DetectionCandidate> = (0..n)
                .map(|i| DetectionCandidate {
                    mask: rand_mask(0.3, &mut rng),
                    // Coarse scores force frequent ties.
                    score: (rng.gen_range(0..4) as f64) / 4.0,
                    source_id: i as u32,
                })
                .collect();

            let got = hybrid_select(&own, &candidates).unwrap();

            // Brute force: enumerate and compare by the stated rule.
            let overlaps: Vec<f64> = candidates
                .iter()
                .map(|c| iou(&c.mask, &own_mask).unwrap())
                .collect();
            let mut want = 0usize;
            for i in 1..n {
                let better = overlaps[i] > overlaps[want]
                    || (overlaps[i] == overlaps[want]
                        && candidates[i].score > candidates[want].score);
                if better {
                    want = i;
                }
            }
            if overlaps[want] == 0.0 {
                assert_eq!(got.choice, HybridChoice::Own, "trial {trial}");
                assert_eq!(got.mask, own_mask);
            } else {
                assert_eq!(got.choice, HybridChoice::Candidate(want), "trial {trial}");
                assert_eq!(got.mask, candidates[want].mask);
            }
        }
    }

    #[test]
    fn hybrid_identity_fallback_and_empty_cases() {
        let mut m = BitMask::zeros(6, 6);
        for (y, x) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            m.set(y, x, true);
        }
        let own = PredictionMask::<f32>::from_binary(&m);

        // A candidate equal to the prediction is chosen with overlap 1.
        let same = DetectionCandidate {
            mask: m.clone(),
            score: 0.2,
            source_id: 7,
        };
        let got = hybrid_select(&own, std::slice::from_ref(&same)).unwrap();
        assert_eq!(got.choice, HybridChoice::Candidate(0));
        assert_eq!(got.mask, m);

        // A worked ranking: candidates covering 1, 3, and 2 of the
        // prediction's four pixels give overlaps 1/4, 3/4, 2/4 — the
        // middle candidate must win despite its bottom score.
        let mk = |n_true: usize| {
            let mut c = BitMask::zeros(6, 6);
            let shared = [(1, 1), (1, 2), (2, 1), (2, 2)];
            for &(y, x) in shared.iter().take(n_true) {
                c.set(y, x, true);
            }
            c
        };
        let cands = vec![
            DetectionCandidate {
                mask: mk(1),
                score: 0.9,
                source_id: 0,
            },
            DetectionCandidate {
                mask: mk(3),
                score: 0.1,
                source_id: 1,
            },
            DetectionCandidate {
                mask: mk(2),
                score: 0.5,
                source_id: 2,
            },
        ];
        let got = hybrid_select(&own, &cands).unwrap();
        assert_eq!(got.choice, HybridChoice::Candidate(1));

        // All-disjoint candidates → the prediction comes back.
        let mut far = BitMask::zeros(6, 6);
        far.set(5, 5, true);
        let disjoint = vec![DetectionCandidate {
            mask: far,
            score: 1.0,
            source_id: 0,
        }];
        let got = hybrid_select(&own, &disjoint).unwrap();
        assert_eq!(got.choice, HybridChoice::Own);
        assert_eq!(got.mask, m);

        // Empty list → the prediction, flagged as such.
        let got = hybrid_select(&own, &[]).unwrap();
        assert_eq!(got.choice, HybridChoice::Own);

        // Frame mismatch is a real error.
        let bad = DetectionCandidate {
            mask: BitMask::zeros(4, 4),
            score: 0.5,
            source_id: 0,
        };
        assert!(hybrid_select(&own, &[bad]).is_err());
    }

    #[test]
    fn candidate_records_round_trip() {
        let mut m = BitMask::zeros(5, 5);
        m.set(2, 2, true);
        m.set(2, 3, true);
        let c = DetectionCandidate {
            mask: m,
            score: 0.625,
            source_id: 11,
        };
        let rec = CandidateRecord::from(&c);
        let json = serde_json::to_string(&rec).unwrap();
        let back: CandidateRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_candidate().unwrap(), c);
        assert!(CandidateRecord {
            mask_rle_hex: "zz".into(),
            ..rec
        }
        .to_candidate()
        .is_err());
    }

    #[test]
    fn config_validation_guards_each_knob() {
        assert!(default_cfg().validate().is_ok());
        for bad in [
            DetectorConfig {
                top_k: 0,
                ..default_cfg()
            },
            DetectorConfig {
                score_noise: -0.1,
                ..default_cfg()
            },
            DetectorConfig {
                category_recall: 1.5,
                ..default_cfg()
            },
            DetectorConfig {
                iou_floor: -0.2,
                ..default_cfg()
            },
        ] {
            assert!(matches!(bad.validate(), Err(DetectorError::BadConfig(_))));
        }
    }
}
