//! Mask-overlap metrics: IoU and precision-at-threshold.

use thiserror::Error;

use crate::raster::BitMask;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("mask shapes differ: {a_h}x{a_w} vs {b_h}x{b_w}")]
    ShapeMismatch {
        a_h: usize,
        a_w: usize,
        b_h: usize,
        b_w: usize,
    },
    #[error("precision over an empty IoU list is undefined")]
    NoSamples,
    #[error("threshold {0} must lie strictly inside (0, 100)")]
    BadThreshold(f64),
}

/// Intersection over union of two binary masks.
///
/// Two empty masks agree perfectly and score 1.0; an empty prediction
/// against a nonempty target scores 0.0 (the union is nonempty).
pub fn iou(pred: &BitMask, gt: &BitMask) -> Result<f64, MetricError> {
    if pred.h != gt.h || pred.w != gt.w {
        return Err(MetricError::ShapeMismatch {
            a_h: pred.h,
            a_w: pred.w,
            b_h: gt.h,
            b_w: gt.w,
        });
    }
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let a = a != 0;
        let b = b != 0;
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    })
}

/// Percentage of IoU values **strictly** above `x_percent / 100`.
pub fn precision_at(ious: &[f64], x_percent: f64) -> Result<f64, MetricError> {
    if ious.is_empty() {
        return Err(MetricError::NoSamples);
    }
    if !(0.0 < x_percent && x_percent < 100.0) {
        return Err(MetricError::BadThreshold(x_percent));
    }
    let t = x_percent / 100.0;
    let hits = ious.iter().filter(|&&v| v > t).count();
    Ok(100.0 * hits as f64 / ious.len() as f64)
}

/// Evaluation knobs: which P@X columns to report and how to score the
/// degenerate empty-vs-empty case.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricsConfig {
    /// Strictly increasing thresholds in (0, 100).
    pub thresholds: Vec<f64>,
    /// When both prediction and target are empty, score the sample as a
    /// perfect match (the [`iou`] convention). Clearing this makes
    /// evaluation count such samples as failures instead — a diagnostics
    /// knob for splits where an empty target signals a data bug.
    pub empty_pair_is_match: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            thresholds: vec![50.0, 60.0, 70.0, 80.0, 90.0],
            empty_pair_is_match: true,
        }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        for pair in self.thresholds.windows(2) {
            if pair[0] >= pair[1] {
                return Err(MetricError::BadThreshold(pair[1]));
            }
        }
        for &t in &self.thresholds {
            if !(0.0 < t && t < 100.0) {
                return Err(MetricError::BadThreshold(t));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn random_mask(h: usize, w: usize, fill: f64, rng: &mut rand_chacha::ChaCha12Rng) -> BitMask {
        let mut m = BitMask::zeros(h, w);
        for v in m.data.iter_mut() {
            *v = (rng.gen_range(0.0..1.0) < fill) as u8;
        }
        m
    }

    #[test]
    fn identity_disjoint_and_empty_cases() {
        let mut a = BitMask::zeros(4, 4);
        a.set(1, 1, true);
        a.set(2, 2, true);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);

        let mut b = BitMask::zeros(4, 4);
        b.set(0, 3, true);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);

        let empty = BitMask::zeros(4, 4);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&empty, &a).unwrap(), 0.0);

        let other = BitMask::zeros(3, 4);
        assert!(matches!(
            iou(&a, &other),
            Err(MetricError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn four_by_four_overlap_case() {
        // |pred| = 4, |gt| = 4, overlap 2 → 2 / 6.
        let mut pred = BitMask::zeros(4, 4);
        let mut gt = BitMask::zeros(4, 4);
        for i in 0..4 {
            pred.set(0, i, true);
        }
        gt.set(0, 2, true);
        gt.set(0, 3, true);
        gt.set(1, 0, true);
        gt.set(1, 1, true);
        let v = iou(&pred, &gt).unwrap();
        assert!((v - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_naive_pixel_counting_on_a_thousand_pairs() {
        let mut rng = rng_for(99, "metric-oracle", 0);
        let mut ious = Vec::new();
        for _ in 0..1000 {
            let fill = rng.gen_range(0.0..0.6);
            let a = random_mask(8, 8, fill, &mut rng);
            let b = random_mask(8, 8, fill, &mut rng);

            // Independent double loop, no shared helpers.
            let mut inter = 0.0;
            let mut union = 0.0;
            for y in 0..8 {
                for x in 0..8 {
                    if a.get(y, x) && b.get(y, x) {
                        inter += 1.0;
                    }
                    if a.get(y, x) || b.get(y, x) {
                        union += 1.0;
                    }
                }
            }
            let expect = if union == 0.0 { 1.0 } else { inter / union };
            let got = iou(&a, &b).unwrap();
            assert!((got - expect).abs() < 1e-12);
            assert_eq!(got, iou(&b, &a).unwrap(), "symmetry");
            ious.push(got);
        }

        // precision_at vs a direct strict count at several thresholds.
        for x in [50.0, 60.0, 70.0, 80.0, 90.0] {
            let naive =
                100.0 * ious.iter().filter(|&&v| v > x / 100.0).count() as f64 / 1000.0;
            assert!((precision_at(&ious, x).unwrap() - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn precision_is_strict_and_monotone() {
        let ious = vec![0.6, 0.4, 0.9];
        let p = precision_at(&ious, 50.0).unwrap();
        assert!((p - 200.0 / 3.0).abs() < 1e-9);

        // Values exactly at the threshold do not count.
        let boundary = vec![0.5, 0.5, 0.5];
        assert_eq!(precision_at(&boundary, 50.0).unwrap(), 0.0);

        let mut rng = rng_for(99, "metric-oracle", 1);
        let list: Vec<f64> = (0..64).map(|_| rng.gen_range(0.0..1.0)).collect();
        let sweep: Vec<f64> = [50.0, 60.0, 70.0, 80.0, 90.0]
            .iter()
            .map(|&x| precision_at(&list, x).unwrap())
            .collect();
        assert!(sweep.windows(2).all(|w| w[0] >= w[1]));

        assert_eq!(precision_at(&[], 50.0), Err(MetricError::NoSamples));
        assert!(matches!(
            precision_at(&ious, 0.0),
            Err(MetricError::BadThreshold(_))
        ));
    }

    #[test]
    fn threshold_lists_must_ascend_within_bounds() {
        assert!(MetricsConfig::default().validate().is_ok());
        let bad = MetricsConfig {
            thresholds: vec![50.0, 50.0],
            ..MetricsConfig::default()
        };
        assert!(bad.validate().is_err());
        let out = MetricsConfig {
            thresholds: vec![0.0, 50.0],
            ..MetricsConfig::default()
        };
        assert!(out.validate().is_err());
    }
}
