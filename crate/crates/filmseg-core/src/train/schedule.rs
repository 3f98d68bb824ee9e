//! Learning-rate schedule: cosine decay from a base rate to a floor.

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("step {step} is past the schedule horizon {total}")]
    StepOutOfRange { step: usize, total: usize },
}

/// The rate at `step ∈ 0..total`: `min + ½(base−min)(1 + cos(π·step/total))`,
/// so step 0 runs at `base` and the rate glides toward `min`.
pub fn lr_at_step(
    step: usize,
    total: usize,
    base: f64,
    min: f64,
) -> Result<f64, ScheduleError> {
    if step >= total.max(1) {
        return Err(ScheduleError::StepOutOfRange { step, total });
    }
    let frac = step as f64 / total as f64;
    Ok(min + 0.5 * (base - min) * (1.0 + (std::f64::consts::PI * frac).cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn starts_at_base_decays_monotonically_toward_min() {
        let total = 100;
        let base = 1e-3;
        let min = 1e-5;
        let first = lr_at_step(0, total, base, min).unwrap();
        assert!((first - base).abs() < 1e-15);

        let mut prev = first;
        for s in 1..total {
            let lr = lr_at_step(s, total, base, min).unwrap();
            assert!(lr < prev, "rate must strictly decay");
            assert!(lr > min, "rate stays above the floor");
            prev = lr;
        }
        // Closed-form midpoint: cos(π/2) = 0.
        let mid = lr_at_step(50, total, base, min).unwrap();
        assert!((mid - (min + 0.5 * (base - min))).abs() < 1e-15);
    }

    #[test]
    fn rejects_steps_past_the_horizon() {
        assert_eq!(
            lr_at_step(5, 5, 1e-3, 0.0),
            Err(ScheduleError::StepOutOfRange { step: 5, total: 5 })
        );
    }
}
