//! Central finite-difference verification of analytic gradients.
//!
//! The workflow: zero grads, run forward+backward once to fill the analytic
//! gradients, snapshot them with [`super::collect_grads`], then hand the
//! model plus a forward-only loss closure to [`check_grads`]. Each selected
//! parameter is nudged by `±h` and the symmetric difference quotient is
//! compared against the stored analytic value. Run this in `f64`: with
//! `h = 1e-5` the truncation and round-off errors both sit near `1e-11`,
//! far below the acceptance tolerance.

use ndarray::ArrayD;

use super::ParamWalk;

/// Default step for central differences in `f64`.
pub const FD_STEP: f64 = 1e-5;

/// Outcome of a finite-difference sweep.
#[derive(Clone, Debug)]
pub struct FdReport {
    /// Number of scalar parameters checked.
    pub checked: usize,
    pub max_rel_err: f64,
    /// Qualified tensor name and flat index where the worst error occurred.
    pub worst: String,
}

/// Relative error with a floor, so near-zero gradient pairs compare on an
/// absolute scale instead of exploding.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

fn nudge<S, M>(model: &mut M, target: &str, idx: usize, delta: f64)
where
    S: crate::scalar::Scalar,
    M: ParamWalk<S> + ?Sized,
{
    model.walk_mut("", &mut |name, mut v| {
        if name == target {
            let slice = v.as_slice_mut().expect("parameters are contiguous");
            slice[idx] = slice[idx] + crate::scalar::sc(delta);
        }
    });
}

/// Checks `analytic` (from [`super::collect_grads`]) against central finite
/// differences of `loss` for every parameter, or for an evenly-strided
/// subset of at most `max_per_tensor` entries per tensor when given.
pub fn check_grads<M>(
    model: &mut M,
    loss: &mut dyn FnMut(&mut M) -> f64,
    analytic: &[(String, ArrayD<f64>)],
    h: f64,
    max_per_tensor: Option<usize>,
) -> FdReport
where
    M: ParamWalk<f64> + ?Sized,
{
    let mut checked = 0usize;
    let mut max_rel = 0f64;
    let mut worst = String::new();

    for (name, grad) in analytic {
        let n = grad.len();
        let stride = match max_per_tensor {
            Some(m) if n > m => n.div_ceil(m),
            _ => 1,
        };
        let gflat = grad.as_slice().expect("gradients are contiguous");
        let mut idx = 0;
        while idx < n {
            nudge(model, name, idx, h);
            let lp = loss(model);
            nudge(model, name, idx, -2.0 * h);
            let lm = loss(model);
            nudge(model, name, idx, h); // restore

            let fd = (lp - lm) / (2.0 * h);
            let re = rel_err(gflat[idx], fd);
            checked += 1;
            if re > max_rel {
                max_rel = re;
                worst = format!("{name}[{idx}] analytic={} fd={fd}", gflat[idx]);
            }
            idx += stride;
        }
    }

    FdReport {
        checked,
        max_rel_err: max_rel,
        worst,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{collect_grads, zero_grads, Linear};
    use crate::rng::rng_for;
    use ndarray::Array2;
    use rand::Rng;

    /// Scalar loss: sum of squares of a linear layer's output.
    fn loss_of(l: &Linear<f64>, x: &Array2<f64>) -> f64 {
        l.forward(x).iter().map(|v| v * v).sum()
    }

    #[test]
    fn linear_layer_gradients_pass_fd() {
        let mut rng = rng_for(8, "fd", 0);
        let mut l: Linear<f64> = Linear::new(&mut rng, 4, 3);
        let x = Array2::from_shape_simple_fn((5, 4), || rng.gen_range(-1.0..1.0));

        zero_grads(&mut l);
        let y = l.forward(&x);
        let dy = y.map(|v| 2.0 * v); // d/dy of Σy²
        l.backward(&x, &dy);
        let analytic = collect_grads(&mut l);

        let report = check_grads(
            &mut l,
            &mut |m: &mut Linear<f64>| loss_of(m, &x),
            &analytic,
            FD_STEP,
            None,
        );
        assert_eq!(report.checked, 4 * 3 + 3);
        assert!(
            report.max_rel_err < 1e-6,
            "linear FD failed: {}",
            report.worst
        );
    }

    #[test]
    fn deliberately_wrong_gradient_is_caught() {
        let mut rng = rng_for(8, "fd", 1);
        let mut l: Linear<f64> = Linear::new(&mut rng, 2, 2);
        let x = Array2::from_shape_simple_fn((3, 2), || rng.gen_range(-1.0..1.0));

        zero_grads(&mut l);
        let y = l.forward(&x);
        let dy = y.map(|v| 2.0 * v);
        l.backward(&x, &dy);
        let mut analytic = collect_grads(&mut l);
        analytic[0].1[[0, 0].as_ref()] += 0.5; // corrupt one entry

        let report = check_grads(
            &mut l,
            &mut |m: &mut Linear<f64>| loss_of(m, &x),
            &analytic,
            FD_STEP,
            None,
        );
        assert!(report.max_rel_err > 1e-2);
    }
}
