//! Activations and row-wise softmax, as pure functions.

use ndarray::{Array2, Axis};

use crate::scalar::{sc, Scalar};

/// GELU in its tanh approximation:
/// `0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³)))`.
pub fn gelu<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    let c1: S = sc(0.797_884_560_802_865_4); // √(2/π)
    let c2: S = sc(0.044715);
    let half: S = sc(0.5);
    x.map(|&v| {
        let inner = c1 * (v + c2 * v * v * v);
        half * v * (S::one() + inner.tanh())
    })
}

/// Derivative of the tanh-approximated GELU, applied to upstream `dy`.
pub fn gelu_backward<S: Scalar>(x: &Array2<S>, dy: &Array2<S>) -> Array2<S> {
    let c1: S = sc(0.797_884_560_802_865_4);
    let c2: S = sc(0.044715);
    let half: S = sc(0.5);
    let three: S = sc(3.0);
    let mut dx = Array2::zeros(x.raw_dim());
    for ((o, &v), &d) in dx.iter_mut().zip(x.iter()).zip(dy.iter()) {
        let u = c1 * (v + c2 * v * v * v);
        let t = u.tanh();
        let du = c1 * (S::one() + three * c2 * v * v);
        let g = half * (S::one() + t) + half * v * (S::one() - t * t) * du;
        *o = g * d;
    }
    dx
}

/// Numerically stable logistic function (both exponent branches bounded).
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

/// Row-wise softmax with max subtraction for stability.
///
/// Rows may contain `-inf` entries (masked keys); those come out exactly 0.
pub fn softmax_rows<S: Scalar>(x: &Array2<S>) -> Array2<S> {
    let mut y = Array2::zeros(x.raw_dim());
    for (mut out, row) in y.outer_iter_mut().zip(x.outer_iter()) {
        let mut max = S::neg_infinity();
        for &v in row {
            if v > max {
                max = v;
            }
        }
        let mut sum = S::zero();
        for (o, &v) in out.iter_mut().zip(row.iter()) {
            let e = (v - max).exp();
            *o = e;
            sum += e;
        }
        let inv = S::one() / sum;
        for o in out.iter_mut() {
            *o = *o * inv;
        }
    }
    y
}

/// Backward through a row-wise softmax given its output `y`:
/// `dx = y ∘ (dy − Σ_j dy_j·y_j)` per row.
pub fn softmax_rows_backward<S: Scalar>(y: &Array2<S>, dy: &Array2<S>) -> Array2<S> {
    let dot = (y * dy).sum_axis(Axis(1));
    let mut dx = Array2::zeros(y.raw_dim());
    for i in 0..y.nrows() {
        let d = dot[i];
        for j in 0..y.ncols() {
            dx[[i, j]] = y[[i, j]] * (dy[[i, j]] - d);
        }
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn gelu_known_values() {
        let x = array![[0.0, 1.0, -1.0]];
        let y: Array2<f64> = gelu(&x);
        assert!((y[[0, 0]]).abs() < 1e-12);
        assert!((y[[0, 1]] - 0.841192).abs() < 1e-5);
        assert!((y[[0, 2]] + 0.158808).abs() < 1e-5);
    }

    #[test]
    fn softmax_rows_sum_to_one_and_handle_neg_inf() {
        let x = array![[1.0, 2.0, f64::NEG_INFINITY]];
        let y = softmax_rows(&x);
        assert_eq!(y[[0, 2]], 0.0);
        assert!((y.row(0).sum() - 1.0).abs() < 1e-12);
        assert!(y[[0, 1]] > y[[0, 0]]);
    }

    #[test]
    fn gelu_gradient_matches_finite_differences() {
        let xs: Array2<f64> = array![[0.3, -0.7, 1.9, -2.5, 0.0]];
        let dy = Array2::from_elem((1, 5), 1.0);
        let g = gelu_backward(&xs, &dy);
        let h = 1e-6;
        for j in 0..5 {
            let mut xp = xs.clone();
            let mut xm = xs.clone();
            xp[[0, j]] += h;
            xm[[0, j]] -= h;
            let fd = (gelu(&xp)[[0, j]] - gelu(&xm)[[0, j]]) / (2.0 * h);
            assert!(
                (fd - g[[0, j]]).abs() < 1e-8,
                "gelu grad mismatch at {j}: fd={fd} analytic={}",
                g[[0, j]]
            );
        }
    }
}
