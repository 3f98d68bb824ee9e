//! Weight initialization.
//!
//! All random init samples in `f64` and then narrows to the working scalar,
//! so an `f32` and an `f64` model built from the same seed agree to `f32`
//! rounding — which keeps cross-precision comparisons meaningful.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};

use crate::scalar::{sc, Scalar};

/// Standard deviation used for all gaussian weight init.
pub const INIT_STD: f64 = 0.02;

/// Matrix with i.i.d. `N(0, std²)` entries.
pub fn normal2<S: Scalar>(rng: &mut ChaCha12Rng, shape: (usize, usize), std: f64) -> Array2<S> {
    let dist = Normal::new(0.0, std).expect("std must be positive");
    Array2::from_shape_simple_fn(shape, || sc(dist.sample(rng)))
}

/// Vector with i.i.d. `N(0, std²)` entries.
pub fn normal1<S: Scalar>(rng: &mut ChaCha12Rng, len: usize, std: f64) -> Array1<S> {
    let dist = Normal::new(0.0, std).expect("std must be positive");
    Array1::from_shape_simple_fn(len, || sc(dist.sample(rng)))
}

/// Rank-4 tensor with i.i.d. `N(0, std²)` entries (transposed-conv kernels).
pub fn normal4<S: Scalar>(
    rng: &mut ChaCha12Rng,
    shape: (usize, usize, usize, usize),
    std: f64,
) -> Array4<S> {
    let dist = Normal::new(0.0, std).expect("std must be positive");
    Array4::from_shape_simple_fn(shape, || sc(dist.sample(rng)))
}

/// Fisher–Yates shuffle of `0..n` driven by the given stream.
pub fn permutation(rng: &mut ChaCha12Rng, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}
