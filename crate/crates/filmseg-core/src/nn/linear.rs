//! Fully-connected layer `y = x·W + b` with weight shape `(in, out)`.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand_chacha::ChaCha12Rng;

use super::{init, qualify, ParamWalk};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct Linear<S: Scalar> {
    /// `(in, out)` so the forward pass is a plain `x.dot(&w)`.
    pub w: Array2<S>,
    pub b: Array1<S>,
    pub gw: Array2<S>,
    pub gb: Array1<S>,
}

impl<S: Scalar> Linear<S> {
    /// Gaussian-initialized weights, zero bias.
    pub fn new(rng: &mut ChaCha12Rng, d_in: usize, d_out: usize) -> Self {
        Self::with_std(rng, d_in, d_out, init::INIT_STD)
    }

    pub fn with_std(rng: &mut ChaCha12Rng, d_in: usize, d_out: usize, std: f64) -> Self {
        Linear {
            w: init::normal2(rng, (d_in, d_out), std),
            b: Array1::zeros(d_out),
            gw: Array2::zeros((d_in, d_out)),
            gb: Array1::zeros(d_out),
        }
    }

    /// All-zero weights with a constant bias — used by FiLM conditioning nets
    /// so modulation starts at an exact identity.
    pub fn zero_with_bias(d_in: usize, d_out: usize, bias: S) -> Self {
        Linear {
            w: Array2::zeros((d_in, d_out)),
            b: Array1::from_elem(d_out, bias),
            gw: Array2::zeros((d_in, d_out)),
            gb: Array1::zeros(d_out),
        }
    }

    pub fn d_in(&self) -> usize {
        self.w.nrows()
    }

    pub fn d_out(&self) -> usize {
        self.w.ncols()
    }

    /// `x: (N, in)` → `(N, out)`.
    pub fn forward(&self, x: &Array2<S>) -> Array2<S> {
        let mut y = x.dot(&self.w);
        y += &self.b;
        y
    }

    /// Accumulates `gw += xᵀ·dy`, `gb += Σ_rows dy`; returns `dx = dy·Wᵀ`.
    pub fn backward(&mut self, x: &Array2<S>, dy: &Array2<S>) -> Array2<S> {
        self.gw += &x.t().dot(dy);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w.t())
    }
}

impl<S: Scalar> ParamWalk<S> for Linear<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        f(&qualify(prefix, "w"), self.w.view().into_dyn());
        f(&qualify(prefix, "b"), self.b.view().into_dyn());
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        f(&qualify(prefix, "w"), self.w.view_mut().into_dyn());
        f(&qualify(prefix, "b"), self.b.view_mut().into_dyn());
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        f(
            &qualify(prefix, "w"),
            self.w.view_mut().into_dyn(),
            self.gw.view_mut().into_dyn(),
        );
        f(
            &qualify(prefix, "b"),
            self.b.view_mut().into_dyn(),
            self.gb.view_mut().into_dyn(),
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use ndarray::array;

    #[test]
    fn forward_matches_hand_computation() {
        let mut l: Linear<f64> = Linear::new(&mut rng_for(1, "t", 0), 2, 2);
        l.w = array![[1.0, 2.0], [3.0, 4.0]];
        l.b = array![0.5, -0.5];
        let y = l.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[4.5, 5.5]]);
    }

    #[test]
    fn backward_shapes_and_accumulation() {
        let mut l: Linear<f64> = Linear::new(&mut rng_for(1, "t", 1), 3, 2);
        let x = array![[1.0, 0.0, -1.0], [2.0, 1.0, 0.5]];
        let dy = array![[1.0, -1.0], [0.5, 2.0]];
        let dx = l.backward(&x, &dy);
        assert_eq!(dx.dim(), (2, 3));
        let gb1 = l.gb.clone();
        l.backward(&x, &dy);
        // Second call accumulates rather than overwrites.
        assert_eq!(l.gb, &gb1 * 2.0);
    }
}
