//! Layer normalization over the feature axis with learned scale and shift.

use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};

use super::{qualify, ParamWalk};
use crate::scalar::{sc, Scalar};

#[derive(Clone, Debug)]
pub struct LayerNorm<S: Scalar> {
    pub g: Array1<S>,
    pub b: Array1<S>,
    pub gg: Array1<S>,
    pub gb: Array1<S>,
    eps: S,
}

/// Per-row statistics kept for the backward pass.
#[derive(Clone, Debug)]
pub struct LnCache<S: Scalar> {
    pub xhat: Array2<S>,
    pub inv_std: Array1<S>,
}

impl<S: Scalar> LayerNorm<S> {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            g: Array1::from_elem(dim, S::one()),
            b: Array1::zeros(dim),
            gg: Array1::zeros(dim),
            gb: Array1::zeros(dim),
            eps: sc(1e-5),
        }
    }

    /// Normalizes each row of `x: (N, C)` to zero mean / unit variance, then
    /// applies the learned affine.
    pub fn forward(&self, x: &Array2<S>) -> (Array2<S>, LnCache<S>) {
        let n = x.nrows();
        let c = x.ncols();
        let inv_c = S::one() / sc::<S>(c as f64);
        let mut xhat = Array2::zeros((n, c));
        let mut inv_std = Array1::zeros(n);
        for (i, row) in x.outer_iter().enumerate() {
            let mean = row.sum() * inv_c;
            let mut var = S::zero();
            for &v in row {
                let d = v - mean;
                var += d * d;
            }
            var = var * inv_c;
            let is = S::one() / (var + self.eps).sqrt();
            inv_std[i] = is;
            for (j, &v) in row.iter().enumerate() {
                xhat[[i, j]] = (v - mean) * is;
            }
        }
        let mut y = xhat.clone();
        y *= &self.g;
        y += &self.b;
        (y, LnCache { xhat, inv_std })
    }

    /// Standard layer-norm backward: with `dŷ = dy∘g`,
    /// `dx = inv_std · (dŷ − mean(dŷ) − x̂·mean(dŷ∘x̂))` per row.
    pub fn backward(&mut self, cache: &LnCache<S>, dy: &Array2<S>) -> Array2<S> {
        let c = dy.ncols();
        let inv_c = S::one() / sc::<S>(c as f64);

        self.gg += &(dy * &cache.xhat).sum_axis(Axis(0));
        self.gb += &dy.sum_axis(Axis(0));

        let dyh = dy * &self.g;
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dyh_row = dyh.row(i);
            let xhat_row = cache.xhat.row(i);
            let m1 = dyh_row.sum() * inv_c;
            let mut m2 = S::zero();
            for (a, b) in dyh_row.iter().zip(xhat_row.iter()) {
                m2 += *a * *b;
            }
            m2 = m2 * inv_c;
            let is = cache.inv_std[i];
            for j in 0..c {
                dx[[i, j]] = is * (dyh_row[j] - m1 - xhat_row[j] * m2);
            }
        }
        dx
    }
}

impl<S: Scalar> ParamWalk<S> for LayerNorm<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        f(&qualify(prefix, "g"), self.g.view().into_dyn());
        f(&qualify(prefix, "b"), self.b.view().into_dyn());
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        f(&qualify(prefix, "g"), self.g.view_mut().into_dyn());
        f(&qualify(prefix, "b"), self.b.view_mut().into_dyn());
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        f(
            &qualify(prefix, "g"),
            self.g.view_mut().into_dyn(),
            self.gg.view_mut().into_dyn(),
        );
        f(
            &qualify(prefix, "b"),
            self.b.view_mut().into_dyn(),
            self.gb.view_mut().into_dyn(),
        );
    }
}

/// Scales each row of `x` to unit Euclidean length (norms floored at 1e-12
/// to stay finite on zero rows). Returns the scaled rows and the norms.
pub fn l2_normalize_rows<S: Scalar>(x: &Array2<S>) -> (Array2<S>, Array1<S>) {
    let mut y = x.clone();
    let mut norms = Array1::zeros(x.nrows());
    for (i, mut row) in y.outer_iter_mut().enumerate() {
        let n = row.iter().map(|&v| v * v).sum::<S>().sqrt().max(sc(1e-12));
        norms[i] = n;
        row.mapv_inplace(|v| v / n);
    }
    (y, norms)
}

/// Backward of [`l2_normalize_rows`]: with `y = x/‖x‖`,
/// `dx = (dy − y·(y⋅dy)) / ‖x‖` per row.
pub fn l2_normalize_rows_backward<S: Scalar>(
    y: &Array2<S>,
    norms: &Array1<S>,
    dy: &Array2<S>,
) -> Array2<S> {
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let yr = y.row(i);
        let dyr = dy.row(i);
        let dot = yr.iter().zip(dyr.iter()).map(|(&a, &b)| a * b).sum::<S>();
        for j in 0..dy.ncols() {
            dx[[i, j]] = (dyr[j] - yr[j] * dot) / norms[i];
        }
    }
    dx
}
