//! Transposed 2-D convolution with kernel size equal to stride.
//!
//! With `k == s` every output pixel is produced by exactly one input pixel,
//! so the whole operation is a single matrix product
//! `(out_c·k², in_c) × (in_c, B·H·W)` followed by a reshape-scatter — no
//! overlap accumulation and no checkerboard seams to reason about.

use ndarray::{Array1, Array2, Array4, ArrayView2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use super::{init, qualify, ParamWalk};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct ConvTranspose2d<S: Scalar> {
    /// `(in_c, out_c, k, k)`.
    pub w: Array4<S>,
    pub b: Array1<S>,
    pub gw: Array4<S>,
    pub gb: Array1<S>,
    pub k: usize,
}

impl<S: Scalar> ConvTranspose2d<S> {
    pub fn new(rng: &mut ChaCha12Rng, in_c: usize, out_c: usize, k: usize) -> Self {
        ConvTranspose2d {
            w: init::normal4(rng, (in_c, out_c, k, k), init::INIT_STD),
            b: Array1::zeros(out_c),
            gw: Array4::zeros((in_c, out_c, k, k)),
            gb: Array1::zeros(out_c),
            k,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.w.shape()[0]
    }

    pub fn out_channels(&self) -> usize {
        self.w.shape()[1]
    }

    /// Kernel viewed as `(in_c, out_c·k·k)`; valid because the weight tensor
    /// is stored in standard layout.
    fn w2(&self) -> ArrayView2<'_, S> {
        let (ic, oc, k, _) = self.w.dim();
        ArrayView2::from_shape((ic, oc * k * k), self.w.as_slice().unwrap()).unwrap()
    }

    /// `x: (B, in_c, H, W)` → `(B, out_c, H·k, W·k)`.
    pub fn forward(&self, x: &Array4<S>) -> Array4<S> {
        let (bs, ic, h, w) = x.dim();
        assert_eq!(ic, self.in_channels(), "channel mismatch in conv transpose");
        let oc = self.out_channels();
        let k = self.k;
        let mut out = Array4::zeros((bs, oc, h * k, w * k));
        let w2 = self.w2(); // (ic, oc*k*k)

        for bi in 0..bs {
            let xb = x.index_axis(ndarray::Axis(0), bi);
            let x2 = ArrayView2::from_shape((ic, h * w), xb.as_slice().unwrap()).unwrap();
            let y2 = w2.t().dot(&x2); // (oc*k*k, h*w)
            for ocx in 0..oc {
                for di in 0..k {
                    for dj in 0..k {
                        let src_row = y2.row((ocx * k + di) * k + dj);
                        let bias = self.b[ocx];
                        for i in 0..h {
                            for j in 0..w {
                                out[[bi, ocx, i * k + di, j * k + dj]] =
                                    src_row[i * w + j] + bias;
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates kernel and bias gradients; returns `dx`.
    pub fn backward(&mut self, x: &Array4<S>, dy: &Array4<S>) -> Array4<S> {
        let (bs, ic, h, w) = x.dim();
        let oc = self.out_channels();
        let k = self.k;
        let mut dx = Array4::zeros((bs, ic, h, w));

        for bi in 0..bs {
            // Re-gather dy into the (oc*k*k, h*w) layout of the forward GEMM.
            let mut dy2 = Array2::zeros((oc * k * k, h * w));
            for ocx in 0..oc {
                let mut bias_sum = S::zero();
                for di in 0..k {
                    for dj in 0..k {
                        let mut dst = dy2.row_mut((ocx * k + di) * k + dj);
                        for i in 0..h {
                            for j in 0..w {
                                let g = dy[[bi, ocx, i * k + di, j * k + dj]];
                                dst[i * w + j] = g;
                                bias_sum += g;
                            }
                        }
                    }
                }
                self.gb[ocx] += bias_sum;
            }

            let xb = x.index_axis(ndarray::Axis(0), bi);
            let x2 = ArrayView2::from_shape((ic, h * w), xb.as_slice().unwrap()).unwrap();

            // dW2 = X2 · dY2ᵀ, dX2 = W2 · dY2.
            let dw2 = x2.dot(&dy2.t()); // (ic, oc*k*k)
            let gw_slice = self.gw.as_slice_mut().unwrap();
            for (g, d) in gw_slice.iter_mut().zip(dw2.as_slice().unwrap()) {
                *g += *d;
            }

            let dx2 = self.w2().dot(&dy2); // (ic, h*w)
            let mut dxb = dx.index_axis_mut(ndarray::Axis(0), bi);
            dxb.as_slice_mut()
                .unwrap()
                .copy_from_slice(dx2.as_slice().unwrap());
        }
        dx
    }
}

impl<S: Scalar> ParamWalk<S> for ConvTranspose2d<S> {
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
