//! Vision transformer over a patch grid, exposing intermediate block
//! outputs ("taps") alongside the pooled global embedding.

use ndarray::{s, Array1, Array2, ArrayViewD, ArrayViewMutD};
use rand_chacha::ChaCha12Rng;

use crate::nn::{
    init, l2_normalize_rows, l2_normalize_rows_backward, qualify, BlockCache, LayerNorm, Linear,
    LnCache, ParamWalk, TransformerBlock,
};
use crate::raster::RgbImage;
use crate::scalar::{sc, Scalar};

#[derive(Clone, Debug)]
pub struct VisionTower<S: Scalar> {
    pub patch_embed: Linear<S>,
    /// Learned classification token, `(1, d)`.
    pub cls: Array2<S>,
    pub g_cls: Array2<S>,
    /// Learned position table over `1 + n_patches` sequence slots.
    pub pos: Array2<S>,
    pub g_pos: Array2<S>,
    pub blocks: Vec<TransformerBlock<S>>,
    pub ln_f: LayerNorm<S>,
    pub proj: Linear<S>,
    pub image_hw: usize,
    pub patch: usize,
    pub d_model: usize,
}

/// What the tower emits for a batch: per-tap patch features `(B·P, d)` in
/// ascending block order, and the unit-norm global embedding `(B, d_e)`.
#[derive(Clone, Debug)]
pub struct VisionEncoding<S: Scalar> {
    pub taps: Vec<Array2<S>>,
    pub global: Array2<S>,
}

pub struct VisionCache<S: Scalar> {
    patches: Array2<S>,
    block_caches: Vec<BlockCache<S>>,
    ln_f_cache: LnCache<S>,
    cls_ln: Array2<S>,
    global_unit: Array2<S>,
    global_norms: Array1<S>,
    b: usize,
}

impl<S: Scalar> VisionTower<S> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        rng: &mut ChaCha12Rng,
        image_hw: usize,
        patch: usize,
        d_model: usize,
        n_heads: usize,
        mlp_hidden: usize,
        n_blocks: usize,
        d_embed: usize,
    ) -> Self {
        assert_eq!(image_hw % patch, 0, "patch must tile the image");
        let n_patches = (image_hw / patch) * (image_hw / patch);
        let patch_dim = patch * patch * 3;
        VisionTower {
            patch_embed: Linear::new(rng, patch_dim, d_model),
            cls: init::normal2(rng, (1, d_model), init::INIT_STD),
            g_cls: Array2::zeros((1, d_model)),
            pos: init::normal2(rng, (n_patches + 1, d_model), init::INIT_STD),
            g_pos: Array2::zeros((n_patches + 1, d_model)),
            blocks: (0..n_blocks)
                .map(|_| TransformerBlock::new(rng, d_model, n_heads, mlp_hidden))
                .collect(),
            ln_f: LayerNorm::new(d_model),
            proj: Linear::new(rng, d_model, d_embed),
            image_hw,
            patch,
            d_model,
        }
    }

    pub fn n_patches(&self) -> usize {
        let g = self.image_hw / self.patch;
        g * g
    }

    /// Flattens images to patch rows `(B·P, patch²·3)`, pixels scaled to
    /// `[-1, 1]`, patches in row-major grid order, pixels row-major within
    /// each patch.
    pub fn patch_rows(&self, images: &[&RgbImage]) -> Array2<S> {
        let g = self.image_hw / self.patch;
        let p = self.patch;
        let dim = p * p * 3;
        let mut rows = Array2::zeros((images.len() * g * g, dim));
        for (i, img) in images.iter().enumerate() {
            assert_eq!((img.h, img.w), (self.image_hw, self.image_hw));
            for py in 0..g {
                for px in 0..g {
                    let row = i * g * g + py * g + px;
                    let mut col = 0;
                    for dy in 0..p {
                        for dx in 0..p {
                            let rgb = img.get(py * p + dy, px * p + dx);
                            for c in rgb {
                                rows[[row, col]] =
                                    sc::<S>(c as f64 / 255.0 * 2.0 - 1.0);
                                col += 1;
                            }
                        }
                    }
                }
            }
        }
        rows
    }

    /// Runs the tower. `taps` are 1-based block indices whose patch rows to
    /// expose (ascending); the global embedding pools the classification
    /// token after the final norm and projection.
    pub fn forward(
        &self,
        patches: &Array2<S>,
        b: usize,
        taps: &[usize],
    ) -> (VisionEncoding<S>, VisionCache<S>) {
        let p = self.n_patches();
        let t = p + 1;
        let d = self.d_model;
        assert_eq!(patches.nrows(), b * p);
        debug_assert!(taps.windows(2).all(|w| w[0] < w[1]), "taps must ascend");
        assert!(
            taps.iter().all(|&k| (1..=self.blocks.len()).contains(&k)),
            "tap index outside tower depth"
        );

        let embed = self.patch_embed.forward(patches);
        let mut x = Array2::zeros((b * t, d));
        for i in 0..b {
            x.row_mut(i * t)
                .assign(&(&self.cls.row(0) + &self.pos.row(0)));
            for j in 0..p {
                x.row_mut(i * t + 1 + j)
                    .assign(&(&embed.row(i * p + j) + &self.pos.row(1 + j)));
            }
        }

        let mut tap_out = Vec::with_capacity(taps.len());
        let mut block_caches = Vec::with_capacity(self.blocks.len());
        for (k, block) in self.blocks.iter().enumerate() {
            let (y, cache) = block.forward(&x, b, t, None);
            block_caches.push(cache);
            x = y;
            if taps.contains(&(k + 1)) {
                tap_out.push(strip_cls(&x, b, t));
            }
        }

        let (ln_out, ln_f_cache) = self.ln_f.forward(&x);
        let mut cls_ln = Array2::zeros((b, d));
        for i in 0..b {
            cls_ln.row_mut(i).assign(&ln_out.row(i * t));
        }
        let projected = self.proj.forward(&cls_ln);
        let (global_unit, global_norms) = l2_normalize_rows(&projected);

        (
            VisionEncoding {
                taps: tap_out,
                global: global_unit.clone(),
            },
            VisionCache {
                patches: patches.clone(),
                block_caches,
                ln_f_cache,
                cls_ln,
                global_unit,
                global_norms,
                b,
            },
        )
    }

    /// Accumulates parameter gradients from downstream gradients on the
    /// global embedding and/or on tapped patch features (`d_taps` pairs a
    /// 1-based block index with a `(B·P, d)` gradient).
    pub fn backward(
        &mut self,
        cache: &VisionCache<S>,
        d_global: Option<&Array2<S>>,
        d_taps: &[(usize, Array2<S>)],
    ) {
        let b = cache.b;
        let p = self.n_patches();
        let t = p + 1;
        let d = self.d_model;

        let mut d_rows = Array2::zeros((b * t, d));
        if let Some(dg) = d_global {
            let d_proj_out =
                l2_normalize_rows_backward(&cache.global_unit, &cache.global_norms, dg);
            let d_cls_ln = self.proj.backward(&cache.cls_ln, &d_proj_out);
            let mut d_ln_out = Array2::zeros((b * t, d));
            for i in 0..b {
                d_ln_out.row_mut(i * t).assign(&d_cls_ln.row(i));
            }
            d_rows = self.ln_f.backward(&cache.ln_f_cache, &d_ln_out);
        }

        for k in (0..self.blocks.len()).rev() {
            for (tap_k, dt) in d_taps {
                if *tap_k == k + 1 {
                    add_to_patch_rows(&mut d_rows, dt, b, t);
                }
            }
            d_rows = self.blocks[k].backward(&cache.block_caches[k], &d_rows, b, t);
        }

        let mut d_embed = Array2::zeros((b * p, d));
        for i in 0..b {
            self.g_cls.row_mut(0).scaled_add(S::one(), &d_rows.row(i * t));
            for j in 0..t {
                self.g_pos
                    .row_mut(j)
                    .scaled_add(S::one(), &d_rows.row(i * t + j));
            }
            for j in 0..p {
                d_embed
                    .row_mut(i * p + j)
                    .assign(&d_rows.row(i * t + 1 + j));
            }
        }
        self.patch_embed.backward(&cache.patches, &d_embed);
    }
}

/// Drops each sample's classification row: `(B·T, d)` → `(B·(T-1), d)`.
fn strip_cls<S: Scalar>(x: &Array2<S>, b: usize, t: usize) -> Array2<S> {
    let p = t - 1;
    let mut out = Array2::zeros((b * p, x.ncols()));
    for i in 0..b {
        out.slice_mut(s![i * p..(i + 1) * p, ..])
            .assign(&x.slice(s![i * t + 1..(i + 1) * t, ..]));
    }
    out
}

fn add_to_patch_rows<S: Scalar>(d_rows: &mut Array2<S>, dt: &Array2<S>, b: usize, t: usize) {
    let p = t - 1;
    assert_eq!(dt.nrows(), b * p);
    for i in 0..b {
        let mut dst = d_rows.slice_mut(s![i * t + 1..(i + 1) * t, ..]);
        dst += &dt.slice(s![i * p..(i + 1) * p, ..]);
    }
}

impl<S: Scalar> ParamWalk<S> for VisionTower<S> {
    fn walk(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, S>)) {
        self.patch_embed.walk(&qualify(prefix, "patch_embed"), f);
        f(&qualify(prefix, "cls"), self.cls.view().into_dyn());
        f(&qualify(prefix, "pos"), self.pos.view().into_dyn());
        for (i, blk) in self.blocks.iter().enumerate() {
            blk.walk(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk(&qualify(prefix, "ln_f"), f);
        self.proj.walk(&qualify(prefix, "proj"), f);
    }

    fn walk_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>)) {
        self.patch_embed.walk_mut(&qualify(prefix, "patch_embed"), f);
        f(&qualify(prefix, "cls"), self.cls.view_mut().into_dyn());
        f(&qualify(prefix, "pos"), self.pos.view_mut().into_dyn());
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.walk_mut(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk_mut(&qualify(prefix, "ln_f"), f);
        self.proj.walk_mut(&qualify(prefix, "proj"), f);
    }

    fn walk_pairs(
        &mut self,
        prefix: &str,
        f: &mut dyn FnMut(&str, ArrayViewMutD<'_, S>, ArrayViewMutD<'_, S>),
    ) {
        self.patch_embed.walk_pairs(&qualify(prefix, "patch_embed"), f);
        f(
            &qualify(prefix, "cls"),
            self.cls.view_mut().into_dyn(),
            self.g_cls.view_mut().into_dyn(),
        );
        f(
            &qualify(prefix, "pos"),
            self.pos.view_mut().into_dyn(),
            self.g_pos.view_mut().into_dyn(),
        );
        for (i, blk) in self.blocks.iter_mut().enumerate() {
            blk.walk_pairs(&qualify(prefix, &format!("block{i}")), f);
        }
        self.ln_f.walk_pairs(&qualify(prefix, "ln_f"), f);
        self.proj.walk_pairs(&qualify(prefix, "proj"), f);
    }
}
