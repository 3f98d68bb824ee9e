//! Scene assembly (placement under an occlusion cap) and rasterization.

use rand::Rng;

use super::glyph::{glyph_for, Glyph};
use super::types::{
    Catalog, CategoryId, ColorName, Lighting, Scene, SceneError, SceneObject, ShapeKind,
    SizeClass,
};
use crate::raster::{BitMask, RgbImage};
use crate::rng::{rng_for, stream};

/// Knobs for one scene draw.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SceneSpec {
    pub h: usize,
    pub w: usize,
    /// Categories eligible for this scene.
    pub category_pool: Vec<CategoryId>,
    /// Inclusive range for how many distinct categories appear.
    pub n_categories: (usize, usize),
    /// Instances per included category.
    pub clutter: u8,
    pub lighting_pool: Vec<Lighting>,
    /// Maximum fraction of any object's silhouette that may end up hidden.
    pub max_hidden_frac: f64,
    pub scene_attempts: usize,
    pub object_attempts: usize,
}

impl SceneSpec {
    pub fn new(category_pool: Vec<CategoryId>, clutter: u8) -> Self {
        let n = category_pool.len();
        SceneSpec {
            h: 128,
            w: 128,
            category_pool,
            n_categories: (3.min(n), 5.min(n)),
            clutter,
            lighting_pool: Lighting::ALL.to_vec(),
            max_hidden_frac: 0.5,
            scene_attempts: 40,
            object_attempts: 90,
        }
    }
}

const BACKGROUND: [u8; 3] = [104, 106, 112];
const DECOR_COLOR: [u8; 3] = [45, 42, 48];

fn lit(c: [u8; 3], m: f64) -> [u8; 3] {
    [
        (c[0] as f64 * m).round() as u8,
        (c[1] as f64 * m).round() as u8,
        (c[2] as f64 * m).round() as u8,
    ]
}

/// Visits every silhouette pixel of a glyph placed at `center`, reporting
/// whether the pixel takes the decoration color. Shared by mask building
/// and image painting so the two can never disagree.
fn glyph_pixels(
    glyph: &Glyph,
    center: (f64, f64),
    h: usize,
    w: usize,
    f: &mut dyn FnMut(usize, usize, bool),
) {
    let ext = glyph.extent() + 1.0;
    let x0 = ((center.0 - ext).floor().max(0.0)) as usize;
    let x1 = ((center.0 + ext).ceil().min(w as f64 - 1.0)) as usize;
    let y0 = ((center.1 - ext).floor().max(0.0)) as usize;
    let y1 = ((center.1 + ext).ceil().min(h as f64 - 1.0)) as usize;
    for y in y0..=y1 {
        let dy = y as f64 + 0.5 - center.1;
        for x in x0..=x1 {
            let dx = x as f64 + 0.5 - center.0;
            if glyph.silhouette_at(dx, dy) {
                f(x, y, glyph.decor_at(dx, dy));
            }
        }
    }
}

fn rasterize(glyph: &Glyph, center: (f64, f64), h: usize, w: usize) -> BitMask {
    let mut m = BitMask::zeros(h, w);
    glyph_pixels(glyph, center, h, w, &mut |x, y, _| m.set(y, x, true));
    m
}

struct InstanceDraft {
    category: CategoryId,
    color: ColorName,
    shape: ShapeKind,
    size: SizeClass,
}

/// Generates a scene deterministically from `(master_seed, scene_id)`.
///
/// Placement runs in stacking order; each candidate position is rejected if
/// it would hide more than `max_hidden_frac` of any object beneath it.
/// Position retries happen per object, full restarts per scene, and a scene
/// that still cannot be placed is a [`SceneError::PlacementFailed`].
pub fn generate_scene(
    catalog: &Catalog,
    spec: &SceneSpec,
    scene_id: u64,
    master_seed: u64,
) -> Result<Scene, SceneError> {
    if spec.clutter == 0 || spec.clutter > 3 {
        return Err(SceneError::InvalidClutter(spec.clutter));
    }
    for &c in &spec.category_pool {
        if c >= catalog.categories.len() {
            return Err(SceneError::CategoryOutOfRange(c));
        }
    }
    let mut rng = rng_for(master_seed, stream::SCENE, scene_id);

    let lighting = spec.lighting_pool[rng.gen_range(0..spec.lighting_pool.len())];
    let lo = spec.n_categories.0.min(spec.category_pool.len()).max(1);
    let hi = spec.n_categories.1.min(spec.category_pool.len()).max(lo);
    let n_cats = rng.gen_range(lo..=hi);

    // Sample distinct categories, then one draft per instance.
    let mut pool = spec.category_pool.clone();
    for i in 0..n_cats {
        let j = rng.gen_range(i..pool.len());
        pool.swap(i, j);
    }
    let chosen = &pool[..n_cats];

    let mut drafts = Vec::with_capacity(n_cats * spec.clutter as usize);
    for &cat in chosen {
        let shapes = &catalog.categories[cat].shapes;
        for _ in 0..spec.clutter {
            drafts.push(InstanceDraft {
                category: cat,
                color: ColorName::ALL[rng.gen_range(0..ColorName::ALL.len())],
                shape: shapes[rng.gen_range(0..shapes.len())],
                size: SizeClass::ALL[rng.gen_range(0..SizeClass::ALL.len())],
            });
        }
    }
    // Shuffle stacking order so depth is independent of category order.
    for i in (1..drafts.len()).rev() {
        let j = rng.gen_range(0..=i);
        drafts.swap(i, j);
    }

    let keep_frac = 1.0 - spec.max_hidden_frac;
    for _attempt in 0..spec.scene_attempts {
        let mut placed: Vec<(BitMask, BitMask, (f64, f64))> = Vec::new(); // (full, visible, center)
        let mut ok = true;

        'instances: for draft in &drafts {
            let glyph = glyph_for(
                catalog.name(draft.category),
                draft.shape,
                draft.size,
            );
            let ext = glyph.extent() + 1.0;
            for _try in 0..spec.object_attempts {
                let cx = rng.gen_range(ext..(spec.w as f64 - ext));
                let cy = rng.gen_range(ext..(spec.h as f64 - ext));
                let full = rasterize(&glyph, (cx, cy), spec.h, spec.w);

                // Would this placement hide too much of anything below?
                let mut acceptable = true;
                for (prev_full, prev_vis, _) in &placed {
                    let overlap = prev_vis
                        .data
                        .iter()
                        .zip(&full.data)
                        .filter(|(a, b)| **a != 0 && **b != 0)
                        .count();
                    let remaining = prev_vis.area() - overlap;
                    if (remaining as f64) < keep_frac * prev_full.area() as f64 {
                        acceptable = false;
                        break;
                    }
                }
                if acceptable {
                    for (_, prev_vis, _) in placed.iter_mut() {
                        for (v, n) in prev_vis.data.iter_mut().zip(&full.data) {
                            if *n != 0 {
                                *v = 0;
                            }
                        }
                    }
                    placed.push((full.clone(), full, (cx, cy)));
                    continue 'instances;
                }
            }
            ok = false;
            break;
        }

        if ok {
            let objects = drafts
                .iter()
                .zip(placed)
                .enumerate()
                .map(|(i, (d, (full, visible, center)))| SceneObject {
                    id: i as u32,
                    category: d.category,
                    color: d.color,
                    shape: d.shape,
                    size: d.size,
                    center,
                    z: i as u32,
                    full_mask: full,
                    visible_mask: visible,
                })
                .collect();
            return Ok(Scene {
                id: scene_id,
                h: spec.h,
                w: spec.w,
                clutter_level: spec.clutter,
                lighting,
                objects,
                master_seed,
            });
        }
    }

    Err(SceneError::PlacementFailed {
        attempts: spec.scene_attempts,
        max_hidden: spec.max_hidden_frac,
    })
}

/// Paints the scene: background, then objects in stacking order, decoration
/// pixels in the shared accent color, all scaled by the lighting multiplier.
pub fn render_scene_image(catalog: &Catalog, scene: &Scene) -> RgbImage {
    let m = scene.lighting.multiplier();
    let mut img = RgbImage::filled(scene.h, scene.w, lit(BACKGROUND, m));
    for obj in &scene.objects {
        let glyph = glyph_for(catalog.name(obj.category), obj.shape, obj.size);
        let fill = lit(obj.color.rgb(), m);
        let decor = lit(DECOR_COLOR, m);
        glyph_pixels(&glyph, obj.center, scene.h, scene.w, &mut |x, y, is_decor| {
            img.set(y, x, if is_decor { decor } else { fill });
        });
    }
    img
}
