//! Split assembly: attribute-richness-balanced sample sets and the
//! captioned corpus for image–text pretraining.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grammar::caption_for_scene;
use super::query::generate_query;
use super::render::{generate_scene, render_scene_image, SceneSpec};
use super::types::{Catalog, LabeledSample, Scene, SceneError, Split};
use crate::raster::RgbImage;
use crate::rng::{rng_for, stream};

/// Sizes and geometry for a generated dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub master_seed: u64,
    pub n_train: usize,
    pub n_test_seen: usize,
    pub n_test_unseen: usize,
    pub h: usize,
    pub w: usize,
}

impl DatasetConfig {
    pub fn new(master_seed: u64) -> Self {
        DatasetConfig {
            master_seed,
            n_train: 800,
            n_test_seen: 200,
            n_test_unseen: 200,
            h: 128,
            w: 128,
        }
    }

    pub fn split_size(&self, split: Split) -> usize {
        match split {
            Split::Train => self.n_train,
            Split::TestSeen => self.n_test_seen,
            Split::TestUnseen => self.n_test_unseen,
        }
    }
}

/// One split's samples plus the scenes they were cut from, keyed by scene id
/// (one scene per sample; the map makes the link explicit).
#[derive(Clone, Debug, PartialEq)]
pub struct SplitData {
    pub samples: Vec<LabeledSample>,
    pub scenes: BTreeMap<u64, Scene>,
}

/// A fully generated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub config: DatasetConfig,
    pub catalog: Catalog,
    pub train: SplitData,
    pub test_seen: SplitData,
    pub test_unseen: SplitData,
}

impl Dataset {
    pub fn split(&self, s: Split) -> &SplitData {
        match s {
            Split::Train => &self.train,
            Split::TestSeen => &self.test_seen,
            Split::TestUnseen => &self.test_unseen,
        }
    }
}

/// Scene clutter used for each attribute-richness bucket: richer queries
/// only make sense when the scene forces disambiguation, so instance count
/// grows with the bucket.
pub fn clutter_for_bucket(a: usize) -> u8 {
    match a {
        1 => 1,
        2 => 2,
        _ => 3,
    }
}

/// Scene-id stream base per split, keeping scene randomness disjoint across
/// splits regardless of how many attempts each consumes.
fn stream_base(split: Split) -> u64 {
    match split {
        Split::Train => 0,
        Split::TestSeen => 1 << 40,
        Split::TestUnseen => 2 << 40,
    }
}

fn spec_for(catalog: &Catalog, config: &DatasetConfig, split: Split, clutter: u8) -> SceneSpec {
    let (pool, n_categories) = match split {
        Split::Train | Split::TestSeen => (catalog.seen_ids(), (3, 5)),
        Split::TestUnseen => (catalog.unseen_ids(), (3, 3)),
    };
    let mut spec = SceneSpec::new(pool, clutter);
    spec.n_categories = n_categories;
    spec.h = config.h;
    spec.w = config.w;
    spec
}

/// Builds one split with exact attribute-richness quotas: each bucket
/// `a ∈ {1,2,3,4}` receives `N/4` samples (earlier buckets absorb any
/// remainder). Scenes that cannot host a query of the wanted richness are
/// discarded and retried with fresh randomness; a stall past `50×N`
/// attempts aborts with [`SceneError::GenerationStalled`].
pub fn build_split(
    catalog: &Catalog,
    config: &DatasetConfig,
    split: Split,
) -> Result<SplitData, SceneError> {
    let n = config.split_size(split);
    let mut quota = [n / 4; 4];
    for i in 0..n % 4 {
        quota[i] += 1;
    }
    let mut filled = [0usize; 4];
    let mut samples = Vec::with_capacity(n);
    let mut scenes = BTreeMap::new();

    let base = stream_base(split);
    let mut attempt: u64 = 0;
    let max_attempts = 50 * n as u64;

    while filled.iter().sum::<usize>() < n {
        if attempt >= max_attempts {
            return Err(SceneError::GenerationStalled {
                split: split.dir_name().to_string(),
                attempts: attempt,
                filled,
            });
        }
        // Neediest bucket next; ties go to the leaner query.
        let a = (0..4)
            .max_by_key(|&i| (quota[i] - filled[i], 3 - i))
            .unwrap()
            + 1;

        let scene_id = base + attempt;
        attempt += 1;

        let spec = spec_for(catalog, config, split, clutter_for_bucket(a));
        let scene = match generate_scene(catalog, &spec, scene_id, config.master_seed) {
            Ok(s) => s,
            Err(SceneError::PlacementFailed { .. }) => continue,
            Err(e) => return Err(e),
        };

        let mut qrng = rng_for(config.master_seed, stream::QUERY, scene_id);
        let mut target_order: Vec<u32> = scene.objects.iter().map(|o| o.id).collect();
        for i in (1..target_order.len()).rev() {
            let j = qrng.gen_range(0..=i);
            target_order.swap(i, j);
        }

        let mut query = None;
        for &target_id in &target_order {
            match generate_query(&scene, catalog, target_id, a, &mut qrng) {
                Ok(q) => {
                    query = Some(q);
                    break;
                }
                Err(SceneError::QueryInfeasible { .. })
                | Err(SceneError::Indistinguishable { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let Some(query) = query else { continue };

        let mask = scene.object(query.target_id)?.visible_mask.clone();
        let image = render_scene_image(catalog, &scene);
        samples.push(LabeledSample {
            sample_id: samples.len() as u64,
            scene_id,
            split,
            image,
            query,
            mask,
        });
        scenes.insert(scene_id, scene);
        filled[a - 1] += 1;
    }

    Ok(SplitData { samples, scenes })
}

/// Builds all three splits.
pub fn build_dataset(catalog: &Catalog, config: &DatasetConfig) -> Result<Dataset, SceneError> {
    Ok(Dataset {
        config: config.clone(),
        catalog: catalog.clone(),
        train: build_split(catalog, config, Split::Train)?,
        test_seen: build_split(catalog, config, Split::TestSeen)?,
        test_unseen: build_split(catalog, config, Split::TestUnseen)?,
    })
}

/// An image/caption pair for contrastive pretraining.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionedImage {
    pub scene_id: u64,
    pub image: RgbImage,
    pub caption: String,
}

/// Generates `n` captioned scenes over the **full** catalog (held-out
/// categories included): pretraining may see everything, only the decoder's
/// supervision is restricted to seen categories.
pub fn build_caption_corpus(
    catalog: &Catalog,
    n: usize,
    master_seed: u64,
) -> Result<Vec<CaptionedImage>, SceneError> {
    let all: Vec<usize> = (0..catalog.categories.len()).collect();
    let mut spec = SceneSpec::new(all, 1);
    spec.n_categories = (1, 4);
    let base = 3u64 << 40;

    let mut out = Vec::with_capacity(n);
    let mut attempt = 0u64;
    while out.len() < n {
        if attempt >= 20 * n as u64 {
            return Err(SceneError::GenerationStalled {
                split: "caption_corpus".to_string(),
                attempts: attempt,
                filled: [out.len(), 0, 0, 0],
            });
        }
        let scene_id = base + attempt;
        attempt += 1;
        let scene = match generate_scene(catalog, &spec, scene_id, master_seed) {
            Ok(s) => s,
            Err(SceneError::PlacementFailed { .. }) => continue,
            Err(e) => return Err(e),
        };
        let mut crng = rng_for(master_seed, stream::CAPTION, scene_id);
        out.push(CaptionedImage {
            scene_id,
            image: render_scene_image(catalog, &scene),
            caption: caption_for_scene(&scene, catalog, &mut crng),
        });
    }
    Ok(out)
}
