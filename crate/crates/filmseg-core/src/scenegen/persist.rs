//! On-disk dataset layout: per-split images, masks, and JSONL records under
//! a checksummed `index.json`.
//!
//! ```text
//! root/
//!   index.json                 written last; checksums every other file
//!   <split>/images/000000.png
//!   <split>/masks/000000.rle
//!   <split>/queries.jsonl      one record per sample, in sample order
//!   <split>/scenes.jsonl       the matching scenes, object masks RLE-hex
//! ```
//!
//! The dataset identity is the SHA-256 of `index.json`: it covers the config
//! and every payload checksum, so equal hashes mean byte-equal datasets.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::{Dataset, DatasetConfig, SplitData};
use super::types::{
    Catalog, ColorName, LabeledSample, Lighting, ReferringQuery, Scene, SceneObject, ShapeKind,
    SizeClass, Split,
};
use crate::io::hash::{sha256_file, sha256_hex};
use crate::raster::png::{self, PngError};
use crate::raster::rle::{self, RleError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o failure at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("no dataset index at {0}")]
    MissingIndex(String),
    #[error("unsupported dataset format version {found} (this build reads {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file listed in the index is missing: {0}")]
    MissingFile(String),
    #[error("checksum mismatch for {0}; the dataset has been modified or truncated")]
    ChecksumMismatch(String),
    #[error("malformed record in {path}: {detail}")]
    Malformed { path: String, detail: String },
    #[error(transparent)]
    Mask(#[from] RleError),
    #[error(transparent)]
    Image(#[from] PngError),
}

fn io_err(path: &Path, source: std::io::Error) -> PersistError {
    PersistError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, detail: impl ToString) -> PersistError {
    PersistError::Malformed {
        path: path.display().to_string(),
        detail: detail.to_string(),
    }
}

#[derive(Serialize, Deserialize)]
struct IndexFile {
    format_version: u32,
    config: DatasetConfig,
    catalog: Catalog,
    counts: BTreeMap<String, usize>,
    checksums: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct QueryRecord {
    sample_id: u64,
    scene_id: u64,
    query: ReferringQuery,
}

#[derive(Serialize, Deserialize)]
struct ObjectRecord {
    id: u32,
    category: usize,
    color: ColorName,
    shape: ShapeKind,
    size: SizeClass,
    center: (f64, f64),
    z: u32,
    full: String,
    visible: String,
}

#[derive(Serialize, Deserialize)]
struct SceneRecord {
    scene_id: u64,
    clutter: u8,
    lighting: Lighting,
    objects: Vec<ObjectRecord>,
}

fn to_hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}

fn from_hex(s: &str) -> Option<Vec<u8>> {
    if s.len() % 2 != 0 {
        return None;
    }
    (0..s.len() / 2)
        .map(|i| u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok())
        .collect()
}

fn rel(split: Split, tail: &str) -> String {
    format!("{}/{}", split.dir_name(), tail)
}

/// Writes the dataset under `root` and returns its identity hash (the
/// SHA-256 of `index.json`, hex).
pub fn write_dataset(ds: &Dataset, root: &Path) -> Result<String, PersistError> {
    let mut checksums = BTreeMap::new();
    let mut counts = BTreeMap::new();

    for split in Split::ALL {
        let data = ds.split(split);
        counts.insert(split.dir_name().to_string(), data.samples.len());
        let dir = root.join(split.dir_name());
        for sub in ["images", "masks"] {
            fs::create_dir_all(dir.join(sub)).map_err(|e| io_err(&dir.join(sub), e))?;
        }

        let mut queries = Vec::new();
        let mut scenes = Vec::new();
        for s in &data.samples {
            let img_rel = rel(split, &format!("images/{:06}.png", s.sample_id));
            let img_path = root.join(&img_rel);
            png::write_file(&img_path, &s.image)?;
            checksums.insert(img_rel, sha256_file(&img_path).map_err(|e| io_err(&img_path, e))?);

            let mask_rel = rel(split, &format!("masks/{:06}.rle", s.sample_id));
            let mask_path = root.join(&mask_rel);
            rle::write_file(&mask_path, &s.mask)?;
            checksums.insert(
                mask_rel,
                sha256_file(&mask_path).map_err(|e| io_err(&mask_path, e))?,
            );

            queries.push(QueryRecord {
                sample_id: s.sample_id,
                scene_id: s.scene_id,
                query: s.query.clone(),
            });
            let scene = &data.scenes[&s.scene_id];
            scenes.push(SceneRecord {
                scene_id: scene.id,
                clutter: scene.clutter_level,
                lighting: scene.lighting,
                objects: scene
                    .objects
                    .iter()
                    .map(|o| ObjectRecord {
                        id: o.id,
                        category: o.category,
                        color: o.color,
                        shape: o.shape,
                        size: o.size,
                        center: o.center,
                        z: o.z,
                        full: to_hex(&rle::encode(&o.full_mask)),
                        visible: to_hex(&rle::encode(&o.visible_mask)),
                    })
                    .collect(),
            });
        }

        for (tail, lines) in [
            ("queries.jsonl", to_jsonl(&queries)),
            ("scenes.jsonl", to_jsonl(&scenes)),
        ] {
            let r = rel(split, tail);
            let path = root.join(&r);
            fs::write(&path, &lines).map_err(|e| io_err(&path, e))?;
            checksums.insert(r, sha256_hex(lines.as_bytes()));
        }
    }

    let index = IndexFile {
        format_version: FORMAT_VERSION,
        config: ds.config.clone(),
        catalog: ds.catalog.clone(),
        counts,
        checksums,
    };
    let bytes = serde_json::to_string_pretty(&index).expect("index serializes");
    let path = root.join("index.json");
    let mut f = fs::File::create(&path).map_err(|e| io_err(&path, e))?;
    f.write_all(bytes.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(sha256_hex(bytes.as_bytes()))
}

fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r).expect("record serializes"));
        s.push('\n');
    }
    s
}

/// The dataset identity hash of an existing on-disk dataset.
pub fn dataset_hash(root: &Path) -> Result<String, PersistError> {
    let path = root.join("index.json");
    if !path.is_file() {
        return Err(PersistError::MissingIndex(root.display().to_string()));
    }
    sha256_file(&path).map_err(|e| io_err(&path, e))
}

fn read_index(root: &Path) -> Result<IndexFile, PersistError> {
    let path = root.join("index.json");
    if !path.is_file() {
        return Err(PersistError::MissingIndex(root.display().to_string()));
    }
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let index: IndexFile =
        serde_json::from_slice(&bytes).map_err(|e| malformed(&path, e))?;
    if index.format_version != FORMAT_VERSION {
        return Err(PersistError::VersionMismatch {
            found: index.format_version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(index)
}

fn parse_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PersistError> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| malformed(path, format!("line {}: {e}", i + 1)))
        })
        .collect()
}

fn decode_mask_hex(s: &str, path: &Path) -> Result<crate::raster::BitMask, PersistError> {
    let bytes = from_hex(s).ok_or_else(|| malformed(path, "mask field is not valid hex"))?;
    Ok(rle::decode(&bytes)?)
}

/// Loads a dataset, verifying the format version and every checksum before
/// parsing any payload.
pub fn load_dataset(root: &Path) -> Result<Dataset, PersistError> {
    let index = read_index(root)?;
    for (r, expect) in &index.checksums {
        let path = root.join(r);
        if !path.is_file() {
            return Err(PersistError::MissingFile(r.clone()));
        }
        let got = sha256_file(&path).map_err(|e| io_err(&path, e))?;
        if got != *expect {
            return Err(PersistError::ChecksumMismatch(r.clone()));
        }
    }

    let mut splits = Vec::new();
    for split in Split::ALL {
        let dir = root.join(split.dir_name());
        let queries: Vec<QueryRecord> = parse_jsonl(&dir.join("queries.jsonl"))?;
        let scene_records: Vec<SceneRecord> = parse_jsonl(&dir.join("scenes.jsonl"))?;
        let expected = *index.counts.get(split.dir_name()).unwrap_or(&0);
        if queries.len() != expected || scene_records.len() != expected {
            return Err(malformed(
                &dir,
                format!(
                    "index promises {expected} samples, found {} queries / {} scenes",
                    queries.len(),
                    scene_records.len()
                ),
            ));
        }

        let mut scenes = BTreeMap::new();
        let scenes_path = dir.join("scenes.jsonl");
        for rec in scene_records {
            let objects = rec
                .objects
                .into_iter()
                .map(|o| {
                    Ok(SceneObject {
                        id: o.id,
                        category: o.category,
                        color: o.color,
                        shape: o.shape,
                        size: o.size,
                        center: o.center,
                        z: o.z,
                        full_mask: decode_mask_hex(&o.full, &scenes_path)?,
                        visible_mask: decode_mask_hex(&o.visible, &scenes_path)?,
                    })
                })
                .collect::<Result<Vec<_>, PersistError>>()?;
            scenes.insert(
                rec.scene_id,
                Scene {
                    id: rec.scene_id,
                    h: index.config.h,
                    w: index.config.w,
                    clutter_level: rec.clutter,
                    lighting: rec.lighting,
                    objects,
                    master_seed: index.config.master_seed,
                },
            );
        }

        let mut samples = Vec::with_capacity(queries.len());
        for q in queries {
            let image = png::read_file(&dir.join(format!("images/{:06}.png", q.sample_id)))?;
            let mask = rle::read_file(&dir.join(format!("masks/{:06}.rle", q.sample_id)))?;
            if !scenes.contains_key(&q.scene_id) {
                return Err(malformed(
                    &scenes_path,
                    format!("sample {} references unknown scene {}", q.sample_id, q.scene_id),
                ));
            }
            samples.push(LabeledSample {
                sample_id: q.sample_id,
                scene_id: q.scene_id,
                split,
                image,
                query: q.query,
                mask,
            });
        }
        splits.push(SplitData { samples, scenes });
    }

    let test_unseen = splits.pop().unwrap();
    let test_seen = splits.pop().unwrap();
    let train = splits.pop().unwrap();
    Ok(Dataset {
        config: index.config,
        catalog: index.catalog,
        train,
        test_seen,
        test_unseen,
    })
}

/// Writes the dataset only if `root` does not already hold one with the
/// same identity; returns the identity hash either way.
pub fn ensure_dataset(ds: &Dataset, root: &Path) -> Result<String, PersistError> {
    if root.join("index.json").is_file() {
        if let Ok(existing) = load_dataset(root) {
            if existing.config == ds.config && existing.catalog == ds.catalog {
                return dataset_hash(root);
            }
        }
    }
    write_dataset(ds, root)
}
