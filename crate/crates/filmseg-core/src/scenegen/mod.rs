//! Synthetic tabletop scenes with attribute-rich referring queries.
//!
//! The pipeline runs scene → query → dataset: [`render`] places and paints
//! procedural objects under an occlusion cap, [`query`] builds uniquely-
//! referring attribute sets over them, [`grammar`] turns those into text,
//! [`dataset`] balances samples across attribute-richness buckets, and
//! [`persist`] gives the result a checksummed on-disk form with a stable
//! identity hash.

pub mod dataset;
pub mod glyph;
pub mod grammar;
pub mod persist;
pub mod query;
pub mod render;
pub mod types;

pub use dataset::{
    build_caption_corpus, build_dataset, build_split, clutter_for_bucket, CaptionedImage, Dataset,
    DatasetConfig, SplitData,
};
pub use grammar::{normalize_words, vocabulary};
pub use persist::{dataset_hash, load_dataset, write_dataset, PersistError};
pub use query::{compute_mrq, generate_query, match_objects};
pub use render::{generate_scene, render_scene_image, SceneSpec};
pub use types::{
    AbsolutePos, AttributeSet, Catalog, CategoryId, ColorName, LabeledSample, Lighting,
    ObjectCategory, PositionAttr, ReferringQuery, RelationKind, Scene, SceneError, SceneObject,
    ShapeKind, SizeClass, Split,
};
