//! Domain vocabulary for synthetic tabletop scenes: categories, attributes,
//! scene and query structures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::raster::BitMask;

pub type CategoryId = usize;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unknown category name '{0}'")]
    UnknownCategory(String),
    #[error("unknown color name '{0}'")]
    UnknownColor(String),
    #[error("unknown shape name '{0}'")]
    UnknownShape(String),
    #[error("unknown size name '{0}'")]
    UnknownSize(String),
    #[error("category id {0} is outside the catalog")]
    CategoryOutOfRange(CategoryId),
    #[error("scene has no object with id {object_id}")]
    NoSuchObject { object_id: u32 },
    #[error("clutter level must be 1..=3, got {0}")]
    InvalidClutter(u8),
    #[error("could not place all objects within {attempts} scene attempts (occlusion cap {max_hidden:.2})")]
    PlacementFailed { attempts: usize, max_hidden: f64 },
    #[error("no attribute set of size {a} uniquely refers to object {target_id} in scene {scene_id}")]
    QueryInfeasible {
        scene_id: u64,
        target_id: u32,
        a: usize,
    },
    #[error("object {target_id} in scene {scene_id} cannot be referred to uniquely even with every attribute")]
    Indistinguishable { scene_id: u64, target_id: u32 },
    #[error("dataset generation stalled for split '{split}' after {attempts} scene attempts (bucket fill {filled:?})")]
    GenerationStalled {
        split: String,
        attempts: u64,
        filled: [usize; 4],
    },
}

/// The eight attribute colors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorName {
    Red,
    Green,
    Blue,
    Yellow,
    Orange,
    Purple,
    Cyan,
    White,
}

impl ColorName {
    pub const ALL: [ColorName; 8] = [
        ColorName::Red,
        ColorName::Green,
        ColorName::Blue,
        ColorName::Yellow,
        ColorName::Orange,
        ColorName::Purple,
        ColorName::Cyan,
        ColorName::White,
    ];

    pub fn word(self) -> &'static str {
        match self {
            ColorName::Red => "red",
            ColorName::Green => "green",
            ColorName::Blue => "blue",
            ColorName::Yellow => "yellow",
            ColorName::Orange => "orange",
            ColorName::Purple => "purple",
            ColorName::Cyan => "cyan",
            ColorName::White => "white",
        }
    }

    pub fn from_word(w: &str) -> Option<ColorName> {
        Self::ALL.into_iter().find(|c| c.word() == w)
    }

    pub fn rgb(self) -> [u8; 3] {
        match self {
            ColorName::Red => [221, 64, 56],
            ColorName::Green => [74, 164, 66],
            ColorName::Blue => [58, 94, 222],
            ColorName::Yellow => [234, 210, 62],
            ColorName::Orange => [236, 140, 42],
            ColorName::Purple => [152, 72, 192],
            ColorName::Cyan => [62, 200, 212],
            ColorName::White => [241, 241, 241],
        }
    }
}

/// Coarse silhouette classes an object can take.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Round,
    Square,
    Triangular,
    Elongated,
    Star,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 5] = [
        ShapeKind::Round,
        ShapeKind::Square,
        ShapeKind::Triangular,
        ShapeKind::Elongated,
        ShapeKind::Star,
    ];

    pub fn word(self) -> &'static str {
        match self {
            ShapeKind::Round => "round",
            ShapeKind::Square => "square",
            ShapeKind::Triangular => "triangular",
            ShapeKind::Elongated => "elongated",
            ShapeKind::Star => "star",
        }
    }

    pub fn from_word(w: &str) -> Option<ShapeKind> {
        Self::ALL.into_iter().find(|s| s.word() == w)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeClass {
    Small,
    Large,
}

impl SizeClass {
    pub const ALL: [SizeClass; 2] = [SizeClass::Small, SizeClass::Large];

    pub fn word(self) -> &'static str {
        match self {
            SizeClass::Small => "small",
            SizeClass::Large => "large",
        }
    }

    pub fn from_word(w: &str) -> Option<SizeClass> {
        Self::ALL.into_iter().find(|s| s.word() == w)
    }

    /// Base radius in pixels; every glyph dimension scales off this.
    pub fn radius(self) -> f64 {
        match self {
            SizeClass::Small => 9.0,
            SizeClass::Large => 14.0,
        }
    }
}

/// Absolute image-frame position, defined by thirds of each axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AbsolutePos {
    Left,
    Right,
    Top,
    Bottom,
    Center,
}

impl AbsolutePos {
    pub const ALL: [AbsolutePos; 5] = [
        AbsolutePos::Left,
        AbsolutePos::Right,
        AbsolutePos::Top,
        AbsolutePos::Bottom,
        AbsolutePos::Center,
    ];

    pub fn word(self) -> &'static str {
        match self {
            AbsolutePos::Left => "left",
            AbsolutePos::Right => "right",
            AbsolutePos::Top => "top",
            AbsolutePos::Bottom => "bottom",
            AbsolutePos::Center => "center",
        }
    }

    /// Whether a center point falls in this region. Regions use a thirds
    /// partition: the outer thirds horizontally are left/right, the outer
    /// thirds vertically are top/bottom, and center is the middle ninth.
    pub fn contains(self, center: (f64, f64), h: usize, w: usize) -> bool {
        let (cx, cy) = center;
        let (w, h) = (w as f64, h as f64);
        match self {
            AbsolutePos::Left => cx < w / 3.0,
            AbsolutePos::Right => cx >= 2.0 * w / 3.0,
            AbsolutePos::Top => cy < h / 3.0,
            AbsolutePos::Bottom => cy >= 2.0 * h / 3.0,
            AbsolutePos::Center => {
                cx >= w / 3.0 && cx < 2.0 * w / 3.0 && cy >= h / 3.0 && cy < 2.0 * h / 3.0
            }
        }
    }

    /// The canonical region for a point: the first of
    /// left/right/top/bottom/center that contains it. Total, because a point
    /// in neither outer third of either axis is in the center ninth.
    pub fn of_center(center: (f64, f64), h: usize, w: usize) -> AbsolutePos {
        *AbsolutePos::ALL
            .iter()
            .find(|p| p.contains(center, h, w))
            .expect("the five regions cover the frame")
    }
}

/// Pairwise spatial relation, in image coordinates (`y` grows downward, so
/// "above" means smaller `y`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationKind {
    LeftOf,
    RightOf,
    Above,
    Below,
}

impl RelationKind {
    pub const ALL: [RelationKind; 4] = [
        RelationKind::LeftOf,
        RelationKind::RightOf,
        RelationKind::Above,
        RelationKind::Below,
    ];

    /// Minimum center separation, in pixels, for a relation to count.
    /// Roughly one small-object radius: keeps "left of" from matching
    /// objects that are visually side by side.
    pub const MARGIN: f64 = 12.0;

    /// Whether `subject` stands in this relation to `anchor`.
    pub fn holds(self, subject: (f64, f64), anchor: (f64, f64)) -> bool {
        match self {
            RelationKind::LeftOf => subject.0 <= anchor.0 - RelationKind::MARGIN,
            RelationKind::RightOf => subject.0 >= anchor.0 + RelationKind::MARGIN,
            RelationKind::Above => subject.1 <= anchor.1 - RelationKind::MARGIN,
            RelationKind::Below => subject.1 >= anchor.1 + RelationKind::MARGIN,
        }
    }
}

/// A positional attribute: either an absolute region of the frame or a
/// relation to the (unique) instance of an anchor category.
///
/// The anchor is a category reference rather than an object id because the
/// attribute must survive a round trip through query text — "to the left of
/// the cup" names a category, and the generator only emits the relational
/// form when that category has exactly one instance to resolve to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionAttr {
    Absolute(AbsolutePos),
    Relative {
        rel: RelationKind,
        anchor: CategoryId,
    },
}

/// The structured content of a referring expression: a head category plus
/// optional color/shape/size/position qualifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSet {
    pub object: CategoryId,
    pub color: Option<ColorName>,
    pub shape: Option<ShapeKind>,
    pub size: Option<SizeClass>,
    pub position: Option<PositionAttr>,
}

impl AttributeSet {
    pub fn bare(object: CategoryId) -> Self {
        AttributeSet {
            object,
            color: None,
            shape: None,
            size: None,
            position: None,
        }
    }

    /// Attribute count: the head noun plus each present qualifier.
    pub fn count(&self) -> usize {
        1 + self.color.is_some() as usize
            + self.shape.is_some() as usize
            + self.size.is_some() as usize
            + self.position.is_some() as usize
    }

    /// Builds a set from surface names, validating each against the catalog
    /// and lexicons.
    pub fn from_names(
        catalog: &Catalog,
        object: &str,
        color: Option<&str>,
        shape: Option<&str>,
        size: Option<&str>,
    ) -> Result<Self, SceneError> {
        let object = catalog
            .lookup(object)
            .ok_or_else(|| SceneError::UnknownCategory(object.to_string()))?;
        let color = color
            .map(|w| ColorName::from_word(w).ok_or_else(|| SceneError::UnknownColor(w.into())))
            .transpose()?;
        let shape = shape
            .map(|w| ShapeKind::from_word(w).ok_or_else(|| SceneError::UnknownShape(w.into())))
            .transpose()?;
        let size = size
            .map(|w| SizeClass::from_word(w).ok_or_else(|| SceneError::UnknownSize(w.into())))
            .transpose()?;
        Ok(AttributeSet {
            object,
            color,
            shape,
            size,
            position: None,
        })
    }
}

/// One object class the generator can draw, with the silhouettes it may take.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectCategory {
    pub name: String,
    pub shapes: Vec<ShapeKind>,
    /// Whether decoder training data may contain this category.
    pub seen: bool,
}

/// The full set of categories for a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub categories: Vec<ObjectCategory>,
}

impl Catalog {
    /// The stock catalog: ten categories for training, three held out to
    /// probe open-vocabulary behavior.
    pub fn standard() -> Catalog {
        use ShapeKind::*;
        let c = |name: &str, shapes: &[ShapeKind], seen: bool| ObjectCategory {
            name: name.to_string(),
            shapes: shapes.to_vec(),
            seen,
        };
        Catalog {
            categories: vec![
                c("apple", &[Round], true),
                c("ball", &[Round], true),
                c("banana", &[Elongated], true),
                c("box", &[Square, Elongated], true),
                c("cup", &[Round, Square], true),
                c("multimeter", &[Square], true),
                c("pen", &[Elongated], true),
                c("plate", &[Round, Square], true),
                c("tape", &[Round], true),
                c("toy", &[Star, Triangular, Round], true),
                c("container", &[Square, Round, Elongated], false),
                c("spray", &[Elongated, Triangular], false),
                c("tool", &[Triangular, Star, Elongated], false),
            ],
        }
    }

    pub fn lookup(&self, name: &str) -> Option<CategoryId> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn name(&self, id: CategoryId) -> &str {
        &self.categories[id].name
    }

    pub fn seen_ids(&self) -> Vec<CategoryId> {
        (0..self.categories.len())
            .filter(|&i| self.categories[i].seen)
            .collect()
    }

    pub fn unseen_ids(&self) -> Vec<CategoryId> {
        (0..self.categories.len())
            .filter(|&i| !self.categories[i].seen)
            .collect()
    }
}

/// Scene illumination; a global multiplier on rendered RGB.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lighting {
    Dark,
    Dim,
    Bright,
}

impl Lighting {
    pub const ALL: [Lighting; 3] = [Lighting::Dark, Lighting::Dim, Lighting::Bright];

    pub fn multiplier(self) -> f64 {
        match self {
            Lighting::Dark => 0.55,
            Lighting::Dim => 0.78,
            Lighting::Bright => 1.0,
        }
    }
}

/// One placed object instance.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneObject {
    pub id: u32,
    pub category: CategoryId,
    pub color: ColorName,
    pub shape: ShapeKind,
    pub size: SizeClass,
    /// Center in pixels, `(x, y)` with `y` growing downward.
    pub center: (f64, f64),
    /// Stacking order; larger z is painted later, i.e. lies on top.
    pub z: u32,
    /// Silhouette ignoring occlusion.
    pub full_mask: BitMask,
    /// Silhouette minus everything stacked above it.
    pub visible_mask: BitMask,
}

impl SceneObject {
    /// Fraction of the silhouette that remains visible.
    pub fn visible_fraction(&self) -> f64 {
        let full = self.full_mask.area();
        if full == 0 {
            return 1.0;
        }
        self.visible_mask.area() as f64 / full as f64
    }
}

/// A generated scene: placed objects plus the knobs that shaped them.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub id: u64,
    pub h: usize,
    pub w: usize,
    /// Instances per included category.
    pub clutter_level: u8,
    pub lighting: Lighting,
    pub objects: Vec<SceneObject>,
    /// The run seed the scene's random stream was derived from.
    pub master_seed: u64,
}

impl Scene {
    pub fn object(&self, id: u32) -> Result<&SceneObject, SceneError> {
        self.objects
            .iter()
            .find(|o| o.id == id)
            .ok_or(SceneError::NoSuchObject { object_id: id })
    }
}

/// A natural-language query tied to its structured content and target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferringQuery {
    pub text: String,
    pub attributes: AttributeSet,
    pub target_id: u32,
    pub template_id: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    TestSeen,
    TestUnseen,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::TestSeen, Split::TestUnseen];

    pub fn dir_name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestSeen => "test_seen",
            Split::TestUnseen => "test_unseen",
        }
    }
}

/// One supervised example: rendered scene, query, and the target's visible
/// silhouette as ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    pub sample_id: u64,
    pub scene_id: u64,
    pub split: Split,
    pub image: crate::raster::RgbImage,
    pub query: ReferringQuery,
    pub mask: BitMask,
}
