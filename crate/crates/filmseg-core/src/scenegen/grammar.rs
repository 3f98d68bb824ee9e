//! Surface language: carrier templates, noun phrases, captions, vocabulary.
//!
//! The same wordlists feed text generation here and attribute extraction in
//! the evaluation kit, so the two stay in lockstep by construction.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::types::{
    AbsolutePos, AttributeSet, Catalog, PositionAttr, RelationKind, Scene, ShapeKind, SizeClass,
};

/// Instruction frames a query can be wrapped in. Every frame carries the
/// same meaning; only the noun phrase identifies the target.
pub const CARRIERS: [&str; 14] = [
    "grab the {}",
    "pick up the {}",
    "give me the {}",
    "pass me the {}",
    "where is the {}",
    "point to the {}",
    "find the {}",
    "i need the {}",
    "hand me the {}",
    "fetch the {}",
    "please grab the {}",
    "locate the {}",
    "reach for the {}",
    "bring me the {}",
];

pub fn shape_word(s: ShapeKind) -> &'static str {
    match s {
        ShapeKind::Round => "round",
        ShapeKind::Square => "square",
        ShapeKind::Elongated => "elongated",
        ShapeKind::Triangular => "triangular",
        ShapeKind::Star => "star",
    }
}

pub fn size_word(s: SizeClass) -> &'static str {
    match s {
        SizeClass::Small => "small",
        SizeClass::Large => "large",
    }
}

pub fn absolute_phrase(p: AbsolutePos) -> &'static str {
    match p {
        AbsolutePos::Left => "on the left side",
        AbsolutePos::Right => "on the right side",
        AbsolutePos::Top => "at the top",
        AbsolutePos::Bottom => "at the bottom",
        AbsolutePos::Center => "in the center",
    }
}

fn relation_prefix(r: RelationKind) -> &'static str {
    match r {
        RelationKind::LeftOf => "to the left of the",
        RelationKind::RightOf => "to the right of the",
        RelationKind::Above => "above the",
        RelationKind::Below => "below the",
    }
}

pub fn position_phrase(p: &PositionAttr, catalog: &Catalog) -> String {
    match p {
        PositionAttr::Absolute(a) => absolute_phrase(*a).to_string(),
        PositionAttr::Relative { rel, anchor } => {
            format!("{} {}", relation_prefix(*rel), catalog.name(*anchor))
        }
    }
}

/// The noun phrase for an attribute set: `[size] [color] [shape] category
/// [position]`, with whichever slots the set fills.
pub fn np_phrase(attrs: &AttributeSet, catalog: &Catalog) -> String {
    let mut parts: Vec<String> = Vec::new();
    if let Some(s) = attrs.size {
        parts.push(size_word(s).to_string());
    }
    if let Some(c) = attrs.color {
        parts.push(c.word().to_string());
    }
    if let Some(s) = attrs.shape {
        parts.push(shape_word(s).to_string());
    }
    parts.push(catalog.name(attrs.object).to_string());
    if let Some(p) = &attrs.position {
        parts.push(position_phrase(p, catalog));
    }
    parts.join(" ")
}

/// Renders the query with a fixed carrier frame (for paraphrase sweeps).
pub fn render_query_with(carrier: usize, attrs: &AttributeSet, catalog: &Catalog) -> String {
    CARRIERS[carrier % CARRIERS.len()].replace("{}", &np_phrase(attrs, catalog))
}

/// Renders the query with a randomly chosen carrier frame.
pub fn render_query(attrs: &AttributeSet, catalog: &Catalog, rng: &mut ChaCha12Rng) -> String {
    let idx = rng.gen_range(0..CARRIERS.len());
    render_query_with(idx, attrs, catalog)
}

/// A descriptive caption for a whole scene, for image–text pretraining.
/// Mostly single-object descriptions with a sampled subset of attributes;
/// sometimes a two-object "scene with" sentence.
pub fn caption_for_scene(scene: &Scene, catalog: &Catalog, rng: &mut ChaCha12Rng) -> String {
    if scene.objects.len() >= 2 && rng.gen_range(0.0..1.0) < 0.3 {
        let i = rng.gen_range(0..scene.objects.len());
        let mut j = rng.gen_range(0..scene.objects.len() - 1);
        if j >= i {
            j += 1;
        }
        let a = &scene.objects[i];
        let b = &scene.objects[j];
        return format!(
            "a scene with a {} {} and a {} {}",
            a.color.word(),
            catalog.name(a.category),
            b.color.word(),
            catalog.name(b.category),
        );
    }
    let o = &scene.objects[rng.gen_range(0..scene.objects.len())];
    let mut parts: Vec<String> = vec!["a".to_string()];
    if rng.gen_range(0.0..1.0) < 0.6 {
        parts.push(size_word(o.size).to_string());
    }
    if rng.gen_range(0.0..1.0) < 0.9 {
        parts.push(o.color.word().to_string());
    }
    if rng.gen_range(0.0..1.0) < 0.5 {
        parts.push(shape_word(o.shape).to_string());
    }
    parts.push(catalog.name(o.category).to_string());
    if rng.gen_range(0.0..1.0) < 0.7 {
        parts.push(absolute_phrase(AbsolutePos::of_center(o.center, scene.h, scene.w)).to_string());
    }
    parts.join(" ")
}

/// Lowercases and splits text into alphanumeric word runs. Both the
/// tokenizer and the attribute extractor normalize through here.
pub fn normalize_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_ascii_alphanumeric() {
            cur.push(ch.to_ascii_lowercase());
        } else if !cur.is_empty() {
            words.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        words.push(cur);
    }
    words
}

/// Every word the grammar can emit, deduplicated and sorted.
pub fn vocabulary(catalog: &Catalog) -> Vec<String> {
    let mut words: Vec<String> = Vec::new();
    for c in CARRIERS {
        words.extend(normalize_words(c));
    }
    for phrase in [
        "on the left side",
        "on the right side",
        "at the top",
        "at the bottom",
        "in the center",
        "to the left of the",
        "to the right of the",
        "above the",
        "below the",
        "a scene with a and a",
    ] {
        words.extend(normalize_words(phrase));
    }
    for cat in &catalog.categories {
        words.extend(normalize_words(&cat.name));
    }
    for c in super::types::ColorName::ALL {
        words.push(c.word().to_string());
    }
    for s in [
        ShapeKind::Round,
        ShapeKind::Square,
        ShapeKind::Elongated,
        ShapeKind::Triangular,
        ShapeKind::Star,
    ] {
        words.push(shape_word(s).to_string());
    }
    words.push("small".to_string());
    words.push("large".to_string());
    words.sort();
    words.dedup();
    words.retain(|w| !w.is_empty());
    words
}

#[cfg(test)]
mod tests {
    use super::super::types::{Catalog, ColorName};
    use super::*;

    #[test]
    fn noun_phrase_orders_slots_and_skips_empties() {
        let cat = Catalog::standard();
        let pen = cat.lookup("pen").unwrap();
        let cup = cat.lookup("cup").unwrap();
        let attrs = AttributeSet {
            object: pen,
            color: Some(ColorName::Blue),
            shape: None,
            size: Some(SizeClass::Large),
            position: Some(PositionAttr::Relative {
                rel: RelationKind::LeftOf,
                anchor: cup,
            }),
        };
        assert_eq!(np_phrase(&attrs, &cat), "large blue pen to the left of the cup");
        assert_eq!(
            render_query_with(4, &attrs, &cat),
            "where is the large blue pen to the left of the cup"
        );
        let bare = AttributeSet::bare(pen);
        assert_eq!(render_query_with(0, &bare, &cat), "grab the pen");
    }

    #[test]
    fn normalize_strips_punctuation_and_case() {
        assert_eq!(
            normalize_words("Grab   the RED-pen, please!"),
            vec!["grab", "the", "red", "pen", "please"]
        );
        assert!(normalize_words("  ...  ").is_empty());
    }

    #[test]
    fn vocabulary_covers_every_rendered_query_word() {
        let cat = Catalog::standard();
        let vocab = vocabulary(&cat);
        let attrs = AttributeSet {
            object: cat.lookup("toy").unwrap(),
            color: Some(ColorName::Purple),
            shape: Some(ShapeKind::Star),
            size: Some(SizeClass::Small),
            position: Some(PositionAttr::Absolute(AbsolutePos::Bottom)),
        };
        for i in 0..CARRIERS.len() {
            for w in normalize_words(&render_query_with(i, &attrs, &cat)) {
                assert!(vocab.contains(&w), "word {w:?} missing from vocabulary");
            }
        }
        assert!(vocab.windows(2).all(|p| p[0] < p[1]), "sorted + deduped");
    }
}
