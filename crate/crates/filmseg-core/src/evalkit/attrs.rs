//! Attribute extraction: parses a referring query back into its
//! structured attribute set by exact lexicon matching.
//!
//! The extractor shares its wordlists with the query grammar — the same
//! category, color, shape, size, and position vocabulary feeds both — so
//! on grammar-generated text the round trip is exact by construction.

use thiserror::Error;

use crate::scenegen::{
    normalize_words, AbsolutePos, AttributeSet, Catalog, ColorName, PositionAttr, RelationKind,
    ShapeKind, SizeClass,
};

#[derive(Debug, Error, PartialEq)]
pub enum AttrError {
    #[error("no head noun: no word of {0:?} names a known object category")]
    NoHeadNoun(String),
}

/// Scans for a positional phrase. `left`/`right` followed by `of` (and
/// `above`/`below`, which are always relational in the grammar) introduce
/// a relation whose anchor is the next category word; bare `left`/`right`
/// and `top`/`bottom`/`center` are absolute regions.
fn extract_position(words: &[String], catalog: &Catalog) -> Option<PositionAttr> {
    let anchor_after = |i: usize| words[i + 1..].iter().find_map(|w| catalog.lookup(w));
    for (i, w) in words.iter().enumerate() {
        let next_is_of = words.get(i + 1).is_some_and(|n| n == "of");
        let attr = match w.as_str() {
            "left" if next_is_of => anchor_after(i).map(|anchor| PositionAttr::Relative {
                rel: RelationKind::LeftOf,
                anchor,
            }),
            "right" if next_is_of => anchor_after(i).map(|anchor| PositionAttr::Relative {
                rel: RelationKind::RightOf,
                anchor,
            }),
            "above" => anchor_after(i).map(|anchor| PositionAttr::Relative {
                rel: RelationKind::Above,
                anchor,
            }),
            "below" => anchor_after(i).map(|anchor| PositionAttr::Relative {
                rel: RelationKind::Below,
                anchor,
            }),
            "left" => Some(PositionAttr::Absolute(AbsolutePos::Left)),
            "right" => Some(PositionAttr::Absolute(AbsolutePos::Right)),
            "top" => Some(PositionAttr::Absolute(AbsolutePos::Top)),
            "bottom" => Some(PositionAttr::Absolute(AbsolutePos::Bottom)),
            "center" => Some(PositionAttr::Absolute(AbsolutePos::Center)),
            _ => None,
        };
        if attr.is_some() {
            return attr;
        }
    }
    None
}

/// Parses a query into its attribute set: the first category word becomes
/// the head noun; the first color, shape, and size words fill those slots;
/// position comes from the phrase patterns described on
/// [`extract_position`].
///
/// # Errors
///
/// [`AttrError::NoHeadNoun`] when no word names a catalog category.
pub fn extract_attributes(
    catalog: &Catalog,
    query_text: &str,
) -> Result<AttributeSet, AttrError> {
    let words = normalize_words(query_text);
    let object = words
        .iter()
        .find_map(|w| catalog.lookup(w))
        .ok_or_else(|| AttrError::NoHeadNoun(query_text.to_string()))?;
    Ok(AttributeSet {
        object,
        color: words.iter().find_map(|w| ColorName::from_word(w)),
        shape: words.iter().find_map(|w| ShapeKind::from_word(w)),
        size: words.iter().find_map(|w| SizeClass::from_word(w)),
        position: extract_position(&words, catalog),
    })
}
