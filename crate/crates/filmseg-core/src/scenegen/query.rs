//! Referring-query semantics: which objects match an attribute set, how to
//! build a uniquely-referring query of a given richness, and the minimal
//! query for a target.

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use super::grammar;
use super::types::{
    AbsolutePos, AttributeSet, Catalog, PositionAttr, ReferringQuery, RelationKind, Scene,
    SceneError, SceneObject,
};

/// All objects in `scene` that satisfy `attrs`, ascending by id.
///
/// A relative position holds only if the anchor category is present (other
/// than the candidate itself) and the relation holds against **every** such
/// instance — matching stays well-defined even when the anchor category is
/// not unique.
pub fn match_objects(scene: &Scene, attrs: &AttributeSet) -> Vec<u32> {
    let mut out: Vec<u32> = scene
        .objects
        .iter()
        .filter(|o| object_matches(scene, o, attrs))
        .map(|o| o.id)
        .collect();
    out.sort_unstable();
    out
}

fn object_matches(scene: &Scene, o: &SceneObject, attrs: &AttributeSet) -> bool {
    if o.category != attrs.object {
        return false;
    }
    if attrs.color.is_some_and(|c| c != o.color) {
        return false;
    }
    if attrs.shape.is_some_and(|s| s != o.shape) {
        return false;
    }
    if attrs.size.is_some_and(|s| s != o.size) {
        return false;
    }
    match &attrs.position {
        None => true,
        Some(PositionAttr::Absolute(p)) => p.contains(o.center, scene.h, scene.w),
        Some(PositionAttr::Relative { rel, anchor }) => {
            let mut any = false;
            for a in &scene.objects {
                if a.id != o.id && a.category == *anchor {
                    if !rel.holds(o.center, a.center) {
                        return false;
                    }
                    any = true;
                }
            }
            any
        }
    }
}

/// One optional qualifier slot a query may add beyond the head noun.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Color,
    Shape,
    Size,
    Pos(PositionAttr),
}

/// Truthful qualifier slots for `target`, in canonical order: color, shape,
/// size, then positions (absolutes in frame order, then relations ordered by
/// relation kind and anchor category). Relational slots are emitted only
/// when the anchor category is a different category with exactly one
/// instance, so the text form resolves unambiguously.
fn available_slots(scene: &Scene, target: &SceneObject) -> Vec<Slot> {
    let mut slots = vec![Slot::Color, Slot::Shape, Slot::Size];
    for p in AbsolutePos::ALL {
        if p.contains(target.center, scene.h, scene.w) {
            slots.push(Slot::Pos(PositionAttr::Absolute(p)));
        }
    }
    let mut cats: Vec<usize> = scene.objects.iter().map(|o| o.category).collect();
    cats.sort_unstable();
    for rel in RelationKind::ALL {
        for o in &scene.objects {
            let count = cats.iter().filter(|&&c| c == o.category).count();
            if o.category != target.category
                && count == 1
                && rel.holds(target.center, o.center)
            {
                slots.push(Slot::Pos(PositionAttr::Relative {
                    rel,
                    anchor: o.category,
                }));
            }
        }
    }
    // Relations were pushed per object in scene order; canonicalize anchors.
    let (fixed, mut rels): (Vec<Slot>, Vec<Slot>) = slots
        .into_iter()
        .partition(|s| !matches!(s, Slot::Pos(PositionAttr::Relative { .. })));
    rels.sort_by_key(|s| match s {
        Slot::Pos(PositionAttr::Relative { rel, anchor }) => (
            RelationKind::ALL.iter().position(|r| r == rel).unwrap(),
            *anchor,
        ),
        _ => unreachable!(),
    });
    let mut out = fixed;
    out.extend(rels);
    out
}

fn assemble(target: &SceneObject, picked: &[Slot]) -> AttributeSet {
    let mut attrs = AttributeSet::bare(target.category);
    for s in picked {
        match s {
            Slot::Color => attrs.color = Some(target.color),
            Slot::Shape => attrs.shape = Some(target.shape),
            Slot::Size => attrs.size = Some(target.size),
            Slot::Pos(p) => attrs.position = Some(*p),
        }
    }
    attrs
}

fn at_most_one_position(picked: &[Slot]) -> bool {
    picked.iter().filter(|s| matches!(s, Slot::Pos(_))).count() <= 1
}

/// Visits k-subsets of `0..n` in lexicographic order until `f` returns true.
fn combinations(n: usize, k: usize, f: &mut dyn FnMut(&[usize]) -> bool) -> bool {
    if k > n {
        return false;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        if f(&idx) {
            return true;
        }
        // Advance to the next combination.
        let mut i = k;
        loop {
            if i == 0 {
                return false;
            }
            i -= 1;
            if idx[i] != i + n - k {
                break;
            }
            if i == 0 {
                return false;
            }
        }
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// The minimal uniquely-referring attribute set for `target`: smallest
/// attribute count wins, ties broken by the canonical slot order. Errors
/// with [`SceneError::Indistinguishable`] if no truthful set of up to four
/// attributes singles the object out.
pub fn compute_mrq(scene: &Scene, target_id: u32) -> Result<AttributeSet, SceneError> {
    let target = scene.object(target_id)?;
    let slots = available_slots(scene, target);
    for k in 0..=3.min(slots.len()) {
        let mut found: Option<AttributeSet> = None;
        combinations(slots.len(), k, &mut |idx| {
            let picked: Vec<Slot> = idx.iter().map(|&i| slots[i]).collect();
            if !at_most_one_position(&picked) {
                return false;
            }
            let attrs = assemble(target, &picked);
            if match_objects(scene, &attrs) == [target_id] {
                found = Some(attrs);
                true
            } else {
                false
            }
        });
        if let Some(attrs) = found {
            return Ok(attrs);
        }
    }
    Err(SceneError::Indistinguishable {
        scene_id: scene.id,
        target_id,
    })
}

/// Builds a uniquely-referring query for `target_id` with exactly `a`
/// attributes (head noun included), picking uniformly among the qualifying
/// attribute combinations and instruction frames.
///
/// Errors with [`SceneError::QueryInfeasible`] when no truthful
/// `a`-attribute set is unique, or [`SceneError::Indistinguishable`] when no
/// attribute count would help.
pub fn generate_query(
    scene: &Scene,
    catalog: &Catalog,
    target_id: u32,
    a: usize,
    rng: &mut ChaCha12Rng,
) -> Result<ReferringQuery, SceneError> {
    assert!((1..=4).contains(&a), "attribute count must be 1..=4");
    let target = scene.object(target_id)?;
    let slots = available_slots(scene, target);
    let k = a - 1;

    let mut candidates: Vec<AttributeSet> = Vec::new();
    combinations(slots.len(), k, &mut |idx| {
        let picked: Vec<Slot> = idx.iter().map(|&i| slots[i]).collect();
        if at_most_one_position(&picked) {
            candidates.push(assemble(target, &picked));
        }
        false
    });
    for i in (1..candidates.len()).rev() {
        let j = rng.gen_range(0..=i);
        candidates.swap(i, j);
    }
    for attrs in candidates {
        if match_objects(scene, &attrs) == [target_id] {
            let template_id = rng.gen_range(0..grammar::CARRIERS.len());
            return Ok(ReferringQuery {
                text: grammar::render_query_with(template_id, &attrs, catalog),
                attributes: attrs,
                target_id,
                template_id,
            });
        }
    }
    if compute_mrq(scene, target_id).is_ok() {
        Err(SceneError::QueryInfeasible {
            scene_id: scene.id,
            target_id,
            a,
        })
    } else {
        Err(SceneError::Indistinguishable {
            scene_id: scene.id,
            target_id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::super::render::{generate_scene, SceneSpec};
    use super::super::types::{Catalog, ColorName, Lighting, ShapeKind, SizeClass};
    use super::*;
    use crate::raster::BitMask;
    use crate::rng::{rng_for, stream};

    fn obj(
        id: u32,
        category: usize,
        color: ColorName,
        center: (f64, f64),
    ) -> SceneObject {
        SceneObject {
            id,
            category,
            color,
            shape: ShapeKind::Round,
            size: SizeClass::Small,
            center,
            z: id,
            full_mask: BitMask::zeros(1, 1),
            visible_mask: BitMask::zeros(1, 1),
        }
    }

    fn toy_scene(objects: Vec<SceneObject>) -> Scene {
        Scene {
            id: 0,
            h: 128,
            w: 128,
            clutter_level: 1,
            lighting: Lighting::Bright,
            objects,
            master_seed: 0,
        }
    }

    #[test]
    fn matching_honors_category_color_and_position() {
        let cat = Catalog::standard();
        let cup = cat.lookup("cup").unwrap();
        let plate = cat.lookup("plate").unwrap();
        let scene = toy_scene(vec![
            obj(0, cup, ColorName::Red, (20.0, 64.0)),
            obj(1, cup, ColorName::Blue, (100.0, 64.0)),
            obj(2, plate, ColorName::White, (64.0, 64.0)),
        ]);

        assert_eq!(match_objects(&scene, &AttributeSet::bare(cup)), vec![0, 1]);

        let mut blue = AttributeSet::bare(cup);
        blue.color = Some(ColorName::Blue);
        assert_eq!(match_objects(&scene, &blue), vec![1]);

        let mut left = AttributeSet::bare(cup);
        left.position = Some(PositionAttr::Absolute(AbsolutePos::Left));
        assert_eq!(match_objects(&scene, &left), vec![0]);

        let mut left_of_plate = AttributeSet::bare(cup);
        left_of_plate.position = Some(PositionAttr::Relative {
            rel: RelationKind::LeftOf,
            anchor: plate,
        });
        assert_eq!(match_objects(&scene, &left_of_plate), vec![0]);

        // Relation against a category with two instances requires both.
        let scene2 = toy_scene(vec![
            obj(0, cup, ColorName::Red, (20.0, 64.0)),
            obj(1, plate, ColorName::White, (64.0, 64.0)),
            obj(2, plate, ColorName::White, (10.0, 64.0)),
        ]);
        let mut rel = AttributeSet::bare(cup);
        rel.position = Some(PositionAttr::Relative {
            rel: RelationKind::LeftOf,
            anchor: plate,
        });
        assert!(match_objects(&scene2, &rel).is_empty());
    }

    #[test]
    fn generated_queries_refer_uniquely_with_requested_richness() {
        let cat = Catalog::standard();
        let mut checked = 0usize;
        for clutter in 1..=3u8 {
            let spec = SceneSpec::new(cat.seen_ids(), clutter);
            for sid in 0..8u64 {
                let scene = generate_scene(&cat, &spec, sid, 77).unwrap();
                let mut rng = rng_for(77, stream::QUERY, sid);
                for o in &scene.objects {
                    for a in 1..=4usize {
                        match generate_query(&scene, &cat, o.id, a, &mut rng) {
                            Ok(q) => {
                                assert_eq!(q.attributes.count(), a);
                                assert_eq!(match_objects(&scene, &q.attributes), vec![o.id]);
                                assert!(!q.text.is_empty());
                                checked += 1;
                            }
                            Err(SceneError::QueryInfeasible { .. })
                            | Err(SceneError::Indistinguishable { .. }) => {}
                            Err(e) => panic!("unexpected error: {e}"),
                        }
                    }
                }
            }
        }
        assert!(checked > 200, "only {checked} feasible queries in sweep");
    }

    /// Independent minimality oracle: enumerate every attribute set the
    /// generator could emit — truthful qualifiers, at most one position,
    /// relational anchors restricted to unique-instance foreign categories,
    /// at most four attributes total — and return the smallest unique-
    /// referring size.
    fn minimal_sizes(scene: &Scene, target: &SceneObject) -> Option<usize> {
        let mut options: Vec<AttributeSet> = Vec::new();
        let colors = [None, Some(target.color)];
        let shapes = [None, Some(target.shape)];
        let sizes = [None, Some(target.size)];
        let mut positions: Vec<Option<PositionAttr>> = vec![None];
        for p in AbsolutePos::ALL {
            positions.push(Some(PositionAttr::Absolute(p)));
        }
        for rel in RelationKind::ALL {
            for anchor in 0..13 {
                let instances = scene
                    .objects
                    .iter()
                    .filter(|o| o.category == anchor)
                    .count();
                if instances == 1 && anchor != target.category {
                    positions.push(Some(PositionAttr::Relative { rel, anchor }));
                }
            }
        }
        for &c in &colors {
            for &s in &shapes {
                for &z in &sizes {
                    for &p in &positions {
                        options.push(AttributeSet {
                            object: target.category,
                            color: c,
                            shape: s,
                            size: z,
                            position: p,
                        });
                    }
                }
            }
        }
        options
            .into_iter()
            .filter(|a| a.count() <= 4)
            .filter(|a| match_objects(scene, a) == [target.id])
            .map(|a| a.count())
            .min()
    }

    #[test]
    fn minimal_query_size_matches_brute_force() {
        let cat = Catalog::standard();
        for clutter in [1u8, 2, 3] {
            let spec = SceneSpec::new(cat.seen_ids(), clutter);
            for sid in 20..28u64 {
                let scene = generate_scene(&cat, &spec, sid, 5).unwrap();
                for o in &scene.objects {
                    let brute = minimal_sizes(&scene, o);
                    match compute_mrq(&scene, o.id) {
                        Ok(attrs) => {
                            assert_eq!(match_objects(&scene, &attrs), vec![o.id]);
                            assert_eq!(
                                Some(attrs.count()),
                                brute,
                                "scene {sid} object {}: canonical mrq size differs",
                                o.id
                            );
                        }
                        Err(SceneError::Indistinguishable { .. }) => {
                            assert_eq!(
                                brute, None,
                                "scene {sid} object {}: brute force found a unique set",
                                o.id
                            );
                        }
                        Err(e) => panic!("unexpected error: {e}"),
                    }
                }
            }
        }
    }

    #[test]
    fn mrq_is_deterministic() {
        let cat = Catalog::standard();
        let spec = SceneSpec::new(cat.seen_ids(), 2);
        let scene = generate_scene(&cat, &spec, 4, 31).unwrap();
        for o in &scene.objects {
            let a = compute_mrq(&scene, o.id);
            let b = compute_mrq(&scene, o.id);
            match (a, b) {
                (Ok(x), Ok(y)) => assert_eq!(x, y),
                (Err(_), Err(_)) => {}
                _ => panic!("determinism violated"),
            }
        }
    }
}
