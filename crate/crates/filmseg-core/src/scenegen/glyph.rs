//! Per-category glyph geometry: silhouettes, protrusions, holes, and the
//! decoration patterns that make categories recognizable even when their
//! base shapes coincide.
//!
//! Everything is expressed as predicates over coordinates relative to the
//! object center (`dx` right, `dy` down, in pixels), so rasterization is a
//! bounded per-pixel scan and the same geometry serves silhouette masks,
//! decoration painting, and placement bounds.

use super::types::{ShapeKind, SizeClass};

/// Primitive region used for silhouettes, protrusions, and holes.
#[derive(Clone, Debug)]
pub enum Geom {
    Circle { cx: f64, cy: f64, r: f64 },
    Rect { cx: f64, cy: f64, hx: f64, hy: f64 },
    Poly { pts: Vec<(f64, f64)> },
    /// Horizontal capsule: a rectangle with semicircular caps.
    Capsule { half: f64, rad: f64 },
}

impl Geom {
    pub fn contains(&self, dx: f64, dy: f64) -> bool {
        match self {
            Geom::Circle { cx, cy, r } => {
                let (ux, uy) = (dx - cx, dy - cy);
                ux * ux + uy * uy <= r * r
            }
            Geom::Rect { cx, cy, hx, hy } => (dx - cx).abs() <= *hx && (dy - cy).abs() <= *hy,
            Geom::Poly { pts } => point_in_polygon(pts, dx, dy),
            Geom::Capsule { half, rad } => {
                if dx.abs() <= *half {
                    dy.abs() <= *rad
                } else {
                    let ux = dx.abs() - half;
                    ux * ux + dy * dy <= rad * rad
                }
            }
        }
    }

    /// Radius of the smallest origin-centered square covering the region.
    pub fn extent(&self) -> f64 {
        match self {
            Geom::Circle { cx, cy, r } => cx.abs().max(cy.abs()) + r,
            Geom::Rect { cx, cy, hx, hy } => (cx.abs() + hx).max(cy.abs() + hy),
            Geom::Poly { pts } => pts
                .iter()
                .map(|(x, y)| x.abs().max(y.abs()))
                .fold(0.0, f64::max),
            Geom::Capsule { half, rad } => half + rad,
        }
    }

    /// Vertical bounds `(min_dy, max_dy)`, used by band decorations.
    fn y_bounds(&self) -> (f64, f64) {
        match self {
            Geom::Circle { cy, r, .. } => (cy - r, cy + r),
            Geom::Rect { cy, hy, .. } => (cy - hy, cy + hy),
            Geom::Poly { pts } => {
                let min = pts.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let max = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
                (min, max)
            }
            Geom::Capsule { rad, .. } => (-rad, *rad),
        }
    }
}

/// Even-odd ray casting; adequate for the small convex-ish glyph polygons.
fn point_in_polygon(pts: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let n = pts.len();
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = pts[i];
        let (xj, yj) = pts[j];
        if ((yi > y) != (yj > y)) && (x < (xj - xi) * (y - yi) / (yj - yi) + xi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Color-pattern overlay drawn in the decoration color inside the silhouette.
#[derive(Clone, Debug)]
pub enum Decor {
    None,
    /// Thin cross through the center (ball seams).
    SeamCross { t: f64 },
    /// Frame between two fractions of the normalized radial coordinate
    /// (plate rims, box borders).
    Frame { inner: f64, outer: f64 },
    /// Horizontal band across the top fraction of the glyph (lids, displays).
    TopBand { frac: f64 },
    /// Decor beyond `|dx| > cut` (banana tips, pen cap).
    TipCaps { cut: f64 },
    /// Checkerboard cells (toy pattern).
    Checker { cell: f64 },
    /// Display band plus two dial dots (multimeter face).
    Display { hx: f64, hy: f64, dot_r: f64 },
    /// Ring just outside the hole (tape).
    Ring { inner: f64, outer: f64 },
}

/// Full drawable description of one object instance.
#[derive(Clone, Debug)]
pub struct Glyph {
    pub base: Geom,
    /// Extra silhouette parts; each is painted in the decoration color when
    /// its flag is set (stems, handles, nozzles).
    pub protrusions: Vec<(Geom, bool)>,
    /// Regions removed from the silhouette (tape hole).
    pub holes: Vec<Geom>,
    pub decor: Decor,
}

impl Glyph {
    pub fn silhouette_at(&self, dx: f64, dy: f64) -> bool {
        if self.holes.iter().any(|h| h.contains(dx, dy)) {
            return false;
        }
        self.base.contains(dx, dy) || self.protrusions.iter().any(|(g, _)| g.contains(dx, dy))
    }

    /// Whether a silhouette pixel is painted in the decoration color.
    pub fn decor_at(&self, dx: f64, dy: f64) -> bool {
        for (g, decorated) in &self.protrusions {
            if *decorated && g.contains(dx, dy) && !self.base.contains(dx, dy) {
                return true;
            }
        }
        if !self.base.contains(dx, dy) {
            return false;
        }
        let (y0, y1) = self.base.y_bounds();
        match &self.decor {
            Decor::None => false,
            Decor::SeamCross { t } => dx.abs() <= *t || dy.abs() <= *t,
            Decor::Frame { inner, outer } => {
                let nu = self.radial(dx, dy);
                nu >= *inner && nu <= *outer
            }
            Decor::TopBand { frac } => dy <= y0 + frac * (y1 - y0),
            Decor::TipCaps { cut } => dx.abs() > *cut,
            Decor::Checker { cell } => {
                let ix = (dx / cell).floor() as i64;
                let iy = (dy / cell).floor() as i64;
                (ix + iy).rem_euclid(2) == 0
            }
            Decor::Display { hx, hy, dot_r } => {
                let band = Geom::Rect {
                    cx: 0.0,
                    cy: -0.42 * hy,
                    hx: 0.62 * hx,
                    hy: 0.3 * hy,
                };
                let dot1 = Geom::Circle {
                    cx: -0.42 * hx,
                    cy: 0.5 * hy,
                    r: *dot_r,
                };
                let dot2 = Geom::Circle {
                    cx: 0.42 * hx,
                    cy: 0.5 * hy,
                    r: *dot_r,
                };
                band.contains(dx, dy) || dot1.contains(dx, dy) || dot2.contains(dx, dy)
            }
            Decor::Ring { inner, outer } => {
                let nu = self.radial(dx, dy);
                nu >= *inner && nu <= *outer
            }
        }
    }

    /// Normalized radial coordinate: 0 at the center, 1 at the base rim.
    fn radial(&self, dx: f64, dy: f64) -> f64 {
        match &self.base {
            Geom::Circle { r, .. } => (dx * dx + dy * dy).sqrt() / r,
            Geom::Rect { hx, hy, .. } => (dx.abs() / hx).max(dy.abs() / hy),
            Geom::Poly { pts } => {
                let m = pts
                    .iter()
                    .map(|(x, y)| x.abs().max(y.abs()))
                    .fold(0.0, f64::max);
                dx.abs().max(dy.abs()) / m
            }
            Geom::Capsule { half, rad } => {
                if dx.abs() <= *half {
                    dy.abs() / rad
                } else {
                    let ux = dx.abs() - half;
                    (ux * ux + dy * dy).sqrt() / rad
                }
            }
        }
    }

    /// Placement bound: the silhouette fits in a square of this half-width.
    pub fn extent(&self) -> f64 {
        let mut e = self.base.extent();
        for (g, _) in &self.protrusions {
            e = e.max(g.extent());
        }
        e
    }
}

fn triangle(r: f64) -> Geom {
    Geom::Poly {
        pts: vec![(0.0, -1.15 * r), (1.05 * r, 0.85 * r), (-1.05 * r, 0.85 * r)],
    }
}

fn star(r: f64) -> Geom {
    let outer = 1.18 * r;
    let inner = 0.48 * outer;
    let mut pts = Vec::with_capacity(10);
    for i in 0..10 {
        let ang = -std::f64::consts::FRAC_PI_2 + i as f64 * std::f64::consts::PI / 5.0;
        let rad = if i % 2 == 0 { outer } else { inner };
        pts.push((rad * ang.cos(), rad * ang.sin()));
    }
    Geom::Poly { pts }
}

/// Builds the glyph for a category/shape/size combination.
///
/// Unknown category names get a plain undecorated silhouette, but the stock
/// catalog covers every name this is called with in practice.
pub fn glyph_for(category: &str, shape: ShapeKind, size: SizeClass) -> Glyph {
    let r = size.radius();
    let base_for = |shape: ShapeKind| match shape {
        ShapeKind::Round => Geom::Circle {
            cx: 0.0,
            cy: 0.0,
            r,
        },
        ShapeKind::Square => Geom::Rect {
            cx: 0.0,
            cy: 0.0,
            hx: 0.92 * r,
            hy: 0.92 * r,
        },
        ShapeKind::Triangular => triangle(r),
        ShapeKind::Elongated => Geom::Rect {
            cx: 0.0,
            cy: 0.0,
            hx: 1.6 * r,
            hy: 0.55 * r,
        },
        ShapeKind::Star => star(r),
    };

    let plain = |base: Geom, decor: Decor| Glyph {
        base,
        protrusions: vec![],
        holes: vec![],
        decor,
    };

    match category {
        "apple" => Glyph {
            base: base_for(shape),
            protrusions: vec![(
                Geom::Rect {
                    cx: 0.0,
                    cy: -1.18 * r,
                    hx: 0.13 * r,
                    hy: 0.3 * r,
                },
                true,
            )],
            holes: vec![],
            decor: Decor::None,
        },
        "ball" => plain(base_for(shape), Decor::SeamCross { t: 0.1 * r }),
        "banana" => plain(
            Geom::Capsule {
                half: 1.3 * r,
                rad: 0.5 * r,
            },
            Decor::TipCaps { cut: 1.12 * r },
        ),
        "box" => plain(
            base_for(shape),
            Decor::Frame {
                inner: 0.7,
                outer: 1.0,
            },
        ),
        "cup" => {
            let base = match shape {
                ShapeKind::Round => Geom::Circle {
                    cx: 0.0,
                    cy: 0.0,
                    r: 0.9 * r,
                },
                _ => Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx: 0.78 * r,
                    hy: 0.9 * r,
                },
            };
            Glyph {
                base,
                protrusions: vec![(
                    Geom::Rect {
                        cx: 1.05 * r,
                        cy: 0.0,
                        hx: 0.3 * r,
                        hy: 0.34 * r,
                    },
                    true,
                )],
                holes: vec![],
                decor: Decor::TopBand { frac: 0.22 },
            }
        }
        "multimeter" => {
            let (hx, hy) = (0.85 * r, 1.02 * r);
            plain(
                Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx,
                    hy,
                },
                Decor::Display {
                    hx,
                    hy,
                    dot_r: 0.17 * r,
                },
            )
        }
        "pen" => plain(
            Geom::Rect {
                cx: 0.0,
                cy: 0.0,
                hx: 1.7 * r,
                hy: 0.3 * r,
            },
            Decor::TipCaps { cut: 1.3 * r },
        ),
        "plate" => plain(
            base_for(shape),
            Decor::Frame {
                inner: 0.72,
                outer: 0.93,
            },
        ),
        "tape" => Glyph {
            base: base_for(ShapeKind::Round),
            protrusions: vec![],
            holes: vec![Geom::Circle {
                cx: 0.0,
                cy: 0.0,
                r: 0.4 * r,
            }],
            decor: Decor::Ring {
                inner: 0.4,
                outer: 0.62,
            },
        },
        "toy" => plain(base_for(shape), Decor::Checker { cell: 0.5 * r }),
        "container" => {
            let base = match shape {
                ShapeKind::Round => Geom::Circle {
                    cx: 0.0,
                    cy: 0.0,
                    r: 0.95 * r,
                },
                ShapeKind::Elongated => Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx: 1.5 * r,
                    hy: 0.62 * r,
                },
                _ => Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx: 0.95 * r,
                    hy: 0.85 * r,
                },
            };
            plain(base, Decor::TopBand { frac: 0.36 })
        }
        "spray" => {
            let base = match shape {
                ShapeKind::Triangular => Geom::Poly {
                    pts: vec![(0.0, -1.55 * r), (0.85 * r, 1.2 * r), (-0.85 * r, 1.2 * r)],
                },
                _ => Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx: 0.5 * r,
                    hy: 1.5 * r,
                },
            };
            let top = base.y_bounds().0;
            Glyph {
                base,
                protrusions: vec![(
                    Geom::Rect {
                        cx: 0.0,
                        cy: top - 0.2 * r,
                        hx: 0.2 * r,
                        hy: 0.24 * r,
                    },
                    true,
                )],
                holes: vec![],
                decor: Decor::TopBand { frac: 0.3 },
            }
        }
        "tool" => {
            let base = match shape {
                ShapeKind::Elongated => Geom::Rect {
                    cx: 0.0,
                    cy: 0.0,
                    hx: 1.6 * r,
                    hy: 0.42 * r,
                },
                other => base_for(other),
            };
            plain(base, Decor::TopBand { frac: 0.34 })
        }
        _ => plain(base_for(shape), Decor::None),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silhouettes_are_nonempty_and_within_extent() {
        let cat = super::super::types::Catalog::standard();
        for c in &cat.categories {
            for &shape in &c.shapes {
                for size in SizeClass::ALL {
                    let g = glyph_for(&c.name, shape, size);
                    let e = g.extent();
                    assert!(e > 0.0 && e < 2.3 * size.radius(), "extent of {}", c.name);

                    // Scan the bounding square and confirm pixels exist and
                    // nothing lies outside the claimed extent.
                    let lim = (e + 2.0) as i32;
                    let mut count = 0;
                    for dy in -2 * lim..=2 * lim {
                        for dx in -2 * lim..=2 * lim {
                            if g.silhouette_at(dx as f64, dy as f64) {
                                count += 1;
                                assert!(
                                    dx.abs() as f64 <= e && dy.abs() as f64 <= e,
                                    "{} pixel ({dx},{dy}) outside extent {e}",
                                    c.name
                                );
                            }
                        }
                    }
                    assert!(
                        count > 30,
                        "{} {:?} {:?} silhouette too small: {count}",
                        c.name,
                        shape,
                        size
                    );
                }
            }
        }
    }

    #[test]
    fn tape_has_a_hole_and_apple_a_stem() {
        let tape = glyph_for("tape", ShapeKind::Round, SizeClass::Large);
        assert!(!tape.silhouette_at(0.0, 0.0), "tape center must be empty");
        assert!(tape.silhouette_at(0.0, 10.0));

        let apple = glyph_for("apple", ShapeKind::Round, SizeClass::Large);
        // Stem sits above the fruit body.
        assert!(apple.silhouette_at(0.0, -15.0));
        assert!(apple.decor_at(0.0, -15.0));
        assert!(!apple.decor_at(0.0, 0.0));
    }

    #[test]
    fn decor_patterns_cover_a_minority_of_pixels() {
        // Decoration should accent, not repaint, the glyph (checker is the
        // deliberate ~50% exception).
        let cat = super::super::types::Catalog::standard();
        for c in &cat.categories {
            let shape = c.shapes[0];
            let g = glyph_for(&c.name, shape, SizeClass::Large);
            let lim = (g.extent() + 1.0) as i32;
            let (mut sil, mut dec) = (0usize, 0usize);
            for dy in -lim..=lim {
                for dx in -lim..=lim {
                    if g.silhouette_at(dx as f64, dy as f64) {
                        sil += 1;
                        if g.decor_at(dx as f64, dy as f64) {
                            dec += 1;
                        }
                    }
                }
            }
            let frac = dec as f64 / sil as f64;
            assert!(
                frac < 0.72,
                "{}: decoration covers {frac:.2} of the glyph",
                c.name
            );
        }
    }
}
