//! Procedural test objects: bitmap letters, a three-bar resolution target
//! and a smooth grayscale scene.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::Image2D;

/// 5x7 glyphs, one row per string, `#` = on.
const GLYPHS: &[(char, [&str; 7])] = &[
    ('I', ["#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"]),
    ('O', [".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."]),
    ('P', ["####.", "#...#", "#...#", "####.", "#....", "#....", "#...."]),
    ('E', ["#####", "#....", "#....", "####.", "#....", "#....", "#####"]),
    ('N', ["#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"]),
    ('4', ["...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."]),
    ('D', ["####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."]),
    ('Q', [".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"]),
];

pub const LETTERS: [char; 8] = ['I', 'O', 'P', 'E', 'N', '4', 'D', 'Q'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BuiltinTarget {
    Letter {
        glyph: char,
    },
    /// Three vertical bars on the left half, three horizontal on the right.
    Bars,
    /// Smooth shaded grayscale scene with a few objects and some texture.
    Photo,
}

impl BuiltinTarget {
    pub fn name(&self) -> String {
        match self {
            BuiltinTarget::Letter { glyph } => format!("letter-{glyph}"),
            BuiltinTarget::Bars => "bars".into(),
            BuiltinTarget::Photo => "photo".into(),
        }
    }

    pub fn render(&self, width: usize, height: usize) -> Result<Image2D> {
        if width < 4 || height < 4 {
            return Err(Error::InvalidDimensions(format!("targets need at least 4x4, got {width}x{height}")));
        }
        match self {
            BuiltinTarget::Letter { glyph } => letter(*glyph, width, height),
            BuiltinTarget::Bars => bars(width, height),
            BuiltinTarget::Photo => photo(width, height),
        }
    }
}

/// Nearest-neighbour rendering of a glyph into the central box, leaving a
/// one-eighth margin on each side.
pub fn letter(glyph: char, width: usize, height: usize) -> Result<Image2D> {
    let rows = GLYPHS
        .iter()
        .find(|(c, _)| *c == glyph.to_ascii_uppercase())
        .map(|(_, r)| r)
        .ok_or_else(|| Error::Config(format!("no builtin glyph {glyph:?}; have {LETTERS:?}")))?;
    let (mx, my) = (width / 8, height / 8);
    let (bw, bh) = (width - 2 * mx, height - 2 * my);
    Image2D::from_fn(width, height, |x, y| {
        if x < mx || y < my || x >= mx + bw || y >= my + bh {
            return 0.0;
        }
        let gx = (x - mx) * 5 / bw;
        let gy = (y - my) * 7 / bh;
        if rows[gy].as_bytes()[gx] == b'#' {
            1.0
        } else {
            0.0
        }
    })
}

/// Bar width in pixels used by [`bars`].
pub fn bar_width(width: usize) -> usize {
    (width / 16).max(1)
}

pub fn bars(width: usize, height: usize) -> Result<Image2D> {
    let p = bar_width(width);
    let (y0, y1) = (height / 4, height - height / 4);
    let x0 = width / 8;
    let hx0 = width / 2 + width / 16;
    let hy0 = height / 2 - 3 * p;
    Image2D::from_fn(width, height, |x, y| {
        // Vertical bars: 3 on, 2 gaps, starting at x0.
        let vertical = y >= y0 && y < y1 && x >= x0 && x < x0 + 5 * p && ((x - x0) / p).is_multiple_of(2);
        let horizontal =
            x >= hx0 && x < width - width / 16 && y >= hy0 && y < hy0 + 5 * p && ((y - hy0) / p).is_multiple_of(2);
        if vertical || horizontal {
            1.0
        } else {
            0.0
        }
    })
}

/// Row through the middle of the vertical bars of [`bars`], and the column
/// span covering them.
pub fn bars_profile_span(width: usize, height: usize) -> (usize, usize, usize) {
    let p = bar_width(width);
    let x0 = width / 8;
    (height / 2, x0, x0 + 5 * p)
}

pub fn photo(width: usize, height: usize) -> Result<Image2D> {
    let (w, h) = (width as f64, height as f64);
    Image2D::from_fn(width, height, |x, y| {
        let u = (x as f64 + 0.5) / w;
        let v = (y as f64 + 0.5) / h;
        // Sky-to-ground shading.
        let mut val = 0.25 + 0.35 * v;
        // A bright disk and a darker rectangle.
        if (u - 0.68).powi(2) + (v - 0.32).powi(2) < 0.04 {
            val = 0.9 - 0.3 * ((u - 0.68).powi(2) + (v - 0.32).powi(2)) / 0.04;
        }
        if (0.12..0.42).contains(&u) && (0.5..0.85).contains(&v) {
            val = 0.12 + 0.1 * u;
        }
        // Mild texture.
        val += 0.05 * (11.0 * u + 3.0 * v).sin() * (7.0 * v).cos();
        val.clamp(0.0, 1.0)
    })
}
