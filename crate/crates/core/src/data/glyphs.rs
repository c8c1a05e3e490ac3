//! Procedural class glyphs used in place of handwritten digits.
//!
//! Glyph `t` is a fixed set of strokes on the unit square:
//!
//! | t | shape                     |
//! |---|---------------------------|
//! | 0 | ring                      |
//! | 1 | vertical bar              |
//! | 2 | horizontal bar            |
//! | 3 | plus                      |
//! | 4 | diagonal cross (x)        |
//! | 5 | falling diagonal (\\)     |
//! | 6 | rising diagonal (/)       |
//! | 7 | square outline            |
//! | 8 | two horizontal bars (=)   |
//! | 9 | two vertical bars (\|\|)  |
//!
//! Each rendering is shifted by a random offset of up to an eighth of the
//! image side, with a random stroke brightness in `[0.75, 1.0]`.

use crate::linalg::Rng;

pub const GLYPH_COUNT: usize = 10;

/// Stroke half-width in unit-square coordinates; strokes are about four
/// pixels wide at 16 px.
const HALF_THICKNESS: f64 = 0.12;

enum Stroke {
    Segment([f64; 2], [f64; 2]),
    Ring([f64; 2], f64),
}

fn strokes(class: usize) -> Vec<Stroke> {
    use Stroke::*;
    let (lo, hi, mid) = (0.2, 0.8, 0.5);
    match class {
        0 => vec![Ring([mid, mid], 0.3)],
        1 => vec![Segment([mid, lo], [mid, hi])],
        2 => vec![Segment([lo, mid], [hi, mid])],
        3 => vec![Segment([mid, lo], [mid, hi]), Segment([lo, mid], [hi, mid])],
        4 => vec![Segment([lo, lo], [hi, hi]), Segment([lo, hi], [hi, lo])],
        5 => vec![Segment([lo, lo], [hi, hi])],
        6 => vec![Segment([lo, hi], [hi, lo])],
        7 => vec![
            Segment([lo, lo], [hi, lo]),
            Segment([hi, lo], [hi, hi]),
            Segment([hi, hi], [lo, hi]),
            Segment([lo, hi], [lo, lo]),
        ],
        8 => vec![Segment([lo, 0.3], [hi, 0.3]), Segment([lo, 0.7], [hi, 0.7])],
        9 => vec![Segment([0.3, lo], [0.3, hi]), Segment([0.7, lo], [0.7, hi])],
        _ => unreachable!("glyph index checked by caller"),
    }
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a[0] + t * dx, a[1] + t * dy);
    ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()
}

/// Grayscale `height x width` rendering of glyph `class`, row-major, values in `[0, 1]`.
pub fn render(class: usize, height: usize, width: usize, rng: &mut Rng) -> Vec<f32> {
    assert!(class < GLYPH_COUNT);
    let side = height.min(width) as f64;
    let max_shift = (side / 8.0).floor();
    let shift_x = ((rng.uniform() * 2.0 - 1.0) * max_shift).round() / width as f64;
    let shift_y = ((rng.uniform() * 2.0 - 1.0) * max_shift).round() / height as f64;
    let brightness = 0.75 + 0.25 * rng.uniform();

    let parts = strokes(class);
    let mut img = vec![0.0f32; height * width];
    for y in 0..height {
        for x in 0..width {
            let p = [
                (x as f64 + 0.5) / width as f64 - shift_x,
                (y as f64 + 0.5) / height as f64 - shift_y,
            ];
            let on = parts.iter().any(|s| match *s {
                Stroke::Segment(a, b) => segment_distance(p, a, b) <= HALF_THICKNESS,
                Stroke::Ring(c, r) => {
                    (((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt() - r).abs() <= HALF_THICKNESS
                }
            });
            if on {
                img[y * width + x] = brightness as f32;
            }
        }
    }
    img
}
