//! Synthetic stimuli: slanted edges, letter panels and a layered depth scene.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::optics::{PixelRect, SubPanelLayout};

/// Near-vertical edge through the center, tilted `angle_deg` from vertical.
/// Pixels right of the edge take `high`, the rest `low` (point sampled).
pub fn slanted_edge(dim: (usize, usize), angle_deg: f64, low: f64, high: f64) -> Array2<f64> {
    let (rows, cols) = dim;
    let t = angle_deg.to_radians().tan();
    let cx = (cols as f64 - 1.0) / 2.0;
    let cy = (rows as f64 - 1.0) / 2.0;
    Array2::from_shape_fn(dim, |(r, c)| {
        let along = (c as f64 - cx) - t * (r as f64 - cy);
        if along > 0.0 {
            high
        } else {
            low
        }
    })
}

const GLYPH_ROWS: usize = 7;
const GLYPH_COLS: usize = 5;

fn glyph_bits(ch: char) -> Option<[&'static str; GLYPH_ROWS]> {
    Some(match ch.to_ascii_uppercase() {
        'C' => ["01111", "10000", "10000", "10000", "10000", "10000", "01111"],
        'E' => ["11111", "10000", "10000", "11110", "10000", "10000", "11111"],
        'I' => ["11111", "00100", "00100", "00100", "00100", "00100", "11111"],
        'L' => ["10000", "10000", "10000", "10000", "10000", "10000", "11111"],
        'M' => ["10001", "11011", "10101", "10101", "10001", "10001", "10001"],
        'N' => ["10001", "11001", "10101", "10011", "10001", "10001", "10001"],
        'O' => ["01110", "10001", "10001", "10001", "10001", "10001", "01110"],
        'U' => ["10001", "10001", "10001", "10001", "10001", "10001", "01110"],
        _ => return None,
    })
}

/// Block-letter bitmap, each font cell `scale x scale` pixels.
pub fn glyph(ch: char, scale: usize) -> Result<Array2<f64>> {
    let bits = glyph_bits(ch)
        .ok_or_else(|| OmniError::InvalidInput(format!("no glyph for '{ch}'")))?;
    Ok(Array2::from_shape_fn(
        (GLYPH_ROWS * scale, GLYPH_COLS * scale),
        |(r, c)| {
            if bits[r / scale].as_bytes()[c / scale] == b'1' {
                1.0
            } else {
                0.0
            }
        },
    ))
}

/// Where one letter lands after its tile is mapped onto the panel center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LetterRegion {
    pub letter: char,
    pub plane: usize,
    /// Bounding box in output-image pixels (centered field of view).
    pub bbox: PixelRect,
}

/// Letter `k` drawn into the tile of plane `k`, in horizontal slot `k` of
/// that tile, so the recentred letters sit side by side.
pub fn letter_panel(
    panel_dim: (usize, usize),
    layout: &SubPanelLayout,
    letters: &str,
    scale: usize,
    margin: usize,
) -> Result<(Array2<f64>, Vec<LetterRegion>)> {
    let chars: Vec<char> = letters.chars().collect();
    let n = chars.len();
    let mut panel = Array2::zeros(panel_dim);
    let mut regions = Vec::with_capacity(n);
    let (ph, pw) = panel_dim;
    for (k, &ch) in chars.iter().enumerate() {
        let tile = layout
            .tile_for_plane(k)
            .ok_or_else(|| OmniError::InvalidInput(format!("no tile for letter {k}")))?;
        let g = glyph(ch, scale)?;
        let (gh, gw) = g.dim();
        let slot = tile.rect.width / n;
        if gw > slot || gh > tile.rect.height {
            return Err(OmniError::InvalidInput(format!(
                "glyph {gw}x{gh} does not fit a {slot}x{} slot",
                tile.rect.height
            )));
        }
        let lx = k * slot + (slot - gw) / 2;
        let ly = (tile.rect.height - gh) / 2;
        for ((r, c), &v) in g.indexed_iter() {
            panel[(tile.rect.y + ly + r, tile.rect.x + lx + c)] = v;
        }
        // tile center maps onto the panel center
        let (tcx, tcy) = tile.rect.center();
        let dx = (pw as f64 - 1.0) / 2.0 - tcx;
        let dy = (ph as f64 - 1.0) / 2.0 - tcy;
        let x0 = (tile.rect.x + lx) as f64 + dx - margin as f64;
        let y0 = (tile.rect.y + ly) as f64 + dy - margin as f64;
        regions.push(LetterRegion {
            letter: ch,
            plane: k,
            bbox: PixelRect {
                x: x0.round().max(0.0) as usize,
                y: y0.round().max(0.0) as usize,
                width: gw + 2 * margin,
                height: gh + 2 * margin,
            },
        });
    }
    Ok((panel, regions))
}

/// Layered test scene: textured background at the far limit, three textured
/// objects at intermediate and near depths, and a tilted ground band with a
/// continuous depth ramp. Returns `(image, depth_map)`; depths in `[lo, hi]`.
pub fn layered_scene(dim: (usize, usize), lo: f64, hi: f64) -> (Array2<f64>, Array2<f64>) {
    let (rows, cols) = dim;
    let (h, w) = (rows as f64, cols as f64);
    let span = hi - lo;
    let mut image = Array2::zeros(dim);
    let mut depth = Array2::from_elem(dim, lo);
    for r in 0..rows {
        for c in 0..cols {
            let (y, x) = (r as f64 / h, c as f64 / w);
            // background: fine stripes
            let mut v = 0.35 + 0.25 * (2.0 * PI * 24.0 * (x + 0.3 * y)).sin();
            let mut d = lo;
            // ground band: depth ramps toward the viewer at the bottom
            if y > 0.75 {
                let t = (y - 0.75) / 0.25;
                d = lo + span * t;
                v = 0.5 + 0.3 * (2.0 * PI * 16.0 * x).sin() * (2.0 * PI * 6.0 * y).cos();
            }
            // far-middle object: checkered square
            if (0.08..0.38).contains(&x) && (0.12..0.42).contains(&y) {
                let check = ((x * 40.0).floor() as i64 + (y * 40.0).floor() as i64) % 2 == 0;
                v = if check { 0.9 } else { 0.15 };
                d = lo + span / 3.0;
            }
            // middle-near object: ringed disc
            let (dx, dy) = (x - 0.68, y - 0.3);
            let rad = (dx * dx + dy * dy).sqrt();
            if rad < 0.17 {
                v = 0.55 + 0.4 * (2.0 * PI * 60.0 * rad).cos();
                d = lo + 2.0 * span / 3.0;
            }
            // nearest object: cross-hatched bar
            if (0.35..0.65).contains(&x) && (0.5..0.7).contains(&y) {
                let hatch = (2.0 * PI * 30.0 * (x - y)).sin() * (2.0 * PI * 30.0 * (x + y)).sin();
                v = 0.5 + 0.45 * hatch;
                d = hi;
            }
            image[(r, c)] = v.clamp(0.0, 1.0);
            depth[(r, c)] = d;
        }
    }
    (image, depth)
}
