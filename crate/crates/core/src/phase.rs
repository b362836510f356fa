//! Per-sub-panel multifocal off-axis Fresnel phases, their combinations, and
//! wrapping/quantization to SLM levels.
//!
//! SLM coordinates are physical and pixel-centered:
//! `x = (col - (W - 1) / 2) * pitch`, `y = (row - (H - 1) / 2) * pitch`.

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;

use crate::error::{OmniError, Result};
use crate::optics::{OpticalConfig, Tile};
use crate::par;

/// Continuous phase (radians) on the SLM grid; shape is `(rows, cols)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMap {
    pub values: Array2<f64>,
    pub pitch: f64,
}

/// Wrapped phase stored as integer levels in `[0, levels_count)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedPhaseMap {
    pub levels: Array2<u16>,
    pub pitch: f64,
    pub levels_count: u32,
}

impl PhaseMap {
    pub fn zeros(dim: (usize, usize), pitch: f64) -> Self {
        Self {
            values: Array2::zeros(dim),
            pitch,
        }
    }

    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Build by evaluating `f(x, y)` at the physical center of each pixel.
    pub fn from_fn<F>(dim: (usize, usize), pitch: f64, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Sync + Send,
    {
        let (rows, cols) = dim;
        let cx = (cols as f64 - 1.0) / 2.0;
        let cy = (rows as f64 - 1.0) / 2.0;
        let mut values = Array2::zeros(dim);
        let data = values.as_slice_mut().expect("standard layout");
        par::fill_indexed(data, |i| {
            let (r, c) = (i / cols, i % cols);
            f((c as f64 - cx) * pitch, (r as f64 - cy) * pitch)
        });
        Self { values, pitch }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Add a constant to every sample.
    pub fn offset(&self, c: f64) -> Self {
        Self {
            values: self.values.mapv(|v| v + c),
            pitch: self.pitch,
        }
    }

    /// `e^{j phi}` for every sample.
    pub fn phasors(&self) -> Array2<Complex64> {
        let mut out = Array2::from_elem(self.dim(), Complex64::new(0.0, 0.0));
        let src = self.values.as_slice().expect("standard layout");
        par::fill_indexed(out.as_slice_mut().expect("standard layout"), |i| {
            Complex64::cis(src[i])
        });
        out
    }
}

impl QuantizedPhaseMap {
    pub fn dim(&self) -> (usize, usize) {
        self.levels.dim()
    }

    pub fn from_levels(levels: Array2<u16>, pitch: f64, levels_count: u32) -> Result<Self> {
        if levels.iter().any(|&l| u32::from(l) >= levels_count) {
            return Err(OmniError::InvalidInput(format!(
                "phase level out of range for {levels_count} levels"
            )));
        }
        Ok(Self {
            levels,
            pitch,
            levels_count,
        })
    }

    /// Phase represented by each level, `2 pi level / levels_count`.
    pub fn reconstruct(&self) -> PhaseMap {
        let step = TAU / f64::from(self.levels_count);
        PhaseMap {
            values: self.levels.mapv(|l| f64::from(l) * step),
            pitch: self.pitch,
        }
    }
}

/// Multifocal off-axis Fresnel phase for one sub-panel.
///
/// `phi(x, y) = pi (x^2 + y^2) / (lambda f) + (2 pi / lambda) [sin(l_x / f_o) x + sin(l_y / f_o) y]`,
/// with the quadratic term dropped for an infinite focal length.
pub fn fresnel_phase(offset: (f64, f64), focal: f64, cfg: &OpticalConfig) -> Result<PhaseMap> {
    if focal == 0.0 || focal.is_nan() {
        return Err(OmniError::DegenerateLens);
    }
    if !(offset.0.is_finite() && offset.1.is_finite()) {
        return Err(OmniError::InvalidInput("tile offset must be finite".into()));
    }
    let lambda = cfg.wavelength;
    let quad = if focal.is_infinite() {
        0.0
    } else {
        PI / (lambda * focal)
    };
    let kx = TAU / lambda * (offset.0 / cfg.objective_focal).sin();
    let ky = TAU / lambda * (offset.1 / cfg.objective_focal).sin();
    let (w, h) = cfg.slm_pixels;
    Ok(PhaseMap::from_fn((h, w), cfg.slm_pitch, move |x, y| {
        quad * (x * x + y * y) + kx * x + ky * y
    }))
}

/// [`fresnel_phase`] for a layout tile.
pub fn tile_phase(tile: &Tile, focal: f64, cfg: &OpticalConfig) -> Result<PhaseMap> {
    fresnel_phase(tile.offset, focal, cfg)
}

fn check_same(maps: &[PhaseMap]) -> Result<()> {
    let first = maps
        .first()
        .ok_or_else(|| OmniError::InvalidInput("no phase maps".into()))?;
    for m in &maps[1..] {
        if m.dim() != first.dim() {
            return Err(OmniError::DimensionMismatch {
                expected: first.dim(),
                found: m.dim(),
            });
        }
        if m.pitch != first.pitch {
            return Err(OmniError::InvalidInput(format!(
                "pitch mismatch: {} vs {}",
                first.pitch, m.pitch
            )));
        }
    }
    Ok(())
}

/// Element-wise sum of phase maps.
pub fn additive_phase(maps: &[PhaseMap]) -> Result<PhaseMap> {
    check_same(maps)?;
    let mut acc = maps[0].clone();
    for m in &maps[1..] {
        acc.values += &m.values;
    }
    Ok(acc)
}

/// `arg(sum_i w_i e^{j phi_i})`, in `(-pi, pi]`.
pub fn superposition_phase(maps: &[PhaseMap], weights: &[f64]) -> Result<PhaseMap> {
    check_same(maps)?;
    if weights.len() != maps.len() {
        return Err(OmniError::InvalidInput(format!(
            "{} weights for {} maps",
            weights.len(),
            maps.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(OmniError::InvalidInput(
            "weights must be finite and nonnegative".into(),
        ));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(OmniError::InvalidInput("all weights are zero".into()));
    }
    let dim = maps[0].dim();
    let srcs: Vec<&[f64]> = maps
        .iter()
        .map(|m| m.values.as_slice().expect("standard layout"))
        .collect();
    let mut values = Array2::zeros(dim);
    par::fill_indexed(values.as_slice_mut().expect("standard layout"), |i| {
        let mut z = Complex64::new(0.0, 0.0);
        for (s, &w) in srcs.iter().zip(weights) {
            if w != 0.0 {
                z += w * Complex64::cis(s[i]);
            }
        }
        z.arg()
    });
    Ok(PhaseMap {
        values,
        pitch: maps[0].pitch,
    })
}

/// Wrap to `[0, 2 pi)` and quantize with `floor`, clamping to the top level.
pub fn wrap_quantize(map: &PhaseMap, cfg: &OpticalConfig) -> QuantizedPhaseMap {
    quantize_levels(map, cfg.phase_levels)
}

pub fn quantize_levels(map: &PhaseMap, levels_count: u32) -> QuantizedPhaseMap {
    let n = f64::from(levels_count);
    let top = (levels_count - 1) as u16;
    let levels = map.values.mapv(|v| {
        let wrapped = v.rem_euclid(TAU);
        // the slack keeps exact level phases on their own level after rounding
        let l = (wrapped / TAU * n + 1e-9).floor();
        if l >= n - 1.0 {
            top
        } else if l <= 0.0 {
            0
        } else {
            l as u16
        }
    });
    QuantizedPhaseMap {
        levels,
        pitch: map.pitch,
        levels_count,
    }
}
