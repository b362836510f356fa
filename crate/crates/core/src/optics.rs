//! Physical configuration, the depth-to-SLM-focal mapping, display-mode
//! planning and sub-panel tiling.
//!
//! Depth convention: a target depth `D` (diopters) is realized by an SLM lens
//! of focal length `f = K / ((D_native - D) * f_e^2)`. The lens moves the
//! intermediate image by `K / f` along the axis; the eyepiece converts that
//! axial offset to diopters through the Newtonian relation `offset / f_e^2`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};

/// SLM focal lengths (meters) reported for the four-plane prototype at 0..=3 D.
pub const PROTOTYPE_FOCAL_TABLE: [(f64, f64); 4] = [
    (0.0, 53.3),
    (1.0, 80.6),
    (2.0, 162.5),
    (3.0, f64::INFINITY),
];

const PROTOTYPE_WAVELENGTH: f64 = 550e-9;
const PROTOTYPE_EYEPIECE_FOCAL: f64 = 0.025;
const PROTOTYPE_NATIVE_DIOPTER: f64 = 3.0;
const PROTOTYPE_PANEL_SIDE: usize = 2000;
const DESK_PANEL_SIDE: usize = 512;
const SIM_PANEL_PITCH: f64 = 3e-6;

fn default_frame_rate() -> f64 {
    60.0
}

/// Physical parameters shared by every stage of the pipeline.
///
/// Lengths are in meters, depths in diopters. `relay_constant` is the
/// effective squared focal length of the relay (m²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpticalConfig {
    pub wavelength: f64,
    pub objective_focal: f64,
    pub eyepiece_focal: f64,
    pub relay_constant: f64,
    pub native_diopter: f64,
    pub panel_pixels: (usize, usize),
    pub panel_pitch: f64,
    pub slm_pixels: (usize, usize),
    pub slm_pitch: f64,
    pub phase_levels: u32,
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
}

impl Default for OpticalConfig {
    fn default() -> Self {
        Self::prototype()
    }
}

impl OpticalConfig {
    /// The four-plane prototype: 2000x2000 panel, 550 nm, 25 mm eyepiece,
    /// relay constant fitted to [`PROTOTYPE_FOCAL_TABLE`].
    pub fn prototype() -> Self {
        Self::square(PROTOTYPE_PANEL_SIDE)
    }

    /// Same optics on a 512x512 panel grid, sized for quick simulation.
    pub fn desk() -> Self {
        Self::square(DESK_PANEL_SIDE)
    }

    /// Prototype optics on an `n x n` panel. The SLM grid is matched to the
    /// Fourier plane of the panel so it covers the full relay bandwidth.
    pub fn square(n: usize) -> Self {
        let k = fit_relay_constant(
            &PROTOTYPE_FOCAL_TABLE,
            PROTOTYPE_EYEPIECE_FOCAL,
            PROTOTYPE_NATIVE_DIOPTER,
        )
        .expect("prototype table has finite rows");
        let relay_focal = k.sqrt();
        Self {
            wavelength: PROTOTYPE_WAVELENGTH,
            objective_focal: relay_focal,
            eyepiece_focal: PROTOTYPE_EYEPIECE_FOCAL,
            relay_constant: k,
            native_diopter: PROTOTYPE_NATIVE_DIOPTER,
            panel_pixels: (n, n),
            panel_pitch: SIM_PANEL_PITCH,
            slm_pixels: (n, n),
            slm_pitch: PROTOTYPE_WAVELENGTH * relay_focal / (n as f64 * SIM_PANEL_PITCH),
            phase_levels: 256,
            frame_rate: default_frame_rate(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(OmniError::InvalidConfig(m.to_string()));
        let positive = [
            ("wavelength", self.wavelength),
            ("objective_focal", self.objective_focal),
            ("eyepiece_focal", self.eyepiece_focal),
            ("relay_constant", self.relay_constant),
            ("panel_pitch", self.panel_pitch),
            ("slm_pitch", self.slm_pitch),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be finite and > 0, got {v}"));
            }
        }
        if !(100e-9..10e-6).contains(&self.wavelength) {
            return bad(&format!(
                "wavelength {} m outside (100 nm, 10 um)",
                self.wavelength
            ));
        }
        if self.phase_levels < 2 || self.phase_levels > 65536 {
            return bad("phase_levels must be in [2, 65536]");
        }
        if !(self.native_diopter.is_finite() && self.native_diopter >= 0.0) {
            return bad("native_diopter must be >= 0");
        }
        if self.panel_pixels.0 == 0 || self.panel_pixels.1 == 0 {
            return bad("panel_pixels must be nonzero");
        }
        if self.slm_pixels.0 == 0 || self.slm_pixels.1 == 0 {
            return bad("slm_pixels must be nonzero");
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return bad("frame_rate must be > 0");
        }
        Ok(())
    }

    /// Total panel pixel count `P`.
    pub fn panel_total(&self) -> usize {
        self.panel_pixels.0 * self.panel_pixels.1
    }

    /// Focal length that sets the Fourier-plane scale of the relay, `sqrt(K)`.
    pub fn relay_focal(&self) -> f64 {
        self.relay_constant.sqrt()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

fn check_depth(d: f64, cfg: &OpticalConfig) -> Result<()> {
    if !d.is_finite() || d < 0.0 {
        return Err(OmniError::NegativeDepth(d));
    }
    if d > cfg.native_diopter {
        return Err(OmniError::DepthBeyondNative {
            depth: d,
            native: cfg.native_diopter,
        });
    }
    Ok(())
}

/// SLM focal length (m) that places an image at depth `d` diopters.
/// Returns `f64::INFINITY` at the native plane.
pub fn diopter_to_slm_focal(d: f64, cfg: &OpticalConfig) -> Result<f64> {
    check_depth(d, cfg)?;
    let gap = cfg.native_diopter - d;
    if gap == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(cfg.relay_constant / (gap * cfg.eyepiece_focal * cfg.eyepiece_focal))
}

/// Inverse of [`diopter_to_slm_focal`].
pub fn slm_focal_to_diopter(focal: f64, cfg: &OpticalConfig) -> f64 {
    if focal.is_infinite() {
        return cfg.native_diopter;
    }
    cfg.native_diopter - cfg.relay_constant / (focal * cfg.eyepiece_focal * cfg.eyepiece_focal)
}

/// Axial distance (m) from the native intermediate plane to the plane seen at
/// `d` diopters, measured in the direction the SLM lens moves images.
pub fn axial_offset(d: f64, cfg: &OpticalConfig) -> Result<f64> {
    check_depth(d, cfg)?;
    Ok((cfg.native_diopter - d) * cfg.eyepiece_focal * cfg.eyepiece_focal)
}

/// Least-squares relay constant `K` from `(depth, focal)` pairs.
///
/// Minimizes `sum (f_i - K / ((D_native - D_i) f_e^2))^2` over rows with a
/// finite focal and `D_i < D_native`.
pub fn fit_relay_constant(table: &[(f64, f64)], eyepiece_focal: f64, native: f64) -> Result<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for &(d, f) in table {
        if !f.is_finite() || d >= native {
            continue;
        }
        let basis = 1.0 / ((native - d) * eyepiece_focal * eyepiece_focal);
        num += f * basis;
        den += basis * basis;
    }
    if den == 0.0 {
        return Err(OmniError::NoFiniteData);
    }
    Ok(num / den)
}

/// Ordered target depths and the SLM focal length that realizes each.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthPlan {
    depths: Vec<f64>,
    slm_focals: Vec<f64>,
}

impl DepthPlan {
    pub fn new(depths: &[f64], cfg: &OpticalConfig) -> Result<Self> {
        if depths.is_empty() {
            return Err(OmniError::InvalidInput("depth plan is empty".into()));
        }
        if depths.windows(2).any(|w| w[1] <= w[0]) {
            return Err(OmniError::InvalidInput(
                "depths must be strictly increasing".into(),
            ));
        }
        let slm_focals = depths
            .iter()
            .map(|&d| diopter_to_slm_focal(d, cfg))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            depths: depths.to_vec(),
            slm_focals,
        })
    }

    /// Evenly spaced planes over `[lo, hi]`.
    pub fn uniform(lo: f64, hi: f64, count: usize, cfg: &OpticalConfig) -> Result<Self> {
        let depths: Vec<f64> = match count {
            0 => Vec::new(),
            1 => vec![lo],
            n => (0..n)
                .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
                .collect(),
        };
        Self::new(&depths, cfg)
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn slm_focals(&self) -> &[f64] {
        &self.slm_focals
    }

    pub fn len(&self) -> usize {
        self.depths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.depths.is_empty()
    }
}

/// One way of splitting the panel between lateral resolution and depth planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayMode {
    /// Tile width and height (L, M) in panel pixels.
    pub lateral: (usize, usize),
    pub plane_count: usize,
    /// Spacing between adjacent planes in diopters; 0 for a single plane.
    pub plane_spacing: f64,
    pub frame_rate: f64,
}

impl DisplayMode {
    /// `L * M * N <= P`.
    pub fn fits_panel(&self, total_pixels: usize) -> bool {
        self.lateral
            .0
            .checked_mul(self.lateral.1)
            .and_then(|a| a.checked_mul(self.plane_count))
            .is_some_and(|used| used <= total_pixels)
    }
}

/// Most-square `(rows, cols)` grid with `rows * cols >= n`.
pub fn grid_shape(n: usize) -> (usize, usize) {
    if n == 0 {
        return (0, 0);
    }
    let mut cols = (n as f64).sqrt() as usize;
    while cols * cols < n {
        cols += 1;
    }
    while cols > 1 && (cols - 1) * (cols - 1) >= n {
        cols -= 1;
    }
    (n.div_ceil(cols), cols)
}

/// Best mode for `n` planes over `range`, or `None` when no tile fits.
pub fn plan_mode(cfg: &OpticalConfig, range: (f64, f64), n: usize) -> Option<DisplayMode> {
    if n == 0 {
        return None;
    }
    let total = cfg.panel_total();
    let (rows, cols) = grid_shape(n);
    let (w, h) = cfg.panel_pixels;
    let mut side = ((total / n) as f64).sqrt().floor() as usize;
    while side > 0 && side * side * n > total {
        side -= 1;
    }
    while (side + 1) * (side + 1) * n <= total {
        side += 1;
    }
    let side = side.min(w / cols).min(h / rows);
    if side == 0 {
        return None;
    }
    let spacing = if n > 1 {
        (range.1 - range.0) / (n - 1) as f64
    } else {
        0.0
    };
    let mode = DisplayMode {
        lateral: (side, side),
        plane_count: n,
        plane_spacing: spacing,
        frame_rate: cfg.frame_rate,
    };
    mode.fits_panel(total).then_some(mode)
}

/// Modes for each candidate plane count that satisfy `L * M * N <= P`.
///
/// Each mode uses the largest square tile that both meets the pixel budget
/// and fits a cell of the most-square tiling grid.
pub fn plan_modes(
    cfg: &OpticalConfig,
    range: (f64, f64),
    candidates: &[usize],
) -> Result<Vec<DisplayMode>> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite()) || lo < 0.0 || hi < lo {
        return Err(OmniError::InvalidInput(format!(
            "invalid depth range ({lo}, {hi})"
        )));
    }
    if hi > cfg.native_diopter {
        return Err(OmniError::DepthBeyondNative {
            depth: hi,
            native: cfg.native_diopter,
        });
    }
    Ok(candidates
        .iter()
        .filter_map(|&n| plan_mode(cfg, range, n))
        .collect())
}

/// Pixel rectangle on the panel: origin at the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl PixelRect {
    pub fn overlaps(&self, other: &PixelRect) -> bool {
        self.x < other.x + other.width
            && other.x < self.x + self.width
            && self.y < other.y + other.height
            && other.y < self.y + self.height
    }

    /// Center in pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + (self.width as f64 - 1.0) / 2.0,
            self.y as f64 + (self.height as f64 - 1.0) / 2.0,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub index: usize,
    /// Depth-plane index shown in this tile; `None` for an unused cell.
    pub plane: Option<usize>,
    pub rect: PixelRect,
    /// Tile center relative to the panel center (m); y grows downward.
    pub offset: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubPanelLayout {
    pub grid: (usize, usize),
    pub tiles: Vec<Tile>,
}

impl SubPanelLayout {
    /// Tile carrying plane `k`.
    pub fn tile_for_plane(&self, k: usize) -> Option<&Tile> {
        self.tiles.iter().find(|t| t.plane == Some(k))
    }

    pub fn planes(&self) -> impl Iterator<Item = &Tile> {
        self.tiles.iter().filter(|t| t.plane.is_some())
    }
}

/// Tile the panel for `mode`: most-square grid, row-major plane assignment,
/// each `L x M` tile centered in its cell.
pub fn subpanel_layout(cfg: &OpticalConfig, mode: &DisplayMode) -> Result<SubPanelLayout> {
    let n = mode.plane_count;
    if n == 0 {
        return Err(OmniError::InvalidInput("mode has no planes".into()));
    }
    let (w, h) = cfg.panel_pixels;
    let (tw, th) = mode.lateral;
    if tw == 0 || th == 0 || tw > w || th > h {
        return Err(OmniError::TileTooLarge {
            width: tw,
            height: th,
            cell_w: w,
            cell_h: h,
        });
    }
    let (rows, cols) = grid_shape(n);
    let (cell_w, cell_h) = (w / cols, h / rows);
    if tw > cell_w || th > cell_h {
        return Err(OmniError::TileTooLarge {
            width: tw,
            height: th,
            cell_w,
            cell_h,
        });
    }
    let panel_cx = (w as f64 - 1.0) / 2.0;
    let panel_cy = (h as f64 - 1.0) / 2.0;
    // leftover pixels from flooring are split evenly around the grid
    let margin_x = (w - cell_w * cols) / 2;
    let margin_y = (h - cell_h * rows) / 2;
    let mut tiles = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let index = r * cols + c;
            let rect = PixelRect {
                x: margin_x + c * cell_w + (cell_w - tw) / 2,
                y: margin_y + r * cell_h + (cell_h - th) / 2,
                width: tw,
                height: th,
            };
            let (cx, cy) = rect.center();
            tiles.push(Tile {
                index,
                plane: (index < n).then_some(index),
                rect,
                offset: (
                    (cx - panel_cx) * cfg.panel_pitch,
                    (cy - panel_cy) * cfg.panel_pitch,
                ),
            });
        }
    }
    Ok(SubPanelLayout {
        grid: (rows, cols),
        tiles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg_with_k(k: f64) -> OpticalConfig {
        OpticalConfig {
            relay_constant: k,
            ..OpticalConfig::prototype()
        }
    }

    #[test]
    fn native_plane_maps_to_infinity() {
        let cfg = cfg_with_k(0.1008);
        assert!(diopter_to_slm_focal(3.0, &cfg).unwrap().is_infinite());
    }

    #[test]
    fn one_diopter_row() {
        let f = diopter_to_slm_focal(1.0, &cfg_with_k(0.1008)).unwrap();
        assert!((f - 80.6).abs() / 80.6 < 0.02, "{f}");
    }

    #[test]
    fn zero_diopter_row() {
        let f = diopter_to_slm_focal(0.0, &cfg_with_k(0.1008)).unwrap();
        assert_relative_eq!(f, 53.76, max_relative = 1e-3);
        assert!((f - 53.3).abs() / 53.3 < 0.03);
    }

    #[test]
    fn beyond_native_is_rejected() {
        let err = diopter_to_slm_focal(3.5, &OpticalConfig::prototype()).unwrap_err();
        assert!(err.to_string().contains("depth beyond native plane"));
    }

    #[test]
    fn single_point_fit_is_exact() {
        let k = fit_relay_constant(&[(1.0, 80.6)], 0.025, 3.0).unwrap();
        assert_relative_eq!(k, 80.6 * 2.0 * 6.25e-4, max_relative = 1e-12);
    }

    #[test]
    fn infinite_only_fit_fails() {
        assert!(matches!(
            fit_relay_constant(&[(3.0, f64::INFINITY)], 0.025, 3.0),
            Err(OmniError::NoFiniteData)
        ));
    }

    #[test]
    fn three_row_fit_matches_closed_form() {
        // K = sum(f a) / sum(a^2), a = 1 / ((3 - D) f_e^2)
        let a = [1.0 / (3.0 * 6.25e-4), 1.0 / (2.0 * 6.25e-4), 1.0 / 6.25e-4];
        let f = [53.3, 80.6, 162.5];
        let want = (0..3).map(|i| f[i] * a[i]).sum::<f64>() / a.iter().map(|x| x * x).sum::<f64>();
        let k = fit_relay_constant(&PROTOTYPE_FOCAL_TABLE, 0.025, 3.0).unwrap();
        assert_relative_eq!(k, want, max_relative = 1e-12);
        assert!((k - 0.1007).abs() / 0.1007 < 0.01, "{k}");
    }

    #[test]
    fn plan_table_rows() {
        let cfg = OpticalConfig::prototype();
        let modes = plan_modes(&cfg, (0.0, 3.0), &[1, 4, 16]).unwrap();
        assert_eq!(modes[0].lateral, (2000, 2000));
        assert_eq!(modes[0].plane_spacing, 0.0);
        assert_eq!(modes[1].lateral, (1000, 1000));
        assert_relative_eq!(modes[1].plane_spacing, 1.0);
        assert_eq!(modes[2].lateral, (500, 500));
        assert_relative_eq!(modes[2].plane_spacing, 0.2);
    }

    #[test]
    fn plan_excludes_impossible_counts() {
        let cfg = OpticalConfig {
            panel_pixels: (4, 4),
            ..OpticalConfig::prototype()
        };
        let modes = plan_modes(&cfg, (0.0, 3.0), &[16, 17, 0]).unwrap();
        assert_eq!(modes.len(), 1);
        assert_eq!(modes[0].lateral, (1, 1));
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(grid_shape(1), (1, 1));
        assert_eq!(grid_shape(2), (1, 2));
        assert_eq!(grid_shape(3), (2, 2));
        assert_eq!(grid_shape(4), (2, 2));
        assert_eq!(grid_shape(5), (2, 3));
        assert_eq!(grid_shape(16), (4, 4));
        assert_eq!(grid_shape(17), (4, 5));
    }

    #[test]
    fn quadrant_layout() {
        let cfg = OpticalConfig::prototype();
        let mode = plan_mode(&cfg, (0.0, 3.0), 4).unwrap();
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        assert_eq!(layout.grid, (2, 2));
        let p = cfg.panel_pitch;
        let want = [(-500.0, -500.0), (500.0, -500.0), (-500.0, 500.0), (500.0, 500.0)];
        for (t, (wx, wy)) in layout.tiles.iter().zip(want) {
            assert_relative_eq!(t.offset.0, wx * p, max_relative = 1e-12);
            assert_relative_eq!(t.offset.1, wy * p, max_relative = 1e-12);
        }
    }

    #[test]
    fn single_tile_is_centered() {
        let cfg = OpticalConfig::prototype();
        let mode = plan_mode(&cfg, (0.0, 3.0), 1).unwrap();
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        assert_eq!(layout.tiles.len(), 1);
        assert_eq!(layout.tiles[0].offset, (0.0, 0.0));
    }

    #[test]
    fn three_planes_leave_one_empty_tile() {
        let cfg = OpticalConfig::prototype();
        let mode = plan_mode(&cfg, (0.0, 3.0), 3).unwrap();
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        assert_eq!(layout.grid, (2, 2));
        let planes: Vec<_> = layout.tiles.iter().map(|t| t.plane).collect();
        assert_eq!(planes, vec![Some(0), Some(1), Some(2), None]);
        // floor(sqrt(4e6 / 3)) = 1154 exceeds the 1000-px cell, so tiles fill the cell
        assert_eq!(mode.lateral, (1000, 1000));
        let t2 = &layout.tiles[2];
        assert_eq!((t2.rect.x, t2.rect.y), (0, 1000));
        assert_relative_eq!(t2.offset.0, (499.5 - 999.5) * cfg.panel_pitch);
        assert_relative_eq!(t2.offset.1, (1499.5 - 999.5) * cfg.panel_pitch);
    }

    #[test]
    fn oversized_tile_is_rejected() {
        let cfg = OpticalConfig::prototype();
        let mode = DisplayMode {
            lateral: (1200, 1200),
            plane_count: 4,
            plane_spacing: 1.0,
            frame_rate: 60.0,
        };
        assert!(matches!(
            subpanel_layout(&cfg, &mode),
            Err(OmniError::TileTooLarge { .. })
        ));
    }

    #[test]
    fn config_json_roundtrip_and_field_names() {
        let cfg = OpticalConfig::desk();
        let json = cfg.to_json();
        for key in [
            "wavelength",
            "objective_focal",
            "eyepiece_focal",
            "relay_constant",
            "native_diopter",
            "panel_pixels",
            "panel_pitch",
            "slm_pixels",
            "slm_pitch",
            "phase_levels",
        ] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert_eq!(OpticalConfig::from_json(&json).unwrap(), cfg);
    }

    #[test]
    fn config_validation() {
        let mut cfg = OpticalConfig::desk();
        cfg.wavelength = 20e-6;
        assert!(cfg.validate().is_err());
        let mut cfg = OpticalConfig::desk();
        cfg.phase_levels = 1;
        assert!(cfg.validate().is_err());
        let mut cfg = OpticalConfig::desk();
        cfg.native_diopter = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = OpticalConfig::desk();
        cfg.eyepiece_focal = 0.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn depth_plan_rejects_unsorted() {
        let cfg = OpticalConfig::desk();
        assert!(DepthPlan::new(&[1.0, 0.0], &cfg).is_err());
        let plan = DepthPlan::uniform(0.0, 3.0, 4, &cfg).unwrap();
        assert_eq!(plan.depths(), &[0.0, 1.0, 2.0, 3.0]);
        assert!(plan.slm_focals()[3].is_infinite());
    }
}
