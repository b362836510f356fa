//! Slanted-edge MTF, focus sharpness, and the modulation-contrast sweeps.
//!
//! The MTF estimator follows the usual slanted-edge recipe: per-row edge
//! centroids, a line fit for the edge angle, projection of every pixel onto
//! the edge normal into 4x oversampled bins (ESF), a central difference (LSF),
//! a Hann window and a DFT normalized at DC. The response of the binning box
//! and of the central difference is divided out.

use std::f64::consts::PI;

use ndarray::{s, Array2};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::optics::{plan_mode, DepthPlan, OpticalConfig, PixelRect};
use crate::par;
use crate::propagate::{crop_center, CameraModel, Coherence, Imager};
use crate::scenes::slanted_edge;
use crate::synthesis::synthesize_with_mode;
use crate::wgs::WgsParams;

/// Projection bins per pixel.
pub const OVERSAMPLE: usize = 4;
const MIN_TILT_DEG: f64 = 2.0;
const MAX_TILT_DEG: f64 = 10.0;
/// Half-width (px) of the window used to refine per-row centroids.
const CENTROID_HALF_WINDOW: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtfCurve {
    /// `(cycles/mm, modulation)`, ascending in frequency, modulation(0) = 1.
    pub samples: Vec<(f64, f64)>,
    /// Fitted edge tilt from vertical, degrees.
    pub edge_angle_deg: f64,
}

impl MtfCurve {
    pub fn max_frequency(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.0)
    }
}

/// Per-row derivative centroids; `window` limits the search around a prior line.
fn row_centroids(region: &Array2<f64>, polarity: f64, prior: Option<(f64, f64)>) -> Vec<(f64, f64)> {
    let (rows, cols) = region.dim();
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let (mut num, mut den) = (0.0, 0.0);
        for c in 0..cols - 1 {
            let x = c as f64 + 0.5;
            if let Some((a, b)) = prior {
                if (x - (a * r as f64 + b)).abs() > CENTROID_HALF_WINDOW {
                    continue;
                }
            }
            let d = polarity * (region[(r, c + 1)] - region[(r, c)]);
            if d > 0.0 {
                num += x * d;
                den += d;
            }
        }
        if den > 0.0 {
            out.push((r as f64, num / den));
        }
    }
    out
}

/// Least-squares `x = a y + b`.
fn fit_line(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let my = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mx = points.iter().map(|p| p.1).sum::<f64>() / n;
    let syy: f64 = points.iter().map(|p| (p.0 - my).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - my) * (p.1 - mx)).sum();
    if syy == 0.0 {
        return None;
    }
    let a = sxy / syy;
    Some((a, mx - a * my))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// MTF of a region holding one near-vertical edge tilted 2-10 degrees.
pub fn slanted_edge_mtf(region: &Array2<f64>, pitch_mm: f64) -> Result<MtfCurve> {
    let (rows, cols) = region.dim();
    if rows < 8 || cols < 8 {
        return Err(OmniError::Edge("region smaller than 8x8".into()));
    }
    if !(pitch_mm > 0.0 && pitch_mm.is_finite()) {
        return Err(OmniError::InvalidInput("pitch must be > 0".into()));
    }
    let max = region.iter().cloned().fold(f64::MIN, f64::max);
    let min = region.iter().cloned().fold(f64::MAX, f64::min);
    if !(max - min > 1e-9 * max.abs().max(1e-300)) {
        return Err(OmniError::Edge("no edge detected (uniform region)".into()));
    }
    let left = region.slice(s![.., ..cols / 4]).mean().unwrap_or(0.0);
    let right = region.slice(s![.., cols - cols / 4..]).mean().unwrap_or(0.0);
    if (right - left).abs() < 0.05 * (max - min) {
        return Err(OmniError::Edge("no near-vertical edge detected".into()));
    }
    let polarity = (right - left).signum();

    let coarse = fit_line(&row_centroids(region, polarity, None))
        .ok_or_else(|| OmniError::Edge("too few edge rows".into()))?;
    let (a, b) = fit_line(&row_centroids(region, polarity, Some(coarse)))
        .ok_or_else(|| OmniError::Edge("too few edge rows".into()))?;
    let angle = a.atan();
    let angle_deg = angle.to_degrees();
    if !(MIN_TILT_DEG..=MAX_TILT_DEG).contains(&angle_deg.abs()) {
        return Err(OmniError::Edge(format!(
            "edge tilt {angle_deg:.2} deg outside [{MIN_TILT_DEG}, {MAX_TILT_DEG}]"
        )));
    }
    let cos = angle.cos();

    // distance range covered by every row
    let reach = (0..rows)
        .map(|r| {
            let xe = a * r as f64 + b;
            xe.min(cols as f64 - 1.0 - xe)
        })
        .fold(f64::MAX, f64::min)
        * cos;
    if reach < 4.0 {
        return Err(OmniError::Edge("edge too close to the region border".into()));
    }
    let bin = 1.0 / OVERSAMPLE as f64;
    let nbins = (2.0 * reach / bin).floor() as usize;
    let origin = -(nbins as f64) * bin / 2.0;
    let mut sums = vec![0.0; nbins];
    let mut counts = vec![0usize; nbins];
    for ((r, c), &v) in region.indexed_iter() {
        let d = (c as f64 - (a * r as f64 + b)) * cos;
        let k = ((d - origin) / bin).floor();
        if k >= 0.0 && (k as usize) < nbins {
            sums[k as usize] += v;
            counts[k as usize] += 1;
        }
    }
    let esf = fill_empty_bins(&sums, &counts)?;

    let n = esf.len();
    let mut lsf = vec![0.0; n];
    for i in 1..n - 1 {
        lsf[i] = 0.5 * (esf[i + 1] - esf[i - 1]);
    }
    // Hann over the full span; the edge sits at the center bin
    for (i, v) in lsf.iter_mut().enumerate() {
        *v *= 0.5 - 0.5 * (2.0 * PI * i as f64 / (n - 1) as f64).cos();
    }

    let len = 4 * n;
    let mut buf: Vec<Complex64> = lsf.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    buf.resize(len, Complex64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    let dc = buf[0].norm();
    if dc <= 0.0 {
        return Err(OmniError::Edge("line spread function has no area".into()));
    }
    let step_mm = bin * pitch_mm;
    let f_max = 1.0 / pitch_mm;
    let mut samples = Vec::new();
    for (k, z) in buf.iter().enumerate().take(len / 2 + 1) {
        let f = k as f64 / (len as f64 * step_mm);
        if f > f_max + 1e-12 {
            break;
        }
        let correction = sinc(PI * f * step_mm) * sinc(2.0 * PI * f * step_mm);
        samples.push((f, z.norm() / dc / correction));
    }
    Ok(MtfCurve {
        samples,
        edge_angle_deg: angle_deg,
    })
}

fn fill_empty_bins(sums: &[f64], counts: &[usize]) -> Result<Vec<f64>> {
    let filled: Vec<usize> = (0..counts.len()).filter(|&i| counts[i] > 0).collect();
    if filled.len() < 2 {
        return Err(OmniError::Edge("too few populated projection bins".into()));
    }
    let mut out = vec![0.0; counts.len()];
    for i in 0..counts.len() {
        out[i] = if counts[i] > 0 {
            sums[i] / counts[i] as f64
        } else {
            let hi = filled.partition_point(|&j| j < i);
            match (hi.checked_sub(1).map(|l| filled[l]), filled.get(hi)) {
                (Some(l), Some(&h)) => {
                    let (vl, vh) = (sums[l] / counts[l] as f64, sums[h] / counts[h] as f64);
                    vl + (vh - vl) * (i - l) as f64 / (h - l) as f64
                }
                (Some(l), None) => sums[l] / counts[l] as f64,
                (None, Some(&h)) => sums[h] / counts[h] as f64,
                (None, None) => unreachable!(),
            }
        };
    }
    Ok(out)
}

/// Modulation at `f` cycles/mm by linear interpolation.
pub fn contrast_at(curve: &MtfCurve, f: f64) -> Result<f64> {
    let max = curve.max_frequency();
    if !(0.0..=max).contains(&f) {
        return Err(OmniError::FrequencyOutOfRange { f, max });
    }
    let i = curve.samples.partition_point(|s| s.0 < f);
    if i == 0 {
        return Ok(curve.samples[0].1);
    }
    let (f0, m0) = curve.samples[i - 1];
    let (f1, m1) = curve.samples[i];
    Ok(m0 + (m1 - m0) * (f - f0) / (f1 - f0))
}

/// Mean squared 5-point Laplacian over the interior of `rect`.
pub fn sharpness(image: &Array2<f64>, rect: &PixelRect) -> f64 {
    let (rows, cols) = image.dim();
    let y1 = (rect.y + rect.height).min(rows - 1);
    let x1 = (rect.x + rect.width).min(cols - 1);
    let (y0, x0) = (rect.y.max(1), rect.x.max(1));
    let mut acc = 0.0;
    let mut n = 0usize;
    for r in y0..y1 {
        for c in x0..x1 {
            let lap = 4.0 * image[(r, c)]
                - image[(r - 1, c)]
                - image[(r + 1, c)]
                - image[(r, c - 1)]
                - image[(r, c + 1)];
            acc += lap * lap;
            n += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        acc / n as f64
    }
}

/// Contrast versus a swept abscissa, normalized to the sweep maximum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastCurve {
    /// `(abscissa diopters, relative contrast)`, ascending abscissa.
    pub samples: Vec<(f64, f64)>,
    /// Unnormalized modulation at each sample.
    pub raw: Vec<f64>,
}

impl ContrastCurve {
    pub fn from_raw(abscissa: &[f64], raw: Vec<f64>) -> Self {
        let peak = raw.iter().cloned().fold(f64::MIN, f64::max);
        let samples = abscissa
            .iter()
            .zip(&raw)
            .map(|(&x, &c)| (x, if peak > 0.0 { c / peak } else { 0.0 }))
            .collect();
        Self { samples, raw }
    }

    pub fn argmax(&self) -> f64 {
        let mut best = self.samples[0];
        for &s in &self.samples[1..] {
            if s.1 > best.1 {
                best = s;
            }
        }
        best.0
    }

    /// Rises to a single peak and falls after it.
    pub fn is_unimodal(&self) -> bool {
        let c: Vec<f64> = self.samples.iter().map(|s| s.1).collect();
        let peak = c
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > c[b] { i } else { b });
        c[..=peak].windows(2).all(|w| w[1] >= w[0]) && c[peak..].windows(2).all(|w| w[1] <= w[0])
    }

    /// Each sample is at most `slack` (relative) above its predecessor.
    pub fn is_non_increasing(&self, slack: f64) -> bool {
        self.samples
            .windows(2)
            .all(|w| w[1].1 <= w[0].1 * (1.0 + slack))
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["abscissa", "contrast", "modulation"])?;
        for (&(x, c), raw) in self.samples.iter().zip(&self.raw) {
            w.write_record([x.to_string(), c.to_string(), raw.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| OmniError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Knobs shared by the contrast experiments.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastSetup {
    /// Camera entrance pupil (m).
    pub aperture_diameter: f64,
    /// Evaluation frequency, cycles/mm in the intermediate image plane.
    pub frequency: f64,
    pub edge_angle_deg: f64,
    /// Side of the square measurement window (px).
    pub roi: usize,
    pub coherence: Coherence,
    pub wgs: WgsParams,
}

impl Default for ContrastSetup {
    fn default() -> Self {
        Self {
            aperture_diameter: 4e-3,
            frequency: 5.0,
            edge_angle_deg: 5.0,
            roi: 160,
            coherence: Coherence::Incoherent,
            wgs: WgsParams::default(),
        }
    }
}

/// Two equal-intensity slanted-edge planes at `depths`, ready for capture.
pub struct TwoPlaneEdge {
    pub panel: Array2<f64>,
    pub imager: Imager,
}

impl TwoPlaneEdge {
    pub fn new(cfg: &OpticalConfig, depths: (f64, f64), setup: &ContrastSetup) -> Result<Self> {
        let plan = DepthPlan::new(&[depths.0, depths.1], cfg)?;
        let mode = plan_mode(cfg, depths, 2)
            .ok_or_else(|| OmniError::InvalidInput("two planes do not fit the panel".into()))?;
        let synth = synthesize_with_mode(cfg, plan, mode, &setup.wgs)?;
        let (h, w) = (cfg.panel_pixels.1, cfg.panel_pixels.0);
        let mut panel = Array2::zeros((h, w));
        for tile in synth.layout.planes() {
            let r = tile.rect;
            let edge = slanted_edge((r.height, r.width), setup.edge_angle_deg, 0.0, 0.5);
            panel
                .slice_mut(s![r.y..r.y + r.height, r.x..r.x + r.width])
                .assign(&edge);
        }
        let imager = Imager::new(&panel, &synth.quantized, cfg, setup.coherence)?;
        Ok(Self { panel, imager })
    }

    /// Modulation at `setup.frequency` with the camera focused at `focus`.
    pub fn contrast(&self, focus: f64, setup: &ContrastSetup) -> Result<f64> {
        let cam = CameraModel::new(focus, setup.aperture_diameter);
        let img = self.imager.capture(&cam)?;
        edge_contrast(&img, self.imager.config(), setup)
    }
}

/// Modulation of the centered ROI of a captured edge image.
pub fn edge_contrast(img: &Array2<f64>, cfg: &OpticalConfig, setup: &ContrastSetup) -> Result<f64> {
    let (h, w) = img.dim();
    let side = setup.roi.min(h).min(w);
    let roi = crop_center(img, (side, side));
    let curve = slanted_edge_mtf(&roi, cfg.panel_pitch * 1e3)?;
    contrast_at(&curve, setup.frequency)
}

/// Contrast with the camera at `focus` while two edge planes straddle it at
/// `focus +- dz / 2`, for each spacing `dz`.
pub fn contrast_vs_spacing(
    cfg: &OpticalConfig,
    spacings: &[f64],
    focus: f64,
    setup: &ContrastSetup,
) -> Result<ContrastCurve> {
    if spacings.iter().any(|&dz| !(dz > 0.0)) {
        return Err(OmniError::InvalidInput("spacings must be positive".into()));
    }
    let raw = par::map_collect(spacings, |&dz| {
        let stim = TwoPlaneEdge::new(cfg, (focus - dz / 2.0, focus + dz / 2.0), setup)?;
        stim.contrast(focus, setup)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(ContrastCurve::from_raw(spacings, raw))
}

/// Contrast of a fixed two-plane edge stimulus at `planes` versus camera focus.
pub fn contrast_vs_accommodation(
    cfg: &OpticalConfig,
    planes: (f64, f64),
    foci: &[f64],
    setup: &ContrastSetup,
) -> Result<ContrastCurve> {
    let stim = TwoPlaneEdge::new(cfg, planes, setup)?;
    let raw = par::map_collect(foci, |&z| stim.contrast(z, setup))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ContrastCurve::from_raw(foci, raw))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_region_is_rejected() {
        let r = Array2::from_elem((64, 64), 0.4);
        assert!(matches!(slanted_edge_mtf(&r, 0.01), Err(OmniError::Edge(_))));
    }

    #[test]
    fn untilted_edge_is_rejected() {
        let r = slanted_edge((64, 64), 0.0, 0.0, 1.0);
        assert!(slanted_edge_mtf(&r, 0.01).is_err());
        let r = slanted_edge((64, 64), 20.0, 0.0, 1.0);
        assert!(slanted_edge_mtf(&r, 0.01).is_err());
    }

    #[test]
    fn ideal_edge_is_flat_to_quarter_nyquist() {
        let pitch = 0.01;
        let r = slanted_edge((128, 128), 5.0, 0.1, 0.9);
        let mtf = slanted_edge_mtf(&r, pitch).unwrap();
        assert!((mtf.edge_angle_deg.abs() - 5.0).abs() < 0.2, "{}", mtf.edge_angle_deg);
        let quarter = 0.25 / (2.0 * pitch);
        for &(f, m) in &mtf.samples {
            if f <= quarter {
                assert!(m >= 0.95, "MTF({f}) = {m}");
            }
        }
        assert!(contrast_at(&mtf, 5.0).unwrap() >= 0.95);
    }

    #[test]
    fn mirrored_edge_gives_same_curve() {
        let a = slanted_edge((96, 96), 6.0, 0.0, 1.0);
        let b = a.mapv(|v| 1.0 - v);
        let ma = slanted_edge_mtf(&a, 0.02).unwrap();
        let mb = slanted_edge_mtf(&b, 0.02).unwrap();
        for (x, y) in ma.samples.iter().zip(&mb.samples) {
            assert!((x.1 - y.1).abs() < 1e-9);
        }
    }

    #[test]
    fn contrast_at_interpolates_and_bounds() {
        let curve = MtfCurve {
            samples: vec![(0.0, 1.0), (2.0, 0.5), (4.0, 0.1)],
            edge_angle_deg: 5.0,
        };
        assert_eq!(contrast_at(&curve, 0.0).unwrap(), 1.0);
        assert!((contrast_at(&curve, 1.0).unwrap() - 0.75).abs() < 1e-12);
        assert!((contrast_at(&curve, 3.0).unwrap() - 0.3).abs() < 1e-12);
        assert!(contrast_at(&curve, 4.5).is_err());
        assert!(contrast_at(&curve, -0.1).is_err());
    }

    #[test]
    fn sharpness_prefers_edges() {
        let sharp = slanted_edge((32, 32), 5.0, 0.0, 1.0);
        let flat = Array2::from_elem((32, 32), 0.5);
        let rect = PixelRect { x: 0, y: 0, width: 32, height: 32 };
        assert!(sharpness(&sharp, &rect) > 0.01);
        assert_eq!(sharpness(&flat, &rect), 0.0);
    }

    #[test]
    fn curve_shape_checks() {
        let c = ContrastCurve::from_raw(&[1.0, 1.5, 2.0], vec![0.5, 1.0, 0.6]);
        assert_eq!(c.argmax(), 1.5);
        assert!(c.is_unimodal());
        assert!(!c.is_non_increasing(0.02));
        let d = ContrastCurve::from_raw(&[0.2, 0.4, 0.6], vec![1.0, 1.01, 0.5]);
        assert!(d.is_non_increasing(0.02));
        assert!(!d.is_non_increasing(0.0));
        let csv = d.to_csv().unwrap();
        assert!(csv.starts_with("abscissa,contrast,modulation\n"));
    }
}
