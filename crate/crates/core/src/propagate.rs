//! Scalar wave-optics model of the relay: panel -> Fourier-plane SLM -> native
//! intermediate image -> free-space propagation to any depth plane, plus an
//! ideal camera with a circular pupil.
//!
//! All frequency-domain work happens on a grid zero-padded to twice the input
//! size; outputs are cropped back to the input (or sensor) size.
//!
//! Two illumination models share the same transfer function `T(nu)`:
//! * coherent: amplitude `sqrt(I)` is filtered by `T` and detected as `|u|^2`;
//! * incoherent: intensity is convolved with the PSF `|F^-1[T]|^2`.
//!
//! The SLM sits at the Fourier plane with coordinates `x_f = lambda * sqrt(K) * nu`.

use std::f64::consts::TAU;

use ndarray::{s, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::fft::{fftfreq, Fft2};
use crate::optics::{axial_offset, OpticalConfig};
use crate::par;
use crate::phase::QuantizedPhaseMap;

/// Sampled complex field at a transverse plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub samples: Array2<Complex64>,
    pub pitch: f64,
    pub wavelength: f64,
}

impl ComplexField {
    pub fn dim(&self) -> (usize, usize) {
        self.samples.dim()
    }

    pub fn energy(&self) -> f64 {
        let std = self.samples.as_standard_layout();
        let data = std.as_slice().expect("standard layout");
        par::sum_real(data.len(), |i| data[i].norm_sqr())
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.samples.mapv(|a| a.norm_sqr())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coherence {
    Coherent,
    #[default]
    Incoherent,
}

impl std::str::FromStr for Coherence {
    type Err = OmniError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coherent" => Ok(Self::Coherent),
            "incoherent" => Ok(Self::Incoherent),
            other => Err(OmniError::InvalidInput(format!("unknown coherence '{other}'"))),
        }
    }
}

/// Ideal lens camera focused at `focus` diopters behind the eyepiece.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub focus: f64,
    /// Entrance pupil diameter (m); `f64::INFINITY` disables the pupil.
    pub aperture_diameter: f64,
    /// Output size `(width, height)`; `None` keeps the panel size.
    pub sensor_pixels: Option<(usize, usize)>,
}

impl CameraModel {
    pub fn new(focus: f64, aperture_diameter: f64) -> Self {
        Self {
            focus,
            aperture_diameter,
            sensor_pixels: None,
        }
    }

    /// Numerical aperture at the intermediate image, `(a / 2) / f_e`.
    pub fn numerical_aperture(&self, cfg: &OpticalConfig) -> f64 {
        0.5 * self.aperture_diameter / cfg.eyepiece_focal
    }
}

/// Amplitude `sqrt(I)` with zero phase.
pub fn panel_to_field(panel: &Array2<f64>, cfg: &OpticalConfig) -> Result<ComplexField> {
    if panel.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(OmniError::InvalidInput(
            "panel intensities must be finite and nonnegative".into(),
        ));
    }
    Ok(ComplexField {
        samples: panel.mapv(|v| Complex64::new(v.sqrt(), 0.0)),
        pitch: cfg.panel_pitch,
        wavelength: cfg.wavelength,
    })
}

fn padded_dim(dim: (usize, usize)) -> (usize, usize) {
    (2 * dim.0, 2 * dim.1)
}

/// Place `a` in the center of a zero grid of `dim`.
pub fn pad_center<T: Clone + Default>(a: &Array2<T>, dim: (usize, usize)) -> Array2<T> {
    let (r, c) = a.dim();
    let (r0, c0) = ((dim.0 - r) / 2, (dim.1 - c) / 2);
    let mut out = Array2::from_elem(dim, T::default());
    out.slice_mut(s![r0..r0 + r, c0..c0 + c]).assign(a);
    out
}

/// Central `dim` window of `a`; the inverse of [`pad_center`].
pub fn crop_center<T: Clone>(a: &Array2<T>, dim: (usize, usize)) -> Array2<T> {
    let (r, c) = a.dim();
    let (r0, c0) = ((r - dim.0) / 2, (c - dim.1) / 2);
    a.slice(s![r0..r0 + dim.0, c0..c0 + dim.1]).to_owned()
}

/// Frequency grids (cycles/m) in FFT order for a `(rows, cols)` grid.
struct FreqGrid {
    fx: Vec<f64>,
    fy: Vec<f64>,
}

impl FreqGrid {
    fn new(dim: (usize, usize), pitch: f64) -> Self {
        Self {
            fx: fftfreq(dim.1, pitch),
            fy: fftfreq(dim.0, pitch),
        }
    }

    fn cols(&self) -> usize {
        self.fx.len()
    }

    fn len(&self) -> usize {
        self.fx.len() * self.fy.len()
    }
}

/// Largest propagation distance the padded grid samples without aliasing the
/// angular-spectrum transfer function.
pub fn max_propagation_distance(padded: (usize, usize), pitch: f64, wavelength: f64) -> f64 {
    let n = padded.0.min(padded.1) as f64;
    let edge = (wavelength / (2.0 * pitch)).min(1.0);
    n * pitch * pitch * (1.0 - edge * edge).sqrt() / wavelength
}

fn check_band_limit(distance: f64, padded: (usize, usize), pitch: f64, wavelength: f64) -> Result<()> {
    if !distance.is_finite() {
        return Err(OmniError::InvalidInput("propagation distance must be finite".into()));
    }
    let limit = max_propagation_distance(padded, pitch, wavelength);
    if distance.abs() > limit {
        let edge = (wavelength / (2.0 * pitch)).min(1.0);
        let required =
            (distance.abs() * wavelength / (pitch * pitch * (1.0 - edge * edge).sqrt())).ceil() as usize;
        return Err(OmniError::BandLimit {
            distance,
            limit,
            required,
        });
    }
    Ok(())
}

/// Angular-spectrum transfer `exp(j 2 pi d sqrt(1/lambda^2 - nu^2))`,
/// with evanescent components decaying as `exp(-2 pi |d| sqrt(nu^2 - 1/lambda^2))`.
fn free_space(nu2: f64, distance: f64, wavelength: f64) -> Complex64 {
    let k2 = 1.0 / (wavelength * wavelength) - nu2;
    if k2 >= 0.0 {
        Complex64::cis(TAU * distance * k2.sqrt())
    } else {
        Complex64::new((-TAU * distance.abs() * (-k2).sqrt()).exp(), 0.0)
    }
}

/// Free-space propagation by `distance` (m) with the angular spectrum method.
pub fn propagate_angular_spectrum(field: &ComplexField, distance: f64) -> Result<ComplexField> {
    let dim = field.dim();
    let pdim = padded_dim(dim);
    check_band_limit(distance, pdim, field.pitch, field.wavelength)?;
    if distance == 0.0 {
        return Ok(field.clone());
    }
    let plan = Fft2::new(pdim.0, pdim.1);
    let grid = FreqGrid::new(pdim, field.pitch);
    let mut u = pad_center(&field.samples, pdim);
    plan.forward(&mut u);
    let data = u.as_slice_mut().expect("standard layout");
    par::for_each_chunk_mut(data, grid.cols(), |r, row| {
        let fy = grid.fy[r];
        for (c, v) in row.iter_mut().enumerate() {
            let fx = grid.fx[c];
            *v *= free_space(fx * fx + fy * fy, distance, field.wavelength);
        }
    });
    plan.inverse(&mut u);
    Ok(ComplexField {
        samples: crop_center(&u, dim),
        pitch: field.pitch,
        wavelength: field.wavelength,
    })
}

/// SLM transfer `exp(j phi_slm(lambda sqrt(K) nu))` on a Fourier grid,
/// nearest-neighbor resampled; zero outside the SLM aperture.
fn slm_transfer(grid: &FreqGrid, slm: &QuantizedPhaseMap, cfg: &OpticalConfig) -> Vec<Complex64> {
    let (rows, cols) = slm.dim();
    let scale = cfg.wavelength * cfg.relay_focal() / slm.pitch;
    let step = TAU / f64::from(slm.levels_count);
    let lut: Vec<Complex64> = (0..slm.levels_count)
        .map(|l| Complex64::cis(f64::from(l) * step))
        .collect();
    let index = |nu: f64, n: usize| -> Option<usize> {
        let pos = (nu * scale + n as f64 / 2.0 + 1e-9).floor();
        (pos >= 0.0 && pos < n as f64).then_some(pos as usize)
    };
    let col_idx: Vec<Option<usize>> = grid.fx.iter().map(|&f| index(f, cols)).collect();
    let row_idx: Vec<Option<usize>> = grid.fy.iter().map(|&f| index(f, rows)).collect();
    let mut out = vec![Complex64::new(0.0, 0.0); grid.len()];
    par::for_each_chunk_mut(&mut out, grid.cols(), |r, row| {
        if let Some(sr) = row_idx[r] {
            for (c, v) in row.iter_mut().enumerate() {
                if let Some(sc) = col_idx[c] {
                    *v = lut[slm.levels[(sr, sc)] as usize];
                }
            }
        }
    });
    out
}

/// One pass through the 4f relay with the SLM at the Fourier plane.
/// Output is the field at the native image plane, same grid as the input.
pub fn relay_4f(
    input: &ComplexField,
    slm: &QuantizedPhaseMap,
    cfg: &OpticalConfig,
) -> Result<ComplexField> {
    let dim = input.dim();
    let pdim = padded_dim(dim);
    let plan = Fft2::new(pdim.0, pdim.1);
    let grid = FreqGrid::new(pdim, input.pitch);
    let transfer = slm_transfer(&grid, slm, cfg);
    let mut u = pad_center(&input.samples, pdim);
    plan.forward(&mut u);
    let data = u.as_slice_mut().expect("standard layout");
    par::for_each_chunk_mut(data, grid.cols(), |r, row| {
        let base = r * grid.cols();
        for (c, v) in row.iter_mut().enumerate() {
            *v *= transfer[base + c];
        }
    });
    plan.inverse(&mut u);
    Ok(ComplexField {
        samples: crop_center(&u, dim),
        pitch: input.pitch,
        wavelength: input.wavelength,
    })
}

/// A panel and SLM pattern prepared for repeated imaging at many depths.
pub struct Imager {
    cfg: OpticalConfig,
    coherence: Coherence,
    dim: (usize, usize),
    pdim: (usize, usize),
    plan: Fft2,
    grid: FreqGrid,
    /// Spectrum of the padded source (amplitude or intensity).
    source: Vec<Complex64>,
    slm: Vec<Complex64>,
}

impl Imager {
    pub fn new(
        panel: &Array2<f64>,
        slm: &QuantizedPhaseMap,
        cfg: &OpticalConfig,
        coherence: Coherence,
    ) -> Result<Self> {
        cfg.validate()?;
        let field = panel_to_field(panel, cfg)?;
        let dim = panel.dim();
        let pdim = padded_dim(dim);
        let plan = Fft2::new(pdim.0, pdim.1);
        let grid = FreqGrid::new(pdim, cfg.panel_pitch);
        let src = match coherence {
            Coherence::Coherent => field.samples,
            Coherence::Incoherent => panel.mapv(|v| Complex64::new(v, 0.0)),
        };
        let mut spec = pad_center(&src, pdim);
        plan.forward(&mut spec);
        let slm = slm_transfer(&grid, slm, cfg);
        Ok(Self {
            cfg: cfg.clone(),
            coherence,
            dim,
            pdim,
            plan,
            grid,
            source: spec.into_raw_vec_and_offset().0,
            slm,
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.cfg
    }

    /// Total transfer: SLM, free space over `distance`, optional pupil cutoff (cycles/m).
    fn transfer(&self, distance: f64, cutoff: Option<f64>) -> Vec<Complex64> {
        let lambda = self.cfg.wavelength;
        let mut t = vec![Complex64::new(0.0, 0.0); self.grid.len()];
        let cols = self.grid.cols();
        par::for_each_chunk_mut(&mut t, cols, |r, row| {
            let fy = self.grid.fy[r];
            for (c, v) in row.iter_mut().enumerate() {
                let fx = self.grid.fx[c];
                let nu2 = fx * fx + fy * fy;
                if cutoff.is_some_and(|nc| nu2 > nc * nc) {
                    continue;
                }
                *v = self.slm[r * cols + c] * free_space(nu2, distance, lambda);
            }
        });
        t
    }

    /// Intensity at axial `distance` from the native plane, cropped to `out`.
    fn image(&self, distance: f64, cutoff: Option<f64>, out: (usize, usize)) -> Result<Array2<f64>> {
        check_band_limit(distance, self.pdim, self.cfg.panel_pitch, self.cfg.wavelength)?;
        let t = self.transfer(distance, cutoff);
        let mut work = Array2::from_shape_vec(self.pdim, t).expect("grid size");
        match self.coherence {
            Coherence::Coherent => {
                self.apply_source(&mut work);
                self.plan.inverse(&mut work);
                Ok(crop_center(&work, out).mapv(|a| a.norm_sqr()))
            }
            Coherence::Incoherent => {
                // PSF = |F^-1[T]|^2, OTF = F[PSF]
                self.plan.inverse(&mut work);
                work.mapv_inplace(|a| Complex64::new(a.norm_sqr(), 0.0));
                self.plan.forward(&mut work);
                self.apply_source(&mut work);
                self.plan.inverse(&mut work);
                Ok(crop_center(&work, out).mapv(|a| a.re.max(0.0)))
            }
        }
    }

    fn apply_source(&self, work: &mut Array2<Complex64>) {
        let cols = self.grid.cols();
        let data = work.as_slice_mut().expect("standard layout");
        par::for_each_chunk_mut(data, cols, |r, row| {
            let src = &self.source[r * cols..(r + 1) * cols];
            row.iter_mut().zip(src).for_each(|(v, s)| *v *= s);
        });
    }

    /// Intensity seen at `depth` diopters with no pupil limit.
    pub fn depth_image(&self, depth: f64) -> Result<Array2<f64>> {
        let d = axial_offset(depth, &self.cfg)?;
        self.image(d, None, self.dim)
    }

    /// Intensity recorded by `cam`.
    pub fn capture(&self, cam: &CameraModel) -> Result<Array2<f64>> {
        if !(cam.aperture_diameter > 0.0) {
            return Err(OmniError::InvalidInput("camera aperture must be > 0".into()));
        }
        let d = axial_offset(cam.focus, &self.cfg)?;
        let cutoff = cam
            .aperture_diameter
            .is_finite()
            .then(|| cam.numerical_aperture(&self.cfg) / self.cfg.wavelength);
        let out = cam
            .sensor_pixels
            .map_or(self.dim, |(w, h)| (h.min(self.pdim.0), w.min(self.pdim.1)));
        self.image(d, cutoff, out)
    }

    pub fn depth_images(&self, depths: &[f64]) -> Result<Vec<Array2<f64>>> {
        par::map_collect(depths, |&d| self.depth_image(d))
            .into_iter()
            .collect()
    }

    pub fn captures(&self, cams: &[CameraModel]) -> Result<Vec<Array2<f64>>> {
        par::map_collect(cams, |c| self.capture(c)).into_iter().collect()
    }
}

/// Intermediate images at each probe depth.
pub fn simulate_depth_stack(
    panel: &Array2<f64>,
    slm: &QuantizedPhaseMap,
    cfg: &OpticalConfig,
    probe_depths: &[f64],
    coherence: Coherence,
) -> Result<Vec<Array2<f64>>> {
    Imager::new(panel, slm, cfg, coherence)?.depth_images(probe_depths)
}

/// Image recorded by an ideal camera looking through the eyepiece.
pub fn camera_capture(
    panel: &Array2<f64>,
    slm: &QuantizedPhaseMap,
    cfg: &OpticalConfig,
    cam: &CameraModel,
    coherence: Coherence,
) -> Result<Array2<f64>> {
    Imager::new(panel, slm, cfg, coherence)?.capture(cam)
}
