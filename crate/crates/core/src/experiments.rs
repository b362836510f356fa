//! Reproductions of the letter-mapping and layered-scene experiments.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::blend::{compose_panel, render_planes, PlaneStack, SceneInput};
use crate::error::Result;
use crate::metrics::sharpness;
use crate::optics::OpticalConfig;
use crate::propagate::{Coherence, Imager};
use crate::scenes::{layered_scene, letter_panel, LetterRegion};
use crate::synthesis::{synthesize, Synthesis};
use crate::wgs::WgsParams;

pub const LETTER_SCALE: usize = 6;
pub const LETTER_MARGIN: usize = 4;

/// Letter `k` shown on plane `k`, probed at every plane depth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LetterMappingReport {
    pub letters: String,
    pub depths: Vec<f64>,
    pub regions: Vec<LetterRegion>,
    /// `sharpness[letter][probe]`.
    pub sharpness: Vec<Vec<f64>>,
    /// Index of the sharpest probe for each letter.
    pub argmax: Vec<usize>,
}

impl LetterMappingReport {
    /// Every letter is sharpest at its own plane.
    pub fn pass(&self) -> bool {
        self.argmax.iter().enumerate().all(|(k, &j)| k == j)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["letter".to_string(), "plane".to_string()];
        header.extend(self.depths.iter().map(|d| format!("sharpness@{d}")));
        w.write_record(&header)?;
        for (k, row) in self.sharpness.iter().enumerate() {
            let mut rec = vec![self.regions[k].letter.to_string(), k.to_string()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Per-letter sharpness of each image in `stack` (one per depth).
pub fn letter_sharpness(stack: &[Array2<f64>], regions: &[LetterRegion]) -> Vec<Vec<f64>> {
    regions
        .iter()
        .map(|reg| stack.iter().map(|img| sharpness(img, &reg.bbox)).collect())
        .collect()
}

pub fn argmax_rows(matrix: &[Vec<f64>]) -> Vec<usize> {
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold(0, |b, (j, &v)| if v > row[b] { j } else { b })
        })
        .collect()
}

/// The letter panel, synthesis and depth stack behind a mapping report.
pub struct LetterMapping {
    pub synthesis: Synthesis,
    pub panel: Array2<f64>,
    pub stack: Vec<Array2<f64>>,
    pub report: LetterMappingReport,
}

/// Synthesize one plane per letter at `depths`, image the panel at every
/// depth and score each letter's sharpness.
pub fn letter_mapping(
    cfg: &OpticalConfig,
    letters: &str,
    depths: &[f64],
    params: &WgsParams,
    coherence: Coherence,
) -> Result<LetterMapping> {
    let synthesis = synthesize(cfg, depths, params)?;
    let dim = (cfg.panel_pixels.1, cfg.panel_pixels.0);
    let (panel, regions) = letter_panel(dim, &synthesis.layout, letters, LETTER_SCALE, LETTER_MARGIN)?;
    let imager = Imager::new(&panel, &synthesis.quantized, cfg, coherence)?;
    let stack = imager.depth_images(depths)?;
    let sharp = letter_sharpness(&stack, &regions);
    let report = LetterMappingReport {
        letters: letters.to_string(),
        depths: depths.to_vec(),
        regions,
        argmax: argmax_rows(&sharp),
        sharpness: sharp,
    };
    Ok(LetterMapping {
        synthesis,
        panel,
        stack,
        report,
    })
}

/// Layered scene split over `depths`, composed on the panel and synthesized.
pub struct LayeredScene {
    pub scene: SceneInput,
    pub stack: PlaneStack,
    pub panel: Array2<f64>,
    pub synthesis: Synthesis,
    /// Max relative error of the per-pixel plane sum against the source.
    pub conservation_error: f64,
}

pub fn layered_scene_pipeline(
    cfg: &OpticalConfig,
    depths: &[f64],
    params: &WgsParams,
) -> Result<LayeredScene> {
    let synthesis = synthesize(cfg, depths, params)?;
    let tile = synthesis.mode.lateral;
    let lo = depths[0];
    let hi = depths[depths.len() - 1];
    let (image, depth) = layered_scene((tile.1, tile.0), lo, hi);
    let scene = SceneInput::new(image, depth)?;
    let stack = render_planes(&scene, depths)?;
    let sum = stack.sum();
    let conservation_error = sum
        .iter()
        .zip(scene.image.iter())
        .map(|(s, v)| (s - v).abs() / v.abs().max(1e-12))
        .fold(0.0, f64::max);
    let dim = (cfg.panel_pixels.1, cfg.panel_pixels.0);
    let panel = compose_panel(&stack, &synthesis.layout, dim)?;
    Ok(LayeredScene {
        scene,
        stack,
        panel,
        synthesis,
        conservation_error,
    })
}
