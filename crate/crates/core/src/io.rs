//! File formats: binary PGM (8/16-bit), little-endian PFM, PNG input, CSV and
//! JSON sidecars.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{OmniError, Result};
use crate::phase::QuantizedPhaseMap;

/// Sample depth of a PGM file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            Self::Eight => u8::MAX as u16,
            Self::Sixteen => u16::MAX,
        }
    }
}

/// Encode integer samples as binary PGM; values must be `<= maxval`.
pub fn encode_pgm(levels: &Array2<u16>, maxval: u16) -> Result<Vec<u8>> {
    if maxval == 0 {
        return Err(OmniError::Format("PGM maxval must be > 0".into()));
    }
    if let Some(v) = levels.iter().find(|&&v| v > maxval) {
        return Err(OmniError::Format(format!("sample {v} exceeds maxval {maxval}")));
    }
    let (rows, cols) = levels.dim();
    let mut out = format!("P5\n{cols} {rows}\n{maxval}\n").into_bytes();
    if maxval < 256 {
        out.extend(levels.iter().map(|&v| v as u8));
    } else {
        for &v in levels {
            out.extend_from_slice(&v.to_be_bytes());
        }
    }
    Ok(out)
}

/// Header tokens of a netpbm-style file, skipping `#` comments.
fn header_tokens(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(OmniError::Format("truncated header".into()));
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((tokens, i + 1))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| OmniError::Format(format!("bad {what} '{tok}'")))
}

/// Decode a binary PGM into `(samples, maxval)`.
pub fn decode_pgm(bytes: &[u8]) -> Result<(Array2<u16>, u16)> {
    let (tok, start) = header_tokens(bytes, 4)?;
    if tok[0] != "P5" {
        return Err(OmniError::Format(format!("not a binary PGM (magic '{}')", tok[0])));
    }
    let cols = parse_usize(&tok[1], "width")?;
    let rows = parse_usize(&tok[2], "height")?;
    let maxval = parse_usize(&tok[3], "maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(OmniError::Format(format!("maxval {maxval} out of range")));
    }
    let bps = if maxval < 256 { 1 } else { 2 };
    let need = rows * cols * bps;
    let raster = bytes
        .get(start..start + need)
        .ok_or_else(|| OmniError::Format("truncated raster".into()))?;
    let data: Vec<u16> = if bps == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    let arr = Array2::from_shape_vec((rows, cols), data).expect("sized above");
    Ok((arr, maxval as u16))
}

/// Quantize `[0, 1]` intensities (clamped) and write a PGM.
pub fn write_pgm(path: impl AsRef<Path>, image: &Array2<f64>, depth: BitDepth) -> Result<()> {
    let max = depth.max_value();
    let levels = image.mapv(|v| (v.clamp(0.0, 1.0) * max as f64).round() as u16);
    fs::write(path, encode_pgm(&levels, max)?)?;
    Ok(())
}

/// Read a PGM as intensities in `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let (levels, maxval) = decode_pgm(&fs::read(path)?)?;
    Ok(levels.mapv(|v| v as f64 / maxval as f64))
}

/// Little-endian grayscale PFM, rows stored bottom to top as the format requires.
pub fn encode_pfm(image: &Array2<f64>) -> Vec<u8> {
    let (rows, cols) = image.dim();
    let mut out = format!("Pf\n{cols} {rows}\n-1.0\n").into_bytes();
    for r in (0..rows).rev() {
        for c in 0..cols {
            out.extend_from_slice(&(image[(r, c)] as f32).to_le_bytes());
        }
    }
    out
}

pub fn decode_pfm(bytes: &[u8]) -> Result<Array2<f64>> {
    let (tok, start) = header_tokens(bytes, 4)?;
    if tok[0] != "Pf" {
        return Err(OmniError::Format(format!("not a grayscale PFM (magic '{}')", tok[0])));
    }
    let cols = parse_usize(&tok[1], "width")?;
    let rows = parse_usize(&tok[2], "height")?;
    let scale: f64 = tok[3]
        .parse()
        .map_err(|_| OmniError::Format(format!("bad scale '{}'", tok[3])))?;
    let little = scale < 0.0;
    let raster = bytes
        .get(start..start + rows * cols * 4)
        .ok_or_else(|| OmniError::Format("truncated raster".into()))?;
    let mut out = Array2::zeros((rows, cols));
    for (i, c) in raster.chunks_exact(4).enumerate() {
        let b = [c[0], c[1], c[2], c[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        out[(rows - 1 - i / cols, i % cols)] = v as f64;
    }
    Ok(out)
}

pub fn write_pfm(path: impl AsRef<Path>, image: &Array2<f64>) -> Result<()> {
    fs::write(path, encode_pfm(image))?;
    Ok(())
}

pub fn read_pfm(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    decode_pfm(&fs::read(path)?)
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

/// Read a PNG as linear luminance in `[0, 1]` (sRGB decoded, Rec. 709 weights).
pub fn read_png(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let img = image::open(path)
        .map_err(|e| OmniError::Format(e.to_string()))?
        .to_rgb16();
    let (w, h) = img.dimensions();
    let mut out = Array2::zeros((h as usize, w as usize));
    for (x, y, p) in img.enumerate_pixels() {
        let [r, g, b] = p.0.map(|c| srgb_to_linear(c as f64 / u16::MAX as f64));
        out[(y as usize, x as usize)] = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    }
    Ok(out)
}

/// Read a grayscale image by extension: `.pgm`, `.pfm` or `.png`.
pub fn read_image(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("pgm") => read_pgm(path),
        Some("pfm") => read_pfm(path),
        Some("png") => read_png(path),
        _ => Err(OmniError::Format(format!(
            "unsupported image type: {}",
            path.display()
        ))),
    }
}

/// Metadata stored next to a quantized phase PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSidecar {
    pub pitch: f64,
    pub wavelength: f64,
    pub levels_count: u32,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Write the level indices as PGM (maxval `levels_count - 1`) plus a JSON sidecar.
pub fn write_phase(path: impl AsRef<Path>, map: &QuantizedPhaseMap, wavelength: f64) -> Result<()> {
    let path = path.as_ref();
    let maxval = u16::try_from(map.levels_count - 1)
        .map_err(|_| OmniError::Format("too many phase levels for PGM".into()))?;
    fs::write(path, encode_pgm(&map.levels, maxval)?)?;
    let meta = PhaseSidecar {
        pitch: map.pitch,
        wavelength,
        levels_count: map.levels_count,
    };
    write_json(sidecar_path(path), &meta)
}

pub fn read_phase(path: impl AsRef<Path>) -> Result<(QuantizedPhaseMap, PhaseSidecar)> {
    let path = path.as_ref();
    let (levels, _) = decode_pgm(&fs::read(path)?)?;
    let meta: PhaseSidecar = read_json(sidecar_path(path))?;
    let map = QuantizedPhaseMap::from_levels(levels, meta.pitch, meta.levels_count)?;
    Ok((map, meta))
}

/// Depth map stored as 16-bit PGM with its diopter range in a sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min_diopter: f64,
    pub max_diopter: f64,
}

pub fn write_depth_map(path: impl AsRef<Path>, depth: &Array2<f64>, range: &DepthRange) -> Result<()> {
    let path = path.as_ref();
    let span = range.max_diopter - range.min_diopter;
    if !(span > 0.0) {
        return Err(OmniError::InvalidInput("depth range must be increasing".into()));
    }
    let norm = depth.mapv(|d| (d - range.min_diopter) / span);
    write_pgm(path, &norm, BitDepth::Sixteen)?;
    write_json(sidecar_path(path), range)
}

/// Depth map in diopters. PGM needs a range sidecar; PFM holds diopters directly.
pub fn read_depth_map(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    if path.extension().and_then(|e| e.to_str()) == Some("pfm") {
        return read_pfm(path);
    }
    let range: DepthRange = read_json(sidecar_path(path))?;
    let span = range.max_diopter - range.min_diopter;
    Ok(read_image(path)?.mapv(|v| range.min_diopter + v * span))
}

/// One numbered image of an exported stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackEntry {
    pub file: String,
    pub diopter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifest {
    /// Common scale: exported value = intensity / normalization.
    pub normalization: f64,
    pub entries: Vec<StackEntry>,
}

/// Write `images` as `{prefix}_{k:02}.pgm` normalized to the stack-wide max,
/// `{prefix}_{k:02}.pfm` raw floats when `raw` is set, and `{prefix}.json`.
pub fn write_stack(
    dir: impl AsRef<Path>,
    prefix: &str,
    images: &[Array2<f64>],
    diopters: &[f64],
    depth: BitDepth,
    raw: bool,
) -> Result<(StackManifest, Vec<PathBuf>)> {
    let dir = dir.as_ref();
    if images.len() != diopters.len() {
        return Err(OmniError::InvalidInput(format!(
            "{} images but {} depths",
            images.len(),
            diopters.len()
        )));
    }
    let peak = images
        .iter()
        .flat_map(|im| im.iter())
        .cloned()
        .fold(0.0, f64::max);
    let normalization = if peak > 0.0 { peak } else { 1.0 };
    let mut entries = Vec::with_capacity(images.len());
    let mut files = Vec::new();
    for (k, (img, &d)) in images.iter().zip(diopters).enumerate() {
        let name = format!("{prefix}_{k:02}.pgm");
        let path = dir.join(&name);
        write_pgm(&path, &img.mapv(|v| v / normalization), depth)?;
        files.push(path);
        if raw {
            let path = dir.join(format!("{prefix}_{k:02}.pfm"));
            write_pfm(&path, img)?;
            files.push(path);
        }
        entries.push(StackEntry { file: name, diopter: d });
    }
    let manifest = StackManifest {
        normalization,
        entries,
    };
    let path = dir.join(format!("{prefix}.json"));
    write_json(&path, &manifest)?;
    files.push(path);
    Ok((manifest, files))
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_roundtrip_both_depths() {
        let a = Array2::from_shape_fn((3, 5), |(r, c)| (r * 5 + c) as u16 * 17);
        let (b, m) = decode_pgm(&encode_pgm(&a, 255).unwrap()).unwrap();
        assert_eq!((a.clone(), 255), (b, m));
        let wide = a.mapv(|v| v * 200);
        let (b, m) = decode_pgm(&encode_pgm(&wide, 65535).unwrap()).unwrap();
        assert_eq!((wide, 65535), (b, m));
    }

    #[test]
    fn pgm_header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend([7, 9]);
        let (a, _) = decode_pgm(&bytes).unwrap();
        assert_eq!(a.as_slice().unwrap(), &[7, 9]);
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(decode_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(encode_pgm(&Array2::from_elem((1, 1), 300), 255).is_err());
    }

    #[test]
    fn pfm_roundtrip_keeps_orientation() {
        let a = Array2::from_shape_fn((4, 3), |(r, c)| r as f64 * 0.5 - c as f64 * 0.25);
        let b = decode_pfm(&encode_pfm(&a)).unwrap();
        assert_eq!(a, b);
    }
}
