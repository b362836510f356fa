//! Linear depth-weighted blending of an all-in-focus image across depth planes.

use ndarray::{s, Array2};

use crate::error::{OmniError, Result};
use crate::optics::SubPanelLayout;
use crate::par;

/// All-in-focus intensity (linear, `[0, 1]`) with a per-pixel depth in diopters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneInput {
    pub image: Array2<f64>,
    pub depth_map: Array2<f64>,
}

impl SceneInput {
    pub fn new(image: Array2<f64>, depth_map: Array2<f64>) -> Result<Self> {
        if image.dim() != depth_map.dim() {
            return Err(OmniError::DimensionMismatch {
                expected: image.dim(),
                found: depth_map.dim(),
            });
        }
        if image.iter().chain(depth_map.iter()).any(|v| !v.is_finite()) {
            return Err(OmniError::InvalidInput("scene contains non-finite values".into()));
        }
        Ok(Self { image, depth_map })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthPlane {
    pub diopter: f64,
    pub image: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaneStack {
    pub planes: Vec<DepthPlane>,
    /// Pixels whose depth fell outside the plane range and were clamped.
    pub clamped: usize,
}

impl PlaneStack {
    /// Per-pixel sum over all planes.
    pub fn sum(&self) -> Array2<f64> {
        let mut acc = Array2::zeros(self.planes[0].image.dim());
        for p in &self.planes {
            acc += &p.image;
        }
        acc
    }
}

/// Weights of depth `d` over planes `depths` (ascending).
///
/// Between bracketing planes `D_k <= d <= D_{k+1}` the weight moves linearly
/// in diopters; outside the range the nearest plane gets everything.
pub fn blend_weights(d: f64, depths: &[f64]) -> Result<Vec<f64>> {
    let mut w = vec![0.0; depths.len()];
    blend_weights_into(d, depths, &mut w)?;
    Ok(w)
}

fn blend_weights_into(d: f64, depths: &[f64], w: &mut [f64]) -> Result<()> {
    let n = depths.len();
    if n == 0 {
        return Err(OmniError::InvalidInput("empty depth list".into()));
    }
    w.iter_mut().for_each(|v| *v = 0.0);
    if d <= depths[0] {
        w[0] = 1.0;
        return Ok(());
    }
    if d >= depths[n - 1] {
        w[n - 1] = 1.0;
        return Ok(());
    }
    // first plane strictly above d
    let hi = depths.partition_point(|&p| p <= d);
    let lo = hi - 1;
    if depths[lo] == d {
        w[lo] = 1.0;
        return Ok(());
    }
    let upper = (d - depths[lo]) / (depths[hi] - depths[lo]);
    w[hi] = upper;
    w[lo] = 1.0 - upper;
    Ok(())
}

fn check_sorted(depths: &[f64]) -> Result<()> {
    if depths.is_empty() {
        return Err(OmniError::InvalidInput("empty depth list".into()));
    }
    if depths.windows(2).any(|p| p[1] <= p[0]) {
        return Err(OmniError::InvalidInput(
            "plane depths must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Split the scene into one image per plane; per-pixel sums equal the source.
pub fn render_planes(scene: &SceneInput, depths: &[f64]) -> Result<PlaneStack> {
    check_sorted(depths)?;
    let dim = scene.image.dim();
    let n = depths.len();
    let img = scene.image.as_slice().expect("standard layout");
    let dep = scene.depth_map.as_slice().expect("standard layout");

    // pixel-major weights, n per pixel
    let mut weights = vec![0.0; img.len() * n];
    par::for_each_chunk_mut(&mut weights, n, |i, w| {
        blend_weights_into(dep[i], depths, w).expect("nonempty depths");
    });
    let (lo, hi) = (depths[0], depths[n - 1]);
    let clamped = dep.iter().filter(|&&d| d < lo || d > hi).count();

    let planes = depths
        .iter()
        .enumerate()
        .map(|(k, &diopter)| {
            let mut plane = Array2::zeros(dim);
            par::fill_indexed(plane.as_slice_mut().expect("standard layout"), |i| {
                img[i] * weights[i * n + k]
            });
            DepthPlane {
                diopter,
                image: plane,
            }
        })
        .collect();
    Ok(PlaneStack { planes, clamped })
}

/// Bilinear resample to `(rows, cols)`, sampling at pixel centers.
pub fn resample(src: &Array2<f64>, dim: (usize, usize)) -> Array2<f64> {
    if src.dim() == dim {
        return src.clone();
    }
    let (sr, sc) = src.dim();
    let (dr, dc) = dim;
    let map = |i: usize, dst: usize, s: usize| -> (usize, usize, f64) {
        let x = ((i as f64 + 0.5) * s as f64 / dst as f64 - 0.5).clamp(0.0, (s - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(s - 1);
        (i0, i1, x - i0 as f64)
    };
    Array2::from_shape_fn(dim, |(r, c)| {
        let (r0, r1, fy) = map(r, dr, sr);
        let (c0, c1, fx) = map(c, dc, sc);
        let top = src[(r0, c0)] * (1.0 - fx) + src[(r0, c1)] * fx;
        let bot = src[(r1, c0)] * (1.0 - fx) + src[(r1, c1)] * fx;
        top * (1.0 - fy) + bot * fy
    })
}

/// Write plane `k` into the layout tile assigned to plane `k` on a zeroed
/// panel of `panel_dim = (rows, cols)`.
pub fn compose_panel(
    stack: &PlaneStack,
    layout: &SubPanelLayout,
    panel_dim: (usize, usize),
) -> Result<Array2<f64>> {
    let available = layout.planes().count();
    if stack.planes.len() > available {
        return Err(OmniError::InvalidInput(format!(
            "{} planes but only {available} tiles",
            stack.planes.len()
        )));
    }
    let mut panel = Array2::zeros(panel_dim);
    for (k, plane) in stack.planes.iter().enumerate() {
        let tile = layout.tile_for_plane(k).expect("counted above");
        let r = tile.rect;
        if r.x + r.width > panel_dim.1 || r.y + r.height > panel_dim.0 {
            return Err(OmniError::InvalidInput(format!(
                "tile {} lies outside the {}x{} panel",
                tile.index, panel_dim.1, panel_dim.0
            )));
        }
        let img = resample(&plane.image, (r.height, r.width));
        panel
            .slice_mut(s![r.y..r.y + r.height, r.x..r.x + r.width])
            .assign(&img);
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optics::{plan_mode, subpanel_layout, OpticalConfig};
    use proptest::prelude::*;

    #[test]
    fn midpoint_is_even_split() {
        assert_eq!(blend_weights(1.5, &[1.0, 2.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn on_plane_is_one_hot() {
        assert_eq!(
            blend_weights(2.0, &[0.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![0.0, 0.0, 1.0, 0.0]
        );
        assert_eq!(
            blend_weights(0.0, &[0.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![1.0, 0.0, 0.0, 0.0]
        );
    }

    #[test]
    fn quarter_depth() {
        assert_eq!(
            blend_weights(0.25, &[0.0, 1.0, 2.0, 3.0]).unwrap(),
            vec![0.75, 0.25, 0.0, 0.0]
        );
    }

    #[test]
    fn out_of_range_clamps() {
        assert_eq!(blend_weights(-1.0, &[0.0, 1.0]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(blend_weights(9.0, &[0.0, 1.0]).unwrap(), vec![0.0, 1.0]);
        assert!(blend_weights(1.0, &[]).is_err());
    }

    #[test]
    fn dense_sweep_sums_to_one_exactly() {
        let depths = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.4, 2.0, 3.0];
        for i in 0..=30_000 {
            let d = -0.5 + 4.0 * i as f64 / 30_000.0;
            let w = blend_weights(d, &depths).unwrap();
            assert_eq!(w.iter().sum::<f64>(), 1.0, "d = {d}");
            let nz: Vec<usize> = (0..w.len()).filter(|&k| w[k] != 0.0).collect();
            assert!(nz.len() <= 2);
            if nz.len() == 2 {
                assert_eq!(nz[1], nz[0] + 1);
            }
        }
    }

    #[test]
    fn constant_depth_lands_on_one_plane() {
        let img = Array2::from_shape_fn((4, 5), |(r, c)| (r * 5 + c) as f64 / 20.0);
        let scene = SceneInput::new(img.clone(), Array2::from_elem((4, 5), 2.0)).unwrap();
        let stack = render_planes(&scene, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(stack.planes[2].image, img);
        for k in [0, 1, 3] {
            assert!(stack.planes[k].image.iter().all(|&v| v == 0.0));
        }
        assert_eq!(stack.clamped, 0);
    }

    #[test]
    fn two_pixel_split() {
        let scene = SceneInput::new(
            Array2::from_shape_vec((1, 2), vec![1.0, 1.0]).unwrap(),
            Array2::from_shape_vec((1, 2), vec![0.5, 1.5]).unwrap(),
        )
        .unwrap();
        let stack = render_planes(&scene, &[0.0, 1.0, 2.0, 3.0]).unwrap();
        let at = |k: usize, p: usize| stack.planes[k].image[(0, p)];
        assert_eq!([at(0, 0), at(1, 0), at(2, 0), at(3, 0)], [0.5, 0.5, 0.0, 0.0]);
        assert_eq!([at(0, 1), at(1, 1), at(2, 1), at(3, 1)], [0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn clamp_count_reported() {
        let scene = SceneInput::new(
            Array2::from_elem((1, 3), 0.5),
            Array2::from_shape_vec((1, 3), vec![-0.2, 1.0, 3.7]).unwrap(),
        )
        .unwrap();
        let stack = render_planes(&scene, &[0.0, 3.0]).unwrap();
        assert_eq!(stack.clamped, 2);
    }

    #[test]
    fn scene_dimension_mismatch() {
        assert!(SceneInput::new(Array2::zeros((2, 2)), Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn compose_into_quadrants() {
        let cfg = OpticalConfig::desk();
        let mode = plan_mode(&cfg, (0.0, 3.0), 4).unwrap();
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        let planes = (0..4)
            .map(|k| DepthPlane {
                diopter: k as f64,
                image: Array2::from_elem((256, 256), (k + 1) as f64 / 4.0),
            })
            .collect();
        let panel = compose_panel(&PlaneStack { planes, clamped: 0 }, &layout, (512, 512)).unwrap();
        assert_eq!(panel[(10, 10)], 0.25);
        assert_eq!(panel[(10, 300)], 0.5);
        assert_eq!(panel[(300, 10)], 0.75);
        assert_eq!(panel[(300, 300)], 1.0);
    }

    #[test]
    fn compose_single_plane_centered() {
        let cfg = OpticalConfig {
            panel_pixels: (8, 8),
            ..OpticalConfig::desk()
        };
        let mode = crate::optics::DisplayMode {
            lateral: (4, 4),
            plane_count: 1,
            plane_spacing: 0.0,
            frame_rate: 60.0,
        };
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        let stack = PlaneStack {
            planes: vec![DepthPlane {
                diopter: 3.0,
                image: Array2::ones((4, 4)),
            }],
            clamped: 0,
        };
        let panel = compose_panel(&stack, &layout, (8, 8)).unwrap();
        assert_eq!(panel.sum(), 16.0);
        assert_eq!(panel.slice(s![2..6, 2..6]).sum(), 16.0);
    }

    #[test]
    fn compose_zero_stack_and_too_many_planes() {
        let cfg = OpticalConfig::desk();
        let mode = plan_mode(&cfg, (0.0, 3.0), 2).unwrap();
        let layout = subpanel_layout(&cfg, &mode).unwrap();
        let zero = |d: f64| DepthPlane { diopter: d, image: Array2::zeros((10, 10)) };
        let stack = PlaneStack { planes: vec![zero(0.0), zero(1.0)], clamped: 0 };
        assert!(compose_panel(&stack, &layout, (512, 512)).unwrap().iter().all(|&v| v == 0.0));
        let stack = PlaneStack { planes: vec![zero(0.0), zero(1.0), zero(2.0)], clamped: 0 };
        assert!(compose_panel(&stack, &layout, (512, 512)).is_err());
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(d in -2.0f64..5.0) {
            let w = blend_weights(d, &[0.0, 0.7, 1.1, 2.5, 3.0]).unwrap();
            prop_assert_eq!(w.iter().sum::<f64>(), 1.0);
        }

        #[test]
        fn weights_continuous(d in 0.0f64..3.0) {
            let depths = [0.0, 1.0, 2.0, 3.0];
            let a = blend_weights(d, &depths).unwrap();
            let b = blend_weights(d + 1e-9, &depths).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-8);
            }
        }

        #[test]
        fn render_conserves_pixels(vals in prop::collection::vec((0.0f64..1.0, -1.0f64..4.0), 1..50)) {
            let n = vals.len();
            let img = Array2::from_shape_vec((1, n), vals.iter().map(|v| v.0).collect()).unwrap();
            let dep = Array2::from_shape_vec((1, n), vals.iter().map(|v| v.1).collect()).unwrap();
            let scene = SceneInput::new(img.clone(), dep).unwrap();
            let stack = render_planes(&scene, &[0.0, 1.0, 2.0, 3.0]).unwrap();
            for (s, x) in stack.sum().iter().zip(img.iter()) {
                prop_assert!((s - x).abs() <= 1e-12 * x.abs().max(1.0));
            }
        }
    }
}
