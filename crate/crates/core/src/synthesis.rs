//! End-to-end SLM pattern synthesis for a set of target depths.

use crate::error::{OmniError, Result};
use crate::optics::{plan_mode, subpanel_layout, DepthPlan, DisplayMode, OpticalConfig, SubPanelLayout};
use crate::phase::{fresnel_phase, wrap_quantize, PhaseMap, QuantizedPhaseMap};
use crate::wgs::{merit, wgs_optimize, WgsParams, WgsTrace};

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub plan: DepthPlan,
    pub mode: DisplayMode,
    pub layout: SubPanelLayout,
    /// One Fresnel target per plane, in plane order.
    pub targets: Vec<PhaseMap>,
    pub phase: PhaseMap,
    pub quantized: QuantizedPhaseMap,
    pub trace: WgsTrace,
    /// Merit of the continuous result and of its quantized version.
    pub merit: f64,
    pub quantized_merit: f64,
}

/// Fresnel targets for every plane of `plan` laid out by `layout`.
pub fn plane_targets(
    plan: &DepthPlan,
    layout: &SubPanelLayout,
    cfg: &OpticalConfig,
) -> Result<Vec<PhaseMap>> {
    plan.slm_focals()
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let tile = layout
                .tile_for_plane(k)
                .ok_or_else(|| OmniError::InvalidInput(format!("no tile for plane {k}")))?;
            fresnel_phase(tile.offset, f, cfg)
        })
        .collect()
}

/// Layout the panel for `depths`, build the Fresnel targets and run WGS.
pub fn synthesize(cfg: &OpticalConfig, depths: &[f64], params: &WgsParams) -> Result<Synthesis> {
    cfg.validate()?;
    let plan = DepthPlan::new(depths, cfg)?;
    let range = (depths[0], depths[depths.len() - 1]);
    let mode = plan_mode(cfg, range, plan.len()).ok_or_else(|| {
        OmniError::InvalidInput(format!(
            "{} planes do not fit a {}x{} panel",
            plan.len(),
            cfg.panel_pixels.0,
            cfg.panel_pixels.1
        ))
    })?;
    synthesize_with_mode(cfg, plan, mode, params)
}

pub fn synthesize_with_mode(
    cfg: &OpticalConfig,
    plan: DepthPlan,
    mode: DisplayMode,
    params: &WgsParams,
) -> Result<Synthesis> {
    let layout = subpanel_layout(cfg, &mode)?;
    let targets = plane_targets(&plan, &layout, cfg)?;
    let (phase, trace) = wgs_optimize(&targets, params)?;
    let quantized = wrap_quantize(&phase, cfg);
    let merit_cont = merit(&phase, &targets)?;
    let quantized_merit = merit(&quantized.reconstruct(), &targets)?;
    Ok(Synthesis {
        plan,
        mode,
        layout,
        targets,
        phase,
        quantized,
        trace,
        merit: merit_cont,
        quantized_merit,
    })
}
