use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use omni_core::blend::{compose_panel, render_planes, SceneInput};
use omni_core::experiments::{argmax_rows, layered_scene_pipeline, letter_mapping, letter_sharpness};
use omni_core::io::{
    read_depth_map, read_image, read_phase, write_depth_map, write_json, write_pfm, write_pgm, write_phase,
    write_stack, BitDepth, DepthRange,
};
use omni_core::metrics::{
    contrast_vs_accommodation, contrast_vs_spacing, edge_contrast, ContrastCurve, ContrastSetup,
};
use omni_core::optics::{plan_mode, plan_modes, subpanel_layout, DepthPlan, OpticalConfig, SubPanelLayout};
use omni_core::propagate::{CameraModel, Imager};
use omni_core::scenes::{layered_scene, letter_panel, slanted_edge, LetterRegion};
use omni_core::synthesis::synthesize;
use omni_core::wgs::{WgsInit, WgsParams};
use omni_core::OmniError;

use crate::manifest::Recorder;
use crate::{
    BlendArgs, CameraArgs, Cli, Command, EvaluateArgs, Experiment, InitArg, PlanArgs, SceneArgs, SceneKind,
    SimulateArgs, SynthesizeArgs, UsageError, WgsArgs,
};

/// Letter regions plus the depth each letter was assigned.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LetterScene {
    pub depths: Vec<f64>,
    pub regions: Vec<LetterRegion>,
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let full_by_default = matches!(cli.command, Command::Plan(_));
    let cfg = load_config(cli, full_by_default)?;
    match &cli.command {
        Command::Plan(a) => plan(cli, &cfg, a),
        Command::Synthesize(a) => synthesize_cmd(cli, &cfg, a),
        Command::Blend(a) => blend(cli, &cfg, a),
        Command::Simulate(a) => simulate(cli, &cfg, a),
        Command::Evaluate(a) => evaluate(cli, &cfg, a),
        Command::Scene(a) => scene(cli, &cfg, a),
    }
}

fn load_config(cli: &Cli, full_by_default: bool) -> Result<OpticalConfig> {
    let cfg = match &cli.config {
        Some(path) => OpticalConfig::load(path).with_context(|| format!("loading config {}", path.display()))?,
        None if cli.full || full_by_default => OpticalConfig::prototype(),
        None => OpticalConfig::desk(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn params_echo(cli: &Cli) -> serde_json::Value {
    serde_json::to_value(cli).expect("arguments serialize")
}

fn command_name(cli: &Cli) -> &'static str {
    match cli.command {
        Command::Plan(_) => "plan",
        Command::Synthesize(_) => "synthesize",
        Command::Blend(_) => "blend",
        Command::Simulate(_) => "simulate",
        Command::Evaluate(_) => "evaluate",
        Command::Scene(_) => "scene",
    }
}

fn recorder(cli: &Cli, out: &Path) -> Result<Recorder> {
    Recorder::new(command_name(cli), cli.config.clone(), params_echo(cli), out)
}

fn wgs_params(cli: &Cli, a: &WgsArgs) -> WgsParams {
    WgsParams {
        max_iters: a.wgs_iters,
        tolerance: a.wgs_tolerance,
        seed: cli.seed,
        init: match a.init {
            InitArg::Superposition => WgsInit::UniformSuperposition,
            InitArg::Random => WgsInit::Random,
        },
    }
}

fn panel_dim(cfg: &OpticalConfig) -> (usize, usize) {
    (cfg.panel_pixels.1, cfg.panel_pixels.0)
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn layout_for(cfg: &OpticalConfig, depths: &[f64]) -> Result<SubPanelLayout> {
    DepthPlan::new(depths, cfg)?;
    let range = (depths[0], depths[depths.len() - 1]);
    let mode = plan_mode(cfg, range, depths.len()).ok_or_else(|| {
        OmniError::InvalidInput(format!("{} planes do not fit the panel", depths.len()))
    })?;
    Ok(subpanel_layout(cfg, &mode)?)
}

fn plan(cli: &Cli, cfg: &OpticalConfig, a: &PlanArgs) -> Result<()> {
    let range = (a.depth_range[0], a.depth_range[1]);
    plan_modes(cfg, range, &[])?;
    let total = cfg.panel_total();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["planes", "width", "height", "spacing_diopters", "pixels_used", "pixels_total", "feasible"])?;
    println!("panel {}x{} ({total} pixels), depth range {}-{} D", cfg.panel_pixels.0, cfg.panel_pixels.1, range.0, range.1);
    for &n in &a.planes {
        match plan_mode(cfg, range, n) {
            Some(m) => {
                let used = m.lateral.0 * m.lateral.1 * n;
                println!(
                    "N={n:<5} {}x{}, {} D   L*M*N = {used} <= {total}",
                    m.lateral.0,
                    m.lateral.1,
                    fmt_diopter(m.plane_spacing)
                );
                w.write_record([
                    n.to_string(),
                    m.lateral.0.to_string(),
                    m.lateral.1.to_string(),
                    m.plane_spacing.to_string(),
                    used.to_string(),
                    total.to_string(),
                    "true".into(),
                ])?;
            }
            None => {
                println!("N={n:<5} violates L*M*N <= {total}; excluded");
                w.write_record([n.to_string(), "0".into(), "0".into(), "".into(), "".into(), total.to_string(), "false".into()])?;
            }
        }
    }
    if let Some(out) = &a.out {
        let mut rec = recorder(cli, out)?;
        let text = String::from_utf8(w.into_inner()?)?;
        rec.write_text("modes.csv", &text)?;
        rec.stage("plan");
        rec.finish(cli.verify)?;
    }
    Ok(())
}

fn fmt_diopter(d: f64) -> String {
    let s = format!("{d:.3}");
    let s = s.trim_end_matches('0');
    if s.ends_with('.') {
        format!("{s}0")
    } else {
        s.to_string()
    }
}

fn synthesize_cmd(cli: &Cli, cfg: &OpticalConfig, a: &SynthesizeArgs) -> Result<()> {
    let mut rec = recorder(cli, &a.out)?;
    let s = synthesize(cfg, &a.depths, &wgs_params(cli, &a.wgs))?;
    rec.stage("synthesize");
    let phase_path = rec.path("phase.pgm");
    write_phase(&phase_path, &s.quantized, cfg.wavelength)?;
    rec.output(&phase_path)?;
    rec.output(&rec.path("phase.json"))?;
    rec.write_text("trace.csv", &s.trace.to_csv()?)?;
    rec.stage("write");
    if s.trace.stalled() && s.plan.len() > 1 {
        eprintln!("warning: WGS did not improve on its starting estimate; the starting pattern is kept");
    }
    let amps = s.trace.iterations.last().map(|i| i.amplitudes.clone()).unwrap_or_default();
    println!(
        "{} planes, {}x{} tiles: T = {:.6} (start {:.6}), quantized T = {:.6}",
        s.plan.len(),
        s.mode.lateral.0,
        s.mode.lateral.1,
        s.merit,
        s.trace.initial_merit,
        s.quantized_merit
    );
    rec.check("merit", s.merit);
    rec.check("initial_merit", s.trace.initial_merit);
    rec.check("quantized_merit", s.quantized_merit);
    rec.check("amplitudes", amps);
    rec.check("slm_focals", s.plan.slm_focals().iter().map(|f| if f.is_finite() { Some(*f) } else { None }).collect::<Vec<_>>());
    rec.finish(cli.verify)?;
    Ok(())
}

fn load_depth(a: &BlendArgs) -> Result<Array2<f64>> {
    match &a.depthmap_range {
        Some(r) => {
            let (lo, hi) = (r[0], r[1]);
            Ok(read_image(&a.depthmap)?.mapv(|v| lo + v * (hi - lo)))
        }
        None => read_depth_map(&a.depthmap)
            .with_context(|| format!("reading depth map {} (integer maps need a range sidecar or --depthmap-range)", a.depthmap.display())),
    }
}

fn blend(cli: &Cli, cfg: &OpticalConfig, a: &BlendArgs) -> Result<()> {
    let image = read_image(&a.image).with_context(|| format!("reading {}", a.image.display()))?;
    let depth = load_depth(a)?;
    let scene = SceneInput::new(image, depth)?;
    let layout = layout_for(cfg, &a.depths)?;
    let mut rec = recorder(cli, &a.out)?;
    let stack = render_planes(&scene, &a.depths)?;
    let sum = stack.sum();
    let err = sum
        .iter()
        .zip(scene.image.iter())
        .map(|(s, v)| (s - v).abs() / v.abs().max(1e-12))
        .fold(0.0, f64::max);
    let panel = compose_panel(&stack, &layout, panel_dim(cfg))?;
    rec.stage("blend");
    for (k, p) in stack.planes.iter().enumerate() {
        let path = rec.path(&format!("plane_{k:02}.pgm"));
        write_pgm(&path, &p.image, BitDepth::Sixteen)?;
        rec.output(&path)?;
    }
    let path = rec.path("panel.pgm");
    write_pgm(&path, &panel, BitDepth::Sixteen)?;
    rec.output(&path)?;
    rec.stage("write");
    if stack.clamped > 0 {
        eprintln!("warning: {} pixels had depths outside [{}, {}] D and were clamped", stack.clamped, a.depths[0], a.depths[a.depths.len() - 1]);
    }
    let nonzero = stack.planes.iter().filter(|p| p.image.iter().any(|&v| v > 0.0)).count();
    println!("{} planes ({} nonempty), max relative sum error {err:.2e}: conservation {}", stack.planes.len(), nonzero, verdict(err < 1e-6));
    rec.check("conservation_error", err);
    rec.check("clamped_pixels", stack.clamped);
    rec.check("nonempty_planes", nonzero);
    rec.finish(cli.verify)?;
    Ok(())
}

fn setup_from(a: &CameraArgs, wgs: WgsParams, roi: usize) -> Result<ContrastSetup> {
    if !(a.aperture > 0.0) {
        return Err(UsageError("--aperture must be positive".into()).into());
    }
    Ok(ContrastSetup {
        aperture_diameter: a.aperture * 1e-3,
        frequency: a.frequency,
        roi,
        coherence: a.coherence.into(),
        wgs,
        ..ContrastSetup::default()
    })
}

fn focus_points(v: &[f64]) -> Result<Vec<f64>> {
    let (lo, hi, n) = (v[0], v[1], v[2]);
    if n < 2.0 || n.fract() != 0.0 || !(hi > lo) {
        return Err(UsageError("--camera-focus needs FROM < TO and an integer POINTS >= 2".into()).into());
    }
    let n = n as usize;
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

fn write_curve(rec: &mut Recorder, name: &str, curve: &ContrastCurve) -> Result<()> {
    rec.write_text(name, &curve.to_csv()?)?;
    Ok(())
}

fn report_peak(rec: &mut Recorder, label: &str, curve: &ContrastCurve, expect: Option<f64>) -> bool {
    let peak = curve.argmax();
    let unimodal = curve.is_unimodal();
    println!("{label}: argmax at {} D, unimodal: {}", fmt_diopter(peak), verdict(unimodal));
    rec.check(&format!("{label}_argmax"), peak);
    rec.check(&format!("{label}_unimodal"), unimodal);
    match expect {
        Some(e) => {
            let ok = unimodal && (peak - e).abs() <= 0.1 + 1e-12;
            println!("{label}: argmax at {} D: {}", fmt_diopter(e), verdict(ok));
            rec.check(&format!("{label}_argmax_at_{e}"), verdict(ok));
            ok
        }
        None => unimodal,
    }
}

fn simulate(cli: &Cli, cfg: &OpticalConfig, a: &SimulateArgs) -> Result<()> {
    let panel = read_image(&a.panel).with_context(|| format!("reading panel {}", a.panel.display()))?;
    if panel.dim() != panel_dim(cfg) {
        return Err(OmniError::DimensionMismatch { expected: panel_dim(cfg), found: panel.dim() }.into());
    }
    let (slm, meta) = read_phase(&a.phase).with_context(|| format!("reading phase {}", a.phase.display()))?;
    if (meta.wavelength - cfg.wavelength).abs() > 1e-12 {
        return Err(OmniError::InvalidInput(format!(
            "phase was computed for {} m but the config uses {} m",
            meta.wavelength, cfg.wavelength
        ))
        .into());
    }
    if a.edge && a.camera_focus.is_none() {
        return Err(UsageError("--edge needs --camera-focus".into()).into());
    }
    let setup = setup_from(&a.camera, WgsParams::default(), a.roi)?;
    let mut rec = recorder(cli, &a.out)?;
    let imager = Imager::new(&panel, &slm, cfg, setup.coherence)?;
    if let Some(f) = &a.camera_focus {
        let foci = focus_points(f)?;
        let cams: Vec<CameraModel> = foci.iter().map(|&z| CameraModel::new(z, setup.aperture_diameter)).collect();
        let images = imager.captures(&cams)?;
        rec.stage("capture");
        let (_, files) = write_stack(rec.dir(), "focus", &images, &foci, BitDepth::Sixteen, true)?;
        rec.outputs(&files)?;
        if a.edge {
            let raw = images.iter().map(|img| edge_contrast(img, cfg, &setup)).collect::<omni_core::Result<Vec<_>>>()?;
            let curve = ContrastCurve::from_raw(&foci, raw);
            write_curve(&mut rec, "contrast.csv", &curve)?;
            report_peak(&mut rec, "contrast", &curve, a.expect_peak);
        }
    } else {
        let depths = a.probe_depths.clone().unwrap_or_else(|| vec![0.0, 1.0, 2.0, 3.0]);
        let images = imager.depth_images(&depths)?;
        rec.stage("propagate");
        let (_, files) = write_stack(rec.dir(), "depth", &images, &depths, BitDepth::Sixteen, true)?;
        rec.outputs(&files)?;
        if let Some(path) = &a.regions {
            let scene: LetterScene = omni_core::io::read_json(path)
                .with_context(|| format!("reading regions {}", path.display()))?;
            let sharp = letter_sharpness(&images, &scene.regions);
            let argmax = argmax_rows(&sharp);
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header = vec!["letter".to_string(), "designated".to_string()];
            header.extend(depths.iter().map(|d| format!("sharpness@{d}")));
            w.write_record(&header)?;
            let mut ok = true;
            for ((reg, row), &j) in scene.regions.iter().zip(&sharp).zip(&argmax) {
                let designated = scene.depths[reg.plane];
                ok &= (depths[j] - designated).abs() < 1e-9;
                let mut r = vec![reg.letter.to_string(), designated.to_string()];
                r.extend(row.iter().map(|v| v.to_string()));
                w.write_record(&r)?;
            }
            rec.write_text("sharpness.csv", &String::from_utf8(w.into_inner()?)?)?;
            println!("each letter sharpest at its designated depth: {}", verdict(ok));
            rec.check("letters_sharpest_at_designated_depth", verdict(ok));
        }
    }
    rec.stage("write");
    rec.finish(cli.verify)?;
    Ok(())
}

fn evaluate(cli: &Cli, cfg: &OpticalConfig, a: &EvaluateArgs) -> Result<()> {
    let wgs = wgs_params(cli, &a.wgs);
    let setup = setup_from(&a.camera, wgs.clone(), ContrastSetup::default().roi)?;
    let mut rec = recorder(cli, &a.out)?;
    let want = |e: Experiment| a.experiment == e || a.experiment == Experiment::All;
    let mut all_ok = true;

    if want(Experiment::Letters) {
        let depths = [0.0, 1.0, 2.0, 3.0];
        let run = letter_mapping(cfg, "COIN", &depths, &wgs, setup.coherence)?;
        rec.stage("letters");
        let p = rec.path("letters_panel.pgm");
        write_pgm(&p, &run.panel, BitDepth::Eight)?;
        rec.output(&p)?;
        let p = rec.path("letters_phase.pgm");
        write_phase(&p, &run.synthesis.quantized, cfg.wavelength)?;
        rec.outputs(&[p, rec.path("letters_phase.json")])?;
        let (_, files) = write_stack(rec.dir(), "letters_depth", &run.stack, &depths, BitDepth::Sixteen, false)?;
        rec.outputs(&files)?;
        rec.write_text("letters_sharpness.csv", &run.report.to_csv()?)?;
        rec.write_text("letters_trace.csv", &run.synthesis.trace.to_csv()?)?;
        let ok = run.report.pass();
        all_ok &= ok;
        println!("letters: argmax probe per letter {:?}", run.report.argmax);
        println!("each letter sharpest at its designated depth: {}", verdict(ok));
        rec.check("letters_sharpest_at_designated_depth", verdict(ok));
    }
    if want(Experiment::Accommodation) {
        if a.points < 3 {
            return Err(UsageError("--points must be at least 3".into()).into());
        }
        for (planes, name) in [((1.0, 2.0), "accommodation_1_2"), ((0.0, 1.0), "accommodation_0_1")] {
            let foci: Vec<f64> = (0..a.points)
                .map(|i| planes.0 + (planes.1 - planes.0) * i as f64 / (a.points - 1) as f64)
                .collect();
            let curve = contrast_vs_accommodation(cfg, planes, &foci, &setup)?;
            write_curve(&mut rec, &format!("{name}.csv"), &curve)?;
            all_ok &= report_peak(&mut rec, name, &curve, Some(0.5 * (planes.0 + planes.1)));
        }
        rec.stage("accommodation");
    }
    if want(Experiment::Spacing) {
        let spacings = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2];
        let curve = contrast_vs_spacing(cfg, &spacings, 1.5, &setup)?;
        write_curve(&mut rec, "spacing.csv", &curve)?;
        let ok = curve.is_non_increasing(0.02);
        all_ok &= ok;
        println!("spacing: contrast non-increasing over {spacings:?} D: {}", verdict(ok));
        rec.check("spacing_non_increasing", verdict(ok));
        rec.stage("spacing");
    }
    if want(Experiment::Layered) {
        let depths = [0.0, 1.0, 2.0, 3.0];
        let run = layered_scene_pipeline(cfg, &depths, &wgs)?;
        let imager = Imager::new(&run.panel, &run.synthesis.quantized, cfg, setup.coherence)?;
        let captures = imager.captures(
            &[0.0, 1.5, 3.0].map(|z| CameraModel::new(z, setup.aperture_diameter)),
        )?;
        rec.stage("layered");
        let p = rec.path("layered_image.pgm");
        write_pgm(&p, &run.scene.image, BitDepth::Sixteen)?;
        rec.output(&p)?;
        let p = rec.path("layered_panel.pgm");
        write_pgm(&p, &run.panel, BitDepth::Sixteen)?;
        rec.output(&p)?;
        let (_, files) = write_stack(rec.dir(), "layered_capture", &captures, &[0.0, 1.5, 3.0], BitDepth::Sixteen, false)?;
        rec.outputs(&files)?;
        let ok = run.conservation_error < 1e-6;
        all_ok &= ok;
        println!("layered: plane sums reproduce the scene (max rel. error {:.2e}): {}", run.conservation_error, verdict(ok));
        rec.check("layered_conservation_error", run.conservation_error);
    }
    rec.check("all_pass", all_ok);
    rec.finish(cli.verify)?;
    Ok(())
}

fn scene(cli: &Cli, cfg: &OpticalConfig, a: &SceneArgs) -> Result<()> {
    let mut rec = recorder(cli, &a.out)?;
    let dim = panel_dim(cfg);
    match a.kind {
        SceneKind::Letters => {
            if a.letters.chars().count() != a.depths.len() {
                return Err(UsageError(format!(
                    "{} letters for {} depths",
                    a.letters.chars().count(),
                    a.depths.len()
                ))
                .into());
            }
            let layout = layout_for(cfg, &a.depths)?;
            let (panel, regions) = letter_panel(
                dim,
                &layout,
                &a.letters,
                omni_core::experiments::LETTER_SCALE,
                omni_core::experiments::LETTER_MARGIN,
            )?;
            let p = rec.path("panel.pgm");
            write_pgm(&p, &panel, BitDepth::Eight)?;
            rec.output(&p)?;
            let p = rec.path("letters.json");
            write_json(&p, &LetterScene { depths: a.depths.clone(), regions })?;
            rec.output(&p)?;
        }
        SceneKind::Edge => {
            let layout = layout_for(cfg, &a.depths)?;
            let mut panel = Array2::zeros(dim);
            for t in layout.planes() {
                let r = t.rect;
                panel
                    .slice_mut(s![r.y..r.y + r.height, r.x..r.x + r.width])
                    .assign(&slanted_edge((r.height, r.width), ContrastSetup::default().edge_angle_deg, 0.0, 0.5));
            }
            let p = rec.path("panel.pgm");
            write_pgm(&p, &panel, BitDepth::Sixteen)?;
            rec.output(&p)?;
        }
        SceneKind::Layered => {
            let layout = layout_for(cfg, &a.depths)?;
            let tile = layout.planes().next().expect("nonempty layout").rect;
            let (lo, hi) = (a.depths[0], a.depths[a.depths.len() - 1]);
            let (image, depth) = layered_scene((tile.height, tile.width), lo, hi);
            let p = rec.path("image.pgm");
            write_pgm(&p, &image, BitDepth::Sixteen)?;
            rec.output(&p)?;
            let p = rec.path("depth.pgm");
            let range = if hi > lo {
                DepthRange { min_diopter: lo, max_diopter: hi }
            } else {
                DepthRange { min_diopter: lo, max_diopter: lo + 1.0 }
            };
            write_depth_map(&p, &depth, &range)?;
            rec.outputs(&[p, rec.path("depth.json")])?;
            let p = rec.path("depth.pfm");
            write_pfm(&p, &depth)?;
            rec.output(&p)?;
        }
    }
    rec.stage("scene");
    let m = rec.finish(cli.verify)?;
    for o in &m.outputs {
        println!("{}", PathBuf::from(&a.out).join(&o.path).display());
    }
    Ok(())
}
