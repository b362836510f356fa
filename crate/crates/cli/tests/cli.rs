use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use omni_core::io::{read_pfm, write_pgm, write_phase, BitDepth};
use omni_core::optics::OpticalConfig;
use omni_core::phase::QuantizedPhaseMap;

fn omni(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_omni")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn plan_lists_prototype_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(&["plan", "--planes", "4", "16", "5000000", "--out", p(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("1000x1000, 1.0 D"), "{text}");
    assert!(text.contains("500x500, 0.2 D"), "{text}");
    assert!(text.contains("N=5000000 violates"), "{text}");
    let csv = fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    assert!(csv.starts_with("planes,width,height,spacing_diopters"));
    assert!(csv.contains("5000000,0,0,,,4000000,false"));
}

#[test]
fn plan_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, "{\"wavelength\": -1}").unwrap();
    let out = omni(&["plan", "--config", p(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(omni(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(omni(&["synthesize", "--wgs-iters", "many"]).status.code(), Some(1));
    assert_eq!(omni(&["--threads", "0", "plan"]).status.code(), Some(1));
    assert_eq!(omni(&["--help"]).status.code(), Some(0));
}

#[test]
fn synthesize_writes_pattern_trace_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(&["synthesize", "--depths", "0", "1", "2", "3", "--out", p(dir.path()), "--verify"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("verify: 3 outputs hash-match"));
    let m = manifest(dir.path());
    let t = m["checks"]["merit"].as_f64().unwrap();
    let start = m["checks"]["initial_merit"].as_f64().unwrap();
    assert!(t >= start && t <= 4.0, "T = {t}, start {start}");
    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,T,V1,V2,V3,V4,w1,w2,w3,w4\n"), "{trace}");
    assert!(dir.path().join("phase.pgm").exists() && dir.path().join("phase.json").exists());
}

#[test]
fn single_native_depth_is_nearly_lossless() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(&["synthesize", "--depths", "3", "--out", p(dir.path())]);
    assert!(out.status.success());
    let q = manifest(dir.path())["checks"]["quantized_merit"].as_f64().unwrap();
    assert!(q > 0.999, "{q}");
}

#[test]
fn depth_beyond_native_plane_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = omni(&["synthesize", "--depths", "4.0", "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("depth beyond native plane"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, threads) in [(&a, "1"), (&b, "3")] {
        let out = omni(&["--threads", threads, "evaluate", "letters", "--out", p(dir.path())]);
        assert!(out.status.success(), "{}", stderr(&out));
        assert!(stdout(&out).contains("each letter sharpest at its designated depth: PASS"));
    }
    let (ma, mb) = (manifest(a.path()), manifest(b.path()));
    assert_eq!(ma["outputs"], mb["outputs"]);
    for name in ["letters_sharpness.csv", "letters_trace.csv"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

#[test]
fn letter_scene_simulation_passes() {
    let root = tempfile::tempdir().unwrap();
    let (scene, syn, sim) = (root.path().join("scene"), root.path().join("syn"), root.path().join("sim"));
    assert!(omni(&["scene", "letters", "--out", p(&scene)]).status.success());
    assert!(omni(&["synthesize", "--out", p(&syn)]).status.success());
    let out = omni(&[
        "simulate",
        "--panel",
        p(&scene.join("panel.pgm")),
        "--phase",
        p(&syn.join("phase.pgm")),
        "--regions",
        p(&scene.join("letters.json")),
        "--probe-depths",
        "0",
        "1",
        "2",
        "3",
        "--out",
        p(&sim),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("each letter sharpest at its designated depth: PASS"));
    assert!(sim.join("sharpness.csv").exists());
    assert!(sim.join("depth_03.pgm").exists() && sim.join("depth.json").exists());
}

#[test]
fn edge_focus_sweep_peaks_between_planes() {
    let root = tempfile::tempdir().unwrap();
    let (scene, syn, sim) = (root.path().join("scene"), root.path().join("syn"), root.path().join("sim"));
    assert!(omni(&["scene", "edge", "--depths", "1", "2", "--out", p(&scene)]).status.success());
    assert!(omni(&["synthesize", "--depths", "1", "2", "--out", p(&syn)]).status.success());
    let out = omni(&[
        "simulate",
        "--panel",
        p(&scene.join("panel.pgm")),
        "--phase",
        p(&syn.join("phase.pgm")),
        "--camera-focus",
        "1",
        "2",
        "9",
        "--edge",
        "--expect-peak",
        "1.5",
        "--out",
        p(&sim),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("argmax at 1.5 D: PASS"), "{}", stdout(&out));
    let csv = fs::read_to_string(sim.join("contrast.csv")).unwrap();
    assert_eq!(csv.lines().count(), 10);
}

#[test]
fn zero_phase_reimages_panel() {
    let root = tempfile::tempdir().unwrap();
    let cfg = OpticalConfig::desk();
    let panel = ndarray::Array2::from_shape_fn((512, 512), |(r, c)| ((r / 16 + c / 16) % 2) as f64);
    write_pgm(root.path().join("panel.pgm"), &panel, BitDepth::Eight).unwrap();
    let flat = QuantizedPhaseMap::from_levels(ndarray::Array2::zeros((512, 512)), cfg.slm_pitch, 256).unwrap();
    write_phase(root.path().join("flat.pgm"), &flat, cfg.wavelength).unwrap();
    let sim = root.path().join("sim");
    let out = omni(&[
        "simulate",
        "--panel",
        p(&root.path().join("panel.pgm")),
        "--phase",
        p(&root.path().join("flat.pgm")),
        "--probe-depths",
        "3",
        "--out",
        p(&sim),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let img = read_pfm(sim.join("depth_00.pfm")).unwrap();
    assert!(img.iter().zip(&panel).all(|(a, b)| (a - b).abs() < 1e-6));
}

#[test]
fn band_limit_violation_exits_three() {
    let root = tempfile::tempdir().unwrap();
    let mut cfg = OpticalConfig::square(64);
    cfg.panel_pitch = 3e-7;
    cfg.slm_pitch = cfg.wavelength * cfg.relay_focal() / (64.0 * cfg.panel_pitch);
    let cfg_path = root.path().join("fine.json");
    fs::write(&cfg_path, cfg.to_json()).unwrap();
    write_pgm(root.path().join("panel.pgm"), &ndarray::Array2::from_elem((64, 64), 0.5), BitDepth::Eight).unwrap();
    let flat = QuantizedPhaseMap::from_levels(ndarray::Array2::zeros((64, 64)), cfg.slm_pitch, 256).unwrap();
    write_phase(root.path().join("flat.pgm"), &flat, cfg.wavelength).unwrap();
    let out = omni(&[
        "simulate",
        "--config",
        p(&cfg_path),
        "--panel",
        p(&root.path().join("panel.pgm")),
        "--phase",
        p(&root.path().join("flat.pgm")),
        "--probe-depths",
        "0",
        "--out",
        p(&root.path().join("sim")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
    assert!(stderr(&out).contains("pad"), "{}", stderr(&out));
}

#[test]
fn blend_splits_scene_and_checks_inputs() {
    let root = tempfile::tempdir().unwrap();
    let scene = root.path().join("scene");
    assert!(omni(&["scene", "layered", "--out", p(&scene)]).status.success());
    let out_dir = root.path().join("blend");
    let out = omni(&[
        "blend",
        "--image",
        p(&scene.join("image.pgm")),
        "--depthmap",
        p(&scene.join("depth.pfm")),
        "--out",
        p(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let m = manifest(&out_dir);
    assert!(m["checks"]["conservation_error"].as_f64().unwrap() < 1e-6);
    assert_eq!(m["checks"]["nonempty_planes"], 4);
    assert!(out_dir.join("panel.pgm").exists());

    // constant depth: one plane carries everything; out-of-range depth is clamped
    let flat = root.path().join("flat.pgm");
    write_pgm(&flat, &ndarray::Array2::from_elem((256, 256), 1.0), BitDepth::Eight).unwrap();
    let one = root.path().join("one");
    let out = omni(&[
        "blend", "--image", p(&scene.join("image.pgm")), "--depthmap", p(&flat), "--depthmap-range", "0", "3.5",
        "--out", p(&one),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stderr(&out).contains("clamped"));
    assert_eq!(manifest(&one)["checks"]["nonempty_planes"], 1);

    let small = root.path().join("small.pgm");
    write_pgm(&small, &ndarray::Array2::from_elem((8, 8), 0.5), BitDepth::Eight).unwrap();
    let out = omni(&[
        "blend", "--image", p(&scene.join("image.pgm")), "--depthmap", p(&small), "--depthmap-range", "0", "3",
        "--out", p(&root.path().join("bad")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("dimension mismatch"));
}

#[test]
fn scene_manifest_lists_hashed_outputs() {
    let dir = tempfile::tempdir().unwrap();
    assert!(omni(&["scene", "letters", "--out", p(dir.path())]).status.success());
    let m: serde_json::Value = manifest(dir.path());
    assert_eq!(m["outputs"].as_array().unwrap().len(), 2);
    for o in m["outputs"].as_array().unwrap() {
        assert!(dir.path().join(o["path"].as_str().unwrap()).exists());
        assert_eq!(o["sha256"].as_str().unwrap().len(), 64);
    }
}
