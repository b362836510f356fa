//! `omni`: synthesize, blend, simulate and evaluate multiplane display patterns.

mod commands;
mod manifest;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use omni_core::OmniError;

#[derive(Debug, Parser, Serialize)]
#[command(name = "omni", version, about = "Phase synthesis and verification for multiplane near-eye displays")]
pub struct Cli {
    /// Optical configuration JSON (defaults: prototype for `plan`, 512x512 desk grid otherwise).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Use the full 2000x2000 prototype grid instead of the desk grid.
    #[arg(long, global = true)]
    pub full: bool,
    /// Cap on worker threads (outputs do not depend on it).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Re-hash every output after writing the manifest.
    #[arg(long, global = true)]
    pub verify: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// List display modes trading lateral resolution for plane count.
    Plan(PlanArgs),
    /// Compute the quantized SLM phase for a set of depths.
    Synthesize(SynthesizeArgs),
    /// Split an image and depth map across depth planes and compose the panel.
    Blend(BlendArgs),
    /// Image a panel through a phase pattern at probe depths or camera foci.
    Simulate(SimulateArgs),
    /// Run the built-in letter-mapping, contrast and layered-scene experiments.
    Evaluate(EvaluateArgs),
    /// Write synthetic inputs: letter panels, edge stimuli, layered scenes.
    Scene(SceneArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct PlanArgs {
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], default_values_t = [0.0, 3.0], allow_negative_numbers = true)]
    pub depth_range: Vec<f64>,
    #[arg(long, num_args = 1.., default_values_t = [1, 2, 4, 8, 16])]
    pub planes: Vec<usize>,
    /// Directory for `modes.csv` and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum InitArg {
    Superposition,
    Random,
}

#[derive(Debug, Args, Serialize)]
pub struct WgsArgs {
    #[arg(long, default_value_t = 30)]
    pub wgs_iters: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub wgs_tolerance: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Superposition)]
    pub init: InitArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthesizeArgs {
    #[arg(long, num_args = 1.., default_values_t = [0.0, 1.0, 2.0, 3.0], allow_negative_numbers = true)]
    pub depths: Vec<f64>,
    #[command(flatten)]
    pub wgs: WgsArgs,
    #[arg(long, default_value = "out/synthesize")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct BlendArgs {
    /// All-in-focus image (PGM, PFM or PNG).
    #[arg(long)]
    pub image: PathBuf,
    /// Depth map in diopters (PFM), or PGM/PNG with a JSON range sidecar or `--depthmap-range`.
    #[arg(long)]
    pub depthmap: PathBuf,
    /// Diopters mapped to black and white of an integer depth map.
    #[arg(long, num_args = 2, value_names = ["NEAR0", "MAX"], allow_negative_numbers = true)]
    pub depthmap_range: Option<Vec<f64>>,
    #[arg(long, num_args = 1.., default_values_t = [0.0, 1.0, 2.0, 3.0], allow_negative_numbers = true)]
    pub depths: Vec<f64>,
    #[arg(long, default_value = "out/blend")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum CoherenceArg {
    Incoherent,
    Coherent,
}

impl From<CoherenceArg> for omni_core::Coherence {
    fn from(c: CoherenceArg) -> Self {
        match c {
            CoherenceArg::Incoherent => Self::Incoherent,
            CoherenceArg::Coherent => Self::Coherent,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CameraArgs {
    /// Camera entrance pupil diameter in mm.
    #[arg(long, default_value_t = 4.0)]
    pub aperture: f64,
    /// Spatial frequency for contrast, cycles/mm at the intermediate image.
    #[arg(long, default_value_t = 5.0)]
    pub frequency: f64,
    #[arg(long, value_enum, default_value_t = CoherenceArg::Incoherent)]
    pub coherence: CoherenceArg,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Quantized phase PGM with its JSON sidecar.
    #[arg(long)]
    pub phase: PathBuf,
    /// Depths (diopters) at which to image the intermediate stack.
    #[arg(long, num_args = 1.., conflicts_with = "camera_focus", allow_negative_numbers = true)]
    pub probe_depths: Option<Vec<f64>>,
    /// Camera focus sweep: first and last focus (diopters) and point count.
    #[arg(long, num_args = 3, value_names = ["FROM", "TO", "POINTS"])]
    pub camera_focus: Option<Vec<f64>>,
    /// Letter regions written by `omni scene letters`; enables the sharpness check.
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Measure slanted-edge contrast in the central window of each capture.
    #[arg(long)]
    pub edge: bool,
    /// Side of the central edge window in pixels.
    #[arg(long, default_value_t = 160)]
    pub roi: usize,
    /// Expected focus of peak contrast (diopters) for the pass/fail verdict.
    #[arg(long)]
    pub expect_peak: Option<f64>,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, default_value = "out/simulate")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
pub enum Experiment {
    /// Letters sharp at their designated depths.
    Letters,
    /// Contrast versus camera focus for two planes.
    Accommodation,
    /// Contrast versus plane spacing.
    Spacing,
    /// Layered scene blended over four planes.
    Layered,
    All,
}

#[derive(Debug, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(value_enum, default_value_t = Experiment::All)]
    pub experiment: Experiment,
    /// Focus sweep points for the accommodation experiment.
    #[arg(long, default_value_t = 9)]
    pub points: usize,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[command(flatten)]
    pub wgs: WgsArgs,
    #[arg(long, default_value = "out/evaluate")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum SceneKind {
    /// One block letter per plane, with region metadata for `simulate --regions`.
    Letters,
    /// A slanted edge in every plane tile.
    Edge,
    /// Textured image plus depth map for `blend`.
    Layered,
}

#[derive(Debug, Args, Serialize)]
pub struct SceneArgs {
    #[arg(value_enum)]
    pub kind: SceneKind,
    #[arg(long, num_args = 1.., default_values_t = [0.0, 1.0, 2.0, 3.0], allow_negative_numbers = true)]
    pub depths: Vec<f64>,
    #[arg(long, default_value = "COIN")]
    pub letters: String,
    #[arg(long, default_value = "out/scene")]
    pub out: PathBuf,
}

/// Bad flag combination found after parsing.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<UsageError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<OmniError>() {
            return if e.is_numerical() { 3 } else { 2 };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
