//! Phase synthesis and verification for optical-mapping multiplane near-eye
//! displays.
//!
//! A phase-only SLM at the Fourier plane of a 4f relay applies one off-axis
//! Fresnel lens per display sub-panel, so each sub-panel is recentred and
//! pushed to its own dioptric depth. This crate covers the whole loop:
//!
//! * [`optics`]: physical configuration, diopter to SLM focal mapping, panel tiling;
//! * [`phase`] and [`wgs`]: Fresnel targets, weighted Gerchberg-Saxton, quantization;
//! * [`blend`]: linear depth-weighted splitting of an RGB-D scene into planes;
//! * [`propagate`]: scalar wave-optics model of the relay and a focusing camera;
//! * [`metrics`]: slanted-edge MTF and the contrast sweeps;
//! * [`experiments`]: the letter-mapping and layered-scene checks;
//! * [`io`]: PGM, PFM, PNG, CSV and JSON sidecars.
//!
//! Data-parallel loops use rayon behind the default `parallel` feature.
//! Reductions run over fixed blocks combined in order, so results do not depend
//! on the thread count.

pub mod blend;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod io;
pub mod metrics;
pub mod optics;
mod par;
pub mod phase;
pub mod propagate;
pub mod scenes;
pub mod synthesis;
pub mod wgs;

pub use error::{OmniError, Result};
pub use optics::{DepthPlan, DisplayMode, OpticalConfig, SubPanelLayout};
pub use phase::{PhaseMap, QuantizedPhaseMap};
pub use propagate::{CameraModel, Coherence, ComplexField};
