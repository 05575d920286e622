//! Seed-reproducible simulator of a single-photon fibre Sagnac interferometer.
//!
//! * [`optics`]: Sagnac phase and the beam-splitter / loop operator chain.
//! * [`source`], [`detector`]: heralded source and gated APD statistics.
//! * [`experiment`]: spin-down profile and the per-gate Monte Carlo.
//! * [`analysis`]: fringe fits, visibility and shot-noise sensitivity.
//! * [`config`], [`csvio`], [`commands`]: the command-line surface.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod detector;
pub mod error;
pub mod experiment;
pub mod optics;
pub mod source;

pub use analysis::{FitError, FringeFit, Port};
pub use config::SimulationConfig;
pub use detector::ApdSpec;
pub use error::{Error, Result};
pub use experiment::{BinRecord, FringePoint, RotationProfile, RunConfig};
pub use optics::{SagnacGeometry, TwoModeState};
pub use source::HeraldedSourceSpec;
