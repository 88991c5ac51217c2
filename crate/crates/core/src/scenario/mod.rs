//! Scenario configuration, the run pipeline (envelope generation,
//! superposition, time stepping, diagnostics, output files) and the
//! refinement and phase-sweep studies built on it.

mod config;
mod run;
mod study;

use thiserror::Error;

use crate::diagnostics::DiagnosticsError;
use crate::envelope::EnvelopeError;
use crate::pde::PdeError;

pub use config::{OutputConfig, Polarization, ScenarioConfig, SolitonConfig, PRESETS};
pub use run::{
    build_envelope, initial_state, profile_fn, run_scenario, write_snapshot, RunArtifacts,
    SeriesRow, Summary,
};
pub use study::{
    run_phase_sweep, run_refinement_study, RefinementRow, RefinementTable, SweepEntry, SweepRow,
};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config field '{field}': {message}")]
    ConfigInvalid { field: String, message: String },
    #[error("unknown preset '{0}'")]
    UnknownPreset(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("no exact solution for this scenario: {0}")]
    OracleUnavailable(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("envelope generation failed: {0}")]
    Envelope(#[from] EnvelopeError),
    #[error("time stepping failed at t = {time}: {source}")]
    Pde { time: f64, source: PdeError },
    #[error("initial state: {0}")]
    Setup(PdeError),
    #[error("diagnostics failed: {0}")]
    Diagnostics(#[from] DiagnosticsError),
}

impl From<std::io::Error> for ScenarioError {
    fn from(e: std::io::Error) -> Self {
        ScenarioError::Io(e.to_string())
    }
}
