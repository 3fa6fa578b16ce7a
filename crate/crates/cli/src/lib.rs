//! Config-driven experiment runner for the `hrode` toolkit: trajectory
//! files, symbolic derivations, verification bundles, rate estimates and
//! mode analyses.

pub mod artifacts;
pub mod config;
pub mod derive;
pub mod error;
pub mod runs;
pub mod verify;

pub use config::{ExperimentConfig, Suite};
pub use error::{CliError, CliResult};
