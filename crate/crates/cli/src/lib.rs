//! Configuration, figure presets and run orchestration for the `cqed-stirap`
//! binary.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;

pub use config::{Experiment, ExperimentConfig, Format, Kind};
pub use error::{CliError, Result};
pub use output::{OutputRecord, RunManifest, MANIFEST};
pub use presets::{figure_preset, PRESETS};
pub use run::run;
