//! Command-line workflows over the identity-swap toolkit: layer and channel
//! search, anonymization, swapper training, evaluation and synthetic face
//! sampling.

pub mod config;
pub mod error;
pub mod plot;
pub mod workflow;

pub use config::{Mode, Overrides, RunConfig};
pub use error::{CliError, CliResult};
pub use workflow::{run, Command, RunOutcome};
