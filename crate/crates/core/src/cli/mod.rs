//! Configuration files and the `simulate | estimate | crlb | sweep` commands.

pub mod commands;
pub mod config;

pub use commands::{crlb, estimate, simulate, sweep, EstimateOutput, SweepOutput};
pub use config::RunConfig;
