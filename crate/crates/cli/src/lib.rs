//! Command-line driver for the `aftershock` library: configuration, the
//! end-to-end pipeline, and plot-ready output files.

pub mod args;
pub mod config;
pub mod error;
pub mod pipeline;
pub mod plot;

pub use config::RunConfig;
pub use error::CliError;
pub use pipeline::run_pipeline;
