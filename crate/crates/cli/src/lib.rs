//! Command-line surface of the radelft radar pipeline: configuration, the
//! binary tensor container and its sidecars, point-cloud and image exports,
//! the frame manifest, model checkpoints, and one function per subcommand.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod manifest;
pub mod storage;

pub use config::Config;
pub use error::{FormatError, Result};
