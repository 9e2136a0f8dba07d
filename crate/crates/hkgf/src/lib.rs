//! File formats, run configuration and the `hkgf` command-line front end
//! around [`hkgf_core`].

pub mod bench;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod manifest;

pub use error::{CliError, Result};
