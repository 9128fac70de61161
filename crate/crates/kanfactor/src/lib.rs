//! File formats, run configuration and the command-line front end for
//! [`kanfactor_core`].

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod error;
pub mod panel;

pub use config::{Overrides, RunConfig};
pub use error::{Error, Result};
