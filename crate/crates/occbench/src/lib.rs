//! File formats, model backends and the command line around
//! [`occbench_core`].

pub mod annotate;
pub mod backend;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest_io;
pub mod pixels;
pub mod protocol;
pub mod report;
pub mod run;
pub mod synth;

pub use error::{Result, ToolError};
