//! Command implementations behind the `jamlab` binary.

pub mod checkpoint;
pub mod config;
pub mod container;
pub mod error;
pub mod eval;
pub mod flops;
pub mod gen;
pub mod manifest;
pub mod render;
pub mod train;

pub use error::{CliError, Result};
