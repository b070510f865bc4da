//! File formats, run configuration, threaded protocol runner and the
//! command-line front end for [`bbnet_core`].
//!
//! - [`container`]: the `EEGDS1` dataset container.
//! - [`checkpoint`]: the `BBNET1` parameter checkpoint.
//! - [`config`]: TOML run configuration and electrode group tables.
//! - [`runner`]: loads data, runs fits on worker threads, writes reports.
//! - [`cli`]: the `bbnet` command.

mod bytes;
mod error;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod container;
pub mod runner;

pub use error::{Error, Result};
