//! Brain-biometric identification from EEG graph connectivity.
//!
//! The crate is `no_std` (with `alloc`) and covers the whole algorithmic
//! pipeline:
//!
//! - [`signal`]: zero-phase Butterworth bandpass, decimation and
//!   analytic-signal phase extraction.
//! - [`connectivity`]: electrode layouts and the DIST, COR, PLV, PLI and RHO
//!   adjacency measures plus the IDN/RDM controls.
//! - [`graph`]: renormalized graph operator and the graph-convolution layer.
//! - [`neural`]: a small reverse-mode differentiation engine with the layers
//!   the network needs, and Adam.
//! - [`model`]: the hybrid convolutional/graph-convolutional classifier, its
//!   GCN-only variant and the training loop with early stopping.
//! - [`experiment`]: datasets, synthetic subject generation, stratified
//!   splits and the evaluation protocols.
//!
//! File formats, configuration and the command-line front end live in the
//! companion `bbnet` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod connectivity;
pub mod experiment;
pub mod graph;
pub mod model;
pub mod neural;
pub mod signal;

mod error;
mod util;

pub use error::{Error, Result};
