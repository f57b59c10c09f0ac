//! Delayed-rejection adaptive Metropolis (DRAM) sampling core.
//!
//! This crate is `no_std` and only needs `alloc`. It holds the sampling
//! algorithm and its diagnostics:
//!
//! - [`model`]: target densities and the built-in test problems.
//! - [`proposal`]: the adaptive Gaussian proposal and the bounded
//!   total-variation adaptation measure.
//! - [`kernel`]: the DRAM loop, acceptance rules, burn-in tracking and the
//!   resumable [`kernel::Sampler`] state machine.
//! - [`chain`]: compact weighted chains and streaming moments.
//! - [`refine`]: integrated autocorrelation, two-phase refinement and the
//!   cross-chain Kolmogorov-Smirnov check.
//! - [`parallel`]: multi-chain and fork-join execution, geometric
//!   contribution fits and speedup prediction.
//!
//! File formats, restart files and the command line live in the `paradram`
//! companion crate.
#![no_std]

extern crate alloc;

pub mod chain;
pub mod codec;
pub mod error;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod parallel;
pub mod proposal;
pub mod refine;
pub mod rng;
pub mod spec;

pub use error::{Error, Result};
