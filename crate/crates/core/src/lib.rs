//! Random switching (RS) and fully random switching (FRS) of two-configuration
//! DC-DC converters.
//!
//! The crate is split along the analysis pipeline:
//!
//! - [`dist`]: pulse-length distributions (deterministic, uniform, maximum
//!   entropy, discrete Gaussian, Huffman) and their sampling.
//! - [`switching`]: switching sequence generation, transition counting and
//!   switching-loss accounting.
//! - [`spectrum`]: closed-form RS/FRS power spectral densities, the Lorentzian
//!   envelope, the spectral mixing/filtering rules and a Monte-Carlo estimator.
//! - [`converter`]: state-space converter models, exact per-pulse simulation,
//!   equilibrium covariance and ripple spectra.
//! - [`control`]: conditional-probability feedback controllers.
//! - [`stats`]: sample moments, batch-means errors and histograms.
//!
//! All stochastic routines take an explicit seed or RNG so runs are
//! reproducible; see [`rng`].

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod converter;
pub mod dist;
pub mod error;
pub mod io;
pub mod rng;
pub mod spectrum;
pub mod stats;
pub mod switching;

pub use error::{Error, Result};
