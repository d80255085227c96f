//! Movable-antenna near-field integrated sensing and communication.
//!
//! The crate simulates near-field OFDM channels over a discretized antenna
//! movement region and implements the estimation chain that runs on top of
//! the pilot measurements:
//!
//! 1. [`nomp`]: per-subregion angle estimation with Newton-refined MMV-OMP,
//! 2. [`lsrc`]: clustering of per-subregion bearings and least-squares ray
//!    intersection to localize scatterers,
//! 3. [`ce_refine`]: delay/gain search on the localized scatterers and
//!    reconstruction of the full port-by-subcarrier channel.
//!
//! [`baselines`] holds the grid-only comparison methods, [`metrics`] the
//! scoring (NMSE, matched MAE, OSPA) and [`harness`] the Monte-Carlo sweep
//! driver that writes per-trial CSV records.

// `!(x > 0.0)` is used on purpose so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod ce_refine;
pub mod checks;
pub mod config;
pub mod dictionary;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod lsrc;
pub mod metrics;
pub mod nomp;

pub use config::{EstimatorConfig, PilotPattern, Preset, SimConfig, SystemConfig};
pub use error::{Error, Result};
pub use geometry::{
    ChannelMatrix, Measurement, PortGrid, Scatterer, Scene, Spherical, SPEED_OF_LIGHT,
};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
