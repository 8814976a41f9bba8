//! Epidemic message dissemination among mobile nodes, modelled as branching
//! Brownian motion and its super-Brownian scaling limit.
//!
//! Modules, bottom up:
//! - [`rng`]: counter-based random streams and primitive samplers;
//! - [`galton_watson`]: discrete-generation branching;
//! - [`csbp`]: continuous-state branching numerics and Feller paths;
//! - [`bbm`]: the event-driven particle system;
//! - [`superprocess`]: mass rescaling, resampling and density rasters;
//! - [`metrics`]: coverage, zones, first passage and front speed;
//! - [`harness`]: configuration and experiment orchestration for the CLI.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bbm;
pub mod csbp;
pub mod error;
pub mod galton_watson;
pub mod harness;
pub mod measure;
pub mod metrics;
pub mod raster;
pub mod rng;
pub mod space;
pub mod stats;
pub mod superprocess;

pub use error::{Error, Result};
