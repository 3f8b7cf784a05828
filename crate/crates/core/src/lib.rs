//! Location-dependent multi-antenna coded caching.
//!
//! The crate models a room split into tiles, decides how much of each
//! tile's file every user caches, builds the multicast delivery plan for a
//! set of users and designs the beamformers that deliver it.

pub mod allocation;
pub mod beamforming;
pub mod combinatorics;
pub mod config;
pub mod conic;
pub mod delivery;
pub mod environment;
pub mod error;
pub mod experiments;
pub mod golden;
pub mod metrics;
pub mod placement;
pub mod rational;
pub mod stats;

pub use error::{Error, Result};
