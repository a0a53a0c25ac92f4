//! Finite-statistics key rates for decoy-state BB84.
//!
//! The pipeline runs tally → confidence intervals ([`stats`]) → decoy
//! linear programs ([`bounds`], solved by [`lp`]) → key length ([`rate`]).
//! [`channel`] simulates sessions, [`optimize`] searches protocol
//! parameters, and [`robust`] / [`distinguish`] extend the analysis to
//! uncertain intensities and partially distinguishable levels.

pub mod bounds;
pub mod channel;
pub mod cli;
pub mod distinguish;
pub mod error;
pub mod lp;
pub mod model;
pub mod optimize;
pub mod rate;
pub mod robust;
pub mod stats;

pub use error::{Error, Result};
