//! Simulation and analysis toolkit for a superconducting microsphere
//! levitated in a chip-based anharmonic magnetic trap.
//!
//! The chain runs field → potential → stochastic dynamics → SQUID
//! transduction → spectral analysis. Each stage lives in its own module and
//! can be used on its own.

pub mod analysis;
pub mod constants;
pub mod dynamics;
mod dual;
pub mod elliptic;
pub mod error;
pub mod fieldmodel;
pub mod potential;
pub mod transduction;

pub use error::{Error, Result};
