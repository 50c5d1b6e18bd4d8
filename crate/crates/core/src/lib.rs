//! Simulation of chiral plasmonic near fields around a nanohole, the inelastic
//! electron sidebands they imprint, and the resulting electron vortex far fields.

pub mod analysis;
pub mod bessel;
pub mod cli;
pub mod error;
pub mod farfield;
pub mod grid;
pub mod io;
pub mod nearfield;
pub mod optics;
pub mod pinem;
pub mod proton;

pub use error::{Error, Result};
