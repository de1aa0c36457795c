//! Simulation core for a metasurface superheterodyne transmitter.

pub mod channel;
pub mod error;
pub mod geometry;
pub mod mixer;
pub mod modem;
pub mod precoder;
pub mod reflection;
pub mod seeds;
pub mod sensing;
pub mod simulator;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
