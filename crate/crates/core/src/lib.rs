pub mod cli;
pub mod constants;
pub mod coupling;
pub mod dpp;
pub mod error;
pub mod fd;
pub mod field;
pub mod game;
pub mod geometry;
pub mod planar;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
