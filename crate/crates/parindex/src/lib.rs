//! Index theory for zero-energy orbits of planar homogeneous potentials r^{-α}𝔘(θ), built on
//! the McGehee blow-up of the collision.

pub mod angle;
pub mod dynamics;
pub mod equilibria;
pub mod error;
pub mod indices;
pub mod integrator;
pub mod linearization;
pub mod potential;

pub use error::{Error, Result};
