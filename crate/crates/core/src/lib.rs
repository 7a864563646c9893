//! Davies generators, their spectral decomposition, thermodynamic diagnostics,
//! and unitary protocols that remove slow relaxation modes.

pub mod cli;
pub mod davies;
pub mod error;
pub mod linalg;
pub mod metropolis;
pub mod models;
pub mod mpemba;
pub mod operators;
pub mod spectral;
pub mod thermo;

pub use error::{Error, Result};
