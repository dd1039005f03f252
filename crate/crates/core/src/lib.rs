pub mod cli;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod geometry;
pub mod nonlinear;
pub mod periodic_linear;
pub mod rotating_frame;
pub mod stokes_eigen;
pub mod vec3;

pub use error::{Error, Result};
