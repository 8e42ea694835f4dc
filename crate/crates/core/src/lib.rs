//! Geodesic Monte Carlo on the sphere and the Stiefel manifold with
//! arbitrary positive semi-definite mass matrices.

pub mod cli;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod io;
pub mod linalg;
pub mod manifold;
pub mod sampler;
pub mod target;
pub mod verify;

pub use error::{Error, Result};
