//! Evolving isoparametric finite elements for advection–diffusion problems
//! with a moving internal interface.

pub mod config;
pub mod error;
pub mod evolution;
pub mod fem;
pub mod geometry;
pub mod jet;
pub mod linalg;
pub mod linsolve;
pub mod mesh;
pub mod ref_elem;
pub mod study;
pub mod timestepper;

pub use error::{Error, Result};
