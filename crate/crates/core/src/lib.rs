pub mod bernstein;
pub mod densities;
pub mod error;
pub mod fluctuation;
pub mod geometry;
pub mod inversion;
pub mod kernels;
pub mod montecarlo;
pub mod quadrature;
pub mod report;
pub mod verify;

pub use error::{Error, Result};
