//! Particle simulation of conditional McKean-Vlasov SDEs driven jointly by
//! Brownian motion and fractional Brownian motion (H >= 1/2), plus the
//! numerical machinery to check coefficient assumptions and verify the
//! averaging principle on oscillating-coefficient systems.

pub mod averaging;
pub mod coeffs;
pub mod error;
pub mod fbm;
pub mod grid;
pub mod measures;
pub mod rng;
pub mod solver;

mod assignment;
mod stats;

pub use error::{Error, Result};
pub use grid::{HurstParameter, TimeGrid};
pub use rng::RandomStream;
