//! Particle approximation of density-dependent McKean–Vlasov SDEs with
//! reference solvers and convergence diagnostics.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod drift;
pub mod duhamel;
pub mod error;
pub mod fokker_planck;
pub mod gauss_sum;
pub mod heat_kernel;
pub mod initial;
pub mod measures;
pub mod probes;
pub mod quadrature;
pub mod rng;
pub mod scheme;
mod transport;

pub use error::{Error, Result};
