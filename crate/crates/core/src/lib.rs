//! Fractional Brownian motion with Hurst parameter below one half: exact
//! sampling, the Volterra kernel and its transfer operator, divergence
//! integrals through Itô-type representations, `q`-variation statistics and
//! the fractional Bessel process, plus a deterministic Monte Carlo harness
//! that checks the `1/H`-variation limit laws.

// `!(x > 0.0)` is used deliberately so that NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bessel;
pub mod error;
pub mod fbm;
pub mod grid;
pub mod harness;
pub mod ito;
pub mod kernel;
pub mod quad;
pub mod report;
pub mod runner;
pub mod seed;
pub mod stats;
pub mod variation;

pub use error::{Error, Result};
pub use grid::{HurstParam, MultiPath, RealPath, UniformGrid};
pub use runner::Runner;
pub use seed::SeedSpec;
