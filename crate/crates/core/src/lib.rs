//! Filtered back-projection of pure sinogram noise on a discrete parallel-beam
//! Radon grid, the limiting local covariance of the reconstructed noise, and
//! the Monte Carlo machinery that checks one against the other.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops read more naturally in the dense numeric kernels
#![allow(clippy::needless_range_loop)]

pub mod ensemble_stats;
pub mod error;
pub mod fbp_engine;
pub mod fitting;
pub mod kernel_lab;
pub mod lra_theory;
pub mod noise_model;
pub mod poly;
pub mod quadrature;
pub mod scan_geometry;

pub use error::{Error, Result};
