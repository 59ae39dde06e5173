//! Robust stability certificates and fixed-order output-feedback synthesis
//! for fractional-order linear systems with interval uncertainty and a
//! time-varying delay.
//!
//! The crate is organised bottom-up:
//!
//! * [`matrix`] and [`linalg`]: dense matrices and eigenvalue kernels.
//! * [`interval`]: interval matrices, rank-one uncertainty factors, delays.
//! * [`lmi`]: matrix inequality problems, an interior-point backend and a
//!   solver-independent certificate checker.
//! * [`stability`]: delay-dependent stability conditions and sector scans.
//! * [`synthesis`]: closed-loop construction and controller synthesis.
//! * [`sim`]: Grünwald–Letnikov simulation of delayed fractional systems.

pub mod error;
pub mod interval;
pub mod linalg;
pub mod lmi;
pub mod matrix;
pub mod sim;
pub mod stability;
pub mod synthesis;

pub use error::{Error, Result};
pub use matrix::Mat;
