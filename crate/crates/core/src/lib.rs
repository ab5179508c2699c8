//! Robust resource allocation for IRS-assisted full-duplex cognitive radio.
//!
//! The crate is `no_std` (with `alloc`). It holds the system model, the
//! robust interference-constraint machinery, a solver-agnostic conic program
//! representation and the block-coordinate-descent allocator together with
//! its baselines. A conic solver is plugged in through [`conic::ConicSolver`].

#![no_std]

extern crate alloc;

pub mod algo;
pub mod baselines;
pub mod conic;
pub mod linalg;
pub mod model;
pub mod robust;

mod error;

pub use error::{Error, Result};
