//! Std companion of `fdcr-core`: the Clarabel conic backend, file formats,
//! experiment configuration, the Monte-Carlo runner and the CLI.

extern crate openblas_src;

pub mod backend;
pub mod bench;
pub mod cli;
pub mod config;
pub mod io;
pub mod verify;

pub use backend::ClarabelSolver;
