//! Gamma-kernel determinantal point processes on the half-integer lattice,
//! equilibrium Kawasaki swap dynamics for them, and exact finite-window
//! oracles for both.

pub mod cli;
pub mod dpp;
pub mod dynamics;
pub mod error;
pub mod exact;
pub mod format;
pub mod kernel;
pub mod linalg;
pub mod rn;
pub mod rng;
pub mod specfun;
