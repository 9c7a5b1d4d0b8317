//! Simulation and optimization toolkit for far-off-resonant Raman optical
//! quantum memories.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid_pulse`]: uniform grids, sampled complex envelopes, canonical pulse
//!   shapes and scalar diagnostics (energy, FWHM, spectral bandwidth).
//! - [`memory_dynamics`]: the linear field/spin-wave propagation solver for
//!   storage and forward retrieval, together with the closed-form storage
//!   kernel used as an independent oracle.
//! - [`optimal_control`]: the optimal spin-wave mode, write-pulse shaping and
//!   the delayed-control experiment.
//! - [`quantum_states`]: truncated Fock-basis density matrices, the memory as a
//!   loss + noise bosonic channel, and Uhlmann fidelity.
//! - [`tomography`]: simulated phase-scanned homodyne records and iterative
//!   maximum-likelihood reconstruction.
//! - [`experiments`]: parameter sweeps, calibration and the headline report.
//! - [`config`]: the serializable run configuration shared with the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bessel;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid_pulse;
pub mod memory_dynamics;
pub mod optimal_control;
pub mod quantum_states;
pub mod tomography;

pub use error::{Error, Result};
pub use num_complex::Complex64;

/// Independent stream seed derived from a master seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
