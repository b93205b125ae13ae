//! Simulation of an electron spin 1/2 hyperfine-coupled to a nuclear spin I.
//!
//! The crate covers the closed-system eigenstructure of the Breit–Rabi
//! Hamiltonian, magnetic resonance spectra, entanglement of eigenstates and
//! thermal states, driven evolution and pulse protocols, and Markovian or
//! small spin-bath decoherence.
//!
//! Units: angular frequencies in rad/µs, fields in tesla, times in µs.
//! Linear frequencies (MHz, GHz) only appear at I/O boundaries.

// NaN-rejecting validation is written as `!(x > 0.0)`.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod angular;
pub mod breitrabi;
pub mod cli;
pub mod dynamics;
pub mod entangle;
pub mod error;
pub mod golden;
pub mod noise;
pub mod roots;
pub mod spectra;
pub mod spinalg;

pub use error::{Error, Result};

/// rad/µs per MHz.
pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Convert a linear frequency in MHz to rad/µs.
pub fn mhz(f: f64) -> f64 {
    f * TWO_PI
}

/// Convert rad/µs to MHz.
pub fn to_mhz(w: f64) -> f64 {
    w / TWO_PI
}
