//! Finite-temperature adiabatic evolution of driven quantum systems.
//!
//! A thermal state of `H_0` is evolved under a slowly driven family `H_s`,
//! `s = ωt`, and compared with the quasi-Gibbs state that keeps the initial
//! Boltzmann weights on the transported eigenvectors. The measured trace
//! distance is checked against an `O(√ω)` upper bound.

pub mod adiabaticity;
pub mod error;
pub mod evolution;
pub mod hamiltonian;
pub mod linalg;
pub mod wire_model;

pub use error::{Error, Result};
