//! Simulation and fitting of macroscopic resonant tunneling rate curves of
//! rf-SQUID flux qubits, with a full-Hamiltonian cross-check.

pub mod envelopes;
pub mod error;
pub mod fitter;
pub mod io;
pub mod rate_model;
pub mod squid;
pub mod units;

pub use error::{Error, Result};
pub use rate_model::{MrtParams, RateCurve, Well};
