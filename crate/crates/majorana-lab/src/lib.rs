//! Majorana edge-mode qubits in 1D p-wave superfluid chains.
//!
//! Spectra, absorption, gate dynamics and logical-gate compilation.

pub mod bdg;
pub mod dynamics;
pub mod error;
pub mod fock_oracle;
pub mod gates;
pub mod linalg;
pub mod logical;
pub mod meanfield;
pub mod par;
pub mod spectro;

pub use error::{Error, Result};
