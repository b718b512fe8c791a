//! Trotterized spin-system propagators and the optimizers built on them.
//!
//! The crate covers dense Pauli-sum Hamiltonians ([`pauli`]), slice
//! propagators by direct exponentiation or split-operator schemes of orders
//! 1 to 4 ([`propagator`]), GRAPE pulse search ([`grape`]), Trotter-inspired
//! variational ansätze with a Nelder-Mead driver ([`vqa`]) and a timing
//! harness ([`bench`]).

pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod grape;
pub mod linalg;
pub mod pauli;
pub mod propagator;
pub mod pulse;
pub mod stats;
pub mod vqa;

pub use error::{Error, Result};
pub use grape::{GrapeConfig, Objective, RunTrace};
pub use pauli::{Hamiltonian, Pauli, PauliString, SpinSystemSpec};
pub use propagator::{PropagatorMode, Propagator, SegmentCache, TrotterScheme};
pub use pulse::ControlPulse;
