//! Simulation of hybrid open quantum systems under time-dependent Lindblad
//! dynamics with TCL-expanded damping rates, generalized Wigner functions and
//! a negativity-based non-Markovianity degree.

pub mod bath;
pub mod error;
pub mod hilbert;
pub mod lindblad;
pub mod measure;
pub mod phase_space;
pub mod scenario;

pub use error::{Error, Result};
