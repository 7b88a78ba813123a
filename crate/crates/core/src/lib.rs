//! Causal-loop protocol solver, cyclic revision engine and
//! entanglement-detection optics simulator.

pub mod decoherence;
pub mod ephemeral;
pub mod episodic;
pub mod optics;
pub mod protocol;
pub mod quad;
