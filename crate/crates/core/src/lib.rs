//! Driven oscillator coupled to a phonon chain: ramp schedules, counter-diabatic
//! and fast-forward protocols, symplectic propagation, and heat-engine cycles.

pub mod dynamics;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod integrator;
pub mod jet;
pub mod oracle;
pub mod protocols;
pub mod ramp;
pub mod states;

pub use error::{Error, Result};
