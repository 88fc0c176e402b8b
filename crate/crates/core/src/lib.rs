//! Incremental nonlinear control allocation for a dual-axis tilt-rotor
//! quad-plane: vehicle model, actuator models, the normalized allocation
//! problem and its SQP solver, the outer-loop controller and a closed-loop
//! simulator.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod actuation;
pub mod allocation;
pub mod clock;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod filter;
pub mod frames;
pub mod input;
pub mod math;
pub mod params;
pub mod sim;
pub mod sqp;
pub mod study;

pub use error::{Error, Result};
