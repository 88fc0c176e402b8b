//! The 15-entry control input vector: 13 physical actuators followed by the
//! virtual roll and pitch commands.

use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

pub const NUM_ROTORS: usize = 4;
pub const NUM_ACTUATORS: usize = 13;
pub const NUM_INPUTS: usize = 15;

/// First rotor speed entry (Ω₁..Ω₄ follow).
pub const OMEGA: usize = 0;
/// First elevation tilt entry (b₁..b₄ follow).
pub const ELEVATION: usize = 4;
/// First azimuth tilt entry (g₁..g₄ follow).
pub const AZIMUTH: usize = 8;
pub const AILERON: usize = 12;
pub const PHI_V: usize = 13;
pub const THETA_V: usize = 14;

/// Column labels in index order.
pub const INPUT_NAMES: [&str; NUM_INPUTS] = [
    "omega1", "omega2", "omega3", "omega4", "b1", "b2", "b3", "b4", "g1", "g2", "g3", "g4",
    "delta_a", "phi_v", "theta_v",
];

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInputVector(pub [f64; NUM_INPUTS]);

impl ControlInputVector {
    pub const ZERO: ControlInputVector = ControlInputVector([0.0; NUM_INPUTS]);

    pub fn from_parts(actuators: &[f64; NUM_ACTUATORS], phi_v: f64, theta_v: f64) -> Self {
        let mut u = [0.0; NUM_INPUTS];
        u[..NUM_ACTUATORS].copy_from_slice(actuators);
        u[PHI_V] = phi_v;
        u[THETA_V] = theta_v;
        Self(u)
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.0[OMEGA + i]
    }

    pub fn elevation(&self, i: usize) -> f64 {
        self.0[ELEVATION + i]
    }

    pub fn azimuth(&self, i: usize) -> f64 {
        self.0[AZIMUTH + i]
    }

    pub fn aileron(&self) -> f64 {
        self.0[AILERON]
    }

    pub fn phi_v(&self) -> f64 {
        self.0[PHI_V]
    }

    pub fn theta_v(&self) -> f64 {
        self.0[THETA_V]
    }

    pub fn actuators(&self) -> [f64; NUM_ACTUATORS] {
        let mut a = [0.0; NUM_ACTUATORS];
        a.copy_from_slice(&self.0[..NUM_ACTUATORS]);
        a
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Index<usize> for ControlInputVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for ControlInputVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

/// Time derivatives of the rotor actuators, needed by the inertial rotor
/// moment terms. Zero when unknown.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActuatorRates {
    pub omega_dot: [f64; NUM_ROTORS],
    pub b_dot: [f64; NUM_ROTORS],
    pub g_dot: [f64; NUM_ROTORS],
    pub b_ddot: [f64; NUM_ROTORS],
    pub g_ddot: [f64; NUM_ROTORS],
}
