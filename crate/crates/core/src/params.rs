//! Physical, propeller and aerodynamic parameters of the vehicle.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::input::NUM_ROTORS;
use crate::math::Vec3;

pub const GRAVITY: f64 = 9.81;

/// Aerodynamic coefficients. Anything not identified for the airframe stays zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AeroCoeffs {
    pub c_d0: f64,
    pub k_cd: f64,
    pub c_l0: f64,
    /// 1/rad
    pub c_l_alpha: f64,
    pub c_m0: f64,
    /// 1/rad
    pub c_m_alpha: f64,
    /// Aileron roll effectiveness, 1/rad.
    pub c_ml_delta_a: f64,
    pub c_y_beta: f64,
    pub c_ml0: f64,
    pub c_ml_beta: f64,
    pub c_ml_p: f64,
    pub c_ml_r: f64,
    pub c_n_p: f64,
    pub c_n_r: f64,
}

impl Default for AeroCoeffs {
    fn default() -> Self {
        Self {
            c_d0: 0.38,
            k_cd: 0.2,
            c_l0: 0.0,
            c_l_alpha: 3.0,
            c_m0: 0.05,
            c_m_alpha: -0.05,
            c_ml_delta_a: 0.12,
            c_y_beta: 0.0,
            c_ml0: 0.0,
            c_ml_beta: 0.0,
            c_ml_p: 0.0,
            c_ml_r: 0.0,
            c_n_p: 0.0,
            c_n_r: 0.0,
        }
    }
}

/// Airspeed-dependent propeller coefficients
/// `K(V_a) = K₀ · (1 − slope · V_a)`, valid up to `max_airspeed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PropellerCoeffs {
    /// Static thrust coefficient, N/(rad/s)².
    pub k_thrust0: f64,
    /// Static torque coefficient, N·m/(rad/s)².
    pub k_torque0: f64,
    /// s/m
    pub airspeed_slope: f64,
    /// Upper end of the identified airspeed range, m/s.
    pub max_airspeed: f64,
}

impl Default for PropellerCoeffs {
    fn default() -> Self {
        Self {
            k_thrust0: 0.55e-5,
            k_torque0: 0.94e-7,
            airspeed_slope: 0.025,
            max_airspeed: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VehicleParams {
    pub mass: f64,
    /// Principal moments of inertia (Ixx, Iyy, Izz), kg·m².
    pub inertia: Vec3,
    /// Rotor hub positions in the body frame, m. Rotor 1 is front-left and
    /// numbering runs clockwise seen from above.
    pub rotor_positions: [Vec3; NUM_ROTORS],
    pub wing_area: f64,
    pub mean_chord: f64,
    pub wing_span: f64,
    pub air_density: f64,
    /// Propeller polar inertia, kg·m².
    pub prop_inertia: f64,
    /// Tilt-assembly inertia about the propeller x axis, per rotor.
    pub tilt_inertia_xx: [f64; NUM_ROTORS],
    /// Tilt-assembly inertia about the propeller y axis, per rotor.
    pub tilt_inertia_yy: [f64; NUM_ROTORS],
    pub propeller: PropellerCoeffs,
    pub aero: AeroCoeffs,
}

impl Default for VehicleParams {
    fn default() -> Self {
        // l1/l2: longitudinal arm of the front/rear rotors,
        // l3/l4: lateral arm of the front/rear rotors.
        let (l1, l2, l3, l4, lz) = (0.228, 0.228, 0.38, 0.38, 0.0);
        Self {
            mass: 2.44,
            inertia: Vec3::new(0.156, 0.161, 0.259),
            rotor_positions: [
                Vec3::new(l1, -l3, lz),
                Vec3::new(l1, l3, lz),
                Vec3::new(-l2, l4, lz),
                Vec3::new(-l2, -l4, lz),
            ],
            wing_area: 0.43,
            mean_chord: 0.3,
            wing_span: 1.4,
            air_density: 1.225,
            prop_inertia: 1.0e-5,
            tilt_inertia_xx: [5.0e-5; NUM_ROTORS],
            tilt_inertia_yy: [5.0e-5; NUM_ROTORS],
            propeller: PropellerCoeffs::default(),
            aero: AeroCoeffs::default(),
        }
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite and > 0, got {v}"),
        })
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!("must be finite, got {v}"),
        })
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        positive("vehicle.mass", self.mass)?;
        positive("vehicle.inertia[x]", self.inertia.x)?;
        positive("vehicle.inertia[y]", self.inertia.y)?;
        positive("vehicle.inertia[z]", self.inertia.z)?;
        positive("vehicle.wing_area", self.wing_area)?;
        positive("vehicle.mean_chord", self.mean_chord)?;
        positive("vehicle.wing_span", self.wing_span)?;
        positive("vehicle.air_density", self.air_density)?;
        positive("vehicle.propeller.k_thrust0", self.propeller.k_thrust0)?;
        positive("vehicle.propeller.k_torque0", self.propeller.k_torque0)?;
        positive("vehicle.propeller.max_airspeed", self.propeller.max_airspeed)?;
        finite("vehicle.propeller.airspeed_slope", self.propeller.airspeed_slope)?;
        if self.prop_inertia < 0.0 || !self.prop_inertia.is_finite() {
            return Err(Error::InvalidParameter {
                name: "vehicle.prop_inertia",
                reason: format!("must be finite and >= 0, got {}", self.prop_inertia),
            });
        }
        for p in &self.rotor_positions {
            if !p.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "vehicle.rotor_positions",
                    reason: "entries must be finite".into(),
                });
            }
        }
        let a = &self.aero;
        for (name, v) in [
            ("vehicle.aero.c_d0", a.c_d0),
            ("vehicle.aero.k_cd", a.k_cd),
            ("vehicle.aero.c_l0", a.c_l0),
            ("vehicle.aero.c_l_alpha", a.c_l_alpha),
            ("vehicle.aero.c_m0", a.c_m0),
            ("vehicle.aero.c_m_alpha", a.c_m_alpha),
            ("vehicle.aero.c_ml_delta_a", a.c_ml_delta_a),
            ("vehicle.aero.c_y_beta", a.c_y_beta),
            ("vehicle.aero.c_ml0", a.c_ml0),
            ("vehicle.aero.c_ml_beta", a.c_ml_beta),
            ("vehicle.aero.c_ml_p", a.c_ml_p),
            ("vehicle.aero.c_ml_r", a.c_ml_r),
            ("vehicle.aero.c_n_p", a.c_n_p),
            ("vehicle.aero.c_n_r", a.c_n_r),
        ] {
            finite(name, v)?;
        }
        Ok(())
    }

    pub fn weight(&self) -> f64 {
        self.mass * GRAVITY
    }
}
