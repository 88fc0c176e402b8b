//! Forces, moments and equations of motion of the tilt-rotor quad-plane.
//!
//! Linear accelerations are expressed in the control frame, angular
//! accelerations in the body frame. The full model includes every rotor
//! inertial term; the simplified model keeps only thrust, rotor drag torque,
//! aerodynamics and the aileron, and reads the attitude from the virtual
//! entries of the input vector so the allocator can treat roll and pitch as
//! decision variables.

use serde::{Deserialize, Serialize};

use crate::frames::{
    body_to_control, body_to_control_partials, control_to_earth, earth_to_control, prop_to_body,
    wind_to_body, wind_to_body_dalpha, EulerAttitude,
};
use crate::input::{
    ActuatorRates, ControlInputVector, AILERON, AZIMUTH, ELEVATION, NUM_INPUTS, NUM_ROTORS, OMEGA,
    PHI_V, THETA_V,
};
use crate::math::{asin, clamp, cos, sin, sqrt, Mat3, Vec3};
use crate::params::{VehicleParams, GRAVITY};

/// Below this total speed the flight-path and sideslip angles are undefined
/// and reported as zero.
pub const MIN_SPEED_FOR_AIRDATA: f64 = 1e-3;

/// Rigid-body state. Position and velocity are kept in the earth (NED)
/// frame; the control-frame velocity is derived from the heading.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub pos: Vec3,
    pub vel: Vec3,
    pub att: EulerAttitude,
    /// Body rates p, q, r.
    pub rates: Vec3,
}

impl VehicleState {
    pub fn hover_at(altitude: f64) -> Self {
        Self {
            pos: Vec3::new(0.0, 0.0, -altitude),
            ..Self::default()
        }
    }

    /// Velocity in the control frame.
    pub fn vel_control(&self) -> Vec3 {
        earth_to_control(self.att.psi) * self.vel
    }

    pub fn set_vel_control(&mut self, v_c: Vec3) {
        self.vel = control_to_earth(self.att.psi) * v_c;
    }

    /// Velocity in the body frame.
    pub fn vel_body(&self) -> Vec3 {
        body_to_control(self.att.phi, self.att.theta).transpose() * self.vel_control()
    }

    pub fn is_finite(&self) -> bool {
        self.pos.is_finite() && self.vel.is_finite() && self.att.is_finite() && self.rates.is_finite()
    }
}

/// Linear (control frame) and angular (body frame) accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Accelerations {
    pub linear: Vec3,
    pub angular: Vec3,
}

impl Accelerations {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.linear.x,
            self.linear.y,
            self.linear.z,
            self.angular.x,
            self.angular.y,
            self.angular.z,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            linear: Vec3::new(a[0], a[1], a[2]),
            angular: Vec3::new(a[3], a[4], a[5]),
        }
    }

    pub fn norm(&self) -> f64 {
        sqrt(self.linear.dot(self.linear) + self.angular.dot(self.angular))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AirdataSample {
    /// Airspeed along the body x axis, m/s.
    pub airspeed: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Flight-path angle.
    pub gamma: f64,
    /// Total inertial speed, m/s.
    pub total_speed: f64,
}

/// Air data from inertial velocity, with no wind.
pub fn airdata(state: &VehicleState) -> AirdataSample {
    let v_c = state.vel_control();
    let v = v_c.norm();
    let v_b = body_to_control(state.att.phi, state.att.theta).transpose() * v_c;
    let (gamma, beta) = if v < MIN_SPEED_FOR_AIRDATA {
        (0.0, 0.0)
    } else {
        (
            asin(clamp(-v_c.z / v, -1.0, 1.0)),
            asin(clamp(v_b.y / v, -1.0, 1.0)),
        )
    };
    AirdataSample {
        airspeed: v_b.x.max(0.0),
        alpha: state.att.theta - gamma,
        beta,
        gamma,
        total_speed: v,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropellerCoeffsAt {
    pub k_thrust: f64,
    pub k_torque: f64,
    /// Set when the airspeed was outside the identified range and clamped.
    pub clamped: bool,
}

/// Thrust and torque coefficients at the given airspeed.
pub fn thrust_torque_coeffs(airspeed: f64, params: &VehicleParams) -> PropellerCoeffsAt {
    let p = &params.propeller;
    let va = clamp(airspeed, 0.0, p.max_airspeed);
    let scale = 1.0 - va * p.airspeed_slope;
    PropellerCoeffsAt {
        k_thrust: p.k_thrust0 * scale,
        k_torque: p.k_torque0 * scale,
        clamped: airspeed > p.max_airspeed || airspeed < 0.0,
    }
}

/// `(−1)^i` for the 1-based rotor index.
#[inline]
pub fn spin_sign(rotor: usize) -> f64 {
    if (rotor + 1) % 2 == 1 {
        -1.0
    } else {
        1.0
    }
}

/// Unit thrust axis of a rotor in the body frame (third column of the
/// propeller rotation); thrust acts along its negative.
#[inline]
fn rotor_axis(b: f64, g: f64) -> Vec3 {
    let (sb, cb) = (sin(b), cos(b));
    let (sg, cg) = (sin(g), cos(g));
    Vec3::new(sb, -sg * cb, cg * cb)
}

fn body_thrust_sum(u: &ControlInputVector, k_thrust: f64) -> Vec3 {
    let mut f = Vec3::ZERO;
    for i in 0..NUM_ROTORS {
        let w = u.omega(i);
        f += rotor_axis(u.elevation(i), u.azimuth(i)).scale(-k_thrust * w * w);
    }
    f
}

/// Sum of the rotor thrusts, projected onto the control frame.
pub fn propeller_forces(state: &VehicleState, u: &ControlInputVector, params: &VehicleParams) -> Vec3 {
    let air = airdata(state);
    let k = thrust_torque_coeffs(air.airspeed, params).k_thrust;
    body_to_control(state.att.phi, state.att.theta) * body_thrust_sum(u, k)
}

fn dynamic_pressure(air: &AirdataSample, params: &VehicleParams) -> f64 {
    0.5 * params.air_density * params.wing_area * air.airspeed * air.airspeed
}

/// Drag, side force and lift magnitudes.
pub fn drag_side_lift(air: &AirdataSample, params: &VehicleParams) -> (f64, f64, f64) {
    let a = &params.aero;
    let q = dynamic_pressure(air, params);
    let cl = a.c_l0 + a.c_l_alpha * air.alpha;
    (q * (a.c_d0 + a.k_cd * cl * cl), q * a.c_y_beta * air.beta, q * cl)
}

fn aero_body(air: &AirdataSample, params: &VehicleParams) -> Vec3 {
    let (d, y, l) = drag_side_lift(air, params);
    wind_to_body(air.alpha, air.beta) * Vec3::new(-d, y, -l)
}

/// Aerodynamic force in the control frame.
pub fn aero_forces(air: &AirdataSample, att: &EulerAttitude, params: &VehicleParams) -> Vec3 {
    body_to_control(att.phi, att.theta) * aero_body(air, params)
}

/// Aerodynamic moment in the body frame.
pub fn aero_moments(air: &AirdataSample, rates: Vec3, params: &VehicleParams) -> Vec3 {
    let a = &params.aero;
    let q = dynamic_pressure(air, params);
    let span = params.wing_span;
    let rate_scale = if air.total_speed < MIN_SPEED_FOR_AIRDATA {
        0.0
    } else {
        span / (2.0 * air.total_speed)
    };
    let roll = span * (a.c_ml0 + a.c_ml_beta * air.beta + rate_scale * (a.c_ml_p * rates.x + a.c_ml_r * rates.z));
    let pitch = params.mean_chord * (a.c_m0 + a.c_m_alpha * air.alpha);
    let yaw = span * (a.c_n_p * rate_scale * rates.x + a.c_n_r * rate_scale * rates.z);
    Vec3::new(roll, pitch, yaw).scale(q)
}

/// Roll moment from the aileron deflection. The mean chord is the reference
/// length, matching the identified coefficient.
pub fn aileron_moment(air: &AirdataSample, delta_a: f64, params: &VehicleParams) -> Vec3 {
    let q = dynamic_pressure(air, params);
    Vec3::new(q * params.mean_chord * params.aero.c_ml_delta_a * delta_a, 0.0, 0.0)
}

/// Rotor moment contributions in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RotorMoments {
    /// Thrust acting at the rotor hubs.
    pub thrust: Vec3,
    /// Propeller drag torque.
    pub drag: Vec3,
    /// Reaction to propeller spin-up.
    pub spin_up: Vec3,
    /// Precession from tilting a spinning rotor.
    pub precession: Vec3,
    /// Inertia of the tilting assemblies.
    pub tilt: Vec3,
    /// Gyroscopic coupling with the body rates.
    pub gyroscopic: Vec3,
}

impl RotorMoments {
    /// Terms kept by the simplified model.
    pub fn primary(&self) -> Vec3 {
        self.thrust + self.drag
    }

    /// Terms only the full model carries.
    pub fn inertial(&self) -> Vec3 {
        self.spin_up + self.precession + self.tilt + self.gyroscopic
    }
}

fn rotor_moments_with(
    u: &ControlInputVector,
    rates: Vec3,
    u_rates: &ActuatorRates,
    k: &PropellerCoeffsAt,
    params: &VehicleParams,
) -> RotorMoments {
    let jp = params.prop_inertia;
    let mut m = RotorMoments::default();
    for i in 0..NUM_ROTORS {
        let sign = spin_sign(i);
        let w = u.omega(i);
        let (b, g) = (u.elevation(i), u.azimuth(i));
        let r_bp = prop_to_body(b, g);
        let axis = r_bp.col(2);
        let thrust = axis.scale(-k.k_thrust * w * w);
        m.thrust += params.rotor_positions[i].cross(thrust);
        m.drag += axis.scale(-k.k_torque * w * w * sign);
        m.spin_up += axis.scale(-jp * u_rates.omega_dot[i] * sign);
        let h = axis.scale(jp * w);
        m.precession += h.cross(Vec3::new(u_rates.g_dot[i], u_rates.b_dot[i], 0.0)).scale(sign);
        m.tilt += (r_bp
            * Vec3::new(
                u_rates.g_ddot[i] * params.tilt_inertia_xx[i],
                u_rates.b_ddot[i] * params.tilt_inertia_yy[i],
                0.0,
            ))
        .scale(sign);
        m.gyroscopic += -rates.cross(h.scale(sign));
    }
    m
}

/// Every rotor moment term for the current state and inputs.
pub fn rotor_moments(
    state: &VehicleState,
    u: &ControlInputVector,
    u_rates: &ActuatorRates,
    params: &VehicleParams,
) -> RotorMoments {
    let air = airdata(state);
    let k = thrust_torque_coeffs(air.airspeed, params);
    rotor_moments_with(u, state.rates, u_rates, &k, params)
}

fn gyro_torque(rates: Vec3, params: &VehicleParams) -> Vec3 {
    -rates.cross(rates.hadamard(params.inertia))
}

fn inv_inertia(params: &VehicleParams, m: Vec3) -> Vec3 {
    Vec3::new(
        m.x / params.inertia.x,
        m.y / params.inertia.y,
        m.z / params.inertia.z,
    )
}

fn gravity_control(_psi: f64) -> Vec3 {
    // The control frame shares its z axis with the earth frame.
    Vec3::new(0.0, 0.0, GRAVITY)
}

/// Full equations of motion.
pub fn full_eom(
    state: &VehicleState,
    u: &ControlInputVector,
    u_rates: &ActuatorRates,
    params: &VehicleParams,
) -> Accelerations {
    let air = airdata(state);
    let k = thrust_torque_coeffs(air.airspeed, params);
    let r_cb = body_to_control(state.att.phi, state.att.theta);
    let forces = r_cb * (body_thrust_sum(u, k.k_thrust) + aero_body(&air, params));
    let rm = rotor_moments_with(u, state.rates, u_rates, &k, params);
    let moments = gyro_torque(state.rates, params)
        + rm.primary()
        + rm.inertial()
        + aero_moments(&air, state.rates, params)
        + aileron_moment(&air, u.aileron(), params);
    Accelerations {
        linear: forces.scale(1.0 / params.mass) + gravity_control(state.att.psi),
        angular: inv_inertia(params, moments),
    }
}

/// Air data seen by the simplified model: speeds, sideslip and flight path
/// from the state, angle of attack from the virtual pitch command.
fn airdata_for_virtual(state: &VehicleState, u: &ControlInputVector) -> AirdataSample {
    let mut air = airdata(state);
    air.alpha = u.theta_v() - air.gamma;
    air
}

/// Simplified dynamics used by the allocator.
pub fn simplified_dynamics(
    state: &VehicleState,
    u: &ControlInputVector,
    params: &VehicleParams,
) -> Accelerations {
    let air = airdata_for_virtual(state, u);
    let k = thrust_torque_coeffs(air.airspeed, params);
    simplified_with(state, u, &air, &k, params)
}

fn simplified_with(
    state: &VehicleState,
    u: &ControlInputVector,
    air: &AirdataSample,
    k: &PropellerCoeffsAt,
    params: &VehicleParams,
) -> Accelerations {
    let r_cb = body_to_control(u.phi_v(), u.theta_v());
    let forces = r_cb * (body_thrust_sum(u, k.k_thrust) + aero_body(air, params));
    let rm = rotor_moments_with(u, state.rates, &ActuatorRates::default(), k, params);
    let moments = gyro_torque(state.rates, params)
        + rm.primary()
        + aero_moments(air, state.rates, params)
        + aileron_moment(air, u.aileron(), params);
    Accelerations {
        linear: forces.scale(1.0 / params.mass) + gravity_control(state.att.psi),
        angular: inv_inertia(params, moments),
    }
}

/// Simplified dynamics and its Jacobian with respect to the 15 inputs
/// (row = acceleration channel, column = input index).
pub fn simplified_dynamics_jacobian(
    state: &VehicleState,
    u: &ControlInputVector,
    params: &VehicleParams,
) -> (Accelerations, [[f64; NUM_INPUTS]; 6]) {
    let air = airdata_for_virtual(state, u);
    let k = thrust_torque_coeffs(air.airspeed, params);
    let value = simplified_with(state, u, &air, &k, params);

    let mut jac = [[0.0; NUM_INPUTS]; 6];
    let mut set_col = |col: usize, lin: Vec3, ang: Vec3| {
        jac[0][col] = lin.x;
        jac[1][col] = lin.y;
        jac[2][col] = lin.z;
        jac[3][col] = ang.x;
        jac[4][col] = ang.y;
        jac[5][col] = ang.z;
    };

    let (phi, theta) = (u.phi_v(), u.theta_v());
    let r_cb = body_to_control(phi, theta);
    let inv_m = 1.0 / params.mass;

    for i in 0..NUM_ROTORS {
        let sign = spin_sign(i);
        let w = u.omega(i);
        let (b, g) = (u.elevation(i), u.azimuth(i));
        let (sb, cb) = (sin(b), cos(b));
        let (sg, cg) = (sin(g), cos(g));
        let axis = Vec3::new(sb, -sg * cb, cg * cb);
        let d_axis_b = Vec3::new(cb, sg * sb, -cg * sb);
        let d_axis_g = Vec3::new(0.0, -cg * cb, -sg * cb);
        let pos = params.rotor_positions[i];

        let column = |d_axis: Vec3, thrust_scale: f64, torque_scale: f64| {
            let df = d_axis.scale(-thrust_scale);
            let lin = (r_cb * df).scale(inv_m);
            let ang = inv_inertia(params, pos.cross(df) + d_axis.scale(-torque_scale * sign));
            (lin, ang)
        };

        let (lin, ang) = column(axis, 2.0 * k.k_thrust * w, 2.0 * k.k_torque * w);
        set_col(OMEGA + i, lin, ang);
        let (lin, ang) = column(d_axis_b, k.k_thrust * w * w, k.k_torque * w * w);
        set_col(ELEVATION + i, lin, ang);
        let (lin, ang) = column(d_axis_g, k.k_thrust * w * w, k.k_torque * w * w);
        set_col(AZIMUTH + i, lin, ang);
    }

    let q = dynamic_pressure(&air, params);
    set_col(
        AILERON,
        Vec3::ZERO,
        inv_inertia(
            params,
            Vec3::new(q * params.mean_chord * params.aero.c_ml_delta_a, 0.0, 0.0),
        ),
    );

    let body_force = body_thrust_sum(u, k.k_thrust) + aero_body(&air, params);
    let (d_phi, d_theta) = body_to_control_partials(phi, theta);
    set_col(PHI_V, (d_phi * body_force).scale(inv_m), Vec3::ZERO);

    // θ_v moves both the body axes and the angle of attack.
    let a = &params.aero;
    let cl = a.c_l0 + a.c_l_alpha * air.alpha;
    let (d, y, l) = drag_side_lift(&air, params);
    let dd = 2.0 * q * a.k_cd * cl * a.c_l_alpha;
    let dl = q * a.c_l_alpha;
    let d_aero = wind_to_body_dalpha(air.alpha, air.beta) * Vec3::new(-d, y, -l)
        + wind_to_body(air.alpha, air.beta) * Vec3::new(-dd, 0.0, -dl);
    let lin = (d_theta * body_force + r_cb * d_aero).scale(inv_m);
    let ang = inv_inertia(params, Vec3::new(0.0, q * params.mean_chord * a.c_m_alpha, 0.0));
    set_col(THETA_V, lin, ang);

    (value, jac)
}

/// Equal-speed hover rotor speed: `4 K_T Ω² = m g`.
pub fn hover_rotor_speed(params: &VehicleParams) -> f64 {
    sqrt(params.weight() / (NUM_ROTORS as f64 * params.propeller.k_thrust0))
}

/// Input vector for level hover with zero tilt, rotors at `omega`.
pub fn hover_input(omega: f64) -> ControlInputVector {
    let mut u = ControlInputVector::ZERO;
    for i in 0..NUM_ROTORS {
        u[OMEGA + i] = omega;
    }
    u
}

/// Mirror image of a control input about the body x-z plane: rotors 1↔2 and
/// 3↔4 swap, azimuth tilts, aileron and roll change sign.
pub fn mirror_input(u: &ControlInputVector) -> ControlInputVector {
    let swap = [1, 0, 3, 2];
    let mut m = *u;
    for i in 0..NUM_ROTORS {
        m[OMEGA + i] = u.omega(swap[i]);
        m[ELEVATION + i] = u.elevation(swap[i]);
        m[AZIMUTH + i] = -u.azimuth(swap[i]);
    }
    m[AILERON] = -u.aileron();
    m[PHI_V] = -u.phi_v();
    m
}

/// Body-frame specific force (what an accelerometer reads).
pub fn specific_force_body(state: &VehicleState, accel: &Accelerations) -> Vec3 {
    let r_cb: Mat3 = body_to_control(state.att.phi, state.att.theta);
    r_cb.transpose() * (accel.linear - gravity_control(state.att.psi))
}
