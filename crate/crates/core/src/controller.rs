//! Outer loops around the allocator: coordinated-turn yaw-rate reference,
//! the linear error controller, feedback filtering and the per-step solve.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::actuation::{estimate_current_input, ActuatorBank, ActuatorConfig, ActuatorLimits};
use crate::allocation::{
    desired_input_vector, solve_allocation, AllocationParams, AllocationProblem,
    AllocationSolution, NUM_ACCELS,
};
use crate::clock::Clock;
use crate::dynamics::{airdata, thrust_torque_coeffs, Accelerations, VehicleState};
use crate::error::{Error, Result};
use crate::filter::Butterworth2Array;
use crate::frames::{euler_rate_matrix_inverse, EulerAttitude};
use crate::input::{ControlInputVector, NUM_ACTUATORS, NUM_INPUTS, NUM_ROTORS, PHI_V, THETA_V};
use crate::math::{clamp, sin, tan, Vec3};
use crate::params::{VehicleParams, GRAVITY};

/// Gain schedule. The attitude and rate gains scale with
/// `K_v = max(1 − slope·V_a, floor)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerGains {
    pub k_v_slope: f64,
    pub k_v_floor: f64,
    /// Multiples of `K_v`.
    pub roll: f64,
    pub pitch: f64,
    pub roll_rate: f64,
    pub pitch_rate: f64,
    pub yaw_rate: f64,
    /// Velocity-error gains, 1/s.
    pub vel_x: f64,
    pub vel_y: f64,
    pub vel_z: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            k_v_slope: 0.03,
            k_v_floor: 0.1,
            roll: 1.0,
            pitch: 1.0,
            roll_rate: 4.0,
            pitch_rate: 4.0,
            yaw_rate: 5.0,
            vel_x: 1.0,
            vel_y: 1.0,
            vel_z: 3.0,
        }
    }
}

/// Gains evaluated at one airspeed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduledGains {
    pub k_v: f64,
    pub k_phi: f64,
    pub k_theta: f64,
    pub k_p: f64,
    pub k_q: f64,
    pub k_r: f64,
    pub k_xdot: f64,
    pub k_ydot: f64,
    pub k_zdot: f64,
    /// Weight of the lateral-velocity feedback, `1 − K_Ψair`.
    pub k_ydot0: f64,
}

impl ControllerGains {
    pub fn k_v(&self, va: f64) -> f64 {
        (1.0 - self.k_v_slope * va).max(self.k_v_floor)
    }

    pub fn schedule(&self, va: f64, yaw: &YawRefParams) -> ScheduledGains {
        let k_v = self.k_v(va);
        ScheduledGains {
            k_v,
            k_phi: self.roll * k_v,
            k_theta: self.pitch * k_v,
            k_p: self.roll_rate * k_v,
            k_q: self.pitch_rate * k_v,
            k_r: self.yaw_rate * k_v,
            k_xdot: self.vel_x,
            k_ydot: self.vel_y,
            k_zdot: self.vel_z,
            k_ydot0: 1.0 - k_psi_air(va, yaw),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Limit {
    pub min: f64,
    pub max: f64,
}

impl Limit {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub fn apply(&self, x: f64) -> f64 {
        clamp(x, self.min, self.max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationLimits {
    /// Velocity references, m/s.
    pub vel_x: Limit,
    pub vel_y: Limit,
    pub vel_z: Limit,
    /// Acceleration commands, m/s².
    pub acc_x: Limit,
    pub acc_y: Limit,
    pub acc_z: Limit,
}

impl Default for SaturationLimits {
    fn default() -> Self {
        Self {
            vel_x: Limit::new(-4.0, 15.0),
            vel_y: Limit::new(-8.0, 8.0),
            vel_z: Limit::new(-6.0, 6.0),
            acc_x: Limit::new(-3.0, 3.0),
            acc_y: Limit::new(-4.0, 4.0),
            acc_z: Limit::new(-5.0, 5.0),
        }
    }
}

impl SaturationLimits {
    pub fn validate(&self) -> Result<()> {
        for (name, l) in [
            ("controller.saturations.vel_x", self.vel_x),
            ("controller.saturations.vel_y", self.vel_y),
            ("controller.saturations.vel_z", self.vel_z),
            ("controller.saturations.acc_x", self.acc_x),
            ("controller.saturations.acc_y", self.acc_y),
            ("controller.saturations.acc_z", self.acc_z),
        ] {
            if !(l.min < l.max) {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("min ({}) must be below max ({})", l.min, l.max),
                });
            }
        }
        Ok(())
    }
}

/// Coordinated-turn block parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct YawRefParams {
    /// Sideslip feedback gain, s/m.
    pub k_beta: f64,
    /// Below this airspeed the roll feed-forward is off, m/s.
    pub v_low: f64,
    /// Above this airspeed the roll feed-forward is fully on, m/s.
    pub v_high: f64,
    /// Lower bound on the airspeed in the feed-forward term, m/s.
    pub va_floor: f64,
}

impl Default for YawRefParams {
    fn default() -> Self {
        Self {
            k_beta: 0.15,
            v_low: 4.0,
            v_high: 6.0,
            va_floor: 10.0,
        }
    }
}

/// `K_Ψair`: 0 below `v_low`, 1 above `v_high`, linear in between.
pub fn k_psi_air(va: f64, yaw: &YawRefParams) -> f64 {
    if va <= yaw.v_low {
        0.0
    } else if va >= yaw.v_high {
        1.0
    } else {
        (va - yaw.v_low) / (yaw.v_high - yaw.v_low)
    }
}

/// Body lateral acceleration with the azimuth-tilt thrust contribution removed.
pub fn corrected_lateral_accel(
    y_body: f64,
    omega: &[f64; NUM_ROTORS],
    g: &[f64; NUM_ROTORS],
    mass: f64,
    k_thrust: f64,
) -> f64 {
    let tilt: f64 = (0..NUM_ROTORS).map(|i| omega[i] * omega[i] * sin(g[i])).sum();
    y_body - k_thrust / mass * tilt
}

/// Yaw-rate command: roll feed-forward, sideslip feedback and the pilot term.
pub fn coordinated_turn_yaw_rate(
    phi: f64,
    va: f64,
    y_c: f64,
    psi_dot_d: f64,
    yaw: &YawRefParams,
) -> f64 {
    let va_c = va.max(yaw.va_floor);
    GRAVITY * tan(phi) / va_c * k_psi_air(va, yaw) - y_c * yaw.k_beta + psi_dot_d
}

/// References for one control step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Setpoints {
    /// Velocity in the control frame, m/s.
    pub vel: Vec3,
    pub theta_d: f64,
    pub phi_d: f64,
    pub psi_dot_d: f64,
}

impl Setpoints {
    pub fn is_finite(&self) -> bool {
        self.vel.is_finite()
            && self.theta_d.is_finite()
            && self.phi_d.is_finite()
            && self.psi_dot_d.is_finite()
    }
}

/// Desired accelerations `(ẍ, ÿ, z̈, ṗ, q̇, ṙ)`: saturated velocity loops on
/// the linear axes, cascaded attitude and rate loops on the angular axes.
pub fn error_controller(
    state: &VehicleState,
    attitude_ref: (f64, f64),
    setpoints: &Setpoints,
    yaw_rate_cmd: f64,
    gains: &ScheduledGains,
    sats: &SaturationLimits,
) -> [f64; NUM_ACCELS] {
    let v = state.vel_control();
    let vx_ref = sats.vel_x.apply(setpoints.vel.x);
    let vy_ref = sats.vel_y.apply(setpoints.vel.y);
    let vz_ref = sats.vel_z.apply(setpoints.vel.z);
    let ax = sats.acc_x.apply(gains.k_xdot * (vx_ref - v.x));
    let ay = sats.acc_y.apply(gains.k_ydot * (vy_ref - gains.k_ydot0 * v.y));
    let az = sats.acc_z.apply(gains.k_zdot * (vz_ref - v.z));

    let (phi_ref, theta_ref) = attitude_ref;
    let euler_rate_ref = Vec3::new(
        gains.k_phi * (phi_ref - state.att.phi),
        gains.k_theta * (theta_ref - state.att.theta),
        yaw_rate_cmd,
    );
    let rate_ref = euler_rate_matrix_inverse(&state.att) * euler_rate_ref;
    let w = state.rates;
    [
        ax,
        ay,
        az,
        gains.k_p * (rate_ref.x - w.x),
        gains.k_q * (rate_ref.y - w.y),
        gains.k_r * (rate_ref.z - w.z),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerParams {
    pub gains: ControllerGains,
    pub saturations: SaturationLimits,
    pub yaw: YawRefParams,
    /// Feedback filter natural frequency, rad/s.
    pub filter_cutoff: f64,
    pub allocation: AllocationParams,
}

impl Default for ControllerParams {
    fn default() -> Self {
        Self {
            gains: ControllerGains::default(),
            saturations: SaturationLimits::default(),
            yaw: YawRefParams::default(),
            filter_cutoff: 13.0,
            allocation: AllocationParams::default(),
        }
    }
}

impl ControllerParams {
    pub fn validate(&self) -> Result<()> {
        self.saturations.validate()?;
        if !(self.yaw.v_low < self.yaw.v_high) {
            return Err(Error::InvalidParameter {
                name: "controller.yaw.v_low",
                reason: format!("must be below v_high ({})", self.yaw.v_high),
            });
        }
        if !(self.yaw.va_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "controller.yaw.va_floor",
                reason: format!("must be > 0, got {}", self.yaw.va_floor),
            });
        }
        if !(self.gains.k_v_floor > 0.0) {
            return Err(Error::InvalidParameter {
                name: "controller.gains.k_v_floor",
                reason: format!("must be > 0, got {}", self.gains.k_v_floor),
            });
        }
        if !(self.filter_cutoff > 0.0) {
            return Err(Error::InvalidParameter {
                name: "controller.filter_cutoff",
                reason: format!("must be > 0, got {}", self.filter_cutoff),
            });
        }
        self.allocation.validate()
    }
}

/// What the controller sees each step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurement {
    pub state: VehicleState,
    /// Linear (control frame) and angular accelerations.
    pub accel: Accelerations,
    /// Accelerometer reading in the body frame.
    pub specific_force: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerOutput {
    pub commands: [f64; NUM_ACTUATORS],
    pub phi_v: f64,
    pub theta_v: f64,
    /// Desired accelerations.
    pub yd: [f64; NUM_ACCELS],
    /// Filtered measured accelerations.
    pub y0: [f64; NUM_ACCELS],
    /// Filtered current input.
    pub u0: ControlInputVector,
    pub yaw_rate_cmd: f64,
    pub airspeed: f64,
    /// Attitude references used this step.
    pub attitude_ref: (f64, f64),
    /// Pitch bounds the allocator solved under.
    pub pitch_bounds: (f64, f64),
    pub solution: AllocationSolution,
}

const FILTERED_STATE: usize = 6;

/// Incremental controller with its own actuator model.
#[derive(Debug, Clone)]
pub struct Controller {
    params: ControllerParams,
    vehicle: VehicleParams,
    limits: ActuatorLimits,
    model: ActuatorBank,
    accel_filter: Butterworth2Array<NUM_ACCELS>,
    input_filter: Butterworth2Array<NUM_INPUTS>,
    state_filter: Butterworth2Array<FILTERED_STATE>,
    attitude_ref: Option<(f64, f64)>,
}

impl Controller {
    /// `initial` is the actuator state the vehicle starts from.
    pub fn new(
        params: ControllerParams,
        vehicle: VehicleParams,
        actuators: &ActuatorConfig,
        limits: ActuatorLimits,
        dt: f64,
        initial: &[f64; NUM_ACTUATORS],
    ) -> Result<Self> {
        params.validate()?;
        vehicle.validate()?;
        let model = ActuatorBank::new(actuators, &limits, dt, initial)?;
        let wn = params.filter_cutoff;
        Ok(Self {
            accel_filter: Butterworth2Array::new(wn, dt)?,
            input_filter: Butterworth2Array::new(wn, dt)?,
            state_filter: Butterworth2Array::new(wn, dt)?,
            params,
            vehicle,
            limits,
            model,
            attitude_ref: None,
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn vehicle(&self) -> &VehicleParams {
        &self.vehicle
    }

    pub fn model(&self) -> &ActuatorBank {
        &self.model
    }

    pub fn step<C: Clock + ?Sized>(
        &mut self,
        meas: &Measurement,
        setpoints: &Setpoints,
        clock: &C,
    ) -> ControllerOutput {
        let state = meas.state;
        let u0_raw = estimate_current_input(&self.model, &state.att);
        let v = state.vel_control();
        let x_raw = [v.x, v.y, v.z, state.rates.x, state.rates.y, state.rates.z];
        let y_raw = meas.accel.to_array();
        let first = self.attitude_ref.is_none();
        if first {
            self.accel_filter.reset(&y_raw);
            self.input_filter.reset(&u0_raw.0);
            self.state_filter.reset(&x_raw);
        }
        let y0 = self.accel_filter.step(&y_raw);
        let u0 = ControlInputVector(self.input_filter.step(&u0_raw.0));
        let xf = self.state_filter.step(&x_raw);
        let mut x0 = state;
        x0.att = EulerAttitude::new(u0[PHI_V], u0[THETA_V], state.att.psi);
        x0.set_vel_control(Vec3::new(xf[0], xf[1], xf[2]));
        x0.rates = Vec3::new(xf[3], xf[4], xf[5]);

        let air = airdata(&state);
        let va = air.airspeed;
        let p = &self.params;
        let gains = p.gains.schedule(va, &p.yaw);
        let k = thrust_torque_coeffs(va, &self.vehicle).k_thrust;
        let omega: [f64; NUM_ROTORS] = core::array::from_fn(|i| u0_raw.omega(i));
        let az: [f64; NUM_ROTORS] = core::array::from_fn(|i| u0_raw.azimuth(i));
        let y_c = corrected_lateral_accel(meas.specific_force.y, &omega, &az, self.vehicle.mass, k);
        let yaw_rate_cmd =
            coordinated_turn_yaw_rate(state.att.phi, va, y_c, setpoints.psi_dot_d, &p.yaw);
        let attitude_ref = self
            .attitude_ref
            .unwrap_or((state.att.phi, state.att.theta));
        let yd = error_controller(&state, attitude_ref, setpoints, yaw_rate_cmd, &gains, &p.saturations);

        let ud = desired_input_vector(
            setpoints.theta_d,
            setpoints.phi_d,
            p.allocation.desired_motor_speed,
        );
        let problem = AllocationProblem::new(
            &self.vehicle,
            &p.allocation,
            &self.limits,
            x0,
            u0,
            y0,
            yd,
            ud,
        );
        let solution = solve_allocation(&problem, &p.allocation.budget, clock);
        let (lo, hi) = problem.physical_bounds();
        let pitch_bounds = (lo[THETA_V], hi[THETA_V]);
        let commands = solution.u_s.actuators();
        self.model.step(&commands);
        let (phi_v, theta_v) = (solution.u_s.phi_v(), solution.u_s.theta_v());
        self.attitude_ref = Some((phi_v, theta_v));

        ControllerOutput {
            commands,
            phi_v,
            theta_v,
            yd,
            y0,
            u0,
            yaw_rate_cmd,
            airspeed: va,
            attitude_ref,
            pitch_bounds,
            solution,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::deg;

    #[test]
    fn k_psi_air_ramp() {
        let y = YawRefParams::default();
        assert_eq!(k_psi_air(3.0, &y), 0.0);
        assert!((k_psi_air(5.0, &y) - 0.5).abs() < 1e-15);
        assert_eq!(k_psi_air(10.0, &y), 1.0);
        let g = ControllerGains::default();
        for va in [0.0, 3.0, 4.5, 5.0, 5.9, 6.0, 20.0] {
            let s = g.schedule(va, &y);
            assert!((s.k_ydot0 + k_psi_air(va, &y) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn lateral_accel_correction() {
        let omega = [1000.0; 4];
        assert_eq!(corrected_lateral_accel(0.7, &omega, &[0.0; 4], 2.44, 0.55e-5), 0.7);
        assert_eq!(corrected_lateral_accel(0.7, &[0.0; 4], &[0.3; 4], 2.44, 0.55e-5), 0.7);
    }

    #[test]
    fn yaw_rate_law() {
        let y = YawRefParams::default();
        assert!((coordinated_turn_yaw_rate(0.0, 0.0, 0.0, 0.2, &y) - 0.2).abs() < 1e-15);
        let r = coordinated_turn_yaw_rate(deg(20.0), 15.0, 0.0, 0.0, &y);
        assert!((r - 9.81 * tan(deg(20.0)) / 15.0).abs() < 1e-12);
        assert!((r - 0.238).abs() < 1e-3);
        let r = coordinated_turn_yaw_rate(deg(20.0), 0.0, 0.4, 0.1, &y);
        assert!((r - (-0.4 * 0.15 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn yaw_rate_continuous_across_ramp() {
        let y = YawRefParams::default();
        let mut prev = coordinated_turn_yaw_rate(0.3, 3.9, 0.2, 0.0, &y);
        let mut va = 3.9;
        while va < 6.2 {
            va += 1e-4;
            let r = coordinated_turn_yaw_rate(0.3, va, 0.2, 0.0, &y);
            assert!((r - prev).abs() < 1e-3);
            prev = r;
        }
    }

    fn gains(va: f64) -> ScheduledGains {
        ControllerGains::default().schedule(va, &YawRefParams::default())
    }

    #[test]
    fn error_controller_zero_error() {
        let s = VehicleState::default();
        let yd = error_controller(
            &s,
            (0.0, 0.0),
            &Setpoints::default(),
            0.0,
            &gains(0.0),
            &SaturationLimits::default(),
        );
        assert_eq!(yd, [0.0; 6]);
    }

    #[test]
    fn error_controller_forward_speed() {
        let s = VehicleState::default();
        let sats = SaturationLimits::default();
        let mut sp = Setpoints::default();
        sp.vel.x = 1.0;
        let yd = error_controller(&s, (0.0, 0.0), &sp, 0.0, &gains(0.0), &sats);
        assert_eq!(yd[0], 1.0);
        sp.vel.x = 10.0;
        let yd = error_controller(&s, (0.0, 0.0), &sp, 0.0, &gains(0.0), &sats);
        assert_eq!(yd[0], 3.0);
    }

    #[test]
    fn lateral_feedback_vanishes_at_speed() {
        let mut s = VehicleState::default();
        s.set_vel_control(Vec3::new(12.0, 1.5, 0.0));
        let mut sp = Setpoints::default();
        sp.vel = Vec3::new(12.0, 2.0, 0.0);
        let yd = error_controller(&s, (0.0, 0.0), &sp, 0.0, &gains(12.0), &SaturationLimits::default());
        assert_eq!(yd[1], 2.0);
    }

    #[test]
    fn attitude_bandwidth_non_increasing() {
        let g = ControllerGains::default();
        let mut prev = f64::INFINITY;
        for i in 0..100 {
            let k = g.k_v(i as f64 * 0.5);
            assert!(k <= prev && k >= 0.1);
            prev = k;
        }
    }
}
