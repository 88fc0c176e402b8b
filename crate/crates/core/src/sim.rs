//! Closed-loop simulation: RK4 on the full equations of motion, the physical
//! actuator bank at the physics rate, the controller at the control rate
//! with zero-order hold in between, and metric extraction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::actuation::{ActuatorBank, ActuatorConfig, ActuatorLimits};
use crate::allocation::NUM_ACCELS;
use crate::clock::Clock;
use crate::controller::{Controller, ControllerParams, Measurement, Setpoints};
use crate::dynamics::{
    airdata, full_eom, hover_input, hover_rotor_speed, specific_force_body, thrust_torque_coeffs,
    AirdataSample, VehicleState,
};
use crate::error::{Error, Result};
use crate::frames::{control_to_earth, euler_rate_matrix, EulerAttitude};
use crate::input::{
    ActuatorRates, ControlInputVector, AZIMUTH, NUM_ACTUATORS, NUM_ROTORS, PHI_V,
    THETA_V,
};
use crate::math::{deg, round, sqrt, Vec3};
use crate::params::VehicleParams;
use crate::sqp::Termination;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub enabled: bool,
    /// Accelerometer white noise, m/s².
    pub accel_sigma: f64,
    /// Gyro white noise, rad/s.
    pub gyro_sigma: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            accel_sigma: 0.2,
            gyro_sigma: 0.01,
        }
    }
}

/// Bounds beyond which the run is declared diverged.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DivergenceLimits {
    pub max_speed: f64,
    pub max_rate: f64,
    pub max_tilt_deg: f64,
    pub max_altitude_change: f64,
}

impl Default for DivergenceLimits {
    fn default() -> Self {
        Self {
            max_speed: 60.0,
            max_rate: 20.0,
            max_tilt_deg: 85.0,
            max_altitude_change: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_physics: f64,
    pub dt_control: f64,
    /// Overrides the script length when set, s.
    pub duration: Option<f64>,
    pub initial_altitude: f64,
    pub seed: u64,
    /// Let the solver's wall-time budget cut iterations short. Off by
    /// default so that logs depend only on the configuration and seed; the
    /// iteration cap still bounds every solve and wall times are still
    /// measured.
    pub enforce_wall_time_budget: bool,
    pub noise: NoiseConfig,
    pub divergence: DivergenceLimits,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_physics: 0.001,
            dt_control: 0.004,
            duration: None,
            initial_altitude: 50.0,
            seed: 0,
            enforce_wall_time_budget: false,
            noise: NoiseConfig::default(),
            divergence: DivergenceLimits::default(),
        }
    }
}

impl SimConfig {
    /// Physics substeps per control step.
    pub fn substeps(&self) -> usize {
        round(self.dt_control / self.dt_physics) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.dt_physics > 0.0) {
            return bad("sim.dt_physics", format!("must be > 0, got {}", self.dt_physics));
        }
        if !(self.dt_control >= self.dt_physics) {
            return bad(
                "sim.dt_control",
                format!("must be >= dt_physics ({}), got {}", self.dt_physics, self.dt_control),
            );
        }
        let n = self.dt_control / self.dt_physics;
        if (n - round(n)).abs() > 1e-9 {
            return bad(
                "sim.dt_control",
                format!("must be a whole multiple of dt_physics, ratio is {n}"),
            );
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0) {
                return bad("sim.duration", format!("must be >= 0, got {d}"));
            }
        }
        if self.noise.accel_sigma < 0.0 || self.noise.gyro_sigma < 0.0 {
            return bad("sim.noise", "standard deviations must be >= 0".into());
        }
        Ok(())
    }
}

/// Everything a closed-loop run needs.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSetup {
    pub vehicle: VehicleParams,
    pub actuators: ActuatorConfig,
    pub actuator_limits: ActuatorLimits,
    pub controller: ControllerParams,
    pub sim: SimConfig,
}

impl SimSetup {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.actuators.validate()?;
        self.actuator_limits.validate()?;
        self.controller.validate()?;
        self.sim.validate()
    }
}

/// State derivative pieces for RK4.
fn derivative(
    s: &VehicleState,
    u: &ControlInputVector,
    rates: &ActuatorRates,
    params: &VehicleParams,
) -> Result<(Vec3, Vec3, Vec3, Vec3)> {
    let a = full_eom(s, u, rates, params);
    let vel_dot = control_to_earth(s.att.psi) * a.linear;
    let euler_dot = euler_rate_matrix(&s.att)? * s.rates;
    Ok((s.vel, vel_dot, euler_dot, a.angular))
}

fn offset(s: &VehicleState, d: &(Vec3, Vec3, Vec3, Vec3), h: f64) -> VehicleState {
    VehicleState {
        pos: s.pos + d.0.scale(h),
        vel: s.vel + d.1.scale(h),
        att: EulerAttitude::new(
            s.att.phi + d.2.x * h,
            s.att.theta + d.2.y * h,
            s.att.psi + d.2.z * h,
        ),
        rates: s.rates + d.3.scale(h),
    }
}

/// One classical RK4 step of the full equations of motion with inputs held.
pub fn rk4_step(
    state: &VehicleState,
    u: &ControlInputVector,
    rates: &ActuatorRates,
    params: &VehicleParams,
    dt: f64,
) -> Result<VehicleState> {
    let k1 = derivative(state, u, rates, params)?;
    let k2 = derivative(&offset(state, &k1, 0.5 * dt), u, rates, params)?;
    let k3 = derivative(&offset(state, &k2, 0.5 * dt), u, rates, params)?;
    let k4 = derivative(&offset(state, &k3, dt), u, rates, params)?;
    let combine = |f: fn(&(Vec3, Vec3, Vec3, Vec3)) -> Vec3| {
        (f(&k1) + f(&k2).scale(2.0) + f(&k3).scale(2.0) + f(&k4)).scale(dt / 6.0)
    };
    let dp = combine(|k| k.0);
    let dv = combine(|k| k.1);
    let de = combine(|k| k.2);
    let dw = combine(|k| k.3);
    Ok(VehicleState {
        pos: state.pos + dp,
        vel: state.vel + dv,
        att: EulerAttitude::new(
            state.att.phi + de.x,
            state.att.theta + de.y,
            state.att.psi + de.z,
        ),
        rates: state.rates + dw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ManeuverKind {
    Hover,
    Transition1,
    Transition2,
}

impl ManeuverKind {
    pub const ALL: [ManeuverKind; 3] = [Self::Hover, Self::Transition1, Self::Transition2];

    pub fn name(self) -> &'static str {
        match self {
            Self::Hover => "hover",
            Self::Transition1 => "transition-1",
            Self::Transition2 => "transition-2",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }
}

/// Setpoints from `start` on. Velocity setpoints move linearly from the
/// previous segment's values over `ramp` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub setpoints: Setpoints,
    #[serde(default)]
    pub ramp: f64,
}

/// Piecewise-constant setpoint timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverScript {
    pub kind: ManeuverKind,
    pub segments: Vec<Segment>,
    pub duration: f64,
}

/// Time at which forward acceleration starts in the transition scripts, s.
pub const TRANSITION_START: f64 = 5.0;
/// Time at which the deceleration back to hover starts, s.
pub const DECELERATION_START: f64 = 42.0;
/// Duration of the forward speed ramps, s.
pub const ACCELERATION_RAMP: f64 = 10.0;

impl ManeuverScript {
    pub fn hover(duration: f64) -> Self {
        Self {
            kind: ManeuverKind::Hover,
            segments: alloc::vec![Segment {
                start: 0.0,
                setpoints: Setpoints::default(),
                ramp: 0.0,
            }],
            duration,
        }
    }

    /// Hover, accelerate to 15 m/s, two opposite lateral legs, back to hover.
    pub fn transition(theta_d: f64) -> Self {
        let sp = |vx: f64, vy: f64| Setpoints {
            vel: Vec3::new(vx, vy, 0.0),
            theta_d,
            ..Setpoints::default()
        };
        let seg = |start, setpoints| Segment {
            start,
            setpoints,
            ramp: 0.0,
        };
        let ramped = |start, setpoints, ramp| Segment {
            start,
            setpoints,
            ramp,
        };
        Self {
            kind: if theta_d == 0.0 {
                ManeuverKind::Transition1
            } else {
                ManeuverKind::Transition2
            },
            segments: alloc::vec![
                seg(0.0, sp(0.0, 0.0)),
                ramped(TRANSITION_START, sp(15.0, 0.0), ACCELERATION_RAMP),
                seg(25.0, sp(15.0, 2.0)),
                seg(31.0, sp(15.0, -2.0)),
                seg(37.0, sp(15.0, 0.0)),
                ramped(DECELERATION_START, sp(0.0, 0.0), ACCELERATION_RAMP),
            ],
            duration: 60.0,
        }
    }

    pub fn for_kind(kind: ManeuverKind) -> Self {
        match kind {
            ManeuverKind::Hover => Self::hover(10.0),
            ManeuverKind::Transition1 => Self::transition(0.0),
            ManeuverKind::Transition2 => Self::transition(deg(25.0)),
        }
    }

    pub fn setpoints_at(&self, t: f64) -> Setpoints {
        let n = self.segments.iter().take_while(|s| s.start <= t).count();
        if n == 0 {
            return Setpoints::default();
        }
        let seg = &self.segments[n - 1];
        let mut sp = seg.setpoints;
        if n >= 2 && seg.ramp > 0.0 && t < seg.start + seg.ramp {
            let from = self.segments[n - 2].setpoints.vel;
            let f = (t - seg.start) / seg.ramp;
            sp.vel = from + (sp.vel - from).scale(f);
        }
        sp
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.segments.first().is_some_and(|s| s.start == 0.0)
            && self.segments.windows(2).all(|w| w[0].start <= w[1].start)
            && self.segments.iter().all(|s| s.ramp >= 0.0)
            && self.segments.iter().all(|s| s.setpoints.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "maneuver",
                reason: "segments must start at 0 with non-decreasing times".into(),
            })
        }
    }
}

/// One row of the simulation log, written once per control step.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub time: f64,
    pub state: VehicleState,
    pub air: AirdataSample,
    pub setpoints: Setpoints,
    /// Allocator output `u_s` (physical commands plus virtual attitude).
    pub command: ControlInputVector,
    /// Physical actuator positions.
    pub actual: [f64; NUM_ACTUATORS],
    pub yd: [f64; NUM_ACCELS],
    /// Filtered measured accelerations seen by the allocator.
    pub y0: [f64; NUM_ACCELS],
    /// True accelerations after the step.
    pub achieved: [f64; NUM_ACCELS],
    pub yaw_rate_cmd: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub cost: f64,
    pub residual_norm: f64,
    pub weighted_residual_norm: f64,
    pub termination: Termination,
    pub fallback: bool,
    /// Pitch bounds the allocator solved under.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Virtual pitch pinned at a pitch bound.
    pub theta_at_bound: bool,
    pub phi_at_bound: bool,
    /// Number of motors at a speed limit.
    pub motors_saturated: u8,
    /// Propeller coefficients evaluated outside their identified range.
    pub coeff_clamped: bool,
}

/// Column names of a CSV rendering of [`LogRecord`], in the order produced by
/// [`LogRecord::values`].
pub fn log_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "time", "pos_n", "pos_e", "pos_d", "vel_x", "vel_y", "vel_z", "phi", "theta", "psi", "p",
        "q", "r", "airspeed", "alpha", "beta", "gamma", "sp_vel_x", "sp_vel_y", "sp_vel_z",
        "sp_theta", "sp_phi", "sp_psi_dot",
    ]
    .iter()
    .map(|s| String::from(*s))
    .collect();
    for n in crate::input::INPUT_NAMES {
        h.push(format!("cmd_{n}"));
    }
    for n in &crate::input::INPUT_NAMES[..NUM_ACTUATORS] {
        h.push(format!("act_{n}"));
    }
    for prefix in ["yd", "y0", "acc"] {
        for axis in ["x", "y", "z", "p", "q", "r"] {
            h.push(format!("{prefix}_{axis}"));
        }
    }
    for s in [
        "yaw_rate_cmd",
        "iterations",
        "evaluations",
        "cost",
        "residual_norm",
        "weighted_residual_norm",
        "termination",
        "fallback",
        "theta_min",
        "theta_max",
        "theta_at_bound",
        "phi_at_bound",
        "motors_saturated",
        "coeff_clamped",
    ] {
        h.push(String::from(s));
    }
    h
}

fn termination_name(t: Termination) -> &'static str {
    match t {
        Termination::Converged => "converged",
        Termination::IterationBudget => "iteration_budget",
        Termination::TimeBudget => "time_budget",
        Termination::Stalled => "stalled",
        Termination::NonFinite => "non_finite",
    }
}

impl LogRecord {
    /// Field values as strings, matching [`log_header`].
    pub fn values(&self) -> Vec<String> {
        let s = &self.state;
        let v = s.vel_control();
        let sp = &self.setpoints;
        let mut out: Vec<String> = [
            self.time,
            s.pos.x,
            s.pos.y,
            s.pos.z,
            v.x,
            v.y,
            v.z,
            s.att.phi,
            s.att.theta,
            s.att.psi,
            s.rates.x,
            s.rates.y,
            s.rates.z,
            self.air.airspeed,
            self.air.alpha,
            self.air.beta,
            self.air.gamma,
            sp.vel.x,
            sp.vel.y,
            sp.vel.z,
            sp.theta_d,
            sp.phi_d,
            sp.psi_dot_d,
        ]
        .iter()
        .map(|x| format!("{x}"))
        .collect();
        out.extend(self.command.0.iter().map(|x| format!("{x}")));
        out.extend(self.actual.iter().map(|x| format!("{x}")));
        for arr in [&self.yd, &self.y0, &self.achieved] {
            out.extend(arr.iter().map(|x| format!("{x}")));
        }
        out.push(format!("{}", self.yaw_rate_cmd));
        out.push(format!("{}", self.iterations));
        out.push(format!("{}", self.evaluations));
        out.push(format!("{}", self.cost));
        out.push(format!("{}", self.residual_norm));
        out.push(format!("{}", self.weighted_residual_norm));
        out.push(String::from(termination_name(self.termination)));
        out.push(format!("{}", self.fallback as u8));
        out.push(format!("{}", self.theta_min));
        out.push(format!("{}", self.theta_max));
        out.push(format!("{}", self.theta_at_bound as u8));
        out.push(format!("{}", self.phi_at_bound as u8));
        out.push(format!("{}", self.motors_saturated));
        out.push(format!("{}", self.coeff_clamped as u8));
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Completed,
    Diverged { time: f64, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub records: Vec<LogRecord>,
    /// Allocation wall time per control step, s.
    pub solver_times: Vec<f64>,
    /// Whole controller step wall time per control step, s.
    pub step_times: Vec<f64>,
    pub outcome: Outcome,
}

impl SimResult {
    pub fn diverged(&self) -> bool {
        matches!(self.outcome, Outcome::Diverged { .. })
    }
}

fn check_divergence(
    s: &VehicleState,
    z0: f64,
    lim: &DivergenceLimits,
) -> Option<String> {
    if !s.is_finite() {
        return Some("non-finite state".into());
    }
    let speed = s.vel.norm();
    if speed > lim.max_speed {
        return Some(format!("speed {speed:.1} m/s exceeds {}", lim.max_speed));
    }
    let rate = s.rates.norm();
    if rate > lim.max_rate {
        return Some(format!("body rate {rate:.1} rad/s exceeds {}", lim.max_rate));
    }
    let tilt = deg(lim.max_tilt_deg);
    if s.att.theta.abs() > tilt || s.att.phi.abs() > tilt {
        return Some(format!(
            "attitude (phi {:.1} deg, theta {:.1} deg) beyond {} deg",
            s.att.phi.to_degrees(),
            s.att.theta.to_degrees(),
            lim.max_tilt_deg
        ));
    }
    let dz = (s.pos.z - z0).abs();
    if dz > lim.max_altitude_change {
        return Some(format!("altitude change {dz:.1} m exceeds {}", lim.max_altitude_change));
    }
    None
}

/// Hover trim state and actuator positions at `altitude`.
pub fn hover_trim(params: &VehicleParams, limits: &ActuatorLimits, altitude: f64) -> Result<(VehicleState, [f64; NUM_ACTUATORS])> {
    let omega = hover_rotor_speed(params);
    if omega > limits.omega_max {
        return Err(Error::TrimInfeasible {
            required: omega,
            max: limits.omega_max,
        });
    }
    Ok((VehicleState::hover_at(altitude), hover_input(omega).actuators()))
}

/// Runs `script` in closed loop. Solver wall times come from `clock` and are
/// kept out of the log so logs are reproducible.
pub fn run_closed_loop<C: Clock + ?Sized>(
    setup: &SimSetup,
    script: &ManeuverScript,
    clock: &C,
) -> Result<SimResult> {
    setup.validate()?;
    script.validate()?;
    let cfg = &setup.sim;
    let params = &setup.vehicle;
    let (mut state, trim) = hover_trim(params, &setup.actuator_limits, cfg.initial_altitude)?;
    let z0 = state.pos.z;
    let mut plant = ActuatorBank::new(&setup.actuators, &setup.actuator_limits, cfg.dt_physics, &trim)?;
    let mut controller_params = setup.controller.clone();
    if !cfg.enforce_wall_time_budget {
        controller_params.allocation.budget.max_wall_time = f64::INFINITY;
    }
    let mut controller = Controller::new(
        controller_params,
        params.clone(),
        &setup.actuators,
        setup.actuator_limits,
        cfg.dt_control,
        &trim,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let accel_noise = Normal::new(0.0, cfg.noise.accel_sigma).map_err(|_| Error::InvalidParameter {
        name: "sim.noise.accel_sigma",
        reason: "invalid standard deviation".into(),
    })?;
    let gyro_noise = Normal::new(0.0, cfg.noise.gyro_sigma).map_err(|_| Error::InvalidParameter {
        name: "sim.noise.gyro_sigma",
        reason: "invalid standard deviation".into(),
    })?;

    let duration = cfg.duration.unwrap_or(script.duration);
    let steps = round(duration / cfg.dt_control) as usize;
    let substeps = cfg.substeps();
    let (lo, hi) = setup.actuator_limits.bounds();
    let mut u_phys = ControlInputVector::from_parts(&plant.outputs(), 0.0, 0.0);
    let mut accel = full_eom(&state, &u_phys, &plant.rates(), params);

    let mut result = SimResult {
        records: Vec::with_capacity(steps),
        solver_times: Vec::with_capacity(steps),
        step_times: Vec::with_capacity(steps),
        outcome: Outcome::Completed,
    };

    for k in 0..steps {
        let t = k as f64 * cfg.dt_control;
        let setpoints = script.setpoints_at(t);
        let mut meas = Measurement {
            state,
            accel,
            specific_force: specific_force_body(&state, &accel),
        };
        if cfg.noise.enabled {
            let mut n3 = |d: &Normal<f64>| {
                Vec3::new(d.sample(&mut rng), d.sample(&mut rng), d.sample(&mut rng))
            };
            let na = n3(&accel_noise);
            let ng = n3(&gyro_noise);
            meas.accel.linear += na;
            meas.specific_force += na;
            meas.state.rates += ng;
        }
        let t0 = clock.now();
        let out = controller.step(&meas, &setpoints, clock);
        result.step_times.push(clock.now() - t0);
        result.solver_times.push(out.solution.wall_time);

        let air = airdata(&state);
        for _ in 0..substeps {
            let act = plant.step(&out.commands);
            u_phys = ControlInputVector::from_parts(&act, 0.0, 0.0);
            match rk4_step(&state, &u_phys, &plant.rates(), params, cfg.dt_physics) {
                Ok(s) => state = s,
                Err(e) => {
                    result.outcome = Outcome::Diverged {
                        time: t,
                        reason: format!("{e}"),
                    };
                    return Ok(result);
                }
            }
        }
        accel = full_eom(&state, &u_phys, &plant.rates(), params);

        let (theta_min, theta_max) = out.pitch_bounds;
        let u_s = out.solution.u_s;
        let phi_max = deg(setup.controller.allocation.aoa.phi_max_deg);
        let eps = 1e-9;
        let motors_saturated = (0..NUM_ROTORS)
            .filter(|&i| u_s.omega(i) <= lo[i] + eps || u_s.omega(i) >= hi[i] - eps)
            .count() as u8;
        result.records.push(LogRecord {
            time: t,
            state: meas.state,
            air,
            setpoints,
            command: u_s,
            actual: plant.outputs(),
            yd: out.yd,
            y0: out.y0,
            achieved: accel.to_array(),
            yaw_rate_cmd: out.yaw_rate_cmd,
            iterations: out.solution.iterations,
            evaluations: out.solution.evaluations,
            cost: out.solution.cost,
            residual_norm: out.solution.residual_norm,
            weighted_residual_norm: out.solution.weighted_residual_norm,
            termination: out.solution.termination,
            fallback: out.solution.fallback,
            theta_min,
            theta_max,
            theta_at_bound: u_s[THETA_V] <= theta_min + eps || u_s[THETA_V] >= theta_max - eps,
            phi_at_bound: u_s[PHI_V].abs() >= phi_max - eps,
            motors_saturated,
            coeff_clamped: thrust_torque_coeffs(air.airspeed, params).clamped,
        });

        if let Some(reason) = check_divergence(&state, z0, &cfg.divergence) {
            result.outcome = Outcome::Diverged {
                time: t + cfg.dt_control,
                reason,
            };
            return Ok(result);
        }
    }
    Ok(result)
}

/// Linear-interpolated percentile of unsorted data, `q` in [0, 1].
pub fn percentile(data: &[f64], q: f64) -> f64 {
    if data.is_empty() {
        return f64::NAN;
    }
    let mut v: Vec<f64> = data.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let i = pos as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = it.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn rms(it: impl Iterator<Item = f64>) -> f64 {
    sqrt(mean(it.map(|x| x * x)))
}

/// Summary of one run. Angles in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub duration: f64,
    pub diverged: bool,
    pub max_forward_speed: f64,
    pub final_speed: f64,
    pub max_altitude_excursion: f64,
    pub final_altitude_drift: f64,
    pub max_attitude_deg: f64,
    /// Samples with airspeed above the protection threshold.
    pub aoa_samples: usize,
    pub alpha_min_deg: f64,
    pub alpha_max_deg: f64,
    /// Largest distance of α outside the protected band, deg.
    pub aoa_violation_deg: f64,
    /// Time spent outside the protected band with the allowed margin, s.
    pub aoa_violation_time: f64,
    pub beta_max_deg: f64,
    pub attitude_tracking_rms_deg: f64,
    pub speed_tracking_rms: f64,
    pub hover_pitch_mean_deg: f64,
    pub fast_pitch_mean_deg: f64,
    /// Largest excursion of θ outside the pitch bounds above 10 m/s, deg.
    pub fast_pitch_bound_violation_deg: f64,
    pub fast_azimuth_mean_deg: f64,
    pub fast_lateral_roll_mean_deg: f64,
    pub solver_time_mean: f64,
    pub solver_time_p50: f64,
    pub solver_time_p95: f64,
    pub solver_time_max: f64,
    pub control_rate_hz: f64,
    pub budget_hits: usize,
    pub fallbacks: usize,
}

/// Airspeed thresholds used by the metrics, m/s.
pub const AOA_ACTIVE_SPEED: f64 = 6.0;
/// Allowed transient excursion of α beyond the protected band, deg.
pub const AOA_MARGIN_DEG: f64 = 2.0;
pub const SIDESLIP_SPEED: f64 = 8.0;
pub const FAST_SPEED: f64 = 10.0;
/// Settling time excluded from the hover pitch average, s.
pub const HOVER_SETTLE: f64 = 3.0;

pub fn compute_metrics(result: &SimResult, setup: &SimSetup) -> Metrics {
    let recs = &result.records;
    let aoa = &setup.controller.allocation.aoa;
    let z0 = recs.first().map_or(0.0, |r| r.state.pos.z);
    let last = recs.last();
    let aoa_recs: Vec<&LogRecord> = recs.iter().filter(|r| r.air.airspeed > AOA_ACTIVE_SPEED).collect();
    let alpha_deg: Vec<f64> = aoa_recs.iter().map(|r| r.air.alpha.to_degrees()).collect();
    let aoa_violation = alpha_deg
        .iter()
        .map(|a| (aoa.alpha_min_deg - a).max(a - aoa.alpha_max_deg).max(0.0))
        .fold(0.0, f64::max);
    let fast: Vec<&LogRecord> = recs.iter().filter(|r| r.air.airspeed > FAST_SPEED).collect();
    let hover: Vec<&LogRecord> = recs
        .iter()
        .filter(|r| r.setpoints.vel.norm() == 0.0 && r.air.airspeed < 4.0 && r.time >= HOVER_SETTLE)
        .collect();
    let lateral: Vec<&&LogRecord> = fast.iter().filter(|r| r.yd[1].abs() > 1.0).collect();
    let vel_sat = setup.controller.saturations;

    Metrics {
        duration: last.map_or(0.0, |r| r.time),
        diverged: result.diverged(),
        max_forward_speed: recs.iter().map(|r| r.state.vel_control().x).fold(f64::MIN, f64::max),
        final_speed: last.map_or(f64::NAN, |r| r.state.vel.norm()),
        max_altitude_excursion: recs.iter().map(|r| (r.state.pos.z - z0).abs()).fold(0.0, f64::max),
        final_altitude_drift: last.map_or(f64::NAN, |r| (r.state.pos.z - z0).abs()),
        max_attitude_deg: recs
            .iter()
            .map(|r| r.state.att.phi.abs().max(r.state.att.theta.abs()).to_degrees())
            .fold(0.0, f64::max),
        aoa_samples: aoa_recs.len(),
        alpha_min_deg: alpha_deg.iter().copied().fold(f64::NAN, f64::min),
        alpha_max_deg: alpha_deg.iter().copied().fold(f64::NAN, f64::max),
        aoa_violation_deg: aoa_violation,
        aoa_violation_time: alpha_deg
            .iter()
            .filter(|&&a| a < aoa.alpha_min_deg - AOA_MARGIN_DEG || a > aoa.alpha_max_deg + AOA_MARGIN_DEG)
            .count() as f64
            * setup.sim.dt_control,
        beta_max_deg: recs
            .iter()
            .filter(|r| r.air.airspeed > SIDESLIP_SPEED)
            .map(|r| r.air.beta.abs().to_degrees())
            .fold(0.0, f64::max),
        attitude_tracking_rms_deg: rms(recs.iter().flat_map(|r| {
            [
                (r.command[PHI_V] - r.state.att.phi).to_degrees(),
                (r.command[THETA_V] - r.state.att.theta).to_degrees(),
            ]
        })),
        speed_tracking_rms: rms(recs.iter().map(|r| vel_sat.vel_x.apply(r.setpoints.vel.x) - r.state.vel_control().x)),
        hover_pitch_mean_deg: mean(hover.iter().map(|r| r.state.att.theta.to_degrees())),
        fast_pitch_mean_deg: mean(fast.iter().map(|r| r.state.att.theta.to_degrees())),
        fast_pitch_bound_violation_deg: fast
            .iter()
            .map(|r| (r.theta_min - r.state.att.theta).max(r.state.att.theta - r.theta_max).max(0.0).to_degrees())
            .fold(0.0, f64::max),
        fast_azimuth_mean_deg: mean(fast.iter().map(|r| {
            (0..NUM_ROTORS).map(|i| r.command[AZIMUTH + i].abs()).sum::<f64>().to_degrees() / NUM_ROTORS as f64
        })),
        fast_lateral_roll_mean_deg: mean(lateral.iter().map(|r| r.command[PHI_V].abs().to_degrees())),
        solver_time_mean: mean(result.solver_times.iter().copied()),
        solver_time_p50: percentile(&result.solver_times, 0.5),
        solver_time_p95: percentile(&result.solver_times, 0.95),
        solver_time_max: result.solver_times.iter().copied().fold(0.0, f64::max),
        control_rate_hz: 1.0 / mean(result.step_times.iter().copied()),
        budget_hits: recs
            .iter()
            .filter(|r| matches!(r.termination, Termination::IterationBudget | Termination::TimeBudget))
            .count(),
        fallbacks: recs.iter().filter(|r| r.fallback).count(),
    }
}

/// Pass/fail check of one maneuver-level criterion.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

/// Maneuver-level acceptance checks.
pub fn maneuver_checks(kind: ManeuverKind, m: &Metrics) -> Vec<Check> {
    let mut out = alloc::vec![check("no divergence", !m.diverged, format!("diverged = {}", m.diverged))];
    match kind {
        ManeuverKind::Hover => {
            out.push(check(
                "altitude drift < 0.5 m",
                m.max_altitude_excursion < 0.5,
                format!("{:.4} m", m.max_altitude_excursion),
            ));
            out.push(check(
                "attitude within 2 deg",
                m.max_attitude_deg < 2.0,
                format!("{:.4} deg", m.max_attitude_deg),
            ));
        }
        ManeuverKind::Transition1 | ManeuverKind::Transition2 => {
            out.push(check(
                "forward speed >= 14 m/s",
                m.max_forward_speed >= 14.0,
                format!("{:.2} m/s", m.max_forward_speed),
            ));
            out.push(check(
                "back to hover (speed < 0.5 m/s)",
                m.final_speed < 0.5,
                format!("{:.3} m/s", m.final_speed),
            ));
            if kind == ManeuverKind::Transition1 {
                out.push(check(
                    "altitude excursion < 5 m",
                    m.max_altitude_excursion < 5.0,
                    format!("{:.3} m", m.max_altitude_excursion),
                ));
            }
            out.push(check(
                "alpha within [-7, 17] deg above 6 m/s",
                m.aoa_violation_deg <= AOA_MARGIN_DEG,
                format!(
                    "alpha in [{:.2}, {:.2}] deg, {:.2} s outside",
                    m.alpha_min_deg, m.alpha_max_deg, m.aoa_violation_time
                ),
            ));
            out.push(check(
                "|beta| < 10 deg above 8 m/s",
                m.beta_max_deg < 10.0,
                format!("{:.3} deg", m.beta_max_deg),
            ));
            out.push(check(
                "mean |g| < 5 deg above 10 m/s",
                m.fast_azimuth_mean_deg < 5.0,
                format!("{:.3} deg", m.fast_azimuth_mean_deg),
            ));
            if kind == ManeuverKind::Transition2 {
                out.push(check(
                    "hover pitch within 3 deg of 25 deg",
                    (m.hover_pitch_mean_deg - 25.0).abs() <= 3.0,
                    format!("{:.2} deg", m.hover_pitch_mean_deg),
                ));
                out.push(check(
                    "pitch obeys bounds above 10 m/s and leaves 25 deg",
                    m.fast_pitch_bound_violation_deg <= 2.0 && (m.fast_pitch_mean_deg - 25.0).abs() > 3.0,
                    format!(
                        "violation {:.2} deg, mean {:.2} deg",
                        m.fast_pitch_bound_violation_deg, m.fast_pitch_mean_deg
                    ),
                ));
            }
        }
    }
    out
}
