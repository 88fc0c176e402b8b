//! Actuator models: first-order motors and ailerons, rate-limited
//! second-order tilt servos, integer-sample transport delays, and the
//! normalization of the input vector.

use alloc::collections::VecDeque;
use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::EulerAttitude;
use crate::input::{
    ActuatorRates, ControlInputVector, AILERON, AZIMUTH, ELEVATION, NUM_ACTUATORS, NUM_INPUTS,
    NUM_ROTORS, OMEGA, PHI_V, THETA_V,
};
use crate::math::{clamp, deg, round};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActuatorKind {
    FirstOrder,
    SecondOrderRateLimited,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActuatorDynamicsParams {
    pub kind: ActuatorKind,
    /// Corner (first order) or natural (second order) frequency, rad/s.
    pub corner_freq: f64,
    /// Damping ratio, second order only.
    #[serde(default)]
    pub damping: f64,
    /// Output rate limit, rad/s (or rad/s² for motors).
    #[serde(default)]
    pub rate_limit: Option<f64>,
    /// Transport delay, s.
    #[serde(default)]
    pub delay: f64,
}

impl ActuatorDynamicsParams {
    pub const fn first_order(corner_freq: f64, delay: f64) -> Self {
        Self {
            kind: ActuatorKind::FirstOrder,
            corner_freq,
            damping: 0.0,
            rate_limit: None,
            delay,
        }
    }

    pub const fn second_order(natural_freq: f64, damping: f64, rate_limit: f64, delay: f64) -> Self {
        Self {
            kind: ActuatorKind::SecondOrderRateLimited,
            corner_freq: natural_freq,
            damping,
            rate_limit: Some(rate_limit),
            delay,
        }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        let bad = |reason: alloc::string::String| Err(Error::InvalidParameter { name, reason });
        if !(self.corner_freq > 0.0 && self.corner_freq.is_finite()) {
            return bad(format!("corner_freq must be > 0, got {}", self.corner_freq));
        }
        if self.kind == ActuatorKind::SecondOrderRateLimited && !(self.damping > 0.0) {
            return bad(format!("damping must be > 0, got {}", self.damping));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0) {
                return bad(format!("rate_limit must be > 0, got {r}"));
            }
        }
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return bad(format!("delay must be >= 0, got {}", self.delay));
        }
        Ok(())
    }
}

/// Dynamics of the four actuator families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorConfig {
    pub motor: ActuatorDynamicsParams,
    pub aileron: ActuatorDynamicsParams,
    pub tilt_elevation: ActuatorDynamicsParams,
    pub tilt_azimuth: ActuatorDynamicsParams,
}

impl Default for ActuatorConfig {
    fn default() -> Self {
        Self {
            motor: ActuatorDynamicsParams::first_order(25.0, 0.001),
            aileron: ActuatorDynamicsParams::first_order(20.0, 0.015),
            tilt_elevation: ActuatorDynamicsParams::second_order(60.0, 1.5, 11.34, 0.015),
            tilt_azimuth: ActuatorDynamicsParams::second_order(45.0, 1.6, 9.95, 0.015),
        }
    }
}

impl ActuatorConfig {
    pub fn validate(&self) -> Result<()> {
        self.motor.validate("actuators.motor")?;
        self.aileron.validate("actuators.aileron")?;
        self.tilt_elevation.validate("actuators.tilt_elevation")?;
        self.tilt_azimuth.validate("actuators.tilt_azimuth")
    }

    /// Dynamics of the channel at actuator index `i`.
    pub fn channel(&self, i: usize) -> &ActuatorDynamicsParams {
        match i {
            OMEGA..ELEVATION => &self.motor,
            ELEVATION..AZIMUTH => &self.tilt_elevation,
            AZIMUTH..AILERON => &self.tilt_azimuth,
            _ => &self.aileron,
        }
    }
}

/// Physical position limits. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ActuatorLimits {
    pub omega_min: f64,
    pub omega_max: f64,
    pub elevation_min_deg: f64,
    pub elevation_max_deg: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub aileron_min_deg: f64,
    pub aileron_max_deg: f64,
}

impl Default for ActuatorLimits {
    fn default() -> Self {
        Self {
            omega_min: 150.0,
            omega_max: 1400.0,
            elevation_min_deg: -120.0,
            elevation_max_deg: 25.0,
            azimuth_min_deg: -45.0,
            azimuth_max_deg: 45.0,
            aileron_min_deg: -25.0,
            aileron_max_deg: 25.0,
        }
    }
}

impl ActuatorLimits {
    /// Lower and upper bounds of the 13 physical actuators in SI units.
    pub fn bounds(&self) -> ([f64; NUM_ACTUATORS], [f64; NUM_ACTUATORS]) {
        let mut lo = [0.0; NUM_ACTUATORS];
        let mut hi = [0.0; NUM_ACTUATORS];
        for i in 0..NUM_ROTORS {
            lo[OMEGA + i] = self.omega_min;
            hi[OMEGA + i] = self.omega_max;
            lo[ELEVATION + i] = deg(self.elevation_min_deg);
            hi[ELEVATION + i] = deg(self.elevation_max_deg);
            lo[AZIMUTH + i] = deg(self.azimuth_min_deg);
            hi[AZIMUTH + i] = deg(self.azimuth_max_deg);
        }
        lo[AILERON] = deg(self.aileron_min_deg);
        hi[AILERON] = deg(self.aileron_max_deg);
        (lo, hi)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [
            ("actuator_limits.omega", self.omega_min, self.omega_max),
            ("actuator_limits.elevation", self.elevation_min_deg, self.elevation_max_deg),
            ("actuator_limits.azimuth", self.azimuth_min_deg, self.azimuth_max_deg),
            ("actuator_limits.aileron", self.aileron_min_deg, self.aileron_max_deg),
        ] {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("min ({lo}) must be below max ({hi})"),
                });
            }
        }
        if self.omega_min < 0.0 {
            return Err(Error::InvalidParameter {
                name: "actuator_limits.omega_min",
                reason: format!("must be >= 0, got {}", self.omega_min),
            });
        }
        Ok(())
    }
}

/// Per-entry half travel `G = (u_max − u_min)/2`, so every normalized input
/// spans two units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingVector(pub [f64; NUM_INPUTS]);

impl ScalingVector {
    pub fn from_bounds(lower: &[f64; NUM_INPUTS], upper: &[f64; NUM_INPUTS]) -> Self {
        let mut g = [0.0; NUM_INPUTS];
        for j in 0..NUM_INPUTS {
            g[j] = 0.5 * (upper[j] - lower[j]);
        }
        Self(g)
    }

    pub fn normalize(&self, u: &ControlInputVector) -> [f64; NUM_INPUTS] {
        let mut out = [0.0; NUM_INPUTS];
        for j in 0..NUM_INPUTS {
            out[j] = u[j] / self.0[j];
        }
        out
    }

    pub fn denormalize(&self, u_star: &[f64]) -> ControlInputVector {
        let mut out = ControlInputVector::ZERO;
        for j in 0..NUM_INPUTS {
            out[j] = u_star[j] * self.0[j];
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Channel {
    params: ActuatorDynamicsParams,
    lo: f64,
    hi: f64,
    pos: f64,
    vel: f64,
    acc: f64,
    /// Delayed command that entered the dynamics on the previous step.
    last_input: f64,
    delay_line: VecDeque<f64>,
}

impl Channel {
    fn new(params: ActuatorDynamicsParams, lo: f64, hi: f64, dt: f64, initial: f64) -> Self {
        let x = clamp(initial, lo, hi);
        let n = round(params.delay / dt) as usize;
        let mut delay_line = VecDeque::with_capacity(n + 1);
        delay_line.extend(core::iter::repeat_n(x, n));
        Self {
            params,
            lo,
            hi,
            pos: x,
            vel: 0.0,
            acc: 0.0,
            last_input: x,
            delay_line,
        }
    }

    fn step(&mut self, command: f64, dt: f64) -> f64 {
        let cmd = clamp(command, self.lo, self.hi);
        let input = if self.delay_line.is_empty() {
            cmd
        } else {
            self.delay_line.push_back(cmd);
            self.delay_line.pop_front().unwrap_or(cmd)
        };
        let w = self.params.corner_freq;
        let v_old = self.vel;
        match self.params.kind {
            ActuatorKind::FirstOrder => {
                // Bilinear transform of w/(s + w).
                let a = (2.0 - w * dt) / (2.0 + w * dt);
                let b = w * dt / (2.0 + w * dt);
                let mut next = a * self.pos + b * (input + self.last_input);
                if let Some(r) = self.params.rate_limit {
                    next = self.pos + clamp(next - self.pos, -r * dt, r * dt);
                }
                self.vel = (next - self.pos) / dt;
                self.pos = next;
            }
            ActuatorKind::SecondOrderRateLimited => {
                // Trapezoidal step of p'' = w²(u − p) − 2ζw p'.
                let z = self.params.damping;
                let h = 0.5 * dt;
                let (p, v) = (self.pos, self.vel);
                let u_sum = input + self.last_input;
                // (I − hA) x⁺ = (I + hA) x + hB(u + u_prev)
                let rhs_p = p + h * v;
                let rhs_v = v + h * (-w * w * p - 2.0 * z * w * v) + h * w * w * u_sum;
                let a11 = 1.0;
                let a12 = -h;
                let a21 = h * w * w;
                let a22 = 1.0 + 2.0 * h * z * w;
                let det = a11 * a22 - a12 * a21;
                let mut v_new = (a11 * rhs_v - a21 * rhs_p) / det;
                if let Some(r) = self.params.rate_limit {
                    v_new = clamp(v_new, -r, r);
                }
                self.pos = p + h * (v + v_new);
                self.vel = v_new;
            }
        }
        if self.pos <= self.lo || self.pos >= self.hi {
            self.pos = clamp(self.pos, self.lo, self.hi);
            if (self.pos <= self.lo && self.vel < 0.0) || (self.pos >= self.hi && self.vel > 0.0) {
                self.vel = 0.0;
            }
        }
        self.acc = (self.vel - v_old) / dt;
        self.last_input = input;
        self.pos
    }
}

/// The 13 physical actuators stepped at a fixed period.
#[derive(Debug, Clone)]
pub struct ActuatorBank {
    channels: [Channel; NUM_ACTUATORS],
    dt: f64,
}

impl ActuatorBank {
    pub fn new(
        config: &ActuatorConfig,
        limits: &ActuatorLimits,
        dt: f64,
        initial: &[f64; NUM_ACTUATORS],
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be > 0, got {dt}"),
            });
        }
        config.validate()?;
        limits.validate()?;
        let (lo, hi) = limits.bounds();
        let channels =
            core::array::from_fn(|i| Channel::new(*config.channel(i), lo[i], hi[i], dt, initial[i]));
        Ok(Self { channels, dt })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Delay length of channel `i` in samples.
    pub fn delay_samples(&self, i: usize) -> usize {
        self.channels[i].delay_line.len()
    }

    /// Advances every channel one period: delay, dynamics, rate limit,
    /// position clamp. Out-of-range commands are clamped.
    pub fn step(&mut self, commands: &[f64; NUM_ACTUATORS]) -> [f64; NUM_ACTUATORS] {
        let dt = self.dt;
        core::array::from_fn(|i| self.channels[i].step(commands[i], dt))
    }

    pub fn outputs(&self) -> [f64; NUM_ACTUATORS] {
        core::array::from_fn(|i| self.channels[i].pos)
    }

    /// Output derivatives for the rotor inertial moments.
    pub fn rates(&self) -> ActuatorRates {
        let mut r = ActuatorRates::default();
        for i in 0..NUM_ROTORS {
            r.omega_dot[i] = self.channels[OMEGA + i].vel;
            r.b_dot[i] = self.channels[ELEVATION + i].vel;
            r.g_dot[i] = self.channels[AZIMUTH + i].vel;
            r.b_ddot[i] = self.channels[ELEVATION + i].acc;
            r.g_ddot[i] = self.channels[AZIMUTH + i].acc;
        }
        r
    }
}

/// Current input estimate: modeled actuator outputs plus measured attitude.
pub fn estimate_current_input(bank: &ActuatorBank, att: &EulerAttitude) -> ControlInputVector {
    let mut u = ControlInputVector::from_parts(&bank.outputs(), 0.0, 0.0);
    u[PHI_V] = att.phi;
    u[THETA_V] = att.theta;
    u
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::exp;
    use proptest::prelude::*;
    use std::vec::Vec;

    const DT: f64 = 0.001;

    fn hover_bank(dt: f64) -> ActuatorBank {
        let mut init = [0.0; NUM_ACTUATORS];
        init[..NUM_ROTORS].fill(150.0);
        ActuatorBank::new(&ActuatorConfig::default(), &ActuatorLimits::default(), dt, &init).unwrap()
    }

    #[test]
    fn motor_time_constant() {
        let mut bank = hover_bank(DT);
        let mut cmd = bank.outputs();
        cmd[0] = 1150.0;
        // One sample of delay, then 1/25 s.
        let steps = 1 + 40;
        let mut out = 0.0;
        for _ in 0..steps {
            out = bank.step(&cmd)[0];
        }
        let frac = (out - 150.0) / 1000.0;
        assert!((frac - (1.0 - exp(-1.0))).abs() < 0.01, "{frac}");
    }

    #[test]
    fn elevation_rate_limit() {
        let mut bank = hover_bank(DT);
        let mut cmd = bank.outputs();
        cmd[ELEVATION] = deg(-90.0);
        let mut prev = bank.outputs()[ELEVATION];
        let mut max_rate = 0.0f64;
        for _ in 0..300 {
            let y = bank.step(&cmd)[ELEVATION];
            max_rate = max_rate.max((y - prev).abs() / DT);
            prev = y;
        }
        assert!(max_rate <= 11.34 + 1e-9);
        assert!(max_rate > 11.3, "limit never reached: {max_rate}");
    }

    #[test]
    fn constant_command_holds_output() {
        let mut bank = hover_bank(DT);
        let before = bank.outputs();
        for _ in 0..100 {
            assert_eq!(bank.step(&before), before);
        }
    }

    #[test]
    fn delay_lengths_round_to_samples() {
        let bank = hover_bank(0.004);
        assert_eq!(bank.delay_samples(OMEGA), 0);
        assert_eq!(bank.delay_samples(ELEVATION), 4);
        assert_eq!(bank.delay_samples(AILERON), 4);
        let bank = hover_bank(DT);
        assert_eq!(bank.delay_samples(OMEGA), 1);
        assert_eq!(bank.delay_samples(AZIMUTH), 15);
    }

    #[test]
    fn current_input_lags_command_and_carries_attitude() {
        let mut bank = hover_bank(DT);
        let mut cmd = bank.outputs();
        cmd[0] = 1000.0;
        bank.step(&cmd);
        bank.step(&cmd);
        let att = EulerAttitude::new(0.05, -0.1, 1.0);
        let u0 = estimate_current_input(&bank, &att);
        assert!(u0[0] > 150.0 && u0[0] < 1000.0);
        assert_eq!(u0.phi_v(), 0.05);
        assert_eq!(u0.theta_v(), -0.1);
        for _ in 0..3000 {
            bank.step(&cmd);
        }
        let u0 = estimate_current_input(&bank, &att);
        assert!((u0[0] - 1000.0).abs() < 1e-6);
    }

    #[test]
    fn scaling_values() {
        let (lo, hi) = ActuatorLimits::default().bounds();
        let mut l = [0.0; NUM_INPUTS];
        let mut h = [0.0; NUM_INPUTS];
        l[..NUM_ACTUATORS].copy_from_slice(&lo);
        h[..NUM_ACTUATORS].copy_from_slice(&hi);
        l[PHI_V] = deg(-40.0);
        h[PHI_V] = deg(40.0);
        l[THETA_V] = deg(-20.0);
        h[THETA_V] = deg(80.0);
        let g = ScalingVector::from_bounds(&l, &h);
        assert_eq!(g.0[OMEGA], 625.0);
        assert!((g.0[ELEVATION] - deg(72.5)).abs() < 1e-15);
        assert!((g.0[THETA_V] - deg(50.0)).abs() < 1e-15);
        assert!(g.0.iter().all(|&x| x > 0.0));

        let mut u = ControlInputVector::ZERO;
        for (j, x) in u.0.iter_mut().enumerate() {
            *x = (j as f64 - 7.0) * 0.37;
        }
        let back = g.denormalize(&g.normalize(&u));
        for j in 0..NUM_INPUTS {
            assert!((back[j] - u[j]).abs() < 1e-12);
        }
    }

    fn cross_correlation_peak(cmd: &[f64], out: &[f64], max_lag: usize) -> usize {
        let n = cmd.len();
        let mean_c = cmd.iter().sum::<f64>() / n as f64;
        let mean_o = out.iter().sum::<f64>() / n as f64;
        (0..max_lag)
            .map(|lag| {
                let s: f64 = (0..n - lag)
                    .map(|k| (cmd[k] - mean_c) * (out[k + lag] - mean_o))
                    .sum();
                (lag, s)
            })
            .fold((0, f64::MIN), |best, x| if x.1 > best.1 { x } else { best })
            .0
    }

    #[test]
    fn aileron_delay_shows_in_cross_correlation() {
        // Fast channel so the dynamics barely add lag on top of the delay.
        let cfg = ActuatorConfig {
            aileron: ActuatorDynamicsParams::first_order(5000.0, 0.015),
            ..ActuatorConfig::default()
        };
        let mut init = [0.0; NUM_ACTUATORS];
        init[..NUM_ROTORS].fill(150.0);
        let mut bank = ActuatorBank::new(&cfg, &ActuatorLimits::default(), DT, &init).unwrap();
        // Pseudo-random binary sequence.
        let mut state = 0x1234_5678u32;
        let mut cmds = Vec::new();
        let mut outs = Vec::new();
        let mut level = 0.0;
        for k in 0..4000 {
            if k % 7 == 0 {
                state ^= state << 13;
                state ^= state >> 17;
                state ^= state << 5;
                level = if state & 1 == 0 { 0.2 } else { -0.2 };
            }
            let mut c = init;
            c[AILERON] = level;
            cmds.push(level);
            outs.push(bank.step(&c)[AILERON]);
        }
        let lag = cross_correlation_peak(&cmds, &outs, 40);
        assert!((14..=16).contains(&lag), "lag {lag}");
    }

    proptest! {
        #[test]
        fn outputs_stay_in_limits_and_rates_bounded(
            cmds in proptest::collection::vec(proptest::array::uniform13(-2000.0f64..2000.0), 1..200),
        ) {
            let mut bank = hover_bank(DT);
            let (lo, hi) = ActuatorLimits::default().bounds();
            let mut prev = bank.outputs();
            for c in &cmds {
                for _ in 0..5 {
                    let y = bank.step(c);
                    for i in 0..NUM_ACTUATORS {
                        prop_assert!(y[i] >= lo[i] && y[i] <= hi[i]);
                    }
                    for i in ELEVATION..AILERON {
                        let limit = if i < AZIMUTH { 11.34 } else { 9.95 };
                        prop_assert!((y[i] - prev[i]).abs() / DT <= limit + 1e-9);
                    }
                    prev = y;
                }
            }
        }
    }
}
