//! The normalized incremental nonlinear control-allocation problem.
//!
//! Decision variable is `u* = u / G`. The cost is
//!
//! ```text
//! C* = ‖W_ν [f_s(x₀, u*·G) + ẏ₀ − f_s(x₀, u₀) − ẏ_d]‖² + γ_u ‖W_u (u* − u_d/G)‖²
//! ```
//!
//! minimized over box bounds that carry the physical actuator limits, the
//! roll limit and the angle-of-attack protected pitch range.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::actuation::{ActuatorLimits, ScalingVector};
use crate::clock::Clock;
use crate::dynamics::{airdata, simplified_dynamics, simplified_dynamics_jacobian, VehicleState};
use crate::error::{Error, Result};
use crate::input::{
    ControlInputVector, AILERON, AZIMUTH, ELEVATION, NUM_ACTUATORS, NUM_INPUTS, NUM_ROTORS, OMEGA,
    PHI_V, THETA_V,
};
use crate::math::{clamp, deg, sq, sqrt};
use crate::params::VehicleParams;
use crate::sqp::{sqp_solve, NlpProblem, SolverBudget, Termination, TracePoint};

/// Number of acceleration channels: ẍ, ÿ, z̈ (control frame), ṗ, q̇, ṙ.
pub const NUM_ACCELS: usize = 6;

/// Diagonal of `W_ν`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccelWeights(pub [f64; NUM_ACCELS]);

impl Default for AccelWeights {
    fn default() -> Self {
        Self([0.005, 0.005, 0.008, 0.015, 0.015, 0.015])
    }
}

/// Coefficients of the airspeed-scheduled `W_u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputWeights {
    pub motor: f64,
    pub elevation: f64,
    /// Azimuth-tilt weight per m/s of airspeed.
    pub azimuth_per_airspeed: f64,
    pub aileron: f64,
    /// Roll/pitch weight at zero airspeed.
    pub attitude: f64,
    /// Roll/pitch weight reduction per m/s; the airspeed used here is capped
    /// so the weight never goes below zero.
    pub attitude_per_airspeed: f64,
}

impl Default for InputWeights {
    fn default() -> Self {
        Self {
            motor: 3.0,
            elevation: 0.0,
            azimuth_per_airspeed: 1.5,
            aileron: 0.5,
            attitude: 100.0,
            attitude_per_airspeed: 15.0,
        }
    }
}

impl InputWeights {
    /// Diagonal of `W_u` at airspeed `va`.
    pub fn build(&self, va: f64) -> [f64; NUM_INPUTS] {
        let va = va.max(0.0);
        let va_b = if self.attitude_per_airspeed > 0.0 {
            clamp(va, 0.0, self.attitude / self.attitude_per_airspeed)
        } else {
            va
        };
        let mut w = [0.0; NUM_INPUTS];
        for i in 0..NUM_ROTORS {
            w[OMEGA + i] = self.motor;
            w[ELEVATION + i] = self.elevation;
            w[AZIMUTH + i] = self.azimuth_per_airspeed * va;
        }
        w[AILERON] = self.aileron;
        let att = self.attitude - self.attitude_per_airspeed * va_b;
        w[PHI_V] = att;
        w[THETA_V] = att;
        w
    }
}

/// Pitch and roll limits, with the airspeed-triggered angle-of-attack
/// protection. Angles are in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AoaProtectionParams {
    /// Airspeed above which the protection is active, m/s.
    pub min_airspeed: f64,
    pub alpha_min_deg: f64,
    pub alpha_max_deg: f64,
    pub theta_hard_min_deg: f64,
    pub theta_hard_max_deg: f64,
    pub phi_max_deg: f64,
}

impl Default for AoaProtectionParams {
    fn default() -> Self {
        Self {
            min_airspeed: 6.0,
            alpha_min_deg: -5.0,
            alpha_max_deg: 15.0,
            theta_hard_min_deg: -20.0,
            theta_hard_max_deg: 80.0,
            phi_max_deg: 40.0,
        }
    }
}

impl AoaProtectionParams {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, reason: alloc::string::String| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason })
            }
        };
        check(
            self.alpha_min_deg < self.alpha_max_deg,
            "allocation.aoa.alpha_min_deg",
            format!("must be below alpha_max_deg ({})", self.alpha_max_deg),
        )?;
        check(
            self.theta_hard_min_deg < self.theta_hard_max_deg,
            "allocation.aoa.theta_hard_min_deg",
            format!("must be below theta_hard_max_deg ({})", self.theta_hard_max_deg),
        )?;
        check(
            self.phi_max_deg > 0.0,
            "allocation.aoa.phi_max_deg",
            format!("must be > 0, got {}", self.phi_max_deg),
        )?;
        check(
            self.min_airspeed.is_finite() && self.min_airspeed >= 0.0,
            "allocation.aoa.min_airspeed",
            format!("must be finite and >= 0, got {}", self.min_airspeed),
        )
    }
}

/// Narrowest pitch window kept open when the protected range is pushed
/// entirely outside the hard limits.
const MIN_PITCH_WINDOW: f64 = 0.1 * core::f64::consts::PI / 180.0;

/// Pitch bounds in radians.
pub fn pitch_bounds(va: f64, gamma0: f64, aoa: &AoaProtectionParams) -> (f64, f64) {
    let hard_lo = deg(aoa.theta_hard_min_deg);
    let hard_hi = deg(aoa.theta_hard_max_deg);
    if va <= aoa.min_airspeed {
        return (hard_lo, hard_hi);
    }
    let lo = hard_lo.max(deg(aoa.alpha_min_deg) + gamma0);
    let hi = hard_hi.min(deg(aoa.alpha_max_deg) + gamma0);
    if hi - lo >= MIN_PITCH_WINDOW {
        return (lo, hi);
    }
    if hi <= hard_lo + MIN_PITCH_WINDOW {
        (hard_lo, hard_lo + MIN_PITCH_WINDOW)
    } else {
        (hard_hi - MIN_PITCH_WINDOW, hard_hi)
    }
}

/// Physical bounds of all 15 inputs, using the hard pitch limits.
pub fn hard_bounds(
    limits: &ActuatorLimits,
    aoa: &AoaProtectionParams,
) -> ([f64; NUM_INPUTS], [f64; NUM_INPUTS]) {
    let (alo, ahi) = limits.bounds();
    let mut lo = [0.0; NUM_INPUTS];
    let mut hi = [0.0; NUM_INPUTS];
    lo[..NUM_ACTUATORS].copy_from_slice(&alo);
    hi[..NUM_ACTUATORS].copy_from_slice(&ahi);
    lo[PHI_V] = -deg(aoa.phi_max_deg);
    hi[PHI_V] = deg(aoa.phi_max_deg);
    lo[THETA_V] = deg(aoa.theta_hard_min_deg);
    hi[THETA_V] = deg(aoa.theta_hard_max_deg);
    (lo, hi)
}

/// The scaling `G` from the hard bounds.
pub fn scaling(limits: &ActuatorLimits, aoa: &AoaProtectionParams) -> ScalingVector {
    let (lo, hi) = hard_bounds(limits, aoa);
    ScalingVector::from_bounds(&lo, &hi)
}

/// Physical bounds at the current flight condition.
pub fn physical_bounds(
    va: f64,
    gamma0: f64,
    limits: &ActuatorLimits,
    aoa: &AoaProtectionParams,
) -> ([f64; NUM_INPUTS], [f64; NUM_INPUTS]) {
    let (mut lo, mut hi) = hard_bounds(limits, aoa);
    let (tlo, thi) = pitch_bounds(va, gamma0, aoa);
    lo[THETA_V] = tlo;
    hi[THETA_V] = thi;
    (lo, hi)
}

/// Normalized bounds `(u_min/G, u_max/G)`.
pub fn assemble_bounds(
    va: f64,
    gamma0: f64,
    limits: &ActuatorLimits,
    aoa: &AoaProtectionParams,
    g: &ScalingVector,
) -> ([f64; NUM_INPUTS], [f64; NUM_INPUTS]) {
    let (lo, hi) = physical_bounds(va, gamma0, limits, aoa);
    (g.normalize(&ControlInputVector(lo)), g.normalize(&ControlInputVector(hi)))
}

/// `u_d`: motors at `motor_speed`, tilts and aileron at zero, and the
/// desired attitude in the virtual entries.
pub fn desired_input_vector(theta_d: f64, phi_d: f64, motor_speed: f64) -> ControlInputVector {
    let mut u = ControlInputVector::ZERO;
    for i in 0..NUM_ROTORS {
        u[OMEGA + i] = motor_speed;
    }
    u[PHI_V] = phi_d;
    u[THETA_V] = theta_d;
    u
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GradientMode {
    #[default]
    Analytic,
    ForwardDifference,
}

/// Forward-difference step in normalized units.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllocationParams {
    pub accel_weights: AccelWeights,
    pub input_weights: InputWeights,
    pub gamma_u: f64,
    /// Motor entry of `u_d`, rad/s.
    pub desired_motor_speed: f64,
    pub aoa: AoaProtectionParams,
    pub gradient: GradientMode,
    pub budget: SolverBudget,
}

impl Default for AllocationParams {
    fn default() -> Self {
        Self {
            accel_weights: AccelWeights::default(),
            input_weights: InputWeights::default(),
            gamma_u: 1e-6,
            desired_motor_speed: 150.0,
            aoa: AoaProtectionParams::default(),
            gradient: GradientMode::Analytic,
            budget: SolverBudget::default(),
        }
    }
}

impl AllocationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_u > 0.0 && self.gamma_u < 1.0) {
            return Err(Error::InvalidParameter {
                name: "allocation.gamma_u",
                reason: format!("must lie in (0, 1), got {}", self.gamma_u),
            });
        }
        if self.accel_weights.0.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "allocation.accel_weights",
                reason: "entries must be finite and >= 0".into(),
            });
        }
        let w = &self.input_weights;
        for (name, v) in [
            ("allocation.input_weights.motor", w.motor),
            ("allocation.input_weights.elevation", w.elevation),
            ("allocation.input_weights.azimuth_per_airspeed", w.azimuth_per_airspeed),
            ("allocation.input_weights.aileron", w.aileron),
            ("allocation.input_weights.attitude", w.attitude),
            ("allocation.input_weights.attitude_per_airspeed", w.attitude_per_airspeed),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= 0, got {v}"),
                });
            }
        }
        if !(self.budget.max_wall_time.is_finite() || self.budget.max_iterations < usize::MAX) {
            return Err(Error::InvalidParameter {
                name: "allocation.budget",
                reason: "needs a finite iteration or time budget".into(),
            });
        }
        self.aoa.validate()
    }
}

/// One allocation instance.
#[derive(Debug, Clone)]
pub struct AllocationProblem<'a> {
    pub x0: VehicleState,
    pub u0: ControlInputVector,
    /// Measured accelerations.
    pub y0: [f64; NUM_ACCELS],
    /// Desired accelerations.
    pub yd: [f64; NUM_ACCELS],
    pub ud: ControlInputVector,
    pub gamma_u: f64,
    pub w_nu: [f64; NUM_ACCELS],
    pub w_u: [f64; NUM_INPUTS],
    pub gradient_mode: GradientMode,
    params: &'a VehicleParams,
    scaling: ScalingVector,
    lower_phys: [f64; NUM_INPUTS],
    upper_phys: [f64; NUM_INPUTS],
    lower: [f64; NUM_INPUTS],
    upper: [f64; NUM_INPUTS],
    /// `ẏ_d − ẏ₀ + f_s(x₀, u₀)`: what `f_s` must reach.
    target: [f64; NUM_ACCELS],
}

impl<'a> AllocationProblem<'a> {
    /// Builds the problem with weights and bounds scheduled on the air data
    /// of `x0`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        params: &'a VehicleParams,
        alloc: &AllocationParams,
        limits: &ActuatorLimits,
        x0: VehicleState,
        u0: ControlInputVector,
        y0: [f64; NUM_ACCELS],
        yd: [f64; NUM_ACCELS],
        ud: ControlInputVector,
    ) -> Self {
        let air = airdata(&x0);
        let (lower_phys, upper_phys) = physical_bounds(air.airspeed, air.gamma, limits, &alloc.aoa);
        let mut p = Self {
            x0,
            u0,
            y0,
            yd,
            ud,
            gamma_u: alloc.gamma_u,
            w_nu: alloc.accel_weights.0,
            w_u: alloc.input_weights.build(air.airspeed),
            gradient_mode: alloc.gradient,
            params,
            scaling: scaling(limits, &alloc.aoa),
            lower_phys,
            upper_phys,
            lower: [0.0; NUM_INPUTS],
            upper: [0.0; NUM_INPUTS],
            target: [0.0; NUM_ACCELS],
        };
        p.refresh();
        p
    }

    /// Recomputes cached quantities after `x0`, `u0`, `y0` or `yd` change.
    pub fn refresh(&mut self) {
        self.lower = self.scaling.normalize(&ControlInputVector(self.lower_phys));
        self.upper = self.scaling.normalize(&ControlInputVector(self.upper_phys));
        let fs0 = simplified_dynamics(&self.x0, &self.u0, self.params).to_array();
        for k in 0..NUM_ACCELS {
            self.target[k] = self.yd[k] - self.y0[k] + fs0[k];
        }
    }

    /// Replaces `G`, keeping the physical bounds.
    pub fn with_scaling(mut self, g: ScalingVector) -> Self {
        self.scaling = g;
        self.refresh();
        self
    }

    /// Replaces the physical bounds.
    pub fn with_physical_bounds(mut self, lo: [f64; NUM_INPUTS], hi: [f64; NUM_INPUTS]) -> Self {
        self.lower_phys = lo;
        self.upper_phys = hi;
        self.refresh();
        self
    }

    pub fn params(&self) -> &VehicleParams {
        self.params
    }

    pub fn scaling(&self) -> &ScalingVector {
        &self.scaling
    }

    pub fn physical_bounds(&self) -> (&[f64; NUM_INPUTS], &[f64; NUM_INPUTS]) {
        (&self.lower_phys, &self.upper_phys)
    }

    /// Desired increment `ẏ_d − ẏ₀`.
    pub fn desired_increment(&self) -> [f64; NUM_ACCELS] {
        core::array::from_fn(|k| self.yd[k] - self.y0[k])
    }

    /// Unweighted residual `f_s(x₀, u*·G) − target`: achieved minus desired
    /// increment.
    pub fn residual(&self, u_star: &[f64]) -> [f64; NUM_ACCELS] {
        let u = self.scaling.denormalize(u_star);
        let f = simplified_dynamics(&self.x0, &u, self.params).to_array();
        core::array::from_fn(|k| f[k] - self.target[k])
    }

    pub fn primary_cost(&self, u_star: &[f64]) -> f64 {
        let r = self.residual(u_star);
        (0..NUM_ACCELS).map(|k| sq(self.w_nu[k] * r[k])).sum()
    }

    pub fn secondary_cost(&self, u_star: &[f64]) -> f64 {
        let g = &self.scaling.0;
        self.gamma_u
            * (0..NUM_INPUTS)
                .map(|j| sq(self.w_u[j] * (u_star[j] - self.ud[j] / g[j])))
                .sum::<f64>()
    }

    pub fn total_cost(&self, u_star: &[f64]) -> f64 {
        self.primary_cost(u_star) + self.secondary_cost(u_star)
    }

    /// Gradient of the secondary term alone.
    pub fn secondary_gradient(&self, u_star: &[f64]) -> [f64; NUM_INPUTS] {
        let g = &self.scaling.0;
        core::array::from_fn(|j| {
            2.0 * self.gamma_u * self.w_u[j] * self.w_u[j] * (u_star[j] - self.ud[j] / g[j])
        })
    }

    /// Total cost and its analytic gradient.
    pub fn analytic_cost_gradient(&self, u_star: &[f64], grad: &mut [f64]) -> f64 {
        let u = self.scaling.denormalize(u_star);
        let (f, jac) = simplified_dynamics_jacobian(&self.x0, &u, self.params);
        let f = f.to_array();
        let sec = self.secondary_gradient(u_star);
        let mut primary = 0.0;
        let mut wr = [0.0; NUM_ACCELS];
        for k in 0..NUM_ACCELS {
            let r = f[k] - self.target[k];
            let w2 = self.w_nu[k] * self.w_nu[k];
            primary += w2 * r * r;
            wr[k] = 2.0 * w2 * r;
        }
        for j in 0..NUM_INPUTS {
            let mut s = 0.0;
            for k in 0..NUM_ACCELS {
                s += wr[k] * jac[k][j];
            }
            grad[j] = s * self.scaling.0[j] + sec[j];
        }
        primary + self.secondary_cost(u_star)
    }

    /// Forward-difference gradient with step [`FD_STEP`].
    pub fn fd_cost_gradient(&self, u_star: &[f64], grad: &mut [f64]) -> f64 {
        let f0 = self.total_cost(u_star);
        let mut x = [0.0; NUM_INPUTS];
        x.copy_from_slice(&u_star[..NUM_INPUTS]);
        for j in 0..NUM_INPUTS {
            let keep = x[j];
            x[j] = keep + FD_STEP;
            grad[j] = (self.total_cost(&x) - f0) / FD_STEP;
            x[j] = keep;
        }
        f0
    }

    pub fn cost_gradient(&self, u_star: &[f64]) -> [f64; NUM_INPUTS] {
        let mut g = [0.0; NUM_INPUTS];
        self.value_and_gradient(u_star, &mut g);
        g
    }
}

impl NlpProblem for AllocationProblem<'_> {
    fn dim(&self) -> usize {
        NUM_INPUTS
    }

    fn lower(&self) -> &[f64] {
        &self.lower
    }

    fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn objective(&self, u: &[f64]) -> f64 {
        self.total_cost(u)
    }

    fn gradient(&self, u: &[f64], grad: &mut [f64]) {
        self.value_and_gradient(u, grad);
    }

    fn value_and_gradient(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        match self.gradient_mode {
            GradientMode::Analytic => self.analytic_cost_gradient(u, grad),
            GradientMode::ForwardDifference => self.fd_cost_gradient(u, grad),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationSolution {
    /// Physical solution, within the physical bounds.
    pub u_s: ControlInputVector,
    /// Achieved minus desired acceleration increment under `f_s`.
    pub residual: [f64; NUM_ACCELS],
    pub residual_norm: f64,
    /// `‖W_ν · residual‖`.
    pub weighted_residual_norm: f64,
    pub cost: f64,
    pub initial_cost: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time: f64,
    pub termination: Termination,
    /// An iteration or time budget stopped the solver.
    pub budget_hit: bool,
    /// The solver failed and `u_s` is the (projected) current input.
    pub fallback: bool,
    pub trace: alloc::vec::Vec<TracePoint>,
}

fn finish(
    problem: &AllocationProblem<'_>,
    x: &[f64],
    result: Option<crate::sqp::SolverResult>,
) -> AllocationSolution {
    let residual = problem.residual(x);
    let residual_norm = sqrt(residual.iter().map(|r| r * r).sum());
    let weighted_residual_norm = sqrt(
        (0..NUM_ACCELS)
            .map(|k| sq(problem.w_nu[k] * residual[k]))
            .sum(),
    );
    let cost = problem.total_cost(x);
    let mut u_s = problem.scaling.denormalize(x);
    // Guard against round-off in the rescale.
    for j in 0..NUM_INPUTS {
        u_s[j] = clamp(u_s[j], problem.lower_phys[j], problem.upper_phys[j]);
    }
    match result {
        Some(r) => AllocationSolution {
            u_s,
            residual,
            residual_norm,
            weighted_residual_norm,
            cost,
            initial_cost: r.initial_cost,
            iterations: r.iterations,
            evaluations: r.evaluations,
            wall_time: r.wall_time,
            termination: r.termination,
            budget_hit: matches!(
                r.termination,
                Termination::IterationBudget | Termination::TimeBudget
            ),
            fallback: false,
            trace: r.trace,
        },
        None => AllocationSolution {
            u_s,
            residual,
            residual_norm,
            weighted_residual_norm,
            cost,
            initial_cost: cost,
            iterations: 0,
            evaluations: 0,
            wall_time: 0.0,
            termination: Termination::NonFinite,
            budget_hit: false,
            fallback: true,
            trace: alloc::vec::Vec::new(),
        },
    }
}

/// Solves from `u_init` (normalized).
pub fn solve_allocation_from<C: Clock + ?Sized>(
    problem: &AllocationProblem<'_>,
    u_init: &[f64; NUM_INPUTS],
    budget: &SolverBudget,
    clock: &C,
) -> AllocationSolution {
    let r = sqp_solve(problem, u_init, budget, clock);
    if r.termination == Termination::NonFinite || r.x.iter().any(|v| !v.is_finite()) {
        let start = problem.scaling.normalize(&problem.u0);
        let x: [f64; NUM_INPUTS] =
            core::array::from_fn(|j| clamp(start[j], problem.lower[j], problem.upper[j]));
        return finish(problem, &x, None);
    }
    let x = r.x.clone();
    finish(problem, &x, Some(r))
}

/// Warm-started solve from `u₀/G`.
pub fn solve_allocation<C: Clock + ?Sized>(
    problem: &AllocationProblem<'_>,
    budget: &SolverBudget,
    clock: &C,
) -> AllocationSolution {
    let u_init = problem.scaling.normalize(&problem.u0);
    solve_allocation_from(problem, &u_init, budget, clock)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::NullClock;
    use crate::dynamics::{hover_input, hover_rotor_speed};

    fn hover_problem(params: &VehicleParams, dz: f64) -> AllocationProblem<'_> {
        let u0 = hover_input(hover_rotor_speed(params));
        let mut yd = [0.0; NUM_ACCELS];
        yd[2] = dz;
        AllocationProblem::new(
            params,
            &AllocationParams::default(),
            &ActuatorLimits::default(),
            VehicleState::default(),
            u0,
            [0.0; NUM_ACCELS],
            yd,
            desired_input_vector(0.0, 0.0, 150.0),
        )
    }

    #[test]
    fn input_weight_schedule() {
        let w = InputWeights::default();
        let w0 = w.build(0.0);
        assert_eq!(&w0[OMEGA..ELEVATION], &[3.0; 4]);
        assert_eq!(&w0[ELEVATION..AZIMUTH], &[0.0; 4]);
        assert_eq!(&w0[AZIMUTH..AILERON], &[0.0; 4]);
        assert_eq!(w0[AILERON], 0.5);
        assert_eq!((w0[PHI_V], w0[THETA_V]), (100.0, 100.0));
        let w4 = w.build(4.0);
        assert!((w4[AZIMUTH] - 6.0).abs() < 1e-12);
        assert!((w4[THETA_V] - 40.0).abs() < 1e-12);
        let w10 = w.build(10.0);
        assert!(w10[THETA_V].abs() < 1e-12 && w10[PHI_V].abs() < 1e-12);
        assert!(w.build(1e6).iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn pitch_bound_branches() {
        let aoa = AoaProtectionParams::default();
        let (lo, hi) = pitch_bounds(5.0, 0.3, &aoa);
        assert_eq!((lo, hi), (deg(-20.0), deg(80.0)));
        let (lo, hi) = pitch_bounds(10.0, 0.0, &aoa);
        assert!((lo - deg(-5.0)).abs() < 1e-15 && (hi - deg(15.0)).abs() < 1e-15);
        let (lo, hi) = pitch_bounds(10.0, deg(10.0), &aoa);
        assert!((lo - deg(5.0)).abs() < 1e-12 && (hi - deg(25.0)).abs() < 1e-12);
        // A steep dive pushes the window below the hard floor.
        let (lo, hi) = pitch_bounds(10.0, deg(-60.0), &aoa);
        assert!(lo < hi && lo >= deg(-20.0));
    }

    #[test]
    fn normalized_bounds() {
        let limits = ActuatorLimits::default();
        let aoa = AoaProtectionParams::default();
        let g = scaling(&limits, &aoa);
        let (lo, hi) = assemble_bounds(10.0, 0.0, &limits, &aoa, &g);
        assert!((lo[OMEGA] - 0.24).abs() < 1e-15 && (hi[OMEGA] - 2.24).abs() < 1e-15);
        assert!((lo[THETA_V] + 0.1).abs() < 1e-12 && (hi[THETA_V] - 0.3).abs() < 1e-12);
        for j in 0..NUM_INPUTS {
            assert!(lo[j] < hi[j]);
        }
    }

    #[test]
    fn desired_inputs() {
        let ud = desired_input_vector(0.0, 0.0, 150.0);
        assert_eq!(&ud.0[..4], &[150.0; 4]);
        assert!(ud.0[4..].iter().all(|&x| x == 0.0));
        let ud = desired_input_vector(deg(25.0), 0.0, 150.0);
        assert_eq!(ud.theta_v(), deg(25.0));
        assert_eq!(ud.phi_v(), 0.0);
    }

    #[test]
    fn primary_cost_values() {
        let p = VehicleParams::default();
        let prob = hover_problem(&p, 0.0);
        let u0s = prob.scaling().normalize(&prob.u0);
        assert_eq!(prob.primary_cost(&u0s), 0.0);

        let prob = hover_problem(&p, -1.0);
        assert!((prob.primary_cost(&u0s) - 6.4e-5).abs() < 1e-15);
        let mut scaled = prob.clone();
        scaled.w_nu.iter_mut().for_each(|w| *w *= 3.0);
        assert!((scaled.primary_cost(&u0s) - 9.0 * 6.4e-5).abs() < 1e-15);
    }

    #[test]
    fn secondary_cost_at_hover() {
        let p = VehicleParams::default();
        let mut prob = hover_problem(&p, 0.0);
        prob.u0 = hover_input(1043.0);
        prob.refresh();
        let u0s = prob.scaling().normalize(&prob.u0);
        let oracle = 1e-6 * 4.0 * (3.0f64 * (1043.0 - 150.0) / 625.0).powi(2);
        assert!((prob.secondary_cost(&u0s) - oracle).abs() < 1e-15);
        assert!((oracle - 7.35e-5).abs() < 1e-7);

        let mut zero = prob.clone();
        zero.gamma_u = 0.0;
        assert_eq!(zero.total_cost(&u0s), zero.primary_cost(&u0s));

        let mut fixed = prob.clone();
        fixed.ud = fixed.u0;
        let uds = fixed.scaling().normalize(&fixed.ud);
        assert_eq!(fixed.total_cost(&uds), 0.0);
    }

    #[test]
    fn secondary_gradient_is_quadratic_algebra() {
        let p = VehicleParams::default();
        let prob = hover_problem(&p, 0.0);
        let x: [f64; NUM_INPUTS] = core::array::from_fn(|j| 0.1 * j as f64 - 0.4);
        let g = prob.secondary_gradient(&x);
        for j in 0..NUM_INPUTS {
            let want = 2.0
                * prob.gamma_u
                * prob.w_u[j].powi(2)
                * (x[j] - prob.ud[j] / prob.scaling().0[j]);
            assert!((g[j] - want).abs() <= 1e-12 * want.abs());
        }
    }

    #[test]
    fn hover_fixed_point() {
        let p = VehicleParams::default();
        let prob = hover_problem(&p, 0.0);
        let sol = solve_allocation(&prob, &SolverBudget::iterations(100), &NullClock);
        let g = prob.scaling();
        let a = g.normalize(&sol.u_s);
        let b = g.normalize(&prob.u0);
        let diff = sqrt((0..NUM_INPUTS).map(|j| (a[j] - b[j]).powi(2)).sum());
        let base = sqrt(b.iter().map(|x| x * x).sum());
        assert!(diff / base < 1e-2, "{}", diff / base);
        assert!(sol.cost <= sol.initial_cost);
    }

    #[test]
    fn climb_increment_matches_thrust_balance() {
        let p = VehicleParams::default();
        let prob = hover_problem(&p, -1.0);
        let sol = solve_allocation(&prob, &SolverBudget::iterations(200), &NullClock);
        let oracle = sqrt(p.mass * (9.81 + 1.0) / (4.0 * 0.55e-5));
        for i in 0..NUM_ROTORS {
            let w = sol.u_s.omega(i);
            assert!((w - oracle).abs() / oracle < 0.01, "{w} vs {oracle}");
        }
    }
}
