//! Warm versus cold initialization of the allocation solver over random
//! vehicle states and achievable acceleration increments.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::actuation::ActuatorLimits;
use crate::allocation::{
    desired_input_vector, solve_allocation_from, AllocationParams, AllocationProblem, NUM_ACCELS,
};
use crate::clock::NullClock;
use crate::dynamics::{simplified_dynamics, VehicleState};
use crate::error::{Error, Result};
use crate::frames::EulerAttitude;
use crate::input::{ControlInputVector, NUM_INPUTS, PHI_V, THETA_V};
use crate::math::{deg, Vec3};
use crate::params::VehicleParams;
use crate::sim::percentile;
use crate::sqp::{NlpProblem, SolverBudget, Termination};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub instances: usize,
    pub caps: Vec<usize>,
    pub seed: u64,
    /// Iteration cap for the iterations-to-tolerance comparison.
    pub convergence_cap: usize,
    /// Half width of the uniform perturbation, in normalized units, that
    /// defines the achievable target around `u₀`.
    pub perturbation: f64,
    pub max_airspeed: f64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            instances: 100,
            caps: alloc::vec![0, 1, 2, 5, 10, 20, 50],
            seed: 0,
            convergence_cap: 500,
            perturbation: 0.3,
            max_airspeed: 18.0,
        }
    }
}

impl StudyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if self.instances == 0 {
            return bad("study.instances", "must be > 0");
        }
        if self.caps.is_empty() {
            return bad("study.caps", "must not be empty");
        }
        if !(self.perturbation > 0.0) {
            return bad("study.perturbation", "must be > 0");
        }
        if !(self.max_airspeed >= 0.0) {
            return bad("study.max_airspeed", "must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

impl Quartiles {
    pub fn of(data: &[f64]) -> Self {
        Self {
            q1: percentile(data, 0.25),
            median: percentile(data, 0.5),
            q3: percentile(data, 0.75),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub cap: usize,
    pub warm_residual: Quartiles,
    pub cold_residual: Quartiles,
    pub warm_cost: Quartiles,
    pub cold_cost: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub instances: usize,
    pub rows: Vec<StudyRow>,
    pub convergence_cap: usize,
    pub warm_iterations: Quartiles,
    pub cold_iterations: Quartiles,
    pub warm_converged_residual: Quartiles,
    pub cold_converged_residual: Quartiles,
}

/// One random study instance.
#[derive(Debug, Clone)]
pub struct StudyInstance {
    pub x0: VehicleState,
    pub u0: ControlInputVector,
    pub increment: [f64; NUM_ACCELS],
    /// Normalized cold start.
    pub cold_start: [f64; NUM_INPUTS],
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Draws instance `index` of the study seeded by `seed`. Each instance has its
/// own stream, so instances can be generated in any order.
pub fn study_instance(
    params: &VehicleParams,
    alloc: &AllocationParams,
    limits: &ActuatorLimits,
    cfg: &StudyConfig,
    index: u64,
) -> StudyInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let att = EulerAttitude::new(
        uniform(&mut rng, deg(-20.0), deg(20.0)),
        uniform(&mut rng, deg(-5.0), deg(15.0)),
        uniform(&mut rng, -3.0, 3.0),
    );
    let mut x0 = VehicleState {
        att,
        rates: Vec3::new(
            uniform(&mut rng, -0.5, 0.5),
            uniform(&mut rng, -0.5, 0.5),
            uniform(&mut rng, -0.5, 0.5),
        ),
        ..VehicleState::default()
    };
    x0.set_vel_control(Vec3::new(
        uniform(&mut rng, 0.0, cfg.max_airspeed),
        uniform(&mut rng, -1.0, 1.0),
        uniform(&mut rng, -1.0, 1.0),
    ));

    let zero = [0.0; NUM_ACCELS];
    let ud = desired_input_vector(0.0, 0.0, alloc.desired_motor_speed);
    let probe = AllocationProblem::new(params, alloc, limits, x0, ud, zero, zero, ud);
    let (lo, hi) = (probe.lower(), probe.upper());
    let g = *probe.scaling();
    let u0_n: [f64; NUM_INPUTS] = core::array::from_fn(|j| uniform(&mut rng, lo[j], hi[j]));
    let mut u0 = g.denormalize(&u0_n);
    u0[PHI_V] = u0[PHI_V].clamp(att.phi - deg(5.0), att.phi + deg(5.0));
    u0[THETA_V] = u0[THETA_V].clamp(att.theta - deg(5.0), att.theta + deg(5.0));
    let u0_n = g.normalize(&u0);
    let target_n: [f64; NUM_INPUTS] = core::array::from_fn(|j| {
        let d = cfg.perturbation;
        uniform(&mut rng, (u0_n[j] - d).max(lo[j]), (u0_n[j] + d).min(hi[j]))
    });
    let f0 = simplified_dynamics(&x0, &u0, params).to_array();
    let ft = simplified_dynamics(&x0, &g.denormalize(&target_n), params).to_array();
    let increment = core::array::from_fn(|k| ft[k] - f0[k]);
    let cold_start = core::array::from_fn(|j| uniform(&mut rng, lo[j], hi[j]));
    StudyInstance {
        x0,
        u0,
        increment,
        cold_start,
    }
}

/// Builds the allocation problem of an instance.
pub fn instance_problem<'a>(
    params: &'a VehicleParams,
    alloc: &AllocationParams,
    limits: &ActuatorLimits,
    inst: &StudyInstance,
) -> AllocationProblem<'a> {
    let ud = desired_input_vector(0.0, 0.0, alloc.desired_motor_speed);
    AllocationProblem::new(
        params,
        alloc,
        limits,
        inst.x0,
        inst.u0,
        [0.0; NUM_ACCELS],
        inst.increment,
        ud,
    )
}

/// Paired warm (`u₀/G`) and cold (uniform random feasible) solves for every
/// instance and iteration cap. Iteration caps replace the wall-time budget so
/// the table is reproducible.
pub fn warm_start_study(
    params: &VehicleParams,
    alloc: &AllocationParams,
    limits: &ActuatorLimits,
    cfg: &StudyConfig,
) -> Result<StudyTable> {
    cfg.validate()?;
    let n = cfg.instances;
    let mut res_w = alloc::vec![Vec::with_capacity(n); cfg.caps.len()];
    let mut res_c = res_w.clone();
    let mut cost_w = res_w.clone();
    let mut cost_c = res_w.clone();
    let mut it_w = Vec::with_capacity(n);
    let mut it_c = Vec::with_capacity(n);
    let mut conv_w = Vec::with_capacity(n);
    let mut conv_c = Vec::with_capacity(n);

    for i in 0..n {
        let inst = study_instance(params, alloc, limits, cfg, i as u64);
        let problem = instance_problem(params, alloc, limits, &inst);
        let warm = problem.scaling().normalize(&problem.u0);
        for (c, &cap) in cfg.caps.iter().enumerate() {
            let budget = SolverBudget::iterations(cap);
            let w = solve_allocation_from(&problem, &warm, &budget, &NullClock);
            let k = solve_allocation_from(&problem, &inst.cold_start, &budget, &NullClock);
            res_w[c].push(w.residual_norm);
            res_c[c].push(k.residual_norm);
            cost_w[c].push(w.cost);
            cost_c[c].push(k.cost);
        }
        let budget = SolverBudget::iterations(cfg.convergence_cap);
        for (start, its, conv) in [
            (&warm, &mut it_w, &mut conv_w),
            (&inst.cold_start, &mut it_c, &mut conv_c),
        ] {
            let s = solve_allocation_from(&problem, start, &budget, &NullClock);
            let used = if s.termination == Termination::IterationBudget {
                cfg.convergence_cap
            } else {
                s.iterations
            };
            its.push(used as f64);
            conv.push(s.residual_norm);
        }
    }

    let rows = cfg
        .caps
        .iter()
        .enumerate()
        .map(|(c, &cap)| StudyRow {
            cap,
            warm_residual: Quartiles::of(&res_w[c]),
            cold_residual: Quartiles::of(&res_c[c]),
            warm_cost: Quartiles::of(&cost_w[c]),
            cold_cost: Quartiles::of(&cost_c[c]),
        })
        .collect();
    Ok(StudyTable {
        instances: n,
        rows,
        convergence_cap: cfg.convergence_cap,
        warm_iterations: Quartiles::of(&it_w),
        cold_iterations: Quartiles::of(&it_c),
        warm_converged_residual: Quartiles::of(&conv_w),
        cold_converged_residual: Quartiles::of(&conv_c),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_reproducible_and_feasible() {
        let p = VehicleParams::default();
        let a = AllocationParams::default();
        let l = ActuatorLimits::default();
        let cfg = StudyConfig::default();
        let i1 = study_instance(&p, &a, &l, &cfg, 3);
        let i2 = study_instance(&p, &a, &l, &cfg, 3);
        assert_eq!(i1.u0, i2.u0);
        assert_eq!(i1.increment, i2.increment);
        let prob = instance_problem(&p, &a, &l, &i1);
        let u0n = prob.scaling().normalize(&prob.u0);
        for j in 0..NUM_INPUTS {
            assert!(u0n[j] >= prob.lower()[j] - 1e-12 && u0n[j] <= prob.upper()[j] + 1e-12);
            assert!(i1.cold_start[j] >= prob.lower()[j] && i1.cold_start[j] <= prob.upper()[j]);
        }
    }

    #[test]
    fn zero_cap_returns_the_start() {
        let p = VehicleParams::default();
        let a = AllocationParams::default();
        let l = ActuatorLimits::default();
        let cfg = StudyConfig::default();
        let inst = study_instance(&p, &a, &l, &cfg, 0);
        let prob = instance_problem(&p, &a, &l, &inst);
        let warm = prob.scaling().normalize(&prob.u0);
        let s = solve_allocation_from(&prob, &warm, &SolverBudget::iterations(0), &NullClock);
        let inc = prob.desired_increment();
        let want = libm::sqrt(inc.iter().map(|x| x * x).sum());
        assert!((s.residual_norm - want).abs() <= 1e-9 * (1.0 + want));
    }
}
