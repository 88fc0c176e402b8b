use quadplane_core::actuation::ActuatorBank;
use quadplane_core::clock::NullClock;
use quadplane_core::dynamics::{hover_input, hover_rotor_speed, VehicleState};
use quadplane_core::frames::EulerAttitude;
use quadplane_core::input::{ActuatorRates, ControlInputVector, ELEVATION, NUM_ROTORS};
use quadplane_core::math::Vec3;
use quadplane_core::params::{AeroCoeffs, VehicleParams, GRAVITY};
use quadplane_core::sim::{
    hover_trim, rk4_step, run_closed_loop, ManeuverKind, ManeuverScript, SimSetup,
};

fn integrate(s0: &VehicleState, u: &ControlInputVector, p: &VehicleParams, dt: f64, t: f64) -> VehicleState {
    let n = (t / dt).round() as usize;
    let mut s = *s0;
    for _ in 0..n {
        s = rk4_step(&s, u, &ActuatorRates::default(), p, dt).unwrap();
    }
    s
}

fn state_vec(s: &VehicleState) -> [f64; 12] {
    [
        s.pos.x, s.pos.y, s.pos.z, s.vel.x, s.vel.y, s.vel.z, s.att.phi, s.att.theta, s.att.psi,
        s.rates.x, s.rates.y, s.rates.z,
    ]
}

fn distance(a: &VehicleState, b: &VehicleState) -> f64 {
    let (a, b) = (state_vec(a), state_vec(b));
    a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[test]
fn constant_velocity_advances_exactly() {
    let mut p = VehicleParams::default();
    p.aero = AeroCoeffs {
        c_d0: 0.0,
        k_cd: 0.0,
        c_l_alpha: 0.0,
        c_m0: 0.0,
        c_m_alpha: 0.0,
        c_ml_delta_a: 0.0,
        ..AeroCoeffs::default()
    };
    p.propeller.airspeed_slope = 0.0;
    let mut s = VehicleState::hover_at(10.0);
    let v = Vec3::new(4.0, -1.5, 0.0);
    s.set_vel_control(v);
    let u = hover_input(hover_rotor_speed(&p));
    let dt = 0.01;
    let next = rk4_step(&s, &u, &ActuatorRates::default(), &p, dt).unwrap();
    let moved = next.pos - s.pos;
    assert!((moved - v.scale(dt)).norm() < 1e-12, "{moved:?}");
    assert!((next.vel - s.vel).norm() < 1e-12);
}

#[test]
fn free_fall_reaches_g_after_one_second() {
    let p = VehicleParams::default();
    let s = VehicleState::hover_at(100.0);
    let s1 = integrate(&s, &ControlInputVector::ZERO, &p, 0.001, 1.0);
    assert!((s1.vel.z - GRAVITY).abs() < 1e-6, "{}", s1.vel.z);
    assert!((s1.pos.z - s.pos.z - 0.5 * GRAVITY).abs() < 1e-6);
}

// The propeller coefficients have a kink at zero airspeed, so the trajectory
// keeps a forward drift. Pitching-moment coefficients are zeroed to keep the
// open-loop airframe from tumbling within the 10 s window.
#[test]
fn rk4_converges_at_fourth_order() {
    let mut p = VehicleParams::default();
    p.aero.c_m0 = 0.0;
    p.aero.c_m_alpha = 0.0;
    let mut s = VehicleState {
        rates: Vec3::new(0.01, -0.01, 0.0),
        ..VehicleState::hover_at(50.0)
    };
    s.set_vel_control(Vec3::new(3.0, 0.0, 0.0));
    let mut u = hover_input(hover_rotor_speed(&p));
    for i in 0..NUM_ROTORS {
        u[ELEVATION + i] = -0.05;
    }
    let h = 0.05;
    let a = integrate(&s, &u, &p, h, 10.0);
    let b = integrate(&s, &u, &p, h / 2.0, 10.0);
    let c = integrate(&s, &u, &p, h / 4.0, 10.0);
    let order = (distance(&a, &b) / distance(&b, &c)).log2();
    assert!(order >= 3.5, "observed order {order}");
}

fn mechanical_energy(s: &VehicleState, p: &VehicleParams) -> f64 {
    0.5 * p.mass * s.vel.dot(s.vel) - p.mass * GRAVITY * s.pos.z
}

#[test]
fn unpowered_glide_loses_energy() {
    let p = VehicleParams::default();
    let mut s = VehicleState {
        att: EulerAttitude::new(0.0, 0.05, 0.4),
        ..VehicleState::hover_at(100.0)
    };
    s.set_vel_control(Vec3::new(12.0, 0.0, 0.5));
    let u = ControlInputVector::ZERO;
    let mut e = mechanical_energy(&s, &p);
    let e0 = e;
    for _ in 0..3000 {
        s = rk4_step(&s, &u, &ActuatorRates::default(), &p, 0.001).unwrap();
        let e_next = mechanical_energy(&s, &p);
        assert!(e_next <= e + 1e-9 * e0.abs(), "{e_next} > {e}");
        e = e_next;
    }
    assert!(e < e0);
}

#[test]
fn noisy_runs_repeat_for_equal_seeds() {
    let mut setup = SimSetup::default();
    setup.sim.noise.enabled = true;
    setup.sim.seed = 7;
    setup.sim.duration = Some(2.0);
    let script = ManeuverScript::for_kind(ManeuverKind::Hover);
    let a = run_closed_loop(&setup, &script, &NullClock).unwrap();
    let b = run_closed_loop(&setup, &script, &NullClock).unwrap();
    assert_eq!(a.records, b.records);
    setup.sim.seed = 8;
    let c = run_closed_loop(&setup, &script, &NullClock).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn records_are_finite_while_the_detector_is_quiet() {
    let setup = SimSetup::default();
    let r = run_closed_loop(&setup, &ManeuverScript::for_kind(ManeuverKind::Transition1), &NullClock)
        .unwrap();
    assert!(!r.diverged());
    for rec in &r.records {
        for v in rec.values() {
            assert!(!v.contains("NaN") && !v.contains("inf"), "t = {}: {v}", rec.time);
        }
    }
}

#[test]
fn actuator_commands_are_held_between_control_ticks() {
    let mut setup = SimSetup::default();
    setup.sim.duration = Some(1.0);
    let script = ManeuverScript::transition(0.0);
    let r = run_closed_loop(&setup, &script, &NullClock).unwrap();
    // Replaying each command for a whole control period reproduces the logged
    // actuator positions bit for bit.
    let (_, trim) = hover_trim(&setup.vehicle, &setup.actuator_limits, 0.0).unwrap();
    let mut bank = ActuatorBank::new(
        &setup.actuators,
        &setup.actuator_limits,
        setup.sim.dt_physics,
        &trim,
    )
    .unwrap();
    for rec in &r.records {
        let cmd = rec.command.actuators();
        for _ in 0..setup.sim.substeps() {
            bank.step(&cmd);
        }
        assert_eq!(bank.outputs(), rec.actual, "t = {}", rec.time);
    }
}
