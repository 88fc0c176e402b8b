use proptest::prelude::*;

use quadplane_core::dynamics::{
    full_eom, hover_input, hover_rotor_speed, mirror_input, rotor_moments, simplified_dynamics,
    VehicleState,
};
use quadplane_core::frames::{
    body_to_control, control_to_earth, earth_to_control, euler_rate_matrix,
    euler_rate_matrix_inverse, prop_to_body, wind_to_body, EulerAttitude,
};
use quadplane_core::input::{ActuatorRates, ControlInputVector, NUM_ROTORS};
use quadplane_core::math::{Mat3, Vec3};
use quadplane_core::params::VehicleParams;

fn orthonormality_error(r: &Mat3) -> (f64, f64) {
    let rtr = r.transpose() * *r;
    (rtr.max_abs_diff(&Mat3::IDENTITY), (r.det() - 1.0).abs())
}

fn angle() -> impl Strategy<Value = f64> {
    -std::f64::consts::PI..std::f64::consts::PI
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn rotation_matrices_are_orthonormal(a in angle(), b in angle(), c in angle()) {
        for r in [
            body_to_control(a, b),
            earth_to_control(c),
            prop_to_body(a, b),
            wind_to_body(b, c),
        ] {
            let (orth, det) = orthonormality_error(&r);
            prop_assert!(orth < 1e-12, "RᵀR − I = {orth:e}");
            prop_assert!(det < 1e-12, "det − 1 = {det:e}");
        }
    }
}

#[test]
fn control_to_earth_inverts_earth_to_control() {
    for k in 0..50 {
        let psi = -3.0 + 0.12 * k as f64;
        let prod = control_to_earth(psi) * earth_to_control(psi);
        assert!(prod.max_abs_diff(&Mat3::IDENTITY) < 1e-12);
    }
}

#[test]
fn euler_rate_matrix_inverse_is_inverse() {
    for k in 0..40 {
        let att = EulerAttitude::new(-1.0 + 0.05 * k as f64, -1.2 + 0.06 * k as f64, 0.3);
        let t = euler_rate_matrix(&att).unwrap();
        let prod = t * euler_rate_matrix_inverse(&att);
        assert!(prod.max_abs_diff(&Mat3::IDENTITY) < 1e-12);
    }
}

fn state_strategy() -> impl Strategy<Value = VehicleState> {
    (
        prop::array::uniform3(-20.0..20.0f64),
        (-0.6..0.6f64, -0.5..0.5f64, -3.0..3.0f64),
        prop::array::uniform3(-2.0..2.0f64),
    )
        .prop_map(|(v, (phi, theta, psi), w)| {
            let mut s = VehicleState {
                att: EulerAttitude::new(phi, theta, psi),
                rates: Vec3::from_array(w),
                ..VehicleState::default()
            };
            s.set_vel_control(Vec3::from_array(v));
            s
        })
}

fn input_strategy() -> impl Strategy<Value = ControlInputVector> {
    (
        prop::array::uniform4(150.0..1400.0f64),
        prop::array::uniform4(-2.0..0.4f64),
        prop::array::uniform4(-0.78..0.78f64),
        -0.4..0.4f64,
    )
        .prop_map(|(w, b, g, da)| {
            let mut u = ControlInputVector::ZERO;
            for i in 0..NUM_ROTORS {
                u[i] = w[i];
                u[4 + i] = b[i];
                u[8 + i] = g[i];
            }
            u[12] = da;
            u
        })
}

fn rates_strategy() -> impl Strategy<Value = ActuatorRates> {
    (
        prop::array::uniform4(-2000.0..2000.0f64),
        prop::array::uniform4(-11.0..11.0f64),
        prop::array::uniform4(-10.0..10.0f64),
        prop::array::uniform4(-300.0..300.0f64),
        prop::array::uniform4(-300.0..300.0f64),
    )
        .prop_map(|(omega_dot, b_dot, g_dot, b_ddot, g_ddot)| ActuatorRates {
            omega_dot,
            b_dot,
            g_dot,
            b_ddot,
            g_ddot,
        })
}

fn mirror_state(s: &VehicleState) -> VehicleState {
    let v = s.vel_control();
    let mut m = VehicleState {
        pos: Vec3::new(s.pos.x, -s.pos.y, s.pos.z),
        att: EulerAttitude::new(-s.att.phi, s.att.theta, -s.att.psi),
        rates: Vec3::new(-s.rates.x, s.rates.y, -s.rates.z),
        ..VehicleState::default()
    };
    m.set_vel_control(Vec3::new(v.x, -v.y, v.z));
    m
}

fn mirror_rates(r: &ActuatorRates) -> ActuatorRates {
    let swap = [1, 0, 3, 2];
    ActuatorRates {
        omega_dot: std::array::from_fn(|i| r.omega_dot[swap[i]]),
        b_dot: std::array::from_fn(|i| r.b_dot[swap[i]]),
        g_dot: std::array::from_fn(|i| -r.g_dot[swap[i]]),
        b_ddot: std::array::from_fn(|i| r.b_ddot[swap[i]]),
        g_ddot: std::array::from_fn(|i| -r.g_ddot[swap[i]]),
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn full_minus_simplified_is_the_omitted_rotor_terms(
        s in state_strategy(), mut u in input_strategy(), r in rates_strategy()
    ) {
        let p = VehicleParams::default();
        u[13] = s.att.phi;
        u[14] = s.att.theta;
        let full = full_eom(&s, &u, &r, &p);
        let simp = simplified_dynamics(&s, &u, &p);
        let omitted = rotor_moments(&s, &u, &r, &p).inertial();
        let want = Vec3::new(
            omitted.x / p.inertia.x,
            omitted.y / p.inertia.y,
            omitted.z / p.inertia.z,
        );
        let d_lin = full.linear - simp.linear;
        let d_ang = full.angular - simp.angular;
        for k in 0..3 {
            prop_assert!(d_lin[k].abs() < 1e-12, "linear {k}: {:e}", d_lin[k]);
            prop_assert!((d_ang[k] - want[k]).abs() < 1e-12 * (1.0 + want[k].abs()),
                "angular {k}: {:e} vs {:e}", d_ang[k], want[k]);
        }
    }

    // The tilt-inertia moment carries the rotor spin sign, so tilt
    // accelerations are held at zero here.
    #[test]
    fn mirrored_lateral_problem_mirrors_accelerations(
        s in state_strategy(), u in input_strategy(), mut r in rates_strategy()
    ) {
        let p = VehicleParams::default();
        r.b_ddot = [0.0; NUM_ROTORS];
        r.g_ddot = [0.0; NUM_ROTORS];
        let a = full_eom(&s, &u, &r, &p);
        let m = full_eom(&mirror_state(&s), &mirror_input(&u), &mirror_rates(&r), &p);
        let tol = 1e-10;
        prop_assert!(close(m.linear.x, a.linear.x, tol));
        prop_assert!(close(m.linear.y, -a.linear.y, tol));
        prop_assert!(close(m.linear.z, a.linear.z, tol));
        prop_assert!(close(m.angular.x, -a.angular.x, tol));
        prop_assert!(close(m.angular.y, a.angular.y, tol));
        prop_assert!(close(m.angular.z, -a.angular.z, tol));
    }
}

#[test]
fn hover_trim_residual_is_below_tolerance() {
    let p = VehicleParams::default();
    let s = VehicleState::hover_at(30.0);
    let u = hover_input(hover_rotor_speed(&p));
    let a = full_eom(&s, &u, &ActuatorRates::default(), &p);
    assert!(a.norm() < 1e-8, "{:e}", a.norm());
}
