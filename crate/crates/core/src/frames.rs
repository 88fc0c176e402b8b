//! Reference-frame transforms between the earth, control, body, propeller
//! and wind frames.
//!
//! All frames are right-handed with z pointing down. The control frame is the
//! earth frame yawed by ψ; the body frame follows from it by pitch then roll.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{cos, sin, tan, Mat3};

/// ZYX Euler angles in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EulerAttitude {
    pub phi: f64,
    pub theta: f64,
    pub psi: f64,
}

impl EulerAttitude {
    pub const LEVEL: EulerAttitude = EulerAttitude {
        phi: 0.0,
        theta: 0.0,
        psi: 0.0,
    };

    pub fn new(phi: f64, theta: f64, psi: f64) -> Self {
        Self { phi, theta, psi }
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite() && self.theta.is_finite() && self.psi.is_finite()
    }
}

/// Body → control frame: `x_c = R · x_b`.
pub fn body_to_control(phi: f64, theta: f64) -> Mat3 {
    let (sp, cp) = (sin(phi), cos(phi));
    let (st, ct) = (sin(theta), cos(theta));
    Mat3::from_rows(
        [ct, sp * st, cp * st],
        [0.0, cp, -sp],
        [-st, sp * ct, cp * ct],
    )
}

/// Partial derivatives of [`body_to_control`] with respect to φ and θ.
pub fn body_to_control_partials(phi: f64, theta: f64) -> (Mat3, Mat3) {
    let (sp, cp) = (sin(phi), cos(phi));
    let (st, ct) = (sin(theta), cos(theta));
    let d_phi = Mat3::from_rows(
        [0.0, cp * st, -sp * st],
        [0.0, -sp, -cp],
        [0.0, cp * ct, -sp * ct],
    );
    let d_theta = Mat3::from_rows(
        [-st, sp * ct, cp * ct],
        [0.0, 0.0, 0.0],
        [-ct, -sp * st, -cp * st],
    );
    (d_phi, d_theta)
}

/// The tabulated yaw matrix `[[cψ, sψ, 0], [−sψ, cψ, 0], [0, 0, 1]]`.
///
/// With x_e north, y_e east and ψ the heading, this matrix takes earth-frame
/// components into control-frame components. Use [`control_to_earth`] for the
/// opposite direction.
pub fn earth_to_control(psi: f64) -> Mat3 {
    let (s, c) = (sin(psi), cos(psi));
    Mat3::from_rows([c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0])
}

/// Control → earth frame: `x_e = R · x_c`.
pub fn control_to_earth(psi: f64) -> Mat3 {
    earth_to_control(psi).transpose()
}

/// Propeller frame of rotor `i` → body frame, for elevation tilt `b` and
/// azimuth tilt `g`.
pub fn prop_to_body(b: f64, g: f64) -> Mat3 {
    let (sb, cb) = (sin(b), cos(b));
    let (sg, cg) = (sin(g), cos(g));
    Mat3::from_rows(
        [cb, 0.0, sb],
        [sg * sb, cg, -sg * cb],
        [-cg * sb, sg, cg * cb],
    )
}

/// Wind frame → body frame for angle of attack `alpha` and sideslip `beta`.
pub fn wind_to_body(alpha: f64, beta: f64) -> Mat3 {
    let (sa, ca) = (sin(alpha), cos(alpha));
    let (sb, cb) = (sin(beta), cos(beta));
    Mat3::from_rows(
        [ca * cb, -ca * sb, -sa],
        [sb, cb, 0.0],
        [sa * cb, -sa * sb, ca],
    )
}

/// Partial derivative of [`wind_to_body`] with respect to α.
pub fn wind_to_body_dalpha(alpha: f64, beta: f64) -> Mat3 {
    let (sa, ca) = (sin(alpha), cos(alpha));
    let (sb, cb) = (sin(beta), cos(beta));
    Mat3::from_rows(
        [-sa * cb, sa * sb, -ca],
        [0.0, 0.0, 0.0],
        [ca * cb, -ca * sb, -sa],
    )
}

const GIMBAL_LOCK_COS: f64 = 1e-6;

/// Matrix `T` with `Θ̇ = T · ω`.
pub fn euler_rate_matrix(att: &EulerAttitude) -> Result<Mat3> {
    let ct = cos(att.theta);
    if ct.abs() <= GIMBAL_LOCK_COS {
        return Err(Error::GimbalLock { theta: att.theta });
    }
    let (sp, cp) = (sin(att.phi), cos(att.phi));
    let tt = tan(att.theta);
    Ok(Mat3::from_rows(
        [1.0, sp * tt, cp * tt],
        [0.0, cp, -sp],
        [0.0, sp / ct, cp / ct],
    ))
}

/// Inverse of [`euler_rate_matrix`]: `ω = T⁻¹ · Θ̇`. Defined everywhere.
pub fn euler_rate_matrix_inverse(att: &EulerAttitude) -> Mat3 {
    let (sp, cp) = (sin(att.phi), cos(att.phi));
    let (st, ct) = (sin(att.theta), cos(att.theta));
    Mat3::from_rows(
        [1.0, 0.0, -st],
        [0.0, cp, sp * ct],
        [0.0, -sp, cp * ct],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Vec3;
    use core::f64::consts::FRAC_PI_2;
    use proptest::prelude::*;

    fn assert_orthonormal(r: &Mat3) {
        let rtr = r.transpose() * *r;
        assert!(rtr.max_abs_diff(&Mat3::IDENTITY) < 1e-12);
        assert!((r.det() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_attitude_is_identity() {
        assert!(body_to_control(0.0, 0.0).max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(earth_to_control(0.0).max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(prop_to_body(0.0, 0.0).max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        assert!(wind_to_body(0.0, 0.0).max_abs_diff(&Mat3::IDENTITY) < 1e-15);
    }

    #[test]
    fn nose_up_ninety_degrees() {
        let r = body_to_control(0.0, FRAC_PI_2);
        let cols = [r.col(0), r.col(1), r.col(2)];
        let want = [
            Vec3::new(0.0, 0.0, -1.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
        ];
        for (c, w) in cols.iter().zip(want) {
            assert!((*c - w).norm() < 1e-15);
        }
    }

    #[test]
    fn yaw_matrix_rows_at_quarter_turn() {
        let r = earth_to_control(FRAC_PI_2);
        let want = Mat3::from_rows([0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]);
        assert!(r.max_abs_diff(&want) < 1e-15);
        // Heading east: the control x axis is earth east.
        let east = control_to_earth(FRAC_PI_2) * Vec3::new(1.0, 0.0, 0.0);
        assert!((east - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn full_forward_tilt_points_thrust_along_body_x() {
        let t = 7.5;
        let f = prop_to_body(-FRAC_PI_2, 0.0) * Vec3::new(0.0, 0.0, -t);
        assert!((f - Vec3::new(t, 0.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn azimuth_tilt_is_ineffective_at_full_forward_elevation() {
        // Finite-difference the thrust direction w.r.t. g at b = -90°.
        let dir = |g: f64| prop_to_body(-FRAC_PI_2, g) * Vec3::new(0.0, 0.0, -1.0);
        let h = 1e-6;
        for g in [-0.7, -0.2, 0.0, 0.3, 0.7] {
            let d = (dir(g + h) - dir(g - h)).scale(0.5 / h);
            assert!(d.norm() < 1e-9, "g = {g}: |d/dg| = {}", d.norm());
            assert!((dir(g) - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-12);
        }
        // Away from the lock the same derivative is order one.
        let dir0 = |g: f64| prop_to_body(0.0, g) * Vec3::new(0.0, 0.0, -1.0);
        let d = (dir0(h) - dir0(-h)).scale(0.5 / h);
        assert!((d.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn wind_frame_resolves_lift_and_drag() {
        let (alpha, drag, lift) = (0.1, 10.0, 7.0);
        let f = wind_to_body(alpha, 0.0) * Vec3::new(-drag, 0.0, -lift);
        assert!((f.x - (-drag * cos(alpha) + lift * sin(alpha))).abs() < 1e-12);
        assert!(f.y.abs() < 1e-15);
        assert!((f.z - (-drag * sin(alpha) - lift * cos(alpha))).abs() < 1e-12);
    }

    #[test]
    fn euler_rates_at_level() {
        let t = euler_rate_matrix(&EulerAttitude::LEVEL).unwrap();
        assert!(t.max_abs_diff(&Mat3::IDENTITY) < 1e-15);
        let rates = t * Vec3::new(0.3, 0.0, 0.0);
        assert_eq!(rates, Vec3::new(0.3, 0.0, 0.0));
    }

    #[test]
    fn euler_rates_reject_gimbal_lock() {
        let err = euler_rate_matrix(&EulerAttitude::new(0.0, FRAC_PI_2, 0.0));
        assert!(matches!(err, Err(Error::GimbalLock { .. })));
    }

    #[test]
    fn partials_match_finite_differences() {
        let (phi, theta, h) = (0.3, -0.4, 1e-6);
        let (dphi, dtheta) = body_to_control_partials(phi, theta);
        for i in 0..3 {
            for j in 0..3 {
                let fd_phi = (body_to_control(phi + h, theta).0[i][j]
                    - body_to_control(phi - h, theta).0[i][j])
                    / (2.0 * h);
                let fd_theta = (body_to_control(phi, theta + h).0[i][j]
                    - body_to_control(phi, theta - h).0[i][j])
                    / (2.0 * h);
                assert!((fd_phi - dphi.0[i][j]).abs() < 1e-8);
                assert!((fd_theta - dtheta.0[i][j]).abs() < 1e-8);
            }
        }
        let da = wind_to_body_dalpha(0.2, 0.1);
        for i in 0..3 {
            for j in 0..3 {
                let fd = (wind_to_body(0.2 + h, 0.1).0[i][j] - wind_to_body(0.2 - h, 0.1).0[i][j])
                    / (2.0 * h);
                assert!((fd - da.0[i][j]).abs() < 1e-8);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn rotations_are_orthonormal(
            a in -3.2f64..3.2, b in -1.5f64..1.5, c in -3.2f64..3.2,
        ) {
            assert_orthonormal(&body_to_control(a, b));
            assert_orthonormal(&earth_to_control(c));
            assert_orthonormal(&prop_to_body(a, b));
            assert_orthonormal(&wind_to_body(b, a));
        }

        #[test]
        fn inverse_euler_rate_matrix(phi in -1.5f64..1.5, theta in -1.5f64..1.5) {
            let att = EulerAttitude::new(phi, theta, 0.0);
            let t = euler_rate_matrix(&att).unwrap();
            let prod = t * euler_rate_matrix_inverse(&att);
            prop_assert!(prod.max_abs_diff(&Mat3::IDENTITY) < 1e-9);
        }

        #[test]
        fn yaw_matrix_keeps_z(psi in -10.0f64..10.0) {
            let r = earth_to_control(psi);
            prop_assert!((r.col(2) - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-15);
        }
    }
}
