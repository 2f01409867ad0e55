//! Closed-form kinematics of the coxa-yaw / femur-pitch / knee leg.
//!
//! Joint convention (leg-base frame, x along the coxa neutral axis, z up):
//! `q1` yaws the whole leg about z, `q2` pitches the femur up from the
//! horizontal, and `q3` flexes the knee so that the tibia points along
//! `q2 - q3`. With planar radius `ρ = l_c + l_f cos q2 + l_t cos(q2 - q3)`
//! and height `h = l_f sin q2 + l_t sin(q2 - q3)` the tip sits at
//! `(ρ cos q1, ρ sin q1, h)`.

use crate::model::{Interval, LegModel};
use nalgebra::{Matrix3, Vector3, SVD};
use thiserror::Error;

/// Smallest singular value below which the Jacobian is treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-6;

pub const JOINT_NAMES: [&str; 3] = ["coxa", "femur", "tibia"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("tip unreachable: {distance:.6} m outside the leg's reachable shell")]
    Unreachable { distance: f64 },
    #[error("{} joint angle {value:.6} rad outside limits [{}, {}]", JOINT_NAMES[*joint], limits.lo, limits.hi)]
    JointLimit { joint: usize, value: f64, limits: Interval },
    #[error("Jacobian near singular (smallest singular value {sigma_min:.3e})")]
    Singular { sigma_min: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct JointState {
    pub q: Vector3<f64>,
    pub qdot: Vector3<f64>,
}

/// Maps joint rates to tip linear velocity in the leg-base frame.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegJacobian(pub Matrix3<f64>);

impl LegJacobian {
    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn tip_velocity(&self, qdot: &Vector3<f64>) -> Vector3<f64> {
        self.0 * qdot
    }

    /// Joint torques producing the tip force `force` (Jᵀ·F).
    pub fn transpose_map(&self, force: &Vector3<f64>) -> Vector3<f64> {
        self.0.transpose() * force
    }

    pub fn smallest_singular_value(&self) -> f64 {
        SVD::new(self.0, false, false).singular_values.min()
    }
}

struct Planar {
    rho: f64,
    height: f64,
    drho: [f64; 3],
    dheight: [f64; 3],
}

fn planar(leg: &LegModel, q: &Vector3<f64>) -> Planar {
    let (s2, c2) = q[1].sin_cos();
    let (s23, c23) = (q[1] - q[2]).sin_cos();
    Planar {
        rho: leg.coxa + leg.femur * c2 + leg.tibia * c23,
        height: leg.femur * s2 + leg.tibia * s23,
        drho: [0.0, -leg.femur * s2 - leg.tibia * s23, leg.tibia * s23],
        dheight: [0.0, leg.femur * c2 + leg.tibia * c23, -leg.tibia * c23],
    }
}

/// Tip position in the leg-base frame.
pub fn fk(leg: &LegModel, q: &Vector3<f64>) -> Vector3<f64> {
    let p = planar(leg, q);
    let (s1, c1) = q[0].sin_cos();
    Vector3::new(p.rho * c1, p.rho * s1, p.height)
}

pub fn jacobian(leg: &LegModel, q: &Vector3<f64>) -> LegJacobian {
    let p = planar(leg, q);
    let (s1, c1) = q[0].sin_cos();
    LegJacobian(Matrix3::new(
        -p.rho * s1,
        p.drho[1] * c1,
        p.drho[2] * c1,
        p.rho * c1,
        p.drho[1] * s1,
        p.drho[2] * s1,
        0.0,
        p.dheight[1],
        p.dheight[2],
    ))
}

/// Velocity-product term `J̇(q, q̇)·q̇` of the tip acceleration.
pub fn tip_bias_acceleration(leg: &LegModel, q: &Vector3<f64>, qdot: &Vector3<f64>) -> Vector3<f64> {
    let p = planar(leg, q);
    let (s1, c1) = q[0].sin_cos();
    let (s2, c2) = q[1].sin_cos();
    let (s23, c23) = (q[1] - q[2]).sin_cos();
    let w1 = qdot[0];
    let w2 = qdot[1];
    let w23 = qdot[1] - qdot[2];
    let rho_dot = p.drho[1] * qdot[1] + p.drho[2] * qdot[2];
    let rho_dd = -leg.femur * c2 * w2 * w2 - leg.tibia * c23 * w23 * w23;
    let h_dd = -leg.femur * s2 * w2 * w2 - leg.tibia * s23 * w23 * w23;
    Vector3::new(
        rho_dd * c1 - 2.0 * rho_dot * s1 * w1 - p.rho * c1 * w1 * w1,
        rho_dd * s1 + 2.0 * rho_dot * c1 * w1 - p.rho * s1 * w1 * w1,
        h_dd,
    )
}

/// Coxa yaw in `[-π/2, π/2]` and the signed planar radius along it. A tip
/// behind the coxa axis (negative radius) keeps a forward-facing yaw.
fn yaw_and_radius(tip: &Vector3<f64>) -> (f64, f64) {
    let radial = tip.x.hypot(tip.y);
    if tip.x >= 0.0 {
        (tip.y.atan2(tip.x), radial)
    } else {
        ((-tip.y).atan2(-tip.x), -radial)
    }
}

/// Knee-flexed inverse kinematics without joint-limit checks. Only fails when
/// the point lies outside the reachable shell.
pub fn ik_unchecked(leg: &LegModel, tip: &Vector3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let (q1, radial) = yaw_and_radius(tip);
    let r = radial - leg.coxa;
    let z = tip.z;
    let d2 = r * r + z * z;
    let d = d2.sqrt();
    let max = leg.max_planar_reach();
    let min = leg.min_planar_reach();
    let tol = 1e-12;
    if d > max + tol {
        return Err(KinematicsError::Unreachable { distance: d - max });
    }
    if d < min - tol {
        return Err(KinematicsError::Unreachable { distance: min - d });
    }
    let cos_knee = ((d2 - leg.femur * leg.femur - leg.tibia * leg.tibia) / (2.0 * leg.femur * leg.tibia)).clamp(-1.0, 1.0);
    let q3 = cos_knee.acos();
    let q2 = z.atan2(r) + (leg.tibia * q3.sin()).atan2(leg.femur + leg.tibia * cos_knee);
    Ok(Vector3::new(q1, q2, q3))
}

/// Inverse kinematics on the knee-flexed branch, enforcing joint limits.
pub fn ik(leg: &LegModel, tip: &Vector3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let q = ik_unchecked(leg, tip)?;
    check_limits(leg, &q)?;
    Ok(q)
}

pub fn check_limits(leg: &LegModel, q: &Vector3<f64>) -> Result<(), KinematicsError> {
    for (joint, limits) in leg.joint_limits.iter().enumerate() {
        if !limits.contains(q[joint]) {
            return Err(KinematicsError::JointLimit {
                joint,
                value: q[joint],
                limits: *limits,
            });
        }
    }
    Ok(())
}

fn checked_jacobian(leg: &LegModel, q: &Vector3<f64>) -> Result<LegJacobian, KinematicsError> {
    let j = jacobian(leg, q);
    let sigma_min = j.smallest_singular_value();
    if sigma_min < SINGULARITY_THRESHOLD {
        return Err(KinematicsError::Singular { sigma_min });
    }
    Ok(j)
}

/// Joint rates producing tip velocity `v` at configuration `q`.
pub fn ik_velocity(leg: &LegModel, q: &Vector3<f64>, v: &Vector3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let j = checked_jacobian(leg, q)?;
    j.0.lu().solve(v).ok_or(KinematicsError::Singular { sigma_min: 0.0 })
}

/// Joint accelerations producing tip acceleration `a` given the current rates.
pub fn ik_acceleration(leg: &LegModel, q: &Vector3<f64>, qdot: &Vector3<f64>, a: &Vector3<f64>) -> Result<Vector3<f64>, KinematicsError> {
    let j = checked_jacobian(leg, q)?;
    let rhs = a - tip_bias_acceleration(leg, q, qdot);
    j.0.lu().solve(&rhs).ok_or(KinematicsError::Singular { sigma_min: 0.0 })
}

/// Nearest point to `tip` whose planar distance from the femur pivot lies
/// within the reachable shell shrunk by `margin`.
pub fn project_reachable(leg: &LegModel, tip: &Vector3<f64>, margin: f64) -> Vector3<f64> {
    let (yaw, radial) = yaw_and_radius(tip);
    let (dir_y, dir_x) = yaw.sin_cos();
    let r = radial - leg.coxa;
    let d = r.hypot(tip.z);
    let lo = leg.min_planar_reach() + margin;
    let hi = leg.max_planar_reach() - margin;
    if d >= lo && d <= hi {
        return *tip;
    }
    let target = d.clamp(lo, hi);
    let (ur, uz) = if d > 0.0 { (r / d, tip.z / d) } else { (1.0, 0.0) };
    let new_radial = leg.coxa + ur * target;
    Vector3::new(new_radial * dir_x, new_radial * dir_y, uz * target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_model;
    use crate::model::LegId;
    use nalgebra::{Isometry3, Translation3, UnitQuaternion};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn leg() -> LegModel {
        default_model().leg(LegId::MiddleLeft).clone()
    }

    fn chain(leg: &LegModel, q: &Vector3<f64>) -> Vector3<f64> {
        let yaw = Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&Vector3::z_axis(), q[0]));
        let coxa = Isometry3::translation(leg.coxa, 0.0, 0.0);
        let hip = Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&Vector3::y_axis(), -q[1]));
        let femur = Isometry3::translation(leg.femur, 0.0, 0.0);
        let knee = Isometry3::from_parts(Translation3::identity(), UnitQuaternion::from_axis_angle(&Vector3::y_axis(), q[2]));
        let tibia = Isometry3::translation(leg.tibia, 0.0, 0.0);
        (yaw * coxa * hip * femur * knee * tibia).translation.vector
    }

    #[test]
    fn fk_examples() {
        let l = leg();
        let p = fk(&l, &Vector3::new(0.0, 0.0, FRAC_PI_2));
        assert!((p - Vector3::new(0.340, 0.0, -0.365)).norm() < 1e-12);
        let p = fk(&l, &Vector3::new(FRAC_PI_4, 0.0, FRAC_PI_2));
        let c = FRAC_PI_4.cos();
        assert!((p - Vector3::new(0.340 * c, 0.340 * c, -0.365)).norm() < 1e-12);
    }

    #[test]
    fn ik_examples() {
        let l = leg();
        let q = ik(&l, &Vector3::new(0.340, 0.0, -0.365)).unwrap();
        assert!((q - Vector3::new(0.0, 0.0, FRAC_PI_2)).norm() < 1e-9);
        match ik(&l, &Vector3::new(2.0, 0.0, 0.0)) {
            Err(KinematicsError::Unreachable { distance }) => {
                assert!((distance - (2.0 - 0.705)).abs() < 1e-12)
            }
            other => panic!("expected reachability error, got {other:?}"),
        }
    }

    #[test]
    fn limit_violation_names_the_joint() {
        let l = leg();
        // Knee straighter than the 0.4 rad limit.
        let p = fk(&l, &Vector3::new(0.0, 0.0, 0.2));
        match ik(&l, &p) {
            Err(KinematicsError::JointLimit { joint, .. }) => assert_eq!(joint, 2),
            other => panic!("expected limit error, got {other:?}"),
        }
        assert!(ik_unchecked(&l, &p).is_ok());
    }

    #[test]
    fn yaw_rate_spins_tip_tangentially() {
        let l = leg();
        let q = Vector3::new(0.0, -0.2, 1.2);
        let rho = fk(&l, &q).x;
        let v = jacobian(&l, &q).tip_velocity(&Vector3::new(1.0, 0.0, 0.0));
        assert!((v - Vector3::new(0.0, rho, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn straight_knee_is_singular() {
        let l = leg();
        let q = Vector3::new(0.0, -0.3, 1e-9);
        let sigma = jacobian(&l, &q).smallest_singular_value();
        assert!(sigma < 1e-6);
        assert!(matches!(
            ik_velocity(&l, &q, &Vector3::new(0.0, 0.0, 0.1)),
            Err(KinematicsError::Singular { .. })
        ));
    }

    #[test]
    fn projection_lands_inside_shell() {
        let l = leg();
        let p = project_reachable(&l, &Vector3::new(1.5, 0.4, -0.2), 1e-3);
        assert!(ik_unchecked(&l, &p).is_ok());
        let inside = Vector3::new(0.3, 0.0, -0.35);
        assert_eq!(project_reachable(&l, &inside, 1e-3), inside);
    }

    fn q_in_limits() -> impl Strategy<Value = Vector3<f64>> {
        (-0.9f64..0.9, -1.1f64..0.6, 0.4f64..2.4).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    proptest! {
        #[test]
        fn fk_matches_transform_chain(q in q_in_limits()) {
            let l = leg();
            prop_assert!((fk(&l, &q) - chain(&l, &q)).norm() < 1e-12);
        }

        #[test]
        fn ik_inverts_fk(q in q_in_limits()) {
            let l = leg();
            let back = ik(&l, &fk(&l, &q)).unwrap();
            prop_assert!((back - q).norm() < 1e-9);
        }

        #[test]
        fn jacobian_matches_finite_differences(q in q_in_limits()) {
            let l = leg();
            let j = jacobian(&l, &q);
            let h = 1e-6;
            for k in 0..3 {
                let mut qp = q; qp[k] += h;
                let mut qm = q; qm[k] -= h;
                let col = (fk(&l, &qp) - fk(&l, &qm)) / (2.0 * h);
                prop_assert!((col - j.0.column(k)).norm() < 1e-6);
            }
        }

        #[test]
        fn virtual_work_balances(q in q_in_limits(), qd in prop::array::uniform3(-3.0f64..3.0), f in prop::array::uniform3(-200.0f64..200.0)) {
            let l = leg();
            let (qd, f) = (Vector3::from(qd), Vector3::from(f));
            let j = jacobian(&l, &q);
            let tau = j.transpose_map(&f);
            let lhs = tau.dot(&qd);
            let rhs = f.dot(&j.tip_velocity(&qd));
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + lhs.abs()));
        }

        #[test]
        fn ik_velocity_solves_exactly(q in q_in_limits(), v in prop::array::uniform3(-1.0f64..1.0)) {
            let l = leg();
            let v = Vector3::from(v);
            let qd = ik_velocity(&l, &q, &v).unwrap();
            prop_assert!((jacobian(&l, &q).tip_velocity(&qd) - v).norm() < 1e-9);
        }

        #[test]
        fn bias_acceleration_matches_second_difference(q in q_in_limits(), qd in prop::array::uniform3(-2.0f64..2.0)) {
            // Along q(t) = q + t·q̇ the tip acceleration is exactly J̇·q̇.
            let l = leg();
            let qd = Vector3::from(qd);
            let h = 1e-4;
            let acc = (fk(&l, &(q + qd * h)) - 2.0 * fk(&l, &q) + fk(&l, &(q - qd * h))) / (h * h);
            prop_assert!((acc - tip_bias_acceleration(&l, &q, &qd)).norm() < 1e-5);
        }

        #[test]
        fn left_and_right_legs_mirror(q in q_in_limits()) {
            let m = default_model();
            for leg_id in [LegId::FrontLeft, LegId::MiddleLeft, LegId::RearLeft] {
                let left = m.mount(leg_id).point_to_body(&fk(m.leg(leg_id), &q));
                let qr = Vector3::new(-q[0], q[1], q[2]);
                let right_id = leg_id.mirror();
                let right = m.mount(right_id).point_to_body(&fk(m.leg(right_id), &qr));
                prop_assert!((Vector3::new(left.x, -left.y, left.z) - right).norm() < 1e-12);
            }
        }
    }
}
