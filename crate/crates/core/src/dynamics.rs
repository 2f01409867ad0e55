//! Inverse dynamics of the three-link leg and the contact-force to joint
//! torque map.
//!
//! Links are modelled as point masses at `link_com_offsets` along each link.
//! All recursion quantities are expressed in the leg-base frame.

use crate::kinematics::jacobian;
use crate::model::LegModel;
use nalgebra::{Matrix3, Rotation3, Vector3};

/// Joint axes, joint origins and link directions for configuration `q`.
pub(crate) struct ChainGeometry {
    pub axes: [Vector3<f64>; 3],
    pub origins: [Vector3<f64>; 3],
    pub directions: [Vector3<f64>; 3],
    pub tip: Vector3<f64>,
}

pub(crate) fn chain_geometry(leg: &LegModel, q: &Vector3<f64>) -> ChainGeometry {
    let r1 = Rotation3::from_axis_angle(&Vector3::z_axis(), q[0]);
    let r2 = r1 * Rotation3::from_axis_angle(&Vector3::y_axis(), -q[1]);
    let r3 = r2 * Rotation3::from_axis_angle(&Vector3::y_axis(), q[2]);
    let x = Vector3::x();
    let directions = [r1 * x, r2 * x, r3 * x];
    let o1 = Vector3::zeros();
    let o2 = directions[0] * leg.coxa;
    let o3 = o2 + directions[1] * leg.femur;
    let tip = o3 + directions[2] * leg.tibia;
    let y = r1 * Vector3::y();
    ChainGeometry {
        axes: [Vector3::z(), -y, y],
        origins: [o1, o2, o3],
        directions,
        tip,
    }
}

/// Joint torques required to realise `qddot` at `(q, qdot)` under the given
/// gravitational acceleration (leg-base frame, e.g. `(0, 0, -9.81)`).
pub fn inverse_dynamics(
    leg: &LegModel,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    qddot: &Vector3<f64>,
    gravity: &Vector3<f64>,
) -> Vector3<f64> {
    let g = chain_geometry(leg, q);
    let lengths = leg.lengths();
    let coms: [Vector3<f64>; 3] = std::array::from_fn(|i| g.origins[i] + g.directions[i] * leg.link_com_offsets[i]);
    let ends: [Vector3<f64>; 3] = [g.origins[1], g.origins[2], g.tip];
    debug_assert!((ends[2] - g.origins[2] - g.directions[2] * lengths[2]).norm() < 1e-12);

    // Outward pass: link angular velocity/acceleration, COM accelerations.
    let mut omega = Vector3::zeros();
    let mut alpha = Vector3::zeros();
    let mut origin_acc = -gravity;
    let mut com_acc = [Vector3::zeros(); 3];
    for i in 0..3 {
        let z = g.axes[i];
        let omega_prev = omega;
        omega = omega_prev + z * qdot[i];
        alpha += z * qddot[i] + omega_prev.cross(&(z * qdot[i]));
        let rc = coms[i] - g.origins[i];
        com_acc[i] = origin_acc + alpha.cross(&rc) + omega.cross(&omega.cross(&rc));
        let re = ends[i] - g.origins[i];
        origin_acc += alpha.cross(&re) + omega.cross(&omega.cross(&re));
    }

    // Inward pass: forces and moments about each joint origin.
    let mut force = Vector3::zeros();
    let mut moment = Vector3::zeros();
    let mut tau = Vector3::zeros();
    for i in (0..3).rev() {
        let f_com = com_acc[i] * leg.link_masses[i];
        let child_force = force;
        moment = moment + (coms[i] - g.origins[i]).cross(&f_com) + (ends[i] - g.origins[i]).cross(&child_force);
        force = child_force + f_com;
        tau[i] = g.axes[i].dot(&moment);
    }
    tau
}

/// Pure gravity-holding torques.
pub fn gravity_torques(leg: &LegModel, q: &Vector3<f64>, gravity: &Vector3<f64>) -> Vector3<f64> {
    let zero = Vector3::zeros();
    inverse_dynamics(leg, q, &zero, &zero, gravity)
}

/// Joint-space mass matrix assembled column by column from inverse dynamics.
pub fn mass_matrix(leg: &LegModel, q: &Vector3<f64>) -> Matrix3<f64> {
    let zero = Vector3::zeros();
    let mut m = Matrix3::zeros();
    for k in 0..3 {
        let mut e = Vector3::zeros();
        e[k] = 1.0;
        m.set_column(k, &inverse_dynamics(leg, q, &zero, &e, &zero));
    }
    m
}

/// Feed-forward torques for a ground reaction `contact_force` on the foot
/// (leg-base frame): the leg pushes back with the opposite force, `τ = Jᵀ(-F)`.
pub fn feedforward_torques(leg: &LegModel, q: &Vector3<f64>, contact_force: &Vector3<f64>) -> Vector3<f64> {
    jacobian(leg, q).transpose_map(&(-contact_force))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_model;
    use crate::kinematics::fk;
    use crate::model::LegId;
    use proptest::prelude::*;

    fn leg() -> LegModel {
        default_model().leg(LegId::FrontLeft).clone()
    }

    const G: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

    #[test]
    fn massless_chain_needs_no_torque() {
        let mut l = leg();
        l.link_masses = [0.0; 3];
        let t = inverse_dynamics(
            &l,
            &Vector3::new(0.3, -0.2, 1.1),
            &Vector3::new(1.0, -2.0, 0.5),
            &Vector3::new(3.0, 4.0, -5.0),
            &G,
        );
        assert!(t.norm() < 1e-15);
    }

    #[test]
    fn chain_tip_agrees_with_fk() {
        let l = leg();
        let q = Vector3::new(0.4, -0.5, 1.3);
        assert!((chain_geometry(&l, &q).tip - fk(&l, &q)).norm() < 1e-12);
    }

    #[test]
    fn coxa_carries_no_gravity_torque() {
        let l = leg();
        let t = gravity_torques(&l, &Vector3::new(0.5, -0.3, 1.0), &G);
        assert!(t[0].abs() < 1e-12);
    }

    #[test]
    fn feedforward_is_zero_for_zero_force() {
        let l = leg();
        let t = feedforward_torques(&l, &Vector3::new(0.1, 0.0, 1.2), &Vector3::zeros());
        assert_eq!(t, Vector3::zeros());
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let l = leg();
        let m = mass_matrix(&l, &Vector3::new(0.2, -0.4, 1.4));
        assert!((m - m.transpose()).norm() < 1e-12);
        assert!(m.cholesky().is_some());
    }

    fn state() -> impl Strategy<Value = (Vector3<f64>, Vector3<f64>)> {
        (-0.9f64..0.9, -1.1f64..0.6, 0.4f64..2.4, prop::array::uniform3(-4.0f64..4.0))
            .prop_map(|(a, b, c, qd)| (Vector3::new(a, b, c), Vector3::from(qd)))
    }

    proptest! {
        #[test]
        fn linear_in_acceleration((q, qd) in state(), a in prop::array::uniform3(-20.0f64..20.0), b in prop::array::uniform3(-20.0f64..20.0), s in -3.0f64..3.0) {
            let l = leg();
            let (a, b) = (Vector3::from(a), Vector3::from(b));
            let base = inverse_dynamics(&l, &q, &qd, &Vector3::zeros(), &G);
            let ta = inverse_dynamics(&l, &q, &qd, &a, &G) - base;
            let tb = inverse_dynamics(&l, &q, &qd, &b, &G) - base;
            let tab = inverse_dynamics(&l, &q, &qd, &(a + b * s), &G) - base;
            prop_assert!((tab - (ta + tb * s)).norm() < 1e-9);
        }

        #[test]
        fn feedforward_obeys_virtual_work((q, qd) in state(), f in prop::array::uniform3(-300.0f64..300.0)) {
            let l = leg();
            let f = Vector3::from(f);
            let tau = feedforward_torques(&l, &q, &f);
            let v = jacobian(&l, &q).tip_velocity(&qd);
            prop_assert!((tau.dot(&qd) - (-f).dot(&v)).abs() < 1e-9 * (1.0 + tau.dot(&qd).abs()));
        }
    }
}
