//! Task-frame impedance: a virtual spring-damper on the foot tip mapped to
//! joint torques through the Jacobian transpose, summed with feed-forward
//! torques and clamped to the actuator envelope.
//!
//! Gains act along the leg-base frame axes.

use crate::kinematics::{fk, jacobian};
use crate::model::{JointEnvelope, LegModel};
use crate::trajectory::TipCommand;
use nalgebra::{Matrix3, Vector3};

/// Diagonal stiffness and damping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImpedanceGains {
    /// N/m per axis.
    pub kp: Vector3<f64>,
    /// N·s/m per axis.
    pub kv: Vector3<f64>,
}

impl Default for ImpedanceGains {
    fn default() -> Self {
        ImpedanceGains {
            kp: Vector3::new(1500.0, 1500.0, 2000.0),
            kv: Vector3::new(50.0, 50.0, 80.0),
        }
    }
}

impl ImpedanceGains {
    pub fn zero() -> Self {
        ImpedanceGains {
            kp: Vector3::zeros(),
            kv: Vector3::zeros(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        ImpedanceGains {
            kp: self.kp * s,
            kv: self.kv * s,
        }
    }

    pub fn stiffness(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.kp)
    }

    pub fn damping(&self) -> Matrix3<f64> {
        Matrix3::from_diagonal(&self.kv)
    }

    pub fn is_valid(&self) -> bool {
        self.kp.iter().chain(self.kv.iter()).all(|g| g.is_finite() && *g >= 0.0)
    }
}

/// Torques for one leg after envelope clamping.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct JointCommand {
    pub torques: Vector3<f64>,
    /// Set where the requested torque exceeded the peak rating and was clamped.
    pub clamped: [bool; 3],
    /// Set where the applied torque exceeds the continuous rating.
    pub thermal: [bool; 3],
}

/// Task-space force the virtual spring-damper exerts on the tip.
pub fn impedance_force(x: &Vector3<f64>, v: &Vector3<f64>, setpoint: &TipCommand, gains: &ImpedanceGains) -> Vector3<f64> {
    (setpoint.position - x).component_mul(&gains.kp) + (setpoint.velocity - v).component_mul(&gains.kv)
}

/// Unclamped torque request `Jᵀ F + τ_ff`.
pub fn raw_impedance_torques(
    leg: &LegModel,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    setpoint: &TipCommand,
    gains: &ImpedanceGains,
    tau_ff: &Vector3<f64>,
) -> Vector3<f64> {
    let j = jacobian(leg, q);
    let x = fk(leg, q);
    let v = j.tip_velocity(qdot);
    j.transpose_map(&impedance_force(&x, &v, setpoint, gains)) + tau_ff
}

pub fn clamp_to_envelope(tau: &Vector3<f64>, envelope: &JointEnvelope) -> JointCommand {
    let mut cmd = JointCommand::default();
    for j in 0..3 {
        let peak = envelope.peak_torque[j];
        let t = tau[j].clamp(-peak, peak);
        cmd.clamped[j] = tau[j].abs() > peak;
        cmd.thermal[j] = t.abs() > envelope.continuous_torque[j];
        cmd.torques[j] = t;
    }
    cmd
}

pub fn impedance_torques(
    leg: &LegModel,
    q: &Vector3<f64>,
    qdot: &Vector3<f64>,
    setpoint: &TipCommand,
    gains: &ImpedanceGains,
    tau_ff: &Vector3<f64>,
    envelope: &JointEnvelope,
) -> JointCommand {
    clamp_to_envelope(&raw_impedance_torques(leg, q, qdot, setpoint, gains, tau_ff), envelope)
}
