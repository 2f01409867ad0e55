//! Per-tick locomotion controller.
//!
//! Each tick runs gait phase → tip setpoint → inverse kinematics →
//! inverse dynamics plus stance force distribution → task-frame impedance,
//! then advances the gait phase. Contact is never sensed: legs the gait
//! places in stance are assumed to be on the ground.

use crate::dynamics::{feedforward_torques, inverse_dynamics};
use crate::gait::{advance, GaitDefinition, GaitMode, GaitPhaseState};
use crate::impedance::{impedance_torques, ImpedanceGains, JointCommand};
use crate::kinematics::{fk, ik_acceleration, ik_unchecked, ik_velocity, project_reachable, JointState};
use crate::model::{LegId, RobotModel, GRAVITY};
use crate::stance::{solve_stance_forces, StanceProblem, DEFAULT_DAMPING_LAMBDA};
use crate::trajectory::{build_trajectory, evaluate, LegTrajectory, PlanarTwist, TipCommand, TrajectoryError, DEFAULT_CLEARANCE};
use nalgebra::{UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Fixed control rate (Hz).
pub const CONTROL_RATE: f64 = 800.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    pub gains: ImpedanceGains,
    pub damping_lambda: f64,
    pub clearance: f64,
    pub control_rate: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gains: ImpedanceGains::default(),
            damping_lambda: DEFAULT_DAMPING_LAMBDA,
            clearance: DEFAULT_CLEARANCE,
            control_rate: CONTROL_RATE,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error("invalid command: {0}")]
    Command(String),
}

/// What the controller reads from the robot each tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    /// Body orientation in the world (from the IMU on hardware).
    pub orientation: UnitQuaternion<f64>,
    pub joints: [JointState; 6],
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LegOutput {
    /// Tip setpoint in the body frame.
    pub setpoint: TipCommand,
    pub command: JointCommand,
    pub feedforward: Vector3<f64>,
    pub in_stance: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlOutput {
    pub legs: [LegOutput; 6],
    /// Global gait phase the commands were computed for.
    pub global_phase: f64,
    pub stance_residual: f64,
}

pub struct Controller {
    model: RobotModel,
    gait: GaitDefinition,
    config: ControllerConfig,
    twist: PlanarTwist,
    step_frequency: f64,
    /// `None` when standing still (zero step frequency).
    trajectories: Option<Vec<LegTrajectory>>,
    phase: GaitPhaseState,
    ticks: u64,
}

impl Controller {
    pub fn new(
        model: RobotModel,
        gait: GaitDefinition,
        config: ControllerConfig,
        twist: PlanarTwist,
        step_frequency: f64,
    ) -> Result<Self, ControllerError> {
        if !(step_frequency >= 0.0 && step_frequency.is_finite()) {
            return Err(ControllerError::Command(format!("step frequency {step_frequency} must be >= 0")));
        }
        if !(config.control_rate > 0.0 && config.control_rate.is_finite()) {
            return Err(ControllerError::Command(format!(
                "control rate {} must be > 0",
                config.control_rate
            )));
        }
        let trajectories = if step_frequency > 0.0 {
            let t = LegId::ALL
                .iter()
                .map(|&leg| build_trajectory(&model, leg, &gait, twist, step_frequency, config.clearance))
                .collect::<Result<Vec<_>, _>>()?;
            Some(t)
        } else {
            if twist != PlanarTwist::default() {
                return Err(ControllerError::Command(
                    "nonzero body velocity needs a positive step frequency".into(),
                ));
            }
            None
        };
        let phase = GaitPhaseState::at(0.0, &gait);
        Ok(Controller {
            model,
            gait,
            config,
            twist,
            step_frequency,
            trajectories,
            phase,
            ticks: 0,
        })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.config.control_rate
    }

    pub fn model(&self) -> &RobotModel {
        &self.model
    }

    pub fn twist(&self) -> PlanarTwist {
        self.twist
    }

    pub fn phase(&self) -> &GaitPhaseState {
        &self.phase
    }

    pub fn trajectories(&self) -> Option<&[LegTrajectory]> {
        self.trajectories.as_deref()
    }

    pub fn is_standing(&self) -> bool {
        self.trajectories.is_none()
    }

    pub fn ticks(&self) -> u64 {
        self.ticks
    }

    fn leg_in_stance(&self, leg: LegId) -> bool {
        self.is_standing() || self.phase.leg(leg).mode == GaitMode::Stance
    }

    /// Body-frame tip setpoints at the current phase.
    pub fn setpoints(&self) -> [TipCommand; 6] {
        LegId::ALL.map(|leg| match &self.trajectories {
            Some(t) => {
                let p = self.phase.leg(leg);
                evaluate(&t[leg.index()], p.mode, p.local_progress)
            }
            None => TipCommand {
                position: self.model.default_foothold(leg),
                ..TipCommand::default()
            },
        })
    }

    /// Computes joint commands for the current phase, then advances the phase by one tick.
    pub fn tick(&mut self, m: &Measurement) -> ControlOutput {
        let setpoints = self.setpoints();
        let gravity_body = m.orientation.inverse() * Vector3::new(0.0, 0.0, -GRAVITY);

        // Quasi-static support over the legs the gait says are on the ground.
        let stance: Vec<LegId> = LegId::ALL.into_iter().filter(|&l| self.leg_in_stance(l)).collect();
        let feet: Vec<Vector3<f64>> = stance
            .iter()
            .map(|&l| self.model.mount(l).point_to_body(&fk(self.model.leg(l), &m.joints[l.index()].q)))
            .collect();
        let weight = -gravity_body * self.model.body.mass;
        let problem = StanceProblem {
            foot_positions: feet,
            com: Vector3::zeros(),
            body_wrench: Vector6::new(weight.x, weight.y, weight.z, 0.0, 0.0, 0.0),
            damping_lambda: self.config.damping_lambda,
        };
        let (stance_forces, stance_residual) = match solve_stance_forces(&problem) {
            Ok(s) => (s.forces, s.residual),
            Err(_) => (Vec::new(), 0.0),
        };

        let mut legs = [LegOutput::default(); 6];
        for leg in LegId::ALL {
            let i = leg.index();
            let model_leg = self.model.leg(leg);
            let mount = self.model.mount(leg);
            let sp = setpoints[i];
            let sp_leg = TipCommand {
                position: mount.point_to_leg(&sp.position),
                velocity: mount.vector_to_leg(&sp.velocity),
                acceleration: mount.vector_to_leg(&sp.acceleration),
            };
            let joints = m.joints[i];

            // Desired joint motion for the inverse dynamics feed-forward.
            let target = project_reachable(model_leg, &sp_leg.position, 1e-6);
            let q_des = ik_unchecked(model_leg, &target).unwrap_or(joints.q);
            let qd_des = ik_velocity(model_leg, &q_des, &sp_leg.velocity).unwrap_or_else(|_| Vector3::zeros());
            let qdd_des = ik_acceleration(model_leg, &q_des, &qd_des, &sp_leg.acceleration).unwrap_or_else(|_| Vector3::zeros());
            let g_leg = mount.vector_to_leg(&gravity_body);
            let mut tau_ff = inverse_dynamics(model_leg, &joints.q, &qd_des, &qdd_des, &g_leg);

            let in_stance = self.leg_in_stance(leg);
            if let Some(k) = stance.iter().position(|&l| l == leg) {
                if let Some(f) = stance_forces.get(k) {
                    tau_ff += feedforward_torques(model_leg, &joints.q, &mount.vector_to_leg(f));
                }
            }

            let command = impedance_torques(
                model_leg,
                &joints.q,
                &joints.qdot,
                &sp_leg,
                &self.config.gains,
                &tau_ff,
                &self.model.envelope,
            );
            legs[i] = LegOutput {
                setpoint: sp,
                command,
                feedforward: tau_ff,
                in_stance,
            };
        }

        let out = ControlOutput {
            legs,
            global_phase: self.phase.global_phase,
            stance_residual,
        };
        self.advance();
        out
    }

    fn advance(&mut self) {
        self.ticks += 1;
        if self.step_frequency > 0.0 {
            // Phase from the tick count rather than accumulated increments,
            // so long episodes stay exactly periodic.
            let cycles = self.ticks as f64 * self.step_frequency / self.config.control_rate;
            self.phase = GaitPhaseState::at(cycles.fract(), &self.gait);
        } else {
            self.phase = advance(&self.phase, &self.gait, 0.0, self.dt());
        }
    }
}
