//! Rigid-body plant with massless legs and penalty ground contact.
//!
//! The body is a single rigid body carrying the whole robot mass. Legs have
//! no inertia: joint torques map to a foot force through `J⁻ᵀ`, and a foot on
//! the ground moves quasi-statically so that the contact force balances the
//! leg force exactly. A foot in the air follows its commanded tip motion
//! with first-order lag.

use crate::kinematics::{ik_unchecked, ik_velocity, jacobian, project_reachable, JointState};
use crate::model::{LegId, RobotModel, GRAVITY};
use crate::trajectory::TipCommand;
use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

/// Smallest Jacobian singular value at which torques still map to a foot force.
pub const FORCE_MAP_SINGULARITY: f64 = 1e-4;

/// Reachability margin kept when projecting feet back into the leg's shell.
const REACH_MARGIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    /// Normal stiffness (N/m).
    pub stiffness: f64,
    /// Normal damping (N·s/m).
    pub damping: f64,
    /// Tangential viscous coefficient (N·s/m).
    pub tangential_viscosity: f64,
    /// Coulomb bound on the tangential force.
    pub friction_coefficient: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams {
            stiffness: 5.0e4,
            damping: 2.0e3,
            tangential_viscosity: 5.0e4,
            friction_coefficient: 0.7,
        }
    }
}

/// Ground geometry: flat, optionally with a single raised step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Terrain {
    Flat,
    /// Ground rises by `height` for all `x >= start`.
    Step {
        start: f64,
        height: f64,
    },
}

impl Terrain {
    pub fn height(&self, x: f64, _y: f64) -> f64 {
        match *self {
            Terrain::Flat => 0.0,
            Terrain::Step { start, height } => {
                if x >= start {
                    height
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantParams {
    pub contact: ContactParams,
    pub substeps: u32,
    /// Rate (1/s) at which an airborne foot closes on its setpoint.
    pub air_tracking_rate: f64,
    pub mass: f64,
    /// Principal moments of inertia about the body axes (kg·m²).
    pub inertia: Vector3<f64>,
    pub gravity: f64,
    pub terrain: Terrain,
    /// Twist norm beyond which the episode is declared diverged.
    pub max_twist: f64,
    /// Body height below which the episode is declared diverged (m).
    pub min_height: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        PlantParams {
            contact: ContactParams::default(),
            substeps: 4,
            air_tracking_rate: 60.0,
            mass: 50.5,
            inertia: box_inertia(50.5, 1.0, 0.58, 0.25),
            gravity: GRAVITY,
            terrain: Terrain::Flat,
            max_twist: 50.0,
            min_height: 0.1,
        }
    }
}

impl PlantParams {
    /// Defaults with mass and inertia taken from the model: a uniform box
    /// of the body length, hip-to-hip width and a quarter metre thick.
    pub fn for_model(model: &RobotModel) -> Self {
        let m = model.body.mass;
        PlantParams {
            mass: m,
            inertia: box_inertia(m, model.body.length, 2.0 * model.body.hip_lateral_offset, 0.25),
            ..PlantParams::default()
        }
    }
}

fn box_inertia(m: f64, lx: f64, ly: f64, lz: f64) -> Vector3<f64> {
    Vector3::new(ly * ly + lz * lz, lx * lx + lz * lz, lx * lx + ly * ly) * (m / 12.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FootState {
    /// World-frame foot position.
    pub position: Vector3<f64>,
    /// World-frame foot velocity over the last substep.
    pub velocity: Vector3<f64>,
    pub in_contact: bool,
    /// Depth below the terrain surface (0 when airborne).
    pub penetration: f64,
    /// Ground reaction on the foot (world frame, zero when airborne).
    pub ground_force: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimState {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
    /// World frame.
    pub linear_velocity: Vector3<f64>,
    /// Body frame.
    pub angular_velocity: Vector3<f64>,
    pub feet: [FootState; 6],
    pub joints: [JointState; 6],
    pub time: f64,
    pub steps: u64,
    /// Leg-frame foot force last applied by each leg, held through singular ticks.
    pub leg_forces: [Vector3<f64>; 6],
    pub singular_events: u64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("simulation diverged at t = {time:.4} s: {reason}")]
    Divergence { time: f64, reason: String },
}

/// Torques and tip setpoints the plant receives from the controller each tick.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantInput {
    pub torques: [Vector3<f64>; 6],
    /// Body-frame setpoints; airborne feet follow these.
    pub setpoints: [TipCommand; 6],
}

impl PlantInput {
    pub fn zero(setpoints: [TipCommand; 6]) -> Self {
        PlantInput {
            torques: [Vector3::zeros(); 6],
            setpoints,
        }
    }
}

impl SimState {
    /// Body at rest at `height` above the terrain; feet placed at their
    /// body-frame targets, those at or below the ground resting on it.
    pub fn new(model: &RobotModel, params: &PlantParams, height: f64, feet_body: &[Vector3<f64>; 6]) -> SimState {
        let position = Vector3::new(0.0, 0.0, params.terrain.height(0.0, 0.0) + height);
        let orientation = UnitQuaternion::identity();
        let feet = feet_body.map(|p| {
            let mut w = position + p;
            let ground = params.terrain.height(w.x, w.y);
            let in_contact = w.z <= ground;
            if in_contact {
                w.z = ground;
            }
            FootState {
                position: w,
                velocity: Vector3::zeros(),
                in_contact,
                penetration: 0.0,
                ground_force: Vector3::zeros(),
            }
        });
        let mut s = SimState {
            position,
            orientation,
            linear_velocity: Vector3::zeros(),
            angular_velocity: Vector3::zeros(),
            feet,
            joints: [JointState::default(); 6],
            time: 0.0,
            steps: 0,
            leg_forces: [Vector3::zeros(); 6],
            singular_events: 0,
        };
        s.update_joints(model);
        s
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.orientation.to_rotation_matrix().into_inner()
    }

    /// Body-frame position of a foot.
    pub fn foot_in_body(&self, leg: LegId) -> Vector3<f64> {
        self.orientation.inverse() * (self.feet[leg.index()].position - self.position)
    }

    /// World-frame angular velocity.
    pub fn angular_velocity_world(&self) -> Vector3<f64> {
        self.orientation * self.angular_velocity
    }

    /// Foot velocity relative to the body, in the body frame.
    fn foot_velocity_in_body(&self, leg: LegId) -> Vector3<f64> {
        let f = &self.feet[leg.index()];
        let r = f.position - self.position;
        let w = self.angular_velocity_world();
        self.orientation.inverse() * (f.velocity - self.linear_velocity - w.cross(&r))
    }

    fn update_joints(&mut self, model: &RobotModel) {
        for leg in LegId::ALL {
            let i = leg.index();
            let mount = model.mount(leg);
            let l = model.leg(leg);
            let p = project_reachable(l, &mount.point_to_leg(&self.foot_in_body(leg)), REACH_MARGIN);
            let Ok(q) = ik_unchecked(l, &p) else { continue };
            let v = mount.vector_to_leg(&self.foot_velocity_in_body(leg));
            let qdot = ik_velocity(l, &q, &v).unwrap_or(self.joints[i].qdot);
            self.joints[i] = JointState { q, qdot };
        }
    }

    fn kinetic_energy(&self, params: &PlantParams) -> f64 {
        let w = self.angular_velocity;
        0.5 * params.mass * self.linear_velocity.norm_squared() + 0.5 * w.dot(&params.inertia.component_mul(&w))
    }

    /// Translational plus rotational kinetic energy plus gravitational potential.
    pub fn mechanical_energy(&self, params: &PlantParams) -> f64 {
        self.kinetic_energy(params) + params.mass * params.gravity * self.position.z
    }

    /// Total normal force currently carried by the ground.
    pub fn total_normal_force(&self) -> f64 {
        self.feet.iter().map(|f| f.ground_force.z).sum()
    }

    fn check(&self, params: &PlantParams) -> Result<(), SimError> {
        let fail = |reason: String| Err(SimError::Divergence { time: self.time, reason });
        let finite = self
            .position
            .iter()
            .chain(self.linear_velocity.iter())
            .chain(self.angular_velocity.iter())
            .all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite());
        if !finite {
            return fail("non-finite state".into());
        }
        let twist = (self.linear_velocity.norm_squared() + self.angular_velocity.norm_squared()).sqrt();
        if twist > params.max_twist {
            return fail(format!("twist norm {twist:.3} exceeds {}", params.max_twist));
        }
        let ground = params.terrain.height(self.position.x, self.position.y);
        if self.position.z - ground < params.min_height {
            return fail(format!(
                "body height {:.4} m below {} m",
                self.position.z - ground,
                params.min_height
            ));
        }
        Ok(())
    }
}

/// Advances the plant by one control tick of `dt`, split into `params.substeps`.
pub fn step(state: &SimState, input: &PlantInput, model: &RobotModel, params: &PlantParams, dt: f64) -> Result<SimState, SimError> {
    debug_assert!(dt > 0.0);
    let mut s = *state;
    let n = params.substeps.max(1);
    let h = dt / n as f64;
    for _ in 0..n {
        substep(&mut s, input, model, params, h);
        s.update_joints(model);
    }
    s.steps += 1;
    s.time = s.steps as f64 * dt;
    s.check(params)?;
    Ok(s)
}

fn substep(s: &mut SimState, input: &PlantInput, model: &RobotModel, params: &PlantParams, h: f64) {
    let c = &params.contact;
    let rot = s.orientation;
    let mut force = Vector3::new(0.0, 0.0, -params.mass * params.gravity);
    let mut moment = Vector3::zeros();
    let mut next_feet = s.feet;
    let rel_before: [Vector3<f64>; 6] = std::array::from_fn(|i| rot.inverse() * (s.feet[i].position - s.position));

    // Contact feet: quasi-static force balance between leg and ground.
    for leg in LegId::ALL {
        let i = leg.index();
        let foot = s.feet[i];
        if !foot.in_contact {
            continue;
        }
        let mount = model.mount(leg);
        let l = model.leg(leg);
        let q = s.joints[i].q;
        let j = jacobian(l, &q);
        let f_leg = if j.smallest_singular_value() < FORCE_MAP_SINGULARITY {
            s.singular_events += 1;
            s.leg_forces[i]
        } else {
            match j.0.transpose().lu().solve(&input.torques[i]) {
                Some(f) => f,
                None => {
                    s.singular_events += 1;
                    s.leg_forces[i]
                }
            }
        };
        s.leg_forces[i] = f_leg;
        // Force the leg pushes onto the ground, world frame.
        let push = rot * mount.vector_to_body(&f_leg);
        let normal = -push.z;
        let next = &mut next_feet[i];
        if normal <= 0.0 {
            // The leg is pulling up: the foot leaves the ground.
            next.in_contact = false;
            next.penetration = 0.0;
            next.ground_force = Vector3::zeros();
            continue;
        }
        let ground = params.terrain.height(foot.position.x, foot.position.y);
        let pen = ground - foot.position.z;
        let vz = (c.stiffness * pen - normal) / c.damping;
        let tangential = push.xy();
        let slide = tangential / c.tangential_viscosity;
        let limit = c.friction_coefficient * normal;
        let t_norm = tangential.norm();
        let friction = if t_norm > limit {
            -tangential * (limit / t_norm)
        } else {
            -tangential
        };
        let g = Vector3::new(friction.x, friction.y, normal);
        force += g;
        moment += (foot.position - s.position).cross(&g);
        next.velocity = Vector3::new(slide.x, slide.y, vz);
        next.position = foot.position + next.velocity * h;
        next.ground_force = g;
        let new_ground = params.terrain.height(next.position.x, next.position.y);
        next.penetration = (new_ground - next.position.z).max(0.0);
        if next.position.z > new_ground {
            next.in_contact = false;
            next.penetration = 0.0;
        }
    }

    // Body: semi-implicit Euler, angular dynamics in the body frame.
    let inertia = params.inertia;
    let w = s.angular_velocity;
    let moment_body = rot.inverse() * moment;
    let gyro = w.cross(&inertia.component_mul(&w));
    let w_dot = (moment_body - gyro).component_div(&inertia);
    s.linear_velocity += force / params.mass * h;
    s.position += s.linear_velocity * h;
    s.angular_velocity += w_dot * h;
    let delta = UnitQuaternion::from_scaled_axis(s.angular_velocity * h);
    s.orientation = UnitQuaternion::new_normalize((s.orientation * delta).into_inner());

    // Airborne feet: first-order tracking of the setpoint relative to the body.
    for leg in LegId::ALL {
        let i = leg.index();
        if s.feet[i].in_contact {
            continue;
        }
        let foot = &mut next_feet[i];
        let mount = model.mount(leg);
        let l = model.leg(leg);
        let sp = input.setpoints[i];
        let rel = rel_before[i];
        let rel_dot = sp.velocity + (sp.position - rel) * params.air_tracking_rate;
        let rel_next = rel + rel_dot * h;
        let rel_next = mount.point_to_body(&project_reachable(l, &mount.point_to_leg(&rel_next), REACH_MARGIN));
        let world = s.position + s.orientation * rel_next;
        foot.velocity = (world - foot.position) / h;
        foot.position = world;
        foot.ground_force = Vector3::zeros();
        let ground = params.terrain.height(world.x, world.y);
        if world.z <= ground {
            foot.in_contact = true;
            foot.penetration = ground - world.z;
        } else {
            foot.penetration = 0.0;
        }
    }
    s.feet = next_feet;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_model;

    fn standing(model: &RobotModel, params: &PlantParams, height: f64) -> (SimState, PlantInput) {
        let feet = LegId::ALL.map(|l| {
            let mut p = model.default_foothold(l);
            p.z = -model.body.stance_height;
            p
        });
        let state = SimState::new(model, params, height, &feet);
        let setpoints = feet.map(|p| TipCommand {
            position: p,
            ..TipCommand::default()
        });
        (state, PlantInput::zero(setpoints))
    }

    #[test]
    fn unloaded_robot_without_gravity_stays_put() {
        let model = default_model();
        let params = PlantParams {
            gravity: 0.0,
            ..PlantParams::for_model(&model)
        };
        let (mut s, input) = standing(&model, &params, model.body.stance_height);
        let start = s;
        for _ in 0..400 {
            s = step(&s, &input, &model, &params, 1.0 / 800.0).unwrap();
        }
        assert!((s.position - start.position).norm() < 1e-12);
        assert!(s.linear_velocity.norm() < 1e-12 && s.angular_velocity.norm() < 1e-12);
        for (a, b) in s.feet.iter().zip(&start.feet) {
            assert!((a.position - b.position).norm() < 1e-9);
        }
    }

    #[test]
    fn free_fall_conserves_mechanical_energy() {
        let model = default_model();
        let params = PlantParams::for_model(&model);
        let (mut s, input) = standing(&model, &params, 3.0);
        assert!(s.feet.iter().all(|f| !f.in_contact));
        s.linear_velocity = Vector3::new(0.2, -0.1, 0.5);
        s.angular_velocity = Vector3::new(0.0, 0.0, 0.3);
        let e0 = s.mechanical_energy(&params);
        let dt = 1.0 / 800.0;
        for _ in 0..320 {
            s = step(&s, &input, &model, &params, dt).unwrap();
        }
        assert!(s.feet.iter().all(|f| !f.in_contact));
        let drift = (s.mechanical_energy(&params) - e0).abs();
        // Semi-implicit Euler under constant gravity drifts by at most m g² h t / 2.
        let bound = params.mass * params.gravity.powi(2) * (dt / 4.0) * 0.4;
        assert!(drift <= bound, "drift {drift} J, bound {bound} J");
        let yaw_energy = 0.5 * params.inertia.z * s.angular_velocity.z.powi(2);
        assert!((yaw_energy - 0.5 * params.inertia.z * 0.09).abs() < 1e-12);
    }

    #[test]
    fn zero_torques_let_the_body_fall() {
        let model = default_model();
        let params = PlantParams::for_model(&model);
        let (mut s, input) = standing(&model, &params, model.body.stance_height);
        let dt = 1.0 / 800.0;
        let mut fell = None;
        for _ in 0..800 {
            match step(&s, &input, &model, &params, dt) {
                Ok(next) => s = next,
                Err(e) => {
                    fell = Some(e);
                    break;
                }
            }
        }
        match fell {
            Some(SimError::Divergence { time, reason }) => {
                assert!(reason.contains("height"), "{reason}");
                assert!(time < 0.5, "fell after {time} s");
            }
            None => panic!("body held up with zero torque; z = {}", s.position.z),
        }
    }

    #[test]
    fn box_inertia_matches_the_formula() {
        let i = box_inertia(12.0, 1.0, 2.0, 3.0);
        assert_eq!(i, Vector3::new(13.0, 10.0, 5.0));
    }
}
