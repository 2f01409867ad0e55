//! Numerical oracle suites for kinematics and dynamics.
//!
//! Each check compares the analytic implementation against something built
//! independently: a homogeneous transform chain, finite differences, or an
//! energy balance computed from point-mass positions.

use crate::config::default_model;
use crate::dynamics::{gravity_torques, inverse_dynamics};
use crate::kinematics::{fk, ik, jacobian};
use crate::model::{LegId, LegModel, RobotModel, GRAVITY};
use crate::stance::{solve_stance_forces, StanceProblem};
use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt;

/// Uniform joint samples inside the leg's limits.
pub fn sample_joints(leg: &LegModel, n: usize, seed: u64) -> Vec<Vector3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| Vector3::from_fn(|j, _| rng.random_range(leg.joint_limits[j].lo..=leg.joint_limits[j].hi)))
        .collect()
}

/// Link frames from a chain of elementary rotations and translations.
fn transform_chain(leg: &LegModel, q: &Vector3<f64>) -> [Isometry3<f64>; 4] {
    let rot = |axis: Vector3<f64>, a: f64| {
        Isometry3::from_parts(
            Translation3::identity(),
            UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(axis), a),
        )
    };
    let coxa = rot(Vector3::z(), q[0]);
    let femur = coxa * Isometry3::translation(leg.coxa, 0.0, 0.0) * rot(Vector3::y(), -q[1]);
    let tibia = femur * Isometry3::translation(leg.femur, 0.0, 0.0) * rot(Vector3::y(), q[2]);
    let tip = tibia * Isometry3::translation(leg.tibia, 0.0, 0.0);
    [coxa, femur, tibia, tip]
}

pub fn chain_tip(leg: &LegModel, q: &Vector3<f64>) -> Vector3<f64> {
    transform_chain(leg, q)[3].translation.vector
}

/// Link centre-of-mass positions from the transform chain.
pub fn chain_coms(leg: &LegModel, q: &Vector3<f64>) -> [Vector3<f64>; 3] {
    let frames = transform_chain(leg, q);
    std::array::from_fn(|i| (frames[i] * nalgebra::Point3::new(leg.link_com_offsets[i], 0.0, 0.0)).coords)
}

fn potential(leg: &LegModel, q: &Vector3<f64>, gravity: &Vector3<f64>) -> f64 {
    chain_coms(leg, q)
        .iter()
        .zip(leg.link_masses)
        .map(|(c, m)| -m * gravity.dot(c))
        .sum()
}

/// Fourth-order central difference of a scalar function.
fn derivative5(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h)
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicsReport {
    pub samples: usize,
    /// Max ‖fk − transform chain‖ (m).
    pub fk_vs_chain: f64,
    /// Max ‖ik(fk(q)) − q‖ (rad).
    pub ik_round_trip: f64,
    /// Max ‖fk(ik(p)) − p‖ (m).
    pub fk_ik_position: f64,
    /// Max elementwise ‖J − finite differences‖.
    pub jacobian_vs_fd: f64,
    /// Max virtual-work mismatch |τ·q̇ − F·v| for τ = JᵀF.
    pub virtual_work: f64,
    pub ik_failures: usize,
}

impl fmt::Display for KinematicsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples                {}", self.samples)?;
        writeln!(f, "fk vs transform chain  {:.3e} m", self.fk_vs_chain)?;
        writeln!(f, "ik(fk(q)) - q          {:.3e} rad", self.ik_round_trip)?;
        writeln!(f, "fk(ik(p)) - p          {:.3e} m", self.fk_ik_position)?;
        writeln!(f, "jacobian vs fd         {:.3e}", self.jacobian_vs_fd)?;
        writeln!(f, "virtual work           {:.3e}", self.virtual_work)?;
        write!(f, "ik failures            {}", self.ik_failures)
    }
}

pub fn kinematics_suite(model: &RobotModel, samples: usize, seed: u64) -> KinematicsReport {
    let leg = model.leg(LegId::FrontLeft);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut r = KinematicsReport {
        samples,
        fk_vs_chain: 0.0,
        ik_round_trip: 0.0,
        fk_ik_position: 0.0,
        jacobian_vs_fd: 0.0,
        virtual_work: 0.0,
        ik_failures: 0,
    };
    let h = 1e-6;
    for q in sample_joints(leg, samples, seed) {
        let p = fk(leg, &q);
        r.fk_vs_chain = r.fk_vs_chain.max((p - chain_tip(leg, &q)).norm());
        match ik(leg, &p) {
            Ok(back) => {
                r.ik_round_trip = r.ik_round_trip.max((back - q).norm());
                r.fk_ik_position = r.fk_ik_position.max((fk(leg, &back) - p).norm());
            }
            Err(_) => r.ik_failures += 1,
        }
        let j = jacobian(leg, &q);
        for k in 0..3 {
            let mut e = Vector3::zeros();
            e[k] = h;
            let fd = (fk(leg, &(q + e)) - fk(leg, &(q - e))) / (2.0 * h);
            r.jacobian_vs_fd = r.jacobian_vs_fd.max((j.0.column(k) - fd).amax());
        }
        let qd = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let force = Vector3::from_fn(|_, _| rng.random_range(-300.0..300.0));
        let tau = j.transpose_map(&force);
        r.virtual_work = r.virtual_work.max((tau.dot(&qd) - force.dot(&j.tip_velocity(&qd))).abs());
    }
    r
}

#[derive(Clone, Debug, PartialEq)]
pub struct DynamicsReport {
    pub samples: usize,
    /// Max |τ_gravity − ∂V/∂q| (N·m).
    pub gravity_vs_potential: f64,
    /// Max |τ·q̇ − dE/dt| / max(1, |τ·q̇|) along random smooth trajectories.
    pub power_balance_relative: f64,
    /// ‖Ax − b‖ at λ = 0 for six-leg stance.
    pub hexapod_residual: f64,
    /// ‖Ax − b‖ at λ = 0 for tripod stance.
    pub tripod_residual: f64,
    /// Max |F_i − (0, 0, mg/6)| in symmetric six-leg stance.
    pub hexapod_share_error: f64,
}

impl fmt::Display for DynamicsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples                {}", self.samples)?;
        writeln!(f, "gravity vs dV/dq       {:.3e} N·m", self.gravity_vs_potential)?;
        writeln!(f, "power balance (rel)    {:.3e}", self.power_balance_relative)?;
        writeln!(f, "hexapod residual       {:.3e} N", self.hexapod_residual)?;
        writeln!(f, "tripod residual        {:.3e} N", self.tripod_residual)?;
        write!(f, "hexapod mg/6 error     {:.3e} N", self.hexapod_share_error)
    }
}

/// Smooth joint trajectory `q(t) = q0 + a ⊙ sin(ω t + φ)` with analytic derivatives.
struct Wave {
    q0: Vector3<f64>,
    amp: Vector3<f64>,
    omega: Vector3<f64>,
    phase: Vector3<f64>,
}

impl Wave {
    fn at(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        let arg = Vector3::from_fn(|i, _| self.omega[i] * t + self.phase[i]);
        let q = Vector3::from_fn(|i, _| self.q0[i] + self.amp[i] * arg[i].sin());
        let qd = Vector3::from_fn(|i, _| self.amp[i] * self.omega[i] * arg[i].cos());
        let qdd = Vector3::from_fn(|i, _| -self.amp[i] * self.omega[i] * self.omega[i] * arg[i].sin());
        (q, qd, qdd)
    }
}

/// Kinetic plus potential energy of the point-mass chain, with link
/// velocities from differentiating the transform-chain positions.
fn chain_energy(leg: &LegModel, wave: &Wave, t: f64, gravity: &Vector3<f64>) -> f64 {
    let h = 1e-4;
    let pos = |s: f64| chain_coms(leg, &wave.at(s).0);
    let (a, b, c, d) = (pos(t - 2.0 * h), pos(t - h), pos(t + h), pos(t + 2.0 * h));
    let kinetic: f64 = (0..3)
        .map(|i| {
            let v = (a[i] - b[i] * 8.0 + c[i] * 8.0 - d[i]) / (12.0 * h);
            0.5 * leg.link_masses[i] * v.norm_squared()
        })
        .sum();
    kinetic + potential(leg, &wave.at(t).0, gravity)
}

pub fn dynamics_suite(model: &RobotModel, samples: usize, seed: u64) -> DynamicsReport {
    let leg = model.leg(LegId::FrontLeft);
    let g = Vector3::new(0.0, 0.0, -GRAVITY);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gravity_err: f64 = 0.0;
    for q in sample_joints(leg, samples, seed ^ 0xd1) {
        let tau = gravity_torques(leg, &q, &g);
        for k in 0..3 {
            let dv = derivative5(
                |x| {
                    let mut qq = q;
                    qq[k] = x;
                    potential(leg, &qq, &g)
                },
                q[k],
                1e-3,
            );
            gravity_err = gravity_err.max((tau[k] - dv).abs());
        }
    }

    let mut power_rel: f64 = 0.0;
    let trajectories = (samples / 20).max(1);
    for _ in 0..trajectories {
        let lim = &leg.joint_limits;
        let q0 = Vector3::from_fn(|i, _| 0.5 * (lim[i].lo + lim[i].hi));
        let wave = Wave {
            q0,
            amp: Vector3::from_fn(|i, _| rng.random_range(0.1..0.4) * (lim[i].hi - lim[i].lo) * 0.5),
            omega: Vector3::from_fn(|_, _| rng.random_range(1.0..8.0)),
            phase: Vector3::from_fn(|_, _| rng.random_range(0.0..std::f64::consts::TAU)),
        };
        for _ in 0..20 {
            let t = rng.random_range(0.0..2.0);
            let (q, qd, qdd) = wave.at(t);
            let power = inverse_dynamics(leg, &q, &qd, &qdd, &g).dot(&qd);
            let de = derivative5(|s| chain_energy(leg, &wave, s, &g), t, 1e-3);
            power_rel = power_rel.max((power - de).abs() / power.abs().max(1.0));
        }
    }

    let mass = model.body.mass;
    let all: Vec<_> = LegId::ALL.iter().map(|&l| model.default_foothold(l)).collect();
    let tripod: Vec<_> = [LegId::FrontLeft, LegId::MiddleRight, LegId::RearLeft]
        .iter()
        .map(|&l| model.default_foothold(l))
        .collect();
    let hex = solve_stance_forces(&StanceProblem::quasi_static(all, mass, 0.0)).expect("six feet");
    let tri = solve_stance_forces(&StanceProblem::quasi_static(tripod, mass, 0.0)).expect("three feet");
    let share = Vector3::new(0.0, 0.0, mass * GRAVITY / 6.0);
    DynamicsReport {
        samples,
        gravity_vs_potential: gravity_err,
        power_balance_relative: power_rel,
        hexapod_residual: hex.residual,
        tripod_residual: tri.residual,
        hexapod_share_error: hex.forces.iter().map(|f| (f - share).amax()).fold(0.0, f64::max),
    }
}

/// Both suites against the default model.
pub fn default_suites(samples: usize, seed: u64) -> (KinematicsReport, DynamicsReport) {
    let m = default_model();
    (kinematics_suite(&m, samples, seed), dynamics_suite(&m, samples.min(10_000), seed))
}
