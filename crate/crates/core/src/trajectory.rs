//! Trajectory engine: four linked quartic Bézier segments per leg (stance,
//! liftoff, midswing, touchdown) forming a C²-continuous closed step cycle.
//!
//! The stance segment is a uniform straight sweep, so stance velocity is
//! exactly the negated ground-relative body velocity at the foot and stance
//! acceleration is zero. Each swing junction is tied to its neighbours
//! through the quartic endpoint identities
//!
//! ```text
//! B'(0)  = 4 (P1 - P0)            B'(1)  = 4 (P4 - P3)
//! B''(0) = 12 (P2 - 2 P1 + P0)    B''(1) = 12 (P4 - 2 P3 + P2)
//! ```
//!
//! scaled by each segment's duration. Liftoff's first three points continue
//! the stance sweep and touchdown's last three lead back into it. The two
//! swing junction points are placed on a reference profile (a quintic
//! Hermite blend horizontally, a `64 τ³(1-τ)³` bump vertically) and the
//! midswing midpoint is pinned to the apex. The remaining five points per
//! axis (liftoff P3, midswing P1..P3, touchdown P1) solve a square linear
//! system that is nonsingular for any positive durations.

use crate::gait::{GaitDefinition, GaitMode};
use crate::model::{LegId, RobotModel};
use nalgebra::{Matrix5, Vector3, Vector5};
use std::fmt;
use thiserror::Error;

/// Default swing apex above the foothold plane (m).
pub const DEFAULT_CLEARANCE: f64 = 0.08;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("stride {stride:.4} m for leg {leg} exceeds the {limit:.4} m workspace")]
    WorkspaceViolation { leg: LegId, stride: f64, limit: f64 },
    #[error("trajectory construction failed: {0}")]
    Construction(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Commanded body motion in the horizontal plane (body frame).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanarTwist {
    pub vx: f64,
    pub vy: f64,
    pub wz: f64,
}

impl PlanarTwist {
    pub fn new(vx: f64, vy: f64, wz: f64) -> Self {
        PlanarTwist { vx, vy, wz }
    }

    pub fn forward(vx: f64) -> Self {
        PlanarTwist { vx, vy: 0.0, wz: 0.0 }
    }

    pub fn scaled(&self, s: f64) -> Self {
        PlanarTwist::new(self.vx * s, self.vy * s, self.wz * s)
    }

    /// Body velocity relative to the ground at a body-frame point.
    pub fn velocity_at(&self, p: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(self.vx - self.wz * p.y, self.vy + self.wz * p.x, 0.0)
    }
}

/// Cartesian tip setpoint in the body frame.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TipCommand {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BezierSegment {
    pub control_points: [Vector3<f64>; 5],
    pub duration: f64,
}

fn casteljau<const N: usize>(mut pts: [Vector3<f64>; N], u: f64) -> Vector3<f64> {
    for level in 1..N {
        for k in 0..N - level {
            pts[k] = pts[k] * (1.0 - u) + pts[k + 1] * u;
        }
    }
    pts[0]
}

impl BezierSegment {
    pub fn new(control_points: [Vector3<f64>; 5], duration: f64) -> Result<Self, TrajectoryError> {
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(TrajectoryError::Construction(format!("segment duration {duration} must be > 0")));
        }
        Ok(BezierSegment { control_points, duration })
    }

    pub fn position(&self, u: f64) -> Vector3<f64> {
        casteljau(self.control_points, u)
    }

    /// dB/du.
    pub fn derivative(&self, u: f64) -> Vector3<f64> {
        let p = &self.control_points;
        casteljau([0, 1, 2, 3].map(|k| (p[k + 1] - p[k]) * 4.0), u)
    }

    /// d²B/du².
    pub fn second_derivative(&self, u: f64) -> Vector3<f64> {
        let p = &self.control_points;
        casteljau([0, 1, 2].map(|k| (p[k + 2] - p[k + 1] * 2.0 + p[k]) * 12.0), u)
    }

    pub fn velocity(&self, u: f64) -> Vector3<f64> {
        self.derivative(u) / self.duration
    }

    pub fn acceleration(&self, u: f64) -> Vector3<f64> {
        self.second_derivative(u) / (self.duration * self.duration)
    }

    pub fn start_velocity(&self) -> Vector3<f64> {
        let p = &self.control_points;
        (p[1] - p[0]) * 4.0 / self.duration
    }

    pub fn end_velocity(&self) -> Vector3<f64> {
        let p = &self.control_points;
        (p[4] - p[3]) * 4.0 / self.duration
    }

    pub fn start_acceleration(&self) -> Vector3<f64> {
        let p = &self.control_points;
        (p[2] - p[1] * 2.0 + p[0]) * 12.0 / (self.duration * self.duration)
    }

    pub fn end_acceleration(&self) -> Vector3<f64> {
        let p = &self.control_points;
        (p[4] - p[3] * 2.0 + p[2]) * 12.0 / (self.duration * self.duration)
    }

    pub fn evaluate(&self, u: f64) -> TipCommand {
        TipCommand {
            position: self.position(u),
            velocity: self.velocity(u),
            acceleration: self.acceleration(u),
        }
    }
}

/// One leg's closed step cycle, segments ordered stance, liftoff, midswing, touchdown.
#[derive(Clone, Debug, PartialEq)]
pub struct LegTrajectory {
    pub leg: LegId,
    pub segments: [BezierSegment; 4],
    pub default_foothold: Vector3<f64>,
    pub stride_vector: Vector3<f64>,
    pub clearance: f64,
}

impl LegTrajectory {
    pub fn segment(&self, mode: GaitMode) -> &BezierSegment {
        &self.segments[mode.index()]
    }

    pub fn control_point_count(&self) -> usize {
        self.segments.iter().map(|s| s.control_points.len()).sum()
    }

    pub fn period(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn touchdown_point(&self) -> Vector3<f64> {
        self.default_foothold + self.stride_vector / 2.0
    }

    pub fn liftoff_point(&self) -> Vector3<f64> {
        self.default_foothold - self.stride_vector / 2.0
    }
}

/// Quintic Hermite blend with zero end accelerations.
fn hermite_quintic(t: f64, p0: f64, v0: f64, p1: f64, v1: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h3 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    h0 * p0 + h1 * v0 + h3 * p1 + h4 * v1
}

fn lift_profile(t: f64) -> f64 {
    64.0 * t.powi(3) * (1.0 - t).powi(3)
}

/// Solves one axis of the swing continuity system. Inputs are the pinned
/// values; returns `[L3, M1, M2, M3, D1]`.
#[allow(clippy::too_many_arguments)]
fn solve_swing_axis(durations: [f64; 3], l2: f64, l4: f64, m4: f64, d2: f64, apex: f64) -> Option<Vector5<f64>> {
    let [a, b, d] = durations;
    let (a2, b2, d2s) = (a * a, b * b, d * d);
    #[rustfmt::skip]
    let m = Matrix5::new(
        // C¹ liftoff→midswing: (L4 - L3)/a = (M1 - L4)/b
        -1.0 / a, -1.0 / b, 0.0, 0.0, 0.0,
        // C² liftoff→midswing: (L4 - 2 L3 + L2)/a² = (M2 - 2 M1 + L4)/b²
        -2.0 / a2, 2.0 / b2, -1.0 / b2, 0.0, 0.0,
        // C¹ midswing→touchdown: (M4 - M3)/b = (D1 - M4)/d
        0.0, 0.0, 0.0, -1.0 / b, -1.0 / d,
        // C² midswing→touchdown: (M4 - 2 M3 + M2)/b² = (D2 - 2 D1 + M4)/d²
        0.0, 0.0, 1.0 / b2, -2.0 / b2, 2.0 / d2s,
        // midswing midpoint: (M0 + 4 M1 + 6 M2 + 4 M3 + M4)/16 = apex
        0.0, 0.25, 0.375, 0.25, 0.0,
    );
    let rhs = Vector5::new(
        -l4 / a - l4 / b,
        -(l4 + l2) / a2 + l4 / b2,
        -m4 / b - m4 / d,
        (d2 + m4) / d2s - m4 / b2,
        apex - (l4 + m4) / 16.0,
    );
    m.lu().solve(&rhs)
}

/// Builds the four-segment step cycle for one leg.
pub fn build_trajectory(
    model: &RobotModel,
    leg: LegId,
    gait: &GaitDefinition,
    body_velocity: PlanarTwist,
    step_frequency: f64,
    clearance: f64,
) -> Result<LegTrajectory, TrajectoryError> {
    if !(step_frequency > 0.0 && step_frequency.is_finite()) {
        return Err(TrajectoryError::Precondition(format!(
            "step frequency {step_frequency} must be > 0"
        )));
    }
    if !(clearance >= 0.0 && clearance.is_finite()) {
        return Err(TrajectoryError::Precondition(format!("clearance {clearance} must be >= 0")));
    }
    gait.validate().map_err(|e| TrajectoryError::Precondition(e.to_string()))?;

    let foothold = model.default_foothold(leg);
    let stance_time = gait.mode_duration(GaitMode::Stance, step_frequency);
    let swing_time = stance_time * (1.0 - gait.duty_factor) / gait.duty_factor;
    let durations = [GaitMode::Liftoff, GaitMode::Midswing, GaitMode::Touchdown].map(|m| gait.mode_duration(m, step_frequency));
    if durations.iter().any(|t| !(*t > 0.0 && t.is_finite())) || stance_time.is_nan() || stance_time <= 0.0 {
        return Err(TrajectoryError::Construction(format!("degenerate segment durations {durations:?}")));
    }

    // Chord approximation of the stance arc for turning commands.
    let stride = body_velocity.velocity_at(&foothold) * stance_time;
    if stride.norm() > model.workspace.length {
        return Err(TrajectoryError::WorkspaceViolation {
            leg,
            stride: stride.norm(),
            limit: model.workspace.length,
        });
    }
    let touchdown = foothold + stride / 2.0;
    let liftoff = foothold - stride / 2.0;
    let w = -stride / stance_time;

    let stance_pts = [0.0, 0.25, 0.5, 0.75, 1.0].map(|k| touchdown + (liftoff - touchdown) * k);

    let [a, b, d] = durations;
    let split_l = a / swing_time;
    let split_m = b / swing_time;
    let tau1 = split_l;
    let tau2 = split_l + split_m;
    let tau_mid = split_l + split_m / 2.0;

    let mut lift = [Vector3::zeros(); 5];
    let mut mid = [Vector3::zeros(); 5];
    let mut down = [Vector3::zeros(); 5];
    for axis in 0..3 {
        let (l4, m4, apex) = if axis < 2 {
            let (p0, p1, v) = (liftoff[axis], touchdown[axis], w[axis] * swing_time);
            (
                hermite_quintic(tau1, p0, v, p1, v),
                hermite_quintic(tau2, p0, v, p1, v),
                hermite_quintic(tau_mid, p0, v, p1, v),
            )
        } else {
            let base = foothold.z;
            (
                base + clearance * lift_profile(tau1),
                base + clearance * lift_profile(tau2),
                base + clearance,
            )
        };
        let l0 = liftoff[axis];
        let l1 = l0 + w[axis] * a / 4.0;
        let l2 = l0 + w[axis] * a / 2.0;
        let d4 = touchdown[axis];
        let d3 = d4 - w[axis] * d / 4.0;
        let d2 = d4 - w[axis] * d / 2.0;
        let x = solve_swing_axis(durations, l2, l4, m4, d2, apex)
            .ok_or_else(|| TrajectoryError::Construction("singular swing continuity system".into()))?;
        let [l3, m1, m2, m3, d1] = [x[0], x[1], x[2], x[3], x[4]];
        for (pts, vals) in [
            (&mut lift, [l0, l1, l2, l3, l4]),
            (&mut mid, [l4, m1, m2, m3, m4]),
            (&mut down, [m4, d1, d2, d3, d4]),
        ] {
            for (p, v) in pts.iter_mut().zip(vals) {
                p[axis] = v;
            }
        }
    }

    Ok(LegTrajectory {
        leg,
        segments: [
            BezierSegment::new(stance_pts, stance_time)?,
            BezierSegment::new(lift, a)?,
            BezierSegment::new(mid, b)?,
            BezierSegment::new(down, d)?,
        ],
        default_foothold: foothold,
        stride_vector: stride,
        clearance,
    })
}

/// Tip setpoint of the active segment at `local_progress` ∈ [0, 1].
pub fn evaluate(traj: &LegTrajectory, mode: GaitMode, local_progress: f64) -> TipCommand {
    traj.segment(mode).evaluate(local_progress.clamp(0.0, 1.0))
}

/// Mismatch at the junction leaving `from` into the next segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JunctionMismatch {
    pub from: GaitMode,
    pub to: GaitMode,
    pub position: f64,
    pub velocity: f64,
    pub acceleration: f64,
    /// Largest mismatch after normalising each quantity by `max(1, magnitude)`.
    pub relative: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct C2Report {
    pub junctions: [JunctionMismatch; 4],
    pub max_position: f64,
    pub max_velocity: f64,
    pub max_acceleration: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl C2Report {
    /// Junction with the largest relative mismatch.
    pub fn worst(&self) -> &JunctionMismatch {
        self.junctions
            .iter()
            .max_by(|a, b| a.relative.total_cmp(&b.relative))
            .expect("four junctions")
    }
}

impl fmt::Display for C2Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for j in &self.junctions {
            writeln!(
                f,
                "{:>9} -> {:<9} pos {:.3e} vel {:.3e} acc {:.3e}",
                j.from.name(),
                j.to.name(),
                j.position,
                j.velocity,
                j.acceleration
            )?;
        }
        write!(
            f,
            "{} at tolerance {:.1e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance
        )
    }
}

/// Checks C⁰/C¹/C² continuity at all four cyclic junctions.
pub fn verify_c2(traj: &LegTrajectory, tolerance: f64) -> C2Report {
    let rel = |a: Vector3<f64>, b: Vector3<f64>| (a - b).norm() / a.norm().max(b.norm()).max(1.0);
    let junctions = GaitMode::ALL.map(|from| {
        let to = from.next();
        let s = traj.segment(from);
        let n = traj.segment(to);
        let (p0, p1) = (s.control_points[4], n.control_points[0]);
        let (v0, v1) = (s.end_velocity(), n.start_velocity());
        let (a0, a1) = (s.end_acceleration(), n.start_acceleration());
        JunctionMismatch {
            from,
            to,
            position: (p0 - p1).norm(),
            velocity: (v0 - v1).norm(),
            acceleration: (a0 - a1).norm(),
            relative: rel(p0, p1).max(rel(v0, v1)).max(rel(a0, a1)),
        }
    });
    let max_of = |f: fn(&JunctionMismatch) -> f64| junctions.iter().map(f).fold(0.0, f64::max);
    let passed = junctions.iter().all(|j| j.relative <= tolerance);
    C2Report {
        max_position: max_of(|j| j.position),
        max_velocity: max_of(|j| j.velocity),
        max_acceleration: max_of(|j| j.acceleration),
        junctions,
        tolerance,
        passed,
    }
}

/// Samples one full step cycle starting at stance onset: `(t, command)` pairs.
pub fn sample_cycle(traj: &LegTrajectory, samples_per_segment: usize) -> Vec<(f64, TipCommand)> {
    let n = samples_per_segment.max(1);
    let mut out = Vec::with_capacity(4 * n + 1);
    let mut t0 = 0.0;
    for seg in &traj.segments {
        for k in 0..n {
            let u = k as f64 / n as f64;
            out.push((t0 + u * seg.duration, seg.evaluate(u)));
        }
        t0 += seg.duration;
    }
    out.push((t0, traj.segments[0].evaluate(0.0)));
    out
}
