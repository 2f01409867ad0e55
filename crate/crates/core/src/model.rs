//! Robot morphology, joint limits and actuator envelopes.
//!
//! Frames: the body frame has x forward, y left, z up with its origin at the
//! geometric body centre. Each leg-base frame sits at the coxa pivot with x
//! along the coxa's neutral axis (pointing away from the body) and z up, so
//! left and right frames are mirror images through the sagittal plane.

use nalgebra::{Isometry3, Point3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

/// Standard gravity used throughout the crate (m/s²).
pub const GRAVITY: f64 = 9.81;

/// Errors raised while loading or validating a model.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error("precondition violated: {0}")]
    Precondition(String),
}

impl ModelError {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ModelError::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Station {
    Front,
    Middle,
    Rear,
}

/// The six legs, in the fixed order used by every per-leg array in the crate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LegId {
    FrontLeft,
    MiddleLeft,
    RearLeft,
    FrontRight,
    MiddleRight,
    RearRight,
}

impl LegId {
    pub const ALL: [LegId; 6] = [
        LegId::FrontLeft,
        LegId::MiddleLeft,
        LegId::RearLeft,
        LegId::FrontRight,
        LegId::MiddleRight,
        LegId::RearRight,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Side {
        match self {
            LegId::FrontLeft | LegId::MiddleLeft | LegId::RearLeft => Side::Left,
            _ => Side::Right,
        }
    }

    pub fn station(self) -> Station {
        match self {
            LegId::FrontLeft | LegId::FrontRight => Station::Front,
            LegId::MiddleLeft | LegId::MiddleRight => Station::Middle,
            LegId::RearLeft | LegId::RearRight => Station::Rear,
        }
    }

    /// The leg on the opposite side at the same station.
    pub fn mirror(self) -> LegId {
        LegId::ALL[(self.index() + 3) % 6]
    }

    /// Two-letter tag used in CSV column names.
    pub fn tag(self) -> &'static str {
        match self {
            LegId::FrontLeft => "fl",
            LegId::MiddleLeft => "ml",
            LegId::RearLeft => "rl",
            LegId::FrontRight => "fr",
            LegId::MiddleRight => "mr",
            LegId::RearRight => "rr",
        }
    }

    pub fn from_tag(tag: &str) -> Option<LegId> {
        LegId::ALL.into_iter().find(|l| l.tag() == tag)
    }
}

impl fmt::Display for LegId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Closed interval `[lo, hi]` in radians.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn is_empty(&self) -> bool {
        self.lo.partial_cmp(&self.hi).is_none_or(|o| o.is_gt())
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn clamp(&self, x: f64) -> f64 {
        x.clamp(self.lo, self.hi)
    }
}

/// Rigid transform from a leg-base frame into the body frame. Legs only ever
/// yaw about the body z axis, so a translation plus a yaw angle suffices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MountPose {
    pub translation: Vector3<f64>,
    pub yaw: f64,
}

impl MountPose {
    pub fn rotation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw)
    }

    pub fn isometry(&self) -> Isometry3<f64> {
        Isometry3::from_parts(Translation3::from(self.translation), self.rotation())
    }

    /// Leg-frame point to body frame.
    pub fn point_to_body(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.translation + self.rotation() * p
    }

    /// Body-frame point to leg frame.
    pub fn point_to_leg(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * (p - self.translation)
    }

    pub fn vector_to_body(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation() * v
    }

    pub fn vector_to_leg(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation().inverse() * v
    }

    /// Reflection of this mount through the sagittal (x-z) plane.
    pub fn mirrored(&self) -> MountPose {
        MountPose {
            translation: Vector3::new(self.translation.x, -self.translation.y, self.translation.z),
            yaw: -self.yaw,
        }
    }

    pub fn origin(&self) -> Point3<f64> {
        Point3::from(self.translation)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BodyModel {
    /// Body length `L_B` (m).
    pub length: f64,
    /// Overall stance width `W_B` (m), foot to foot.
    pub width: f64,
    /// Nominal walking height `H_B` of the body origin above ground (m).
    pub stance_height: f64,
    /// Standing height `H_S` (m). Carried for completeness, unused by control.
    pub standing_height: f64,
    /// Total robot mass including legs (kg).
    pub mass: f64,
    /// Fore-aft distance between adjacent coxa pivots (m).
    pub hip_spacing: f64,
    /// Lateral offset of every coxa pivot from the sagittal plane (m).
    pub hip_lateral_offset: f64,
    /// Height of the coxa pivots relative to the body origin (m, negative is below).
    pub hip_height_offset: f64,
    /// Outward splay of the front and rear coxa neutral axes (rad).
    pub corner_splay: f64,
    pub mount_poses: [MountPose; 6],
}

impl BodyModel {
    /// Mount poses generated from the shared geometric parameters; left and
    /// right are mirror images by construction.
    pub fn mount_poses_from(hip_spacing: f64, lateral: f64, height: f64, splay: f64) -> [MountPose; 6] {
        let left = |station: Station| {
            let (x, yaw) = match station {
                Station::Front => (hip_spacing, std::f64::consts::FRAC_PI_2 - splay),
                Station::Middle => (0.0, std::f64::consts::FRAC_PI_2),
                Station::Rear => (-hip_spacing, std::f64::consts::FRAC_PI_2 + splay),
            };
            MountPose {
                translation: Vector3::new(x, lateral, height),
                yaw,
            }
        };
        LegId::ALL.map(|leg| {
            let pose = left(leg.station());
            match leg.side() {
                Side::Left => pose,
                Side::Right => pose.mirrored(),
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LegModel {
    pub leg_id: LegId,
    pub coxa: f64,
    pub femur: f64,
    pub tibia: f64,
    /// Limits for (q1 coxa yaw, q2 femur pitch, q3 knee).
    pub joint_limits: [Interval; 3],
    pub link_masses: [f64; 3],
    /// Distance of each link's centre of mass from its proximal joint, along the link.
    pub link_com_offsets: [f64; 3],
}

impl LegModel {
    pub fn lengths(&self) -> [f64; 3] {
        [self.coxa, self.femur, self.tibia]
    }

    pub fn total_mass(&self) -> f64 {
        self.link_masses.iter().sum()
    }

    /// Longest distance reachable from the femur pivot.
    pub fn max_planar_reach(&self) -> f64 {
        self.femur + self.tibia
    }

    pub fn min_planar_reach(&self) -> f64 {
        (self.femur - self.tibia).abs()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JointEnvelope {
    /// Peak torque per joint (coxa, femur, tibia), N·m.
    pub peak_torque: [f64; 3],
    /// Continuous torque per joint, N·m.
    pub continuous_torque: [f64; 3],
    /// Maximum joint speed, rad/s.
    pub max_speed: [f64; 3],
}

impl Default for JointEnvelope {
    fn default() -> Self {
        JointEnvelope {
            peak_torque: [80.0, 112.0, 80.0],
            continuous_torque: [21.0, 30.0, 21.0],
            max_speed: [8.0, 11.0, 8.0],
        }
    }
}

/// Foot-tip workspace layout.
#[derive(Clone, Debug, PartialEq)]
pub struct Workspace {
    /// Fore-aft length of each foot's workspace (m).
    pub length: f64,
    /// Fore-aft distance between adjacent nominal footholds (m).
    pub foothold_spacing: f64,
    /// Lateral distance from the coxa pivot to the nominal foothold (m).
    pub foothold_lateral: f64,
    /// Minimum gap between adjacent workspaces (m).
    pub safety_buffer: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    pub body: BodyModel,
    pub legs: [LegModel; 6],
    pub envelope: JointEnvelope,
    pub workspace: Workspace,
}

impl RobotModel {
    pub fn leg(&self, id: LegId) -> &LegModel {
        &self.legs[id.index()]
    }

    pub fn mount(&self, id: LegId) -> &MountPose {
        &self.body.mount_poses[id.index()]
    }

    /// Nominal foothold of a leg in the body frame, on the ground plane at
    /// nominal stance height.
    pub fn default_foothold(&self, id: LegId) -> Vector3<f64> {
        let x = match id.station() {
            Station::Front => self.workspace.foothold_spacing,
            Station::Middle => 0.0,
            Station::Rear => -self.workspace.foothold_spacing,
        };
        let y = self.body.hip_lateral_offset + self.workspace.foothold_lateral;
        let y = match id.side() {
            Side::Left => y,
            Side::Right => -y,
        };
        Vector3::new(x, y, -self.body.stance_height)
    }

    /// Mass of the central body alone.
    pub fn legs_mass(&self) -> f64 {
        self.legs.iter().map(LegModel::total_mass).sum()
    }

    /// Checks every structural invariant, naming the first offending field.
    pub fn validate(&self) -> Result<(), ModelError> {
        let b = &self.body;
        for (name, v) in [
            ("body.length", b.length),
            ("body.width", b.width),
            ("body.stance_height", b.stance_height),
            ("body.mass", b.mass),
            ("body.hip_spacing", b.hip_spacing),
            ("body.hip_lateral_offset", b.hip_lateral_offset),
        ] {
            positive(name, v)?;
        }
        for (name, v) in [
            ("body.standing_height", b.standing_height),
            ("body.hip_height_offset", b.hip_height_offset),
            ("body.corner_splay", b.corner_splay),
        ] {
            finite(name, v)?;
        }

        for (i, leg) in LegId::ALL.iter().enumerate() {
            if b.mount_poses[i].translation.iter().any(|v| !v.is_finite()) || !b.mount_poses[i].yaw.is_finite() {
                return Err(ModelError::invalid("body.mount_poses", format!("non-finite pose for {leg}")));
            }
        }
        for leg in [LegId::FrontLeft, LegId::MiddleLeft, LegId::RearLeft] {
            let l = b.mount_poses[leg.index()];
            let r = b.mount_poses[leg.mirror().index()];
            let m = l.mirrored();
            if (m.translation - r.translation).norm() > 1e-12 || (m.yaw - r.yaw).abs() > 1e-12 {
                return Err(ModelError::invalid(
                    "body.mount_poses",
                    format!("{leg} and {} are not mirror-symmetric", leg.mirror()),
                ));
            }
        }

        let mut leg_mass = 0.0;
        for (i, leg) in self.legs.iter().enumerate() {
            if leg.leg_id != LegId::ALL[i] {
                return Err(ModelError::invalid("legs", "legs out of order or duplicated"));
            }
            positive("leg.coxa_length", leg.coxa)?;
            positive("leg.femur_length", leg.femur)?;
            positive("leg.tibia_length", leg.tibia)?;
            for (name, iv) in ["leg.coxa_limits", "leg.femur_limits", "leg.tibia_limits"]
                .iter()
                .zip(leg.joint_limits.iter())
            {
                if !iv.lo.is_finite() || !iv.hi.is_finite() {
                    return Err(ModelError::invalid(*name, "limits must be finite"));
                }
                if iv.is_empty() {
                    return Err(ModelError::invalid(*name, format!("empty interval [{}, {}]", iv.lo, iv.hi)));
                }
            }
            if leg.link_masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
                return Err(ModelError::invalid("leg.link_masses", "masses must be finite and nonnegative"));
            }
            for (off, len) in leg.link_com_offsets.iter().zip(leg.lengths()) {
                if !(off.is_finite() && *off >= 0.0 && *off <= len) {
                    return Err(ModelError::invalid(
                        "leg.link_com_offsets",
                        format!("offset {off} outside link of length {len}"),
                    ));
                }
            }
            leg_mass += leg.total_mass();
        }
        if leg_mass >= 0.5 * b.mass {
            return Err(ModelError::invalid(
                "leg.link_masses",
                format!("legs total {leg_mass} kg, not light relative to {} kg robot", b.mass),
            ));
        }

        let e = &self.envelope;
        for j in 0..3 {
            for (name, v) in [
                ("envelope.peak_torque", e.peak_torque[j]),
                ("envelope.continuous_torque", e.continuous_torque[j]),
                ("envelope.max_speed", e.max_speed[j]),
            ] {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(ModelError::invalid(name, format!("{v} must be finite and nonnegative")));
                }
            }
            if e.peak_torque[j] < e.continuous_torque[j] {
                return Err(ModelError::invalid(
                    "envelope.peak_torque",
                    format!(
                        "peak {} below continuous {} for joint {}",
                        e.peak_torque[j], e.continuous_torque[j], j
                    ),
                ));
            }
        }

        let w = &self.workspace;
        positive("workspace.length", w.length)?;
        positive("workspace.foothold_spacing", w.foothold_spacing)?;
        positive("workspace.foothold_lateral", w.foothold_lateral)?;
        if !(w.safety_buffer.is_finite() && w.safety_buffer >= 0.0) {
            return Err(ModelError::invalid("workspace.safety_buffer", "must be nonnegative"));
        }
        let gap = w.foothold_spacing - w.length;
        if gap < w.safety_buffer - 1e-9 {
            return Err(ModelError::invalid(
                "workspace.length",
                format!(
                    "adjacent workspaces separated by {gap:.4} m, less than the {} m buffer",
                    w.safety_buffer
                ),
            ));
        }
        Ok(())
    }
}

fn positive(field: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ModelError::invalid(field, format!("{v} must be finite and > 0")))
    }
}

fn finite(field: &str, v: f64) -> Result<(), ModelError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(ModelError::invalid(field, format!("{v} must be finite")))
    }
}

/// Body speed at which the stance sweep exactly consumes the fore-aft
/// workspace: `L · f / β`.
pub fn max_kinematic_speed(model: &RobotModel, duty_factor: f64, step_frequency: f64) -> Result<f64, ModelError> {
    if !(duty_factor > 0.0 && duty_factor < 1.0) {
        return Err(ModelError::Precondition(format!("duty factor {duty_factor} not in (0, 1)")));
    }
    if !(step_frequency > 0.0 && step_frequency.is_finite()) {
        return Err(ModelError::Precondition(format!("step frequency {step_frequency} must be > 0")));
    }
    Ok(model.workspace.length * step_frequency / duty_factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_model;

    #[test]
    fn leg_ids_round_trip_through_tags_and_mirror() {
        for leg in LegId::ALL {
            assert_eq!(LegId::from_tag(leg.tag()), Some(leg));
            assert_eq!(leg.mirror().mirror(), leg);
            assert_ne!(leg.mirror().side(), leg.side());
            assert_eq!(leg.mirror().station(), leg.station());
        }
    }

    #[test]
    fn mount_pose_point_maps_are_inverse() {
        let m = default_model();
        let p = Vector3::new(0.3, -0.2, 0.7);
        for leg in LegId::ALL {
            let mount = m.mount(leg);
            let back = mount.point_to_leg(&mount.point_to_body(&p));
            assert!((back - p).norm() < 1e-15);
            let iso = mount.isometry() * Point3::from(p);
            assert!((iso.coords - mount.point_to_body(&p)).norm() < 1e-15);
        }
    }

    #[test]
    fn default_footholds_span_the_stance_width() {
        let m = default_model();
        let fl = m.default_foothold(LegId::FrontLeft);
        let fr = m.default_foothold(LegId::FrontRight);
        assert!((fl.y - fr.y - m.body.width).abs() < 1e-12);
        assert_eq!(fl.z, -m.body.stance_height);
    }

    #[test]
    fn workspace_buffer_violation_is_rejected() {
        let mut m = default_model();
        m.workspace.length = 0.55;
        let err = m.validate().unwrap_err();
        assert!(matches!(err, ModelError::Validation { ref field, .. } if field == "workspace.length"));
    }

    #[test]
    fn asymmetric_mounts_are_rejected() {
        let mut m = default_model();
        m.body.mount_poses[LegId::RearRight.index()].translation.y += 0.01;
        assert!(m.validate().is_err());
    }

    #[test]
    fn kinematic_speed_examples() {
        let m = default_model();
        assert_eq!(max_kinematic_speed(&m, 0.5, 1.4).unwrap(), 1.4);
        assert_eq!(max_kinematic_speed(&m, 0.5, 1.0).unwrap(), 1.0);
        let eps = 1e-3;
        let a = max_kinematic_speed(&m, 1.0 - eps, 1.0).unwrap();
        let b = max_kinematic_speed(&m, 1.0 - eps, 1.2).unwrap();
        assert!((a - 0.5 / (1.0 - eps)).abs() < 1e-15);
        assert!(b > a);
        assert!(max_kinematic_speed(&m, 1.0, 1.0).is_err());
        assert!(max_kinematic_speed(&m, 0.5, 0.0).is_err());
    }
}
