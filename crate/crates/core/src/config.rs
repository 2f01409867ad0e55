//! TOML configuration schema.
//!
//! Every section and field is optional; omitted values take the defaults
//! below. Lengths are metres, angles radians, masses kilograms.
//!
//! ```toml
//! [body]
//! length = 1.0            # L_B
//! width = 1.08            # W_B, foot to foot at nominal stance
//! stance_height = 0.55    # H_B
//! standing_height = 0.8   # H_S (unused by control)
//! mass = 50.5
//! hip_spacing = 0.3
//! hip_lateral_offset = 0.29
//! hip_height_offset = -0.23
//! corner_splay = 0.6
//!
//! [leg]
//! coxa_length = 0.065
//! femur_length = 0.275
//! tibia_length = 0.365
//! coxa_limits = [-0.9, 0.9]
//! femur_limits = [-1.1, 0.6]
//! tibia_limits = [0.4, 2.4]
//! # link_masses = [..]       default: legs total 15% of body mass, split by length
//! # link_com_offsets = [..]  default: link midpoints
//!
//! [envelope]
//! peak_torque = [80.0, 112.0, 80.0]
//! continuous_torque = [21.0, 30.0, 21.0]
//! max_speed = [8.0, 11.0, 8.0]
//!
//! [workspace]
//! length = 0.5
//! foothold_spacing = 0.6
//! # foothold_lateral = 0.25  default: width / 2 - hip_lateral_offset
//! safety_buffer = 0.1
//!
//! [gait.tripod]               # any name; tripod and amble are built in
//! phase_offsets = [0.0, 0.5, 0.0, 0.5, 0.0, 0.5]   # fl ml rl fr mr rr
//! duty_factor = 0.5
//! swing_split = [0.3333333333333333, 0.3333333333333333, 0.3333333333333333]
//!
//! [impedance]
//! kp = [1500.0, 1500.0, 2000.0]
//! kv = [50.0, 50.0, 80.0]
//!
//! [stance]
//! damping_lambda = 0.01
//!
//! [trajectory]
//! clearance = 0.08
//!
//! [contact]
//! stiffness = 50000.0
//! damping = 2000.0
//! tangential_viscosity = 50000.0
//! friction_coefficient = 0.7
//!
//! [sim]
//! control_rate = 800.0
//! substeps = 4
//! air_tracking_rate = 60.0
//! # terrain_step = [0.8, 0.05]  ground at x >= 0.8 m raised by 0.05 m; flat if omitted
//! ```

use crate::controller::ControllerConfig;
use crate::gait::GaitDefinition;
use crate::impedance::ImpedanceGains;
use crate::model::{BodyModel, Interval, JointEnvelope, LegId, LegModel, ModelError, RobotModel, Workspace};
use crate::sim::{ContactParams, PlantParams, Terrain};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Share of the total mass carried by the six legs together.
const LEG_MASS_FRACTION: f64 = 0.15;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct BodySection {
    length: f64,
    width: f64,
    stance_height: f64,
    standing_height: f64,
    mass: f64,
    hip_spacing: f64,
    hip_lateral_offset: f64,
    hip_height_offset: f64,
    corner_splay: f64,
}

impl Default for BodySection {
    fn default() -> Self {
        BodySection {
            length: 1.0,
            width: 1.08,
            stance_height: 0.55,
            standing_height: 0.8,
            mass: 50.5,
            hip_spacing: 0.3,
            hip_lateral_offset: 0.29,
            hip_height_offset: -0.23,
            corner_splay: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct LegSection {
    coxa_length: f64,
    femur_length: f64,
    tibia_length: f64,
    coxa_limits: [f64; 2],
    femur_limits: [f64; 2],
    tibia_limits: [f64; 2],
    #[serde(skip_serializing_if = "Option::is_none")]
    link_masses: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    link_com_offsets: Option<[f64; 3]>,
}

impl Default for LegSection {
    fn default() -> Self {
        LegSection {
            coxa_length: 0.065,
            femur_length: 0.275,
            tibia_length: 0.365,
            coxa_limits: [-0.9, 0.9],
            femur_limits: [-1.1, 0.6],
            tibia_limits: [0.4, 2.4],
            link_masses: None,
            link_com_offsets: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct EnvelopeSection {
    peak_torque: [f64; 3],
    continuous_torque: [f64; 3],
    max_speed: [f64; 3],
}

impl Default for EnvelopeSection {
    fn default() -> Self {
        let e = JointEnvelope::default();
        EnvelopeSection {
            peak_torque: e.peak_torque,
            continuous_torque: e.continuous_torque,
            max_speed: e.max_speed,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct WorkspaceSection {
    length: f64,
    foothold_spacing: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    foothold_lateral: Option<f64>,
    safety_buffer: f64,
}

impl Default for WorkspaceSection {
    fn default() -> Self {
        WorkspaceSection {
            length: 0.5,
            foothold_spacing: 0.6,
            foothold_lateral: None,
            safety_buffer: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GaitSection {
    phase_offsets: [f64; 6],
    duty_factor: f64,
    #[serde(default = "equal_thirds")]
    swing_split: [f64; 3],
}

fn equal_thirds() -> [f64; 3] {
    crate::gait::EQUAL_THIRDS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ImpedanceSection {
    kp: [f64; 3],
    kv: [f64; 3],
}

impl Default for ImpedanceSection {
    fn default() -> Self {
        let g = ImpedanceGains::default();
        ImpedanceSection {
            kp: g.kp.into(),
            kv: g.kv.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct StanceSection {
    damping_lambda: f64,
}

impl Default for StanceSection {
    fn default() -> Self {
        StanceSection {
            damping_lambda: crate::stance::DEFAULT_DAMPING_LAMBDA,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrajectorySection {
    clearance: f64,
}

impl Default for TrajectorySection {
    fn default() -> Self {
        TrajectorySection {
            clearance: crate::trajectory::DEFAULT_CLEARANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ContactSection {
    stiffness: f64,
    damping: f64,
    tangential_viscosity: f64,
    friction_coefficient: f64,
}

impl Default for ContactSection {
    fn default() -> Self {
        let c = ContactParams::default();
        ContactSection {
            stiffness: c.stiffness,
            damping: c.damping,
            tangential_viscosity: c.tangential_viscosity,
            friction_coefficient: c.friction_coefficient,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimSection {
    control_rate: f64,
    substeps: u32,
    air_tracking_rate: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    terrain_step: Option<[f64; 2]>,
}

impl Default for SimSection {
    fn default() -> Self {
        let p = PlantParams::default();
        SimSection {
            control_rate: ControllerConfig::default().control_rate,
            substeps: p.substeps,
            air_tracking_rate: p.air_tracking_rate,
            terrain_step: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    body: BodySection,
    leg: LegSection,
    envelope: EnvelopeSection,
    workspace: WorkspaceSection,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    gait: BTreeMap<String, GaitSection>,
    impedance: ImpedanceSection,
    stance: StanceSection,
    trajectory: TrajectorySection,
    contact: ContactSection,
    sim: SimSection,
}

/// Everything a simulation run needs, resolved and validated.
#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub model: RobotModel,
    /// Built-in gaits plus any defined or overridden in the file.
    pub gaits: BTreeMap<String, GaitDefinition>,
    pub controller: ControllerConfig,
    pub plant: PlantParams,
}

impl Default for Config {
    fn default() -> Self {
        load_config("").expect("built-in defaults are valid")
    }
}

impl Config {
    pub fn gait(&self, name: &str) -> Result<&GaitDefinition, ModelError> {
        self.gaits.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.gaits.keys().map(String::as_str).collect();
            ModelError::invalid("gait", format!("unknown gait `{name}` (known: {})", known.join(", ")))
        })
    }
}

fn parse(text: &str) -> Result<ConfigFile, ModelError> {
    toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map(|s| line_column(text, s.start)).unwrap_or((0, 0));
        ModelError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })
}

/// One-based line and column of a byte offset.
fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, column)
}

fn interval(v: [f64; 2]) -> Interval {
    Interval::new(v[0], v[1])
}

fn build_model(f: &ConfigFile) -> Result<RobotModel, ModelError> {
    let b = &f.body;
    let body = BodyModel {
        length: b.length,
        width: b.width,
        stance_height: b.stance_height,
        standing_height: b.standing_height,
        mass: b.mass,
        hip_spacing: b.hip_spacing,
        hip_lateral_offset: b.hip_lateral_offset,
        hip_height_offset: b.hip_height_offset,
        corner_splay: b.corner_splay,
        mount_poses: BodyModel::mount_poses_from(b.hip_spacing, b.hip_lateral_offset, b.hip_height_offset, b.corner_splay),
    };
    let l = &f.leg;
    let lengths = [l.coxa_length, l.femur_length, l.tibia_length];
    let total: f64 = lengths.iter().sum();
    let per_leg = LEG_MASS_FRACTION * b.mass / 6.0;
    let link_masses = l.link_masses.unwrap_or(lengths.map(|len| per_leg * len / total));
    let link_com_offsets = l.link_com_offsets.unwrap_or(lengths.map(|len| len / 2.0));
    let legs = LegId::ALL.map(|leg_id| LegModel {
        leg_id,
        coxa: l.coxa_length,
        femur: l.femur_length,
        tibia: l.tibia_length,
        joint_limits: [interval(l.coxa_limits), interval(l.femur_limits), interval(l.tibia_limits)],
        link_masses,
        link_com_offsets,
    });
    let envelope = JointEnvelope {
        peak_torque: f.envelope.peak_torque,
        continuous_torque: f.envelope.continuous_torque,
        max_speed: f.envelope.max_speed,
    };
    let w = &f.workspace;
    let workspace = Workspace {
        length: w.length,
        foothold_spacing: w.foothold_spacing,
        foothold_lateral: w.foothold_lateral.unwrap_or(b.width / 2.0 - b.hip_lateral_offset),
        safety_buffer: w.safety_buffer,
    };
    let model = RobotModel {
        body,
        legs,
        envelope,
        workspace,
    };
    model.validate()?;
    Ok(model)
}

fn build_config(f: &ConfigFile) -> Result<Config, ModelError> {
    let model = build_model(f)?;

    let mut gaits: BTreeMap<String, GaitDefinition> = ["tripod", "amble"]
        .into_iter()
        .map(|n| (n.to_string(), GaitDefinition::builtin(n).expect("builtin")))
        .collect();
    for (name, g) in &f.gait {
        let def = GaitDefinition::new(name.clone(), g.phase_offsets, g.duty_factor, g.swing_split)
            .map_err(|e| ModelError::invalid(format!("gait.{name}"), e.to_string()))?;
        gaits.insert(name.clone(), def);
    }

    let gains = ImpedanceGains {
        kp: Vector3::from(f.impedance.kp),
        kv: Vector3::from(f.impedance.kv),
    };
    if !gains.is_valid() {
        return Err(ModelError::invalid("impedance", "gains must be finite and nonnegative"));
    }
    let lambda = f.stance.damping_lambda;
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(ModelError::invalid("stance.damping_lambda", format!("{lambda} must be >= 0")));
    }
    let clearance = f.trajectory.clearance;
    if !(clearance.is_finite() && clearance >= 0.0) {
        return Err(ModelError::invalid("trajectory.clearance", format!("{clearance} must be >= 0")));
    }
    let rate = f.sim.control_rate;
    if !(rate.is_finite() && rate > 0.0) {
        return Err(ModelError::invalid("sim.control_rate", format!("{rate} must be > 0")));
    }
    let controller = ControllerConfig {
        gains,
        damping_lambda: lambda,
        clearance,
        control_rate: rate,
    };

    let c = &f.contact;
    let contact = ContactParams {
        stiffness: c.stiffness,
        damping: c.damping,
        tangential_viscosity: c.tangential_viscosity,
        friction_coefficient: c.friction_coefficient,
    };
    for (name, v) in [
        ("contact.stiffness", contact.stiffness),
        ("contact.damping", contact.damping),
        ("contact.tangential_viscosity", contact.tangential_viscosity),
        ("contact.friction_coefficient", contact.friction_coefficient),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(ModelError::invalid(name, format!("{v} must be finite and >= 0")));
        }
    }
    if contact.damping <= 0.0 || contact.tangential_viscosity <= 0.0 {
        return Err(ModelError::invalid(
            "contact",
            "damping and tangential_viscosity must be > 0 for massless feet",
        ));
    }
    if f.sim.substeps == 0 {
        return Err(ModelError::invalid("sim.substeps", "must be at least 1"));
    }
    let air = f.sim.air_tracking_rate;
    if !(air.is_finite() && air > 0.0) {
        return Err(ModelError::invalid("sim.air_tracking_rate", format!("{air} must be > 0")));
    }
    let terrain = match f.sim.terrain_step {
        None => Terrain::Flat,
        Some([start, height]) if start.is_finite() && height.is_finite() => Terrain::Step { start, height },
        Some(v) => return Err(ModelError::invalid("sim.terrain_step", format!("{v:?} must be finite"))),
    };
    let plant = PlantParams {
        contact,
        substeps: f.sim.substeps,
        air_tracking_rate: air,
        terrain,
        ..PlantParams::for_model(&model)
    };

    Ok(Config {
        model,
        gaits,
        controller,
        plant,
    })
}

/// Parses and validates a robot model, filling omitted fields with defaults.
pub fn load_model(text: &str) -> Result<RobotModel, ModelError> {
    build_model(&parse(text)?)
}

/// Parses and validates the full configuration.
pub fn load_config(text: &str) -> Result<Config, ModelError> {
    build_config(&parse(text)?)
}

pub fn default_model() -> RobotModel {
    load_model("").expect("built-in defaults are valid")
}

fn model_sections(model: &RobotModel) -> ConfigFile {
    let b = &model.body;
    let leg = &model.legs[0];
    ConfigFile {
        body: BodySection {
            length: b.length,
            width: b.width,
            stance_height: b.stance_height,
            standing_height: b.standing_height,
            mass: b.mass,
            hip_spacing: b.hip_spacing,
            hip_lateral_offset: b.hip_lateral_offset,
            hip_height_offset: b.hip_height_offset,
            corner_splay: b.corner_splay,
        },
        leg: LegSection {
            coxa_length: leg.coxa,
            femur_length: leg.femur,
            tibia_length: leg.tibia,
            coxa_limits: [leg.joint_limits[0].lo, leg.joint_limits[0].hi],
            femur_limits: [leg.joint_limits[1].lo, leg.joint_limits[1].hi],
            tibia_limits: [leg.joint_limits[2].lo, leg.joint_limits[2].hi],
            link_masses: Some(leg.link_masses),
            link_com_offsets: Some(leg.link_com_offsets),
        },
        envelope: EnvelopeSection {
            peak_torque: model.envelope.peak_torque,
            continuous_torque: model.envelope.continuous_torque,
            max_speed: model.envelope.max_speed,
        },
        workspace: WorkspaceSection {
            length: model.workspace.length,
            foothold_spacing: model.workspace.foothold_spacing,
            foothold_lateral: Some(model.workspace.foothold_lateral),
            safety_buffer: model.workspace.safety_buffer,
        },
        ..ConfigFile::default()
    }
}

fn to_text(f: &ConfigFile) -> String {
    toml::to_string(f).expect("config sections always serialize")
}

/// Serializes a model (all legs share the first leg's parameters) to config text.
pub fn model_to_config_text(model: &RobotModel) -> String {
    to_text(&model_sections(model))
}

/// Serializes a full configuration, including every gait it knows.
pub fn config_to_text(config: &Config) -> String {
    let mut f = model_sections(&config.model);
    f.gait = config
        .gaits
        .iter()
        .map(|(name, g)| {
            (
                name.clone(),
                GaitSection {
                    phase_offsets: g.phase_offsets,
                    duty_factor: g.duty_factor,
                    swing_split: g.swing_split,
                },
            )
        })
        .collect();
    let c = &config.controller;
    f.impedance = ImpedanceSection {
        kp: c.gains.kp.into(),
        kv: c.gains.kv.into(),
    };
    f.stance.damping_lambda = c.damping_lambda;
    f.trajectory.clearance = c.clearance;
    let p = &config.plant;
    f.contact = ContactSection {
        stiffness: p.contact.stiffness,
        damping: p.contact.damping,
        tangential_viscosity: p.contact.tangential_viscosity,
        friction_coefficient: p.contact.friction_coefficient,
    };
    f.sim = SimSection {
        control_rate: c.control_rate,
        substeps: p.substeps,
        air_tracking_rate: p.air_tracking_rate,
        terrain_step: match p.terrain {
            Terrain::Flat => None,
            Terrain::Step { start, height } => Some([start, height]),
        },
    };
    to_text(&f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_reproduce_hardware_table() {
        let m = default_model();
        let b = &m.body;
        assert_eq!(
            (b.length, b.width, b.stance_height, b.standing_height, b.mass),
            (1.0, 1.08, 0.55, 0.8, 50.5)
        );
        for leg in &m.legs {
            assert_eq!((leg.coxa, leg.femur, leg.tibia), (0.065, 0.275, 0.365));
            assert_eq!(
                leg.joint_limits,
                [Interval::new(-0.9, 0.9), Interval::new(-1.1, 0.6), Interval::new(0.4, 2.4)]
            );
        }
        assert_eq!(m.envelope, JointEnvelope::default());
        assert_eq!(m.envelope.peak_torque, [80.0, 112.0, 80.0]);
        assert_eq!(m.envelope.continuous_torque, [21.0, 30.0, 21.0]);
        assert_eq!(m.envelope.max_speed, [8.0, 11.0, 8.0]);
        assert_eq!(m.workspace.length, 0.5);
        assert_eq!(m.body.hip_spacing, 0.3);
        assert!((m.legs_mass() - 0.15 * 50.5).abs() < 1e-12);
    }

    #[test]
    fn override_example_femur_length() {
        let m = load_model("[leg]\nfemur_length = 0.3\n").unwrap();
        assert_eq!(m.leg(LegId::RearRight).femur, 0.3);
        assert_eq!(load_model("").unwrap().leg(LegId::FrontLeft).femur, 0.275);
    }

    #[test]
    fn inverted_interval_is_rejected() {
        let err = load_model("[leg]\ntibia_limits = [2.5, 0.4]\n").unwrap_err();
        assert!(
            matches!(err, ModelError::Validation { ref field, .. } if field == "leg.tibia_limits"),
            "{err}"
        );
    }

    #[test]
    fn peak_below_continuous_is_rejected() {
        let err = load_model("[envelope]\npeak_torque = [80.0, 20.0, 80.0]\n").unwrap_err();
        assert!(
            matches!(err, ModelError::Validation { ref field, .. } if field == "envelope.peak_torque"),
            "{err}"
        );
    }

    #[test]
    fn parse_errors_carry_line_context() {
        let err = load_model("[body]\nmass = 50.5\nlength = \"long\"\n").unwrap_err();
        match err {
            ModelError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other}"),
        }
        assert!(matches!(load_model("[bogus]\n"), Err(ModelError::Parse { .. })));
    }

    #[test]
    fn custom_gait_sections_validate() {
        let cfg = load_config("[gait.wave]\nphase_offsets = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]\nduty_factor = 0.75\n").unwrap();
        assert_eq!(cfg.gait("wave").unwrap().duty_factor, 0.75);
        assert!(cfg.gait("tripod").is_ok());
        let err = load_config("[gait.bad]\nphase_offsets = [0.0, 0.1, 0.2, 0.3, 0.4, 1.5]\nduty_factor = 0.5\n").unwrap_err();
        assert!(matches!(err, ModelError::Validation { ref field, .. } if field == "gait.bad"));
    }

    #[test]
    fn full_config_round_trips() {
        let cfg = Config::default();
        assert_eq!(load_config(&config_to_text(&cfg)).unwrap(), cfg);
        let stepped = load_config("[sim]\nterrain_step = [0.8, 0.05]\n").unwrap();
        assert_eq!(stepped.plant.terrain, Terrain::Step { start: 0.8, height: 0.05 });
        assert_eq!(load_config(&config_to_text(&stepped)).unwrap(), stepped);
    }

    proptest! {
        #[test]
        fn model_round_trip(
            femur in 0.2f64..0.35,
            tibia in 0.3f64..0.45,
            mass in 30.0f64..80.0,
            width in 1.0f64..1.2,
            spacing in 0.6f64..0.8,
            splay in 0.0f64..0.8,
        ) {
            let text = format!(
                "[body]\nmass = {mass}\nwidth = {width}\ncorner_splay = {splay}\n[leg]\nfemur_length = {femur}\ntibia_length = {tibia}\n[workspace]\nfoothold_spacing = {spacing}\n"
            );
            let m = load_model(&text).unwrap();
            let again = load_model(&model_to_config_text(&m)).unwrap();
            prop_assert_eq!(again, m);
        }
    }
}
