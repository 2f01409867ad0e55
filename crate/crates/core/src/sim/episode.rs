use super::log::{EpisodeLog, LogRow};
use super::plant::{step, PlantInput, PlantParams, SimError, SimState};
use crate::controller::{Controller, ControllerConfig, ControllerError, Measurement};
use crate::gait::GaitDefinition;
use crate::model::{LegId, RobotModel};
use crate::trajectory::PlanarTwist;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Bound on each component of the seeded initial velocity perturbation (m/s).
const SEED_VELOCITY_JITTER: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeSetup {
    pub model: RobotModel,
    pub gait: GaitDefinition,
    pub controller: ControllerConfig,
    pub plant: PlantParams,
    pub command: PlanarTwist,
    pub step_frequency: f64,
    pub duration: f64,
    pub seed: u64,
    /// Extra initial body height above nominal stance (m).
    pub drop_height: f64,
}

impl EpisodeSetup {
    pub fn new(model: RobotModel, gait: GaitDefinition, command: PlanarTwist, step_frequency: f64, duration: f64) -> Self {
        let plant = PlantParams::for_model(&model);
        EpisodeSetup {
            model,
            gait,
            controller: ControllerConfig::default(),
            plant,
            command,
            step_frequency,
            duration,
            seed: 0,
            drop_height: 0.0,
        }
    }

    /// Number of control ticks the episode runs.
    pub fn ticks(&self) -> u64 {
        (self.duration * self.controller.control_rate).round() as u64
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EpisodeError {
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Divergence(#[from] SimError),
    #[error("invalid episode: {0}")]
    Setup(String),
}

/// A failed episode with everything logged up to the failure.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeFailure {
    pub error: EpisodeError,
    pub log: EpisodeLog,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EpisodeStats {
    pub ticks: u64,
    /// Ticks on which a contact foot's force map was singular and its force held.
    pub singular_events: u64,
    /// Smallest ground normal force seen on any contact foot at a tick boundary.
    pub min_normal_force: f64,
    pub max_stance_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub log: EpisodeLog,
    pub stats: EpisodeStats,
    pub final_state: SimState,
}

fn log_row(state: &SimState, out: &crate::controller::ControlOutput, command: PlanarTwist) -> LogRow {
    LogRow {
        time: state.time,
        position: state.position,
        orientation: state.orientation,
        linear_velocity: state.linear_velocity,
        angular_velocity: state.angular_velocity_world(),
        commanded_tips: out.legs.map(|l| l.setpoint.position),
        actual_tips: LegId::ALL.map(|l| state.foot_in_body(l)),
        torques: out.legs.map(|l| l.command.torques),
        contacts: state.feet.map(|f| f.in_contact),
        clamped: out.legs.map(|l| l.command.clamped),
        command,
        global_phase: out.global_phase,
    }
}

/// Runs controller and plant in lockstep for `round(duration · rate)` ticks.
pub fn run_episode(setup: &EpisodeSetup) -> Result<Episode, EpisodeFailure> {
    let fail = |error: EpisodeError, log: EpisodeLog| EpisodeFailure { error, log };
    if !(setup.duration > 0.0 && setup.duration.is_finite()) {
        return Err(fail(
            EpisodeError::Setup(format!("duration {} must be > 0", setup.duration)),
            EpisodeLog::default(),
        ));
    }
    let mut controller = Controller::new(
        setup.model.clone(),
        setup.gait.clone(),
        setup.controller,
        setup.command,
        setup.step_frequency,
    )
    .map_err(|e| fail(e.into(), EpisodeLog::default()))?;
    let dt = controller.dt();

    let start = controller.setpoints().map(|s| s.position);
    let height = setup.model.body.stance_height + setup.drop_height;
    let mut feet = start;
    for f in &mut feet {
        f.z -= setup.drop_height;
    }
    let mut state = SimState::new(&setup.model, &setup.plant, height, &feet);
    let mut rng = ChaCha8Rng::seed_from_u64(setup.seed);
    state.linear_velocity = Vector3::from_fn(|_, _| rng.random_range(-SEED_VELOCITY_JITTER..=SEED_VELOCITY_JITTER));

    let ticks = setup.ticks();
    let mut log = EpisodeLog {
        rows: Vec::with_capacity(ticks as usize),
    };
    let mut stats = EpisodeStats {
        min_normal_force: f64::INFINITY,
        ..EpisodeStats::default()
    };
    for _ in 0..ticks {
        let m = Measurement {
            orientation: state.orientation,
            joints: state.joints,
        };
        let out = controller.tick(&m);
        log.rows.push(log_row(&state, &out, setup.command));
        stats.max_stance_residual = stats.max_stance_residual.max(out.stance_residual);
        let input = PlantInput {
            torques: out.legs.map(|l| l.command.torques),
            setpoints: out.legs.map(|l| l.setpoint),
        };
        let before = state.singular_events;
        state = match step(&state, &input, &setup.model, &setup.plant, dt) {
            Ok(s) => s,
            Err(e) => return Err(fail(e.into(), log)),
        };
        if state.singular_events > before {
            stats.singular_events += 1;
        }
        for f in state.feet.iter().filter(|f| f.in_contact) {
            stats.min_normal_force = stats.min_normal_force.min(f.ground_force.z);
        }
        stats.ticks += 1;
    }
    if !stats.min_normal_force.is_finite() {
        stats.min_normal_force = 0.0;
    }
    if stats.singular_events > 0 {
        log::warn!("{} ticks held a leg force through a singular configuration", stats.singular_events);
    }
    Ok(Episode {
        log,
        stats,
        final_state: state,
    })
}
