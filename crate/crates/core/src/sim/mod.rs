//! Deterministic plant simulation and episode logging.

mod episode;
mod log;
mod plant;

pub use episode::{run_episode, Episode, EpisodeError, EpisodeFailure, EpisodeSetup, EpisodeStats};
pub use log::{header as log_header, EpisodeLog, LogError, LogRow};
pub use plant::{step, ContactParams, FootState, PlantInput, PlantParams, SimError, SimState, Terrain, FORCE_MAP_SINGULARITY};
