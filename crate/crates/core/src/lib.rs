//! Hexapod locomotion control: a central-pattern gait generator, C²-smooth
//! quartic Bézier tip trajectories, analytic leg kinematics and dynamics,
//! damped least-squares stance force distribution and task-frame impedance,
//! together with a deterministic rigid-body plant to run them against.

pub mod checks;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod experiment;
pub mod gait;
pub mod impedance;
pub mod kinematics;
pub mod metrics;
pub mod model;
pub mod sim;
pub mod stance;
pub mod trajectory;
