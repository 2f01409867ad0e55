//! Analysis quantities computed purely from an episode log.

use crate::kinematics::JOINT_NAMES;
use crate::model::{LegId, RobotModel};
use crate::sim::EpisodeLog;
use std::fmt::Write as _;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TrackingError {
    pub rms: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub ticks: usize,
    pub duration: f64,
    /// Commanded-versus-actual tip distance per leg (m).
    pub tip_tracking: [TrackingError; 6],
    /// Body height peak-to-peak, averaged over complete gait cycles (m).
    pub height_peak_to_peak: f64,
    /// Complete cycles the average ran over; 0 means the whole log was one window.
    pub height_cycles: usize,
    pub height_mean: f64,
    /// Largest departure of body height from nominal stance height (m).
    pub height_max_deviation: f64,
    pub commanded_forward: f64,
    /// Body-frame forward velocity (m/s).
    pub forward_velocity_mean: f64,
    pub forward_velocity_rms_error: f64,
    /// Body-frame lateral velocity RMS about the command (m/s).
    pub lateral_velocity_rms: f64,
    /// Torque samples above the continuous rating, per joint type over all legs.
    pub continuous_violations: [usize; 3],
    pub peak_violations: [usize; 3],
    pub max_torque: [f64; 3],
    /// Largest torque magnitude per joint type while the foot was on the ground.
    pub max_stance_torque: [f64; 3],
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

fn peak_to_peak(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if values.is_empty() {
        0.0
    } else {
        hi - lo
    }
}

/// Row indices at which the recorded global phase wraps back past zero.
fn cycle_starts(log: &EpisodeLog) -> Vec<usize> {
    log.rows
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1].global_phase < w[0].global_phase)
        .map(|(k, _)| k + 1)
        .collect()
}

pub fn compute_metrics(log: &EpisodeLog, model: &RobotModel) -> MetricsReport {
    let rows = &log.rows;
    let n = rows.len();

    let mut tip_tracking = [TrackingError::default(); 6];
    for leg in LegId::ALL {
        let i = leg.index();
        let errs: Vec<f64> = rows.iter().map(|r| (r.commanded_tips[i] - r.actual_tips[i]).norm()).collect();
        tip_tracking[i] = TrackingError {
            rms: rms(errs.iter().copied()),
            max: errs.iter().copied().fold(0.0, f64::max),
        };
    }

    let heights: Vec<f64> = rows.iter().map(|r| r.position.z).collect();
    let starts = cycle_starts(log);
    let (height_peak_to_peak, height_cycles) = if starts.len() >= 2 {
        let p2p: Vec<f64> = starts.windows(2).map(|w| peak_to_peak(&heights[w[0]..w[1]])).collect();
        (p2p.iter().sum::<f64>() / p2p.len() as f64, p2p.len())
    } else {
        (peak_to_peak(&heights), 0)
    };
    let height_mean = if n == 0 { 0.0 } else { heights.iter().sum::<f64>() / n as f64 };
    let nominal = model.body.stance_height;
    let height_max_deviation = heights.iter().map(|h| (h - nominal).abs()).fold(0.0, f64::max);

    let body_v: Vec<_> = rows.iter().map(|r| r.body_velocity()).collect();
    let forward_velocity_mean = if n == 0 {
        0.0
    } else {
        body_v.iter().map(|v| v.x).sum::<f64>() / n as f64
    };
    let forward_velocity_rms_error = rms(rows.iter().zip(&body_v).map(|(r, v)| v.x - r.command.vx));
    let lateral_velocity_rms = rms(rows.iter().zip(&body_v).map(|(r, v)| v.y - r.command.vy));
    let commanded_forward = rows.first().map_or(0.0, |r| r.command.vx);

    let env = &model.envelope;
    let mut continuous_violations = [0; 3];
    let mut peak_violations = [0; 3];
    let mut max_torque = [0.0f64; 3];
    let mut max_stance_torque = [0.0f64; 3];
    for r in rows {
        for (i, tau) in r.torques.iter().enumerate() {
            for j in 0..3 {
                let t = tau[j].abs();
                if t > env.continuous_torque[j] {
                    continuous_violations[j] += 1;
                }
                if t > env.peak_torque[j] {
                    peak_violations[j] += 1;
                }
                max_torque[j] = max_torque[j].max(t);
                if r.contacts[i] {
                    max_stance_torque[j] = max_stance_torque[j].max(t);
                }
            }
        }
    }

    MetricsReport {
        ticks: n,
        duration: match (rows.first(), rows.last()) {
            (Some(a), Some(b)) if n > 1 => (b.time - a.time) * n as f64 / (n - 1) as f64,
            _ => 0.0,
        },
        tip_tracking,
        height_peak_to_peak,
        height_cycles,
        height_mean,
        height_max_deviation,
        commanded_forward,
        forward_velocity_mean,
        forward_velocity_rms_error,
        lateral_velocity_rms,
        continuous_violations,
        peak_violations,
        max_torque,
        max_stance_torque,
    }
}

impl MetricsReport {
    /// `metric,value` rows, one metric per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,value\n");
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k},{v}");
        };
        put("ticks", self.ticks.to_string());
        put("duration", format!("{:.6}", self.duration));
        for leg in LegId::ALL {
            let t = self.tip_tracking[leg.index()];
            put(&format!("tip_rms_{leg}"), format!("{:.9}", t.rms));
            put(&format!("tip_max_{leg}"), format!("{:.9}", t.max));
        }
        put("height_peak_to_peak", format!("{:.9}", self.height_peak_to_peak));
        put("height_cycles", self.height_cycles.to_string());
        put("height_mean", format!("{:.9}", self.height_mean));
        put("height_max_deviation", format!("{:.9}", self.height_max_deviation));
        put("commanded_forward", format!("{:.9}", self.commanded_forward));
        put("forward_velocity_mean", format!("{:.9}", self.forward_velocity_mean));
        put("forward_velocity_rms_error", format!("{:.9}", self.forward_velocity_rms_error));
        put("lateral_velocity_rms", format!("{:.9}", self.lateral_velocity_rms));
        for (j, name) in JOINT_NAMES.iter().enumerate() {
            put(&format!("continuous_violations_{name}"), self.continuous_violations[j].to_string());
            put(&format!("peak_violations_{name}"), self.peak_violations[j].to_string());
            put(&format!("max_torque_{name}"), format!("{:.6}", self.max_torque[j]));
            put(&format!("max_stance_torque_{name}"), format!("{:.6}", self.max_stance_torque[j]));
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ticks                    {}", self.ticks);
        let _ = writeln!(s, "duration                 {:.3} s", self.duration);
        let _ = writeln!(
            s,
            "forward velocity         mean {:.4} m/s (commanded {:.4}), rms error {:.4}",
            self.forward_velocity_mean, self.commanded_forward, self.forward_velocity_rms_error
        );
        let _ = writeln!(s, "lateral velocity rms     {:.4} m/s", self.lateral_velocity_rms);
        let cycles = if self.height_cycles == 0 {
            "whole log".to_string()
        } else {
            format!("{} cycles", self.height_cycles)
        };
        let _ = writeln!(
            s,
            "body height              mean {:.4} m, peak-to-peak {:.4} m ({cycles}), max deviation {:.4} m",
            self.height_mean, self.height_peak_to_peak, self.height_max_deviation
        );
        for leg in LegId::ALL {
            let t = self.tip_tracking[leg.index()];
            let _ = writeln!(s, "tip tracking {leg}          rms {:.4} m, max {:.4} m", t.rms, t.max);
        }
        for (j, name) in JOINT_NAMES.iter().enumerate() {
            let _ = writeln!(
                s,
                "{name:<6} torque             max {:.2} N·m (stance {:.2}), above continuous {} samples, above peak {}",
                self.max_torque[j], self.max_stance_torque[j], self.continuous_violations[j], self.peak_violations[j]
            );
        }
        s
    }
}
