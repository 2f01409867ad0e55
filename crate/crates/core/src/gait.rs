//! Gait generator: an open-loop phase oscillator emitting, for every leg,
//! the stance signal or one of the three swing sub-signals together with
//! the local progress through that signal's window.

use crate::model::LegId;
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaitError {
    #[error("invalid gait `{gait}`: {reason}")]
    Invalid { gait: String, reason: String },
}

/// Step-cycle section a leg is currently in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GaitMode {
    Stance,
    Liftoff,
    Midswing,
    Touchdown,
}

impl GaitMode {
    /// Modes in step-cycle order.
    pub const ALL: [GaitMode; 4] = [GaitMode::Stance, GaitMode::Liftoff, GaitMode::Midswing, GaitMode::Touchdown];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_swing(self) -> bool {
        self != GaitMode::Stance
    }

    pub fn next(self) -> GaitMode {
        GaitMode::ALL[(self.index() + 1) % 4]
    }

    pub fn name(self) -> &'static str {
        match self {
            GaitMode::Stance => "stance",
            GaitMode::Liftoff => "liftoff",
            GaitMode::Midswing => "midswing",
            GaitMode::Touchdown => "touchdown",
        }
    }
}

impl fmt::Display for GaitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A periodic gait: per-leg phase offsets, duty factor and the split of the
/// swing window into liftoff, midswing and touchdown.
#[derive(Clone, Debug, PartialEq)]
pub struct GaitDefinition {
    pub name: String,
    /// Indexed by [`LegId::index`].
    pub phase_offsets: [f64; 6],
    pub duty_factor: f64,
    pub swing_split: [f64; 3],
}

pub const EQUAL_THIRDS: [f64; 3] = [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];

impl GaitDefinition {
    pub fn new(name: impl Into<String>, phase_offsets: [f64; 6], duty_factor: f64, swing_split: [f64; 3]) -> Result<Self, GaitError> {
        let gait = GaitDefinition {
            name: name.into(),
            phase_offsets,
            duty_factor,
            swing_split,
        };
        gait.validate()?;
        Ok(gait)
    }

    /// Alternating tripod: {FL, MR, RL} at offset 0, {FR, ML, RR} at 0.5.
    pub fn tripod() -> Self {
        let mut offsets = [0.0; 6];
        for leg in [LegId::FrontRight, LegId::MiddleLeft, LegId::RearRight] {
            offsets[leg.index()] = 0.5;
        }
        GaitDefinition {
            name: "tripod".into(),
            phase_offsets: offsets,
            duty_factor: 0.5,
            swing_split: EQUAL_THIRDS,
        }
    }

    /// Reconstructed amble: one leg swings at a time in a back-to-front wave
    /// (RR, MR, FR, RL, ML, FL), offsets 1/6 apart, duty 5/6.
    pub fn amble() -> Self {
        let order = [
            LegId::RearRight,
            LegId::MiddleRight,
            LegId::FrontRight,
            LegId::RearLeft,
            LegId::MiddleLeft,
            LegId::FrontLeft,
        ];
        let mut offsets = [0.0; 6];
        for (k, leg) in order.iter().enumerate() {
            offsets[leg.index()] = (5 - k) as f64 / 6.0;
        }
        GaitDefinition {
            name: "amble".into(),
            phase_offsets: offsets,
            duty_factor: 5.0 / 6.0,
            swing_split: EQUAL_THIRDS,
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "tripod" => Some(Self::tripod()),
            "amble" => Some(Self::amble()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<(), GaitError> {
        let fail = |reason: String| GaitError::Invalid {
            gait: self.name.clone(),
            reason,
        };
        for (leg, off) in LegId::ALL.iter().zip(self.phase_offsets) {
            if !(0.0..1.0).contains(&off) {
                return Err(fail(format!("offset {off} for {leg} not in [0, 1)")));
            }
        }
        if !(self.duty_factor > 0.0 && self.duty_factor < 1.0) {
            return Err(fail(format!("duty factor {} not in (0, 1)", self.duty_factor)));
        }
        if self.swing_split.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(fail("swing split shares must be positive".into()));
        }
        let total: f64 = self.swing_split.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(fail(format!("swing split sums to {total}, not 1")));
        }
        Ok(())
    }

    pub fn leg_phase(&self, global_phase: f64, leg: LegId) -> f64 {
        wrap_phase(global_phase + self.phase_offsets[leg.index()])
    }

    /// Window of a mode in leg phase, as `(start, width)`.
    pub fn window(&self, mode: GaitMode) -> (f64, f64) {
        let beta = self.duty_factor;
        let swing = 1.0 - beta;
        let [l, m, t] = self.swing_split;
        match mode {
            GaitMode::Stance => (0.0, beta),
            GaitMode::Liftoff => (beta, swing * l),
            GaitMode::Midswing => (beta + swing * l, swing * m),
            GaitMode::Touchdown => (beta + swing * (l + m), swing * t),
        }
    }

    /// Wall-clock duration of a mode at a given step frequency.
    pub fn mode_duration(&self, mode: GaitMode, step_frequency: f64) -> f64 {
        self.window(mode).1 / step_frequency
    }
}

/// Wraps to `[0, 1)`, guarding against `rem_euclid` rounding up to exactly 1.
pub fn wrap_phase(x: f64) -> f64 {
    let w = x.rem_euclid(1.0);
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// Maps a leg phase to its mode and the progress through that mode's window.
/// Windows are half-open; a phase exactly on a boundary belongs to the later mode.
pub fn classify(leg_phase: f64, gait: &GaitDefinition) -> (GaitMode, f64) {
    let beta = gait.duty_factor;
    if leg_phase < beta {
        return (GaitMode::Stance, leg_phase / beta);
    }
    let s = (leg_phase - beta) / (1.0 - beta);
    let [l, m, t] = gait.swing_split;
    if s < l {
        (GaitMode::Liftoff, s / l)
    } else if s < l + m {
        (GaitMode::Midswing, (s - l) / m)
    } else {
        (GaitMode::Touchdown, ((s - l - m) / t).min(1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LegPhase {
    pub leg_phase: f64,
    pub mode: GaitMode,
    pub local_progress: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaitPhaseState {
    pub global_phase: f64,
    pub legs: [LegPhase; 6],
}

impl GaitPhaseState {
    pub fn at(global_phase: f64, gait: &GaitDefinition) -> Self {
        let global_phase = wrap_phase(global_phase);
        let legs = LegId::ALL.map(|leg| {
            let leg_phase = gait.leg_phase(global_phase, leg);
            let (mode, local_progress) = classify(leg_phase, gait);
            LegPhase {
                leg_phase,
                mode,
                local_progress,
            }
        });
        GaitPhaseState { global_phase, legs }
    }

    pub fn leg(&self, id: LegId) -> &LegPhase {
        &self.legs[id.index()]
    }

    pub fn stance_count(&self) -> usize {
        self.legs.iter().filter(|l| l.mode == GaitMode::Stance).count()
    }
}

/// Advances the global phase by `step_frequency · dt` (mod 1).
pub fn advance(state: &GaitPhaseState, gait: &GaitDefinition, step_frequency: f64, dt: f64) -> GaitPhaseState {
    debug_assert!(dt > 0.0 && step_frequency >= 0.0);
    if step_frequency == 0.0 {
        return *state;
    }
    GaitPhaseState::at(state.global_phase + step_frequency * dt, gait)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn advance_examples() {
        let g = GaitDefinition::tripod();
        let s = GaitPhaseState::at(0.0, &g);
        assert_eq!(advance(&s, &g, 1.0, 0.25).global_phase, 0.25);
        let s = GaitPhaseState::at(0.9, &g);
        assert!((advance(&s, &g, 1.0, 0.2).global_phase - 0.1).abs() < 1e-12);
        assert_eq!(advance(&s, &g, 0.0, 0.2), s);
    }

    #[test]
    fn classify_examples() {
        let g = GaitDefinition::tripod();
        assert_eq!(classify(0.25, &g), (GaitMode::Stance, 0.5));
        assert_eq!(classify(0.5, &g), (GaitMode::Liftoff, 0.0));
        let (mode, p) = classify(0.75, &g);
        assert_eq!(mode, GaitMode::Midswing);
        assert!((p - 0.5).abs() < 1e-12);
        assert_eq!(classify(0.0, &g), (GaitMode::Stance, 0.0));
    }

    #[test]
    fn tripod_always_has_three_feet_down_off_boundaries() {
        let g = GaitDefinition::tripod();
        let n = 10_000;
        for k in 0..n {
            let phase = k as f64 / n as f64;
            if phase == 0.0 || phase == 0.5 {
                continue;
            }
            let s = GaitPhaseState::at(phase, &g);
            assert_eq!(s.stance_count(), 3, "phase {phase}");
        }
    }

    #[test]
    fn amble_swings_one_leg_at_a_time() {
        let g = GaitDefinition::amble();
        g.validate().unwrap();
        for k in 0..6000 {
            let phase = (k as f64 + 0.5) / 6000.0;
            assert_eq!(GaitPhaseState::at(phase, &g).stance_count(), 5);
        }
    }

    #[test]
    fn invalid_gaits_are_rejected() {
        let bad_duty = GaitDefinition::new("x", [0.0; 6], 1.0, EQUAL_THIRDS);
        assert!(bad_duty.is_err());
        let bad_split = GaitDefinition::new("x", [0.0; 6], 0.5, [0.5, 0.5, 0.1]);
        assert!(bad_split.is_err());
        let bad_offset = GaitDefinition::new("x", [0.0, 0.0, 1.0, 0.0, 0.0, 0.0], 0.5, EQUAL_THIRDS);
        assert!(bad_offset.is_err());
    }

    #[test]
    fn windows_tile_the_cycle() {
        let g = GaitDefinition::new("w", [0.0; 6], 0.6, [0.2, 0.5, 0.3]).unwrap();
        let mut cursor = 0.0;
        for mode in GaitMode::ALL {
            let (start, width) = g.window(mode);
            assert!((start - cursor).abs() < 1e-15);
            cursor += width;
        }
        assert!((cursor - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn progress_spans_each_window(phase in 0.0f64..1.0, duty in 0.1f64..0.9) {
            let g = GaitDefinition::new("p", [0.0; 6], duty, EQUAL_THIRDS).unwrap();
            let (mode, p) = classify(phase, &g);
            prop_assert!((0.0..=1.0).contains(&p));
            let (start, width) = g.window(mode);
            prop_assert!((start + p * width - phase).abs() < 1e-12);
            prop_assert_eq!(mode == GaitMode::Stance, phase < duty);
        }

        #[test]
        fn advancing_whole_periods_preserves_modes(phase in 0.0f64..1.0, f in 0.5f64..2.0, n in 1u32..20) {
            let g = GaitDefinition::tripod();
            let s = GaitPhaseState::at(phase, &g);
            // Stay clear of window boundaries where rounding may flip a mode.
            let near_boundary = s.legs.iter().any(|l| {
                GaitMode::ALL.iter().any(|m| {
                    let (start, _) = g.window(*m);
                    (l.leg_phase - start).abs() < 1e-9 || (l.leg_phase - start - 1.0).abs() < 1e-9
                })
            });
            prop_assume!(!near_boundary);
            let later = advance(&s, &g, f, n as f64 / f);
            for (a, b) in s.legs.iter().zip(later.legs.iter()) {
                prop_assert_eq!(a.mode, b.mode);
                prop_assert!((a.local_progress - b.local_progress).abs() < 1e-9);
            }
        }

        #[test]
        fn tripod_groups_never_swing_together(phase in 0.0f64..1.0) {
            let g = GaitDefinition::tripod();
            let s = GaitPhaseState::at(phase, &g);
            let a = [LegId::FrontLeft, LegId::MiddleRight, LegId::RearLeft];
            let b = [LegId::FrontRight, LegId::MiddleLeft, LegId::RearRight];
            let a_swing = a.iter().any(|l| s.leg(*l).mode.is_swing());
            let b_swing = b.iter().any(|l| s.leg(*l).mode.is_swing());
            prop_assert!(!(a_swing && b_swing));
        }
    }
}
