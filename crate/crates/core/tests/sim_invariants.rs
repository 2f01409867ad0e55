use hexapod_core::config::default_model;
use hexapod_core::gait::GaitDefinition;
use hexapod_core::model::GRAVITY;
use hexapod_core::sim::{run_episode, EpisodeError, EpisodeSetup, Terrain};
use hexapod_core::trajectory::PlanarTwist;

fn stand(duration: f64) -> EpisodeSetup {
    EpisodeSetup::new(default_model(), GaitDefinition::tripod(), PlanarTwist::default(), 0.0, duration)
}

#[test]
fn small_drop_settles_to_full_weight_support() {
    let mut setup = stand(3.0);
    setup.drop_height = 0.001;
    let ep = run_episode(&setup).unwrap();
    let weight = setup.model.body.mass * GRAVITY;
    let support = ep.final_state.total_normal_force();
    assert!((support - weight).abs() < 0.01 * weight, "support {support} N, weight {weight} N");
    assert!(ep.final_state.linear_velocity.norm() < 1e-3);
    assert!(ep.final_state.feet.iter().all(|f| f.in_contact));
}

#[test]
fn log_cadence_matches_the_control_rate() {
    let setup = EpisodeSetup::new(default_model(), GaitDefinition::tripod(), PlanarTwist::forward(0.3), 1.0, 1.25);
    let ep = run_episode(&setup).unwrap();
    assert_eq!(ep.log.rows.len(), 1000);
    assert_eq!(ep.stats.ticks, 1000);
    for (k, r) in ep.log.rows.iter().enumerate() {
        assert!((r.time - k as f64 / 800.0).abs() < 1e-12);
        assert!((r.global_phase - (k as f64 / 800.0).fract()).abs() < 1e-9);
    }
}

#[test]
fn identical_setups_give_identical_logs() {
    let mut setup = EpisodeSetup::new(
        default_model(),
        GaitDefinition::amble(),
        PlanarTwist::new(0.2, 0.05, 0.1),
        0.75,
        2.0,
    );
    setup.seed = 3;
    let a = run_episode(&setup).unwrap().log.to_csv_string();
    let b = run_episode(&setup).unwrap().log.to_csv_string();
    assert_eq!(a, b);
    setup.seed = 4;
    let c = run_episode(&setup).unwrap().log.to_csv_string();
    assert_ne!(a, c);
}

#[test]
fn tripod_contacts_follow_the_gait() {
    let setup = EpisodeSetup::new(default_model(), GaitDefinition::tripod(), PlanarTwist::forward(0.3), 1.0, 4.0);
    let ep = run_episode(&setup).unwrap();
    // After the first cycle, at least three feet are always down.
    for r in ep.log.rows.iter().skip(800) {
        let down = r.contacts.iter().filter(|c| **c).count();
        assert!(down >= 3, "t = {}: {down} feet down", r.time);
    }
    assert_eq!(ep.stats.singular_events, 0);
}

#[test]
fn walking_off_a_cliff_fails_with_the_partial_log() {
    let mut setup = EpisodeSetup::new(default_model(), GaitDefinition::tripod(), PlanarTwist::forward(0.5), 1.0, 10.0);
    setup.plant.terrain = Terrain::Step { start: 0.8, height: -2.0 };
    let failure = run_episode(&setup).unwrap_err();
    assert!(matches!(failure.error, EpisodeError::Divergence(_)), "{}", failure.error);
    assert!(!failure.log.rows.is_empty());
    assert!(failure.log.rows.len() < setup.ticks() as usize);
}

#[test]
fn non_positive_duration_is_rejected() {
    let err = run_episode(&stand(0.0)).unwrap_err();
    assert!(matches!(err.error, EpisodeError::Setup(_)));
}
