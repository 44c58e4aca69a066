use morphmpc::qp::QpSettings;
use morphmpc::trajectory_mpc::{build_translation_model, TrajectoryCommand, TrajectoryConfig, TrajectoryMpc};
use nalgebra::{DVector, Vector3};
use proptest::prelude::*;

fn hover_cmd(cfg: &TrajectoryConfig) -> TrajectoryCommand {
    TrajectoryCommand { roll: 0.0, pitch: 0.0, thrust: cfg.hover_thrust() }
}

#[test]
fn held_pitch_accelerates_forward() {
    let m = build_translation_model(1.0, 9.81, 0.2, 0.1).unwrap();
    let mut x = DVector::zeros(8);
    x[7] = 0.1;
    let u = DVector::from_vec(vec![0.0, 0.1, 0.0]);
    for _ in 0..10 {
        x = &m.a_d * &x + &m.b_d * &u;
    }
    // v = gθ t and p = ½gθt² for a constant θ* = 0.1 over 1 s.
    assert!((x[3] - 0.981).abs() < 1e-12);
    assert!((x[0] - 0.4905).abs() < 1e-12);
    assert!((x[7] - 0.1).abs() < 1e-15);
    assert_eq!(x[4], 0.0);
}

#[test]
fn held_thrust_deviation_climbs() {
    let m = build_translation_model(1.0, 9.81, 0.2, 0.1).unwrap();
    let mut x = DVector::zeros(8);
    let u = DVector::from_vec(vec![0.0, 0.0, 0.02]);
    for _ in 0..20 {
        x = &m.a_d * &x + &m.b_d * &u;
    }
    assert!((x[5] - 9.81 * 0.02 * 2.0).abs() < 1e-12);
    assert!((x[2] - 0.5 * 9.81 * 0.02 * 4.0).abs() < 1e-12);
}

#[test]
fn vanishing_lag_passes_commands_through() {
    let m = build_translation_model(1.0, 9.81, 1e-6, 0.1).unwrap();
    for (state, input) in [(6, 0), (7, 1)] {
        assert!(m.a_d[(state, state)].abs() < 1e-6);
        assert!((m.b_d[(state, input)] - 1.0).abs() < 1e-6);
    }
}

#[test]
fn mirrored_reference_mirrors_the_attitude_commands() {
    let cfg = TrajectoryConfig::default();
    let mut a = TrajectoryMpc::new(cfg.clone(), QpSettings::default()).unwrap();
    let mut b = TrajectoryMpc::new(cfg.clone(), QpSettings::default()).unwrap();
    let model = a.model().clone();
    let mut xa = DVector::from_vec(vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let mut xb = xa.clone();
    let (mut ua, mut ub) = (hover_cmd(&cfg), hover_cmd(&cfg));
    let ref_a = Vector3::new(1.5, 0.4, 2.0);
    let ref_b = Vector3::new(0.4, 1.5, 2.0);
    let zero = Vector3::zeros();
    for k in 0..100 {
        let pos = |x: &DVector<f64>| Vector3::new(x[0], x[1], x[2]);
        let vel = |x: &DVector<f64>| Vector3::new(x[3], x[4], x[5]);
        ua = a.position_control_step(&pos(&xa), &vel(&xa), &ref_a, &zero, &ua).unwrap();
        ub = b.position_control_step(&pos(&xb), &vel(&xb), &ref_b, &zero, &ub).unwrap();
        // Swapping x and y maps θ* to −φ* and φ* to −θ*.
        assert!((ub.roll + ua.pitch).abs() < 1e-7, "tick {k}");
        assert!((ub.pitch + ua.roll).abs() < 1e-7, "tick {k}");
        assert!((ub.thrust - ua.thrust).abs() < 1e-7, "tick {k}");
        let step = |x: &DVector<f64>, u: &TrajectoryCommand| {
            let u = DVector::from_vec(vec![u.roll, u.pitch, u.thrust / cfg.hover_thrust() - 1.0]);
            &model.a_d * x + &model.b_d * u
        };
        xa = step(&xa, &ua);
        xb = step(&xb, &ub);
    }
    assert!((xa[0] - 1.5).abs() < 0.1 && (xb[1] - 1.5).abs() < 0.1);
}

#[test]
fn reaches_a_step_reference_on_its_own_model() {
    let cfg = TrajectoryConfig::default();
    let mut c = TrajectoryMpc::new(cfg.clone(), QpSettings::default()).unwrap();
    let model = c.model().clone();
    let mut x = DVector::from_vec(vec![0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    let mut u = hover_cmd(&cfg);
    let target = Vector3::new(2.0, -1.0, 3.0);
    for _ in 0..600 {
        u = c
            .position_control_step(&Vector3::new(x[0], x[1], x[2]), &Vector3::new(x[3], x[4], x[5]), &target, &Vector3::zeros(), &u)
            .unwrap();
        let ui = DVector::from_vec(vec![u.roll, u.pitch, u.thrust / cfg.hover_thrust() - 1.0]);
        x = &model.a_d * &x + &model.b_d * ui;
    }
    assert!((Vector3::new(x[0], x[1], x[2]) - target).norm() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn commands_respect_bounds(
        p in prop::array::uniform3(-5.0..5.0f64),
        v in prop::array::uniform3(-2.0..2.0f64),
        r in prop::array::uniform3(-5.0..5.0f64),
        prev in prop::array::uniform3(-1.0..1.0f64),
    ) {
        let cfg = TrajectoryConfig::default();
        let mut c = TrajectoryMpc::new(cfg.clone(), QpSettings::default()).unwrap();
        let max = 12f64.to_radians();
        let rate = 0.3f64.to_radians();
        let mut u = TrajectoryCommand {
            roll: prev[0] * max,
            pitch: prev[1] * max,
            thrust: cfg.hover_thrust() * (1.0 + 0.1 * prev[2]),
        };
        let (p, v, r) = (Vector3::from(p), Vector3::from(v), Vector3::from(r));
        for _ in 0..5 {
            let out = c.position_control_step(&p, &v, &r, &Vector3::zeros(), &u).unwrap();
            prop_assert!(out.roll.abs() <= max && out.pitch.abs() <= max);
            prop_assert!((out.roll - u.roll).abs() <= rate && (out.pitch - u.pitch).abs() <= rate);
            let dt = (out.thrust - u.thrust) / cfg.hover_thrust();
            prop_assert!(dt.abs() <= 0.0025 + 1e-12);
            prop_assert!(out.thrust >= 0.0);
            u = out;
        }
    }
}
