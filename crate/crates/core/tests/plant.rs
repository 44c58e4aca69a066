use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use morphmpc::plant::{attitude_dynamics, step_rk4, NoiseModel, PlantInputs, PlantParams, PlantState};

fn coast(thrust: f64) -> PlantInputs {
    PlantInputs { torque_cmd: Vector3::zeros(), thrust }
}

fn energy(w: &Vector3<f64>, inertia: &Vector3<f64>) -> f64 {
    0.5 * w.component_mul(inertia).dot(w)
}

fn run(state: PlantState, inputs: &PlantInputs, params: &PlantParams, dt: f64, steps: usize) -> PlantState {
    let zero = PlantState::default();
    (0..steps).fold(state, |s, _| step_rk4(&s, inputs, params, dt, &zero).unwrap())
}

#[test]
fn energy_does_not_grow_while_coasting() {
    let params = PlantParams::default();
    let mut s = PlantState {
        body_rates: Vector3::new(1.5, -0.8, 2.0),
        torque: Vector3::new(0.01, -0.02, 0.005),
        ..PlantState::default()
    };
    let mut e = energy(&s.body_rates, &params.inertia);
    let zero = PlantState::default();
    for _ in 0..5000 {
        s = step_rk4(&s, &coast(0.0), &params, 0.001, &zero).unwrap();
        let next = energy(&s.body_rates, &params.inertia);
        if s.torque.norm() < 1e-12 {
            assert!(next <= e + 1e-8);
        }
        e = next;
    }
    // With τ → 0 the energy settles to a constant.
    let before = e;
    s = run(s, &coast(0.0), &params, 0.001, 1000);
    assert!((energy(&s.body_rates, &params.inertia) - before).abs() < 1e-8);
}

#[test]
fn energy_is_non_increasing_with_zero_torque() {
    let params = PlantParams::default();
    let mut s = PlantState { body_rates: Vector3::new(0.3, 0.6, -1.0), ..PlantState::default() };
    let zero = PlantState::default();
    let mut e = energy(&s.body_rates, &params.inertia);
    for _ in 0..2000 {
        s = step_rk4(&s, &coast(0.0), &params, 0.001, &zero).unwrap();
        let next = energy(&s.body_rates, &params.inertia);
        assert!(next <= e + 1e-8, "{next} > {e}");
        e = next;
    }
}

#[test]
fn isotropic_spin_keeps_its_rate() {
    let params = PlantParams { inertia: Vector3::repeat(0.005), ..PlantParams::default() };
    let w0 = Vector3::new(0.7, -1.3, 2.1);
    let s = run(PlantState { body_rates: w0, ..PlantState::default() }, &coast(0.0), &params, 0.001, 10_000);
    assert!((s.body_rates.norm() - w0.norm()).abs() < 1e-9);
}

#[test]
fn attitude_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let w = Vector3::from_fn(|_, _| rng.random_range(-5.0..5.0));
        let tau = Vector3::from_fn(|_, _| rng.random_range(-0.1..0.1));
        let inertia = Vector3::from_fn(|_, _| rng.random_range(0.001..0.01));
        let (ixx, iyy, izz) = (inertia.x, inertia.y, inertia.z);
        // Analytic partials of the Euler equations with respect to ω.
        let analytic = Matrix3::new(
            0.0,
            (iyy - izz) * w.z / ixx,
            (iyy - izz) * w.y / ixx,
            (izz - ixx) * w.z / iyy,
            0.0,
            (izz - ixx) * w.x / iyy,
            (ixx - iyy) * w.y / izz,
            (ixx - iyy) * w.x / izz,
            0.0,
        );
        let h = 1e-6;
        let fd = Matrix3::from_fn(|i, j| {
            let mut up = w;
            let mut dn = w;
            up[j] += h;
            dn[j] -= h;
            (attitude_dynamics(&up, &tau, &inertia)[i] - attitude_dynamics(&dn, &tau, &inertia)[i]) / (2.0 * h)
        });
        let scale = analytic.amax().max(1.0);
        assert!((analytic - fd).amax() / scale < 1e-5);
    }
}

#[test]
fn rk4_converges_at_fourth_order() {
    let params = PlantParams::default();
    let s0 = PlantState {
        velocity: Vector3::new(0.2, -0.1, 0.3),
        euler: Vector3::new(0.2, -0.3, 0.5),
        body_rates: Vector3::new(1.0, -2.0, 3.0),
        torque: Vector3::new(0.02, -0.01, 0.0),
        ..PlantState::default()
    };
    let inputs = PlantInputs { torque_cmd: Vector3::new(-0.05, 0.05, 0.01), thrust: 11.0 };
    let t = 0.4;
    let at = |n: usize| run(s0, &inputs, &params, t / n as f64, n).to_vector();
    let (a, b, c) = (at(20), at(40), at(80));
    let order = ((a - b).norm() / (b - c).norm()).log2();
    assert!(order >= 3.8, "observed order {order}");
}

#[test]
fn seeded_noise_replays_bit_for_bit() {
    let params = PlantParams::default();
    let go = |seed| {
        let mut noise = NoiseModel::new(0.01, 0.02, seed).unwrap();
        let inputs = PlantInputs { torque_cmd: Vector3::new(0.001, 0.0, -0.001), thrust: 9.81 };
        let mut s = PlantState::hover_at(Vector3::new(0.0, 0.0, 2.0));
        let mut out = Vec::new();
        for _ in 0..2000 {
            s = step_rk4(&s, &inputs, &params, 0.001, &noise.sample()).unwrap();
            out.extend(s.to_vector().iter().map(|x| x.to_bits()));
        }
        out
    };
    assert_eq!(go(3), go(3));
    assert_ne!(go(3), go(4));
}

#[test]
fn rejects_bad_step_inputs() {
    let p = PlantParams::default();
    let s = PlantState::default();
    let z = PlantState::default();
    assert!(step_rk4(&s, &coast(1.0), &p, 0.0, &z).is_err());
    assert!(step_rk4(&s, &coast(-1.0), &p, 0.001, &z).is_err());
    let tilted = PlantState { euler: Vector3::new(0.0, 1.5697, 0.0), body_rates: Vector3::new(0.0, 5.0, 0.0), ..z };
    assert!(step_rk4(&tilted, &coast(0.0), &p, 0.001, &z).is_err());
}

proptest! {
    #[test]
    fn hover_is_a_fixed_point(x in -10.0..10.0f64, y in -10.0..10.0f64, z in 0.0..10.0f64, yaw in -3.0..3.0f64) {
        let params = PlantParams::default();
        let s = PlantState { euler: Vector3::new(0.0, 0.0, yaw), ..PlantState::hover_at(Vector3::new(x, y, z)) };
        let next = step_rk4(&s, &coast(params.mass * params.gravity), &params, 0.001, &PlantState::default()).unwrap();
        prop_assert!((next.to_vector() - s.to_vector()).amax() < 1e-12);
    }

    #[test]
    fn free_fall_without_thrust(vz in -5.0..5.0f64) {
        let params = PlantParams::default();
        let s = PlantState { velocity: Vector3::new(0.0, 0.0, vz), ..PlantState::default() };
        let out = run(s, &coast(0.0), &params, 0.001, 500);
        let t = 0.5;
        prop_assert!((out.position.z - (vz * t - 0.5 * params.gravity * t * t)).abs() < 1e-10);
        prop_assert!((out.velocity.z - (vz - params.gravity * t)).abs() < 1e-10);
    }
}
