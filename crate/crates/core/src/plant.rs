//! Nonlinear 6-DOF vehicle model integrated with fixed-step RK4.
//!
//! State: inertial position and velocity, Z-Y-X Euler angles, body rates and
//! the realized body torques, which follow the commanded torques through a
//! first-order lag.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Matrix3, Rotation3, SVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// Largest |pitch| the Euler-rate transform is allowed to reach.
pub const PITCH_LIMIT: f64 = FRAC_PI_2 - 1e-3;

pub const STATE_DIM: usize = 15;

pub type StateVector = SVector<f64, STATE_DIM>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("pitch {pitch} rad reached the Euler-angle singularity")]
    PitchSingularity { pitch: f64 },
    #[error("plant state became non-finite")]
    NonFinite,
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("invalid plant input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlantState {
    /// Inertial position, m.
    pub position: Vector3<f64>,
    /// Inertial velocity, m/s.
    pub velocity: Vector3<f64>,
    /// Roll, pitch, yaw, rad.
    pub euler: Vector3<f64>,
    /// Body rates, rad/s.
    pub body_rates: Vector3<f64>,
    /// Realized (lagged) body torques, N·m.
    pub torque: Vector3<f64>,
}

impl PlantState {
    pub fn hover_at(position: Vector3<f64>) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }

    pub fn to_vector(&self) -> StateVector {
        let mut v = StateVector::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.position);
        v.fixed_rows_mut::<3>(3).copy_from(&self.velocity);
        v.fixed_rows_mut::<3>(6).copy_from(&self.euler);
        v.fixed_rows_mut::<3>(9).copy_from(&self.body_rates);
        v.fixed_rows_mut::<3>(12).copy_from(&self.torque);
        v
    }

    pub fn from_vector(v: &StateVector) -> Self {
        Self {
            position: v.fixed_rows::<3>(0).into(),
            velocity: v.fixed_rows::<3>(3).into(),
            euler: v.fixed_rows::<3>(6).into(),
            body_rates: v.fixed_rows::<3>(9).into(),
            torque: v.fixed_rows::<3>(12).into(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_vector().iter().all(|x| x.is_finite())
    }

    /// Euler-angle rates corresponding to the current body rates.
    pub fn euler_rates(&self) -> Vector3<f64> {
        body_rates_to_euler_rates(&self.euler, &self.body_rates)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantInputs {
    /// Commanded body torques, N·m.
    pub torque_cmd: Vector3<f64>,
    /// Total thrust along body z, N.
    pub thrust: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantParams {
    /// Principal moments `(I_xx, I_yy, I_zz)`, kg·m².
    pub inertia: Vector3<f64>,
    pub mass: f64,
    /// Torque lag time constant, s.
    pub tau_alpha: f64,
    pub gravity: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            inertia: Vector3::new(0.004233, 0.004380, 0.007834),
            mass: 1.0,
            tau_alpha: 0.05,
            gravity: 9.81,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !self.inertia.iter().all(|&i| i > 0.0 && i.is_finite()) {
            return Err(PlantError::InvalidParams(format!(
                "inertia must be positive, got {:?}",
                self.inertia
            )));
        }
        if !(self.mass > 0.0 && self.tau_alpha > 0.0 && self.gravity >= 0.0) {
            return Err(PlantError::InvalidParams(format!(
                "mass and tau_alpha must be positive, gravity non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `W_η`: maps Euler-angle rates to body rates.
pub fn euler_rate_matrix(euler: &Vector3<f64>) -> Matrix3<f64> {
    let (sphi, cphi) = euler.x.sin_cos();
    let (sth, cth) = euler.y.sin_cos();
    Matrix3::new(
        1.0, 0.0, -sth, //
        0.0, cphi, cth * sphi, //
        0.0, -sphi, cth * cphi,
    )
}

pub fn euler_rate_to_body_rates(euler: &Vector3<f64>, euler_rates: &Vector3<f64>) -> Vector3<f64> {
    euler_rate_matrix(euler) * euler_rates
}

/// Closed-form `W_η⁻¹ ω`; singular at |pitch| = π/2.
pub fn body_rates_to_euler_rates(euler: &Vector3<f64>, body_rates: &Vector3<f64>) -> Vector3<f64> {
    let (sphi, cphi) = euler.x.sin_cos();
    let (sth, cth) = euler.y.sin_cos();
    let (p, q, r) = (body_rates.x, body_rates.y, body_rates.z);
    let yaw_rate = (sphi * q + cphi * r) / cth;
    Vector3::new(p + sth * yaw_rate, cphi * q - sphi * r, yaw_rate)
}

/// Rigid-body rotational dynamics with diagonal inertia.
pub fn attitude_dynamics(
    body_rates: &Vector3<f64>,
    torque: &Vector3<f64>,
    inertia: &Vector3<f64>,
) -> Vector3<f64> {
    let (wx, wy, wz) = (body_rates.x, body_rates.y, body_rates.z);
    let (ixx, iyy, izz) = (inertia.x, inertia.y, inertia.z);
    Vector3::new(
        ((iyy - izz) * wy * wz + torque.x) / ixx,
        ((izz - ixx) * wz * wx + torque.y) / iyy,
        ((ixx - iyy) * wx * wy + torque.z) / izz,
    )
}

pub fn torque_lag(torque: &Vector3<f64>, torque_cmd: &Vector3<f64>, tau_alpha: f64) -> Vector3<f64> {
    (torque_cmd - torque) / tau_alpha
}

/// Body-to-inertial rotation, Z-Y-X convention.
pub fn rotation(euler: &Vector3<f64>) -> Rotation3<f64> {
    Rotation3::from_euler_angles(euler.x, euler.y, euler.z)
}

pub fn translational_dynamics(euler: &Vector3<f64>, thrust: f64, params: &PlantParams) -> Vector3<f64> {
    rotation(euler) * Vector3::new(0.0, 0.0, thrust / params.mass)
        - Vector3::new(0.0, 0.0, params.gravity)
}

/// Time derivative of the full state.
pub fn state_derivative(state: &PlantState, inputs: &PlantInputs, params: &PlantParams) -> StateVector {
    PlantState {
        position: state.velocity,
        velocity: translational_dynamics(&state.euler, inputs.thrust, params),
        euler: body_rates_to_euler_rates(&state.euler, &state.body_rates),
        body_rates: attitude_dynamics(&state.body_rates, &state.torque, &params.inertia),
        torque: torque_lag(&state.torque, &inputs.torque_cmd, params.tau_alpha),
    }
    .to_vector()
}

/// One classical RK4 step of length `dt`, followed by the additive `noise`.
pub fn step_rk4(
    state: &PlantState,
    inputs: &PlantInputs,
    params: &PlantParams,
    dt: f64,
    noise: &PlantState,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(inputs.thrust >= 0.0) {
        return Err(PlantError::InvalidInput(format!(
            "thrust must be non-negative, got {}",
            inputs.thrust
        )));
    }
    let x0 = state.to_vector();
    let f = |x: &StateVector| state_derivative(&PlantState::from_vector(x), inputs, params);
    let k1 = f(&x0);
    let k2 = f(&(x0 + 0.5 * dt * k1));
    let k3 = f(&(x0 + 0.5 * dt * k2));
    let k4 = f(&(x0 + dt * k3));
    let x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4) + noise.to_vector();
    let next = PlantState::from_vector(&x1);
    if !next.is_finite() {
        return Err(PlantError::NonFinite);
    }
    if next.euler.y.abs() >= PITCH_LIMIT {
        return Err(PlantError::PitchSingularity { pitch: next.euler.y });
    }
    Ok(next)
}

/// Seeded zero-mean Gaussian perturbation of the Euler angles and body rates.
#[derive(Debug, Clone)]
pub struct NoiseModel {
    euler: Option<Normal<f64>>,
    rates: Option<Normal<f64>>,
    rng: ChaCha8Rng,
}

impl NoiseModel {
    pub fn new(euler_sigma: f64, rate_sigma: f64, seed: u64) -> Result<Self, PlantError> {
        let dist = |sigma: f64| -> Result<Option<Normal<f64>>, PlantError> {
            if sigma == 0.0 {
                Ok(None)
            } else {
                Normal::new(0.0, sigma)
                    .map(Some)
                    .map_err(|e| PlantError::InvalidParams(format!("noise sigma {sigma}: {e}")))
            }
        };
        Ok(Self {
            euler: dist(euler_sigma)?,
            rates: dist(rate_sigma)?,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn silent() -> Self {
        Self {
            euler: None,
            rates: None,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn sample(&mut self) -> PlantState {
        let mut out = PlantState::default();
        if let Some(d) = self.euler {
            out.euler = Vector3::from_fn(|_, _| d.sample(&mut self.rng));
        }
        if let Some(d) = self.rates {
            out.body_rates = Vector3::from_fn(|_, _| d.sample(&mut self.rng));
        }
        out
    }
}
