//! Position-tracking MPC producing roll/pitch references and thrust.
//!
//! States are `(p, v, φ*, θ*)`, where `φ*`, `θ*` are the attitude
//! references after a first-order lag standing in for the closed attitude
//! loop. Inputs are the commanded roll and pitch (radians) and the thrust
//! deviation `δ = T/(mg) − 1`, so the model is linear around hover and the
//! input penalty vanishes there.

use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use thiserror::Error;

use crate::mpc::{discretize, enforce_bounds, CondensedMpc, MpcConfig, MpcError};
use crate::qp::{solve, QpSettings, QpSolution};

pub const TRANSLATION_STATES: usize = 8;
pub const TRANSLATION_INPUTS: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryMpcError {
    #[error("invalid trajectory configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory MPC failed at tick {tick}: {source}")]
    Solver {
        tick: u64,
        #[source]
        source: MpcError,
    },
    #[error(transparent)]
    Mpc(#[from] MpcError),
}

/// Discrete translation model around hover.
#[derive(Debug, Clone, PartialEq)]
pub struct TranslationModel {
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub mass: f64,
    pub gravity: f64,
    pub attitude_lag: f64,
    pub ts: f64,
}

/// `ẍ = gθ*`, `ÿ = −gφ*`, `z̈ = gδ` with the angle states lagging their
/// commands at `attitude_lag`.
pub fn build_translation_model(
    mass: f64,
    gravity: f64,
    attitude_lag: f64,
    ts: f64,
) -> Result<TranslationModel, TrajectoryMpcError> {
    for (name, v) in [("mass", mass), ("gravity", gravity), ("attitude_lag", attitude_lag), ("ts", ts)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(TrajectoryMpcError::InvalidConfig(format!("{name} must be positive, got {v}")));
        }
    }
    let mut a = DMatrix::zeros(TRANSLATION_STATES, TRANSLATION_STATES);
    let mut b = DMatrix::zeros(TRANSLATION_STATES, TRANSLATION_INPUTS);
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
    }
    a[(3, 7)] = gravity;
    a[(4, 6)] = -gravity;
    a[(6, 6)] = -1.0 / attitude_lag;
    a[(7, 7)] = -1.0 / attitude_lag;
    b[(5, 2)] = gravity;
    b[(6, 0)] = 1.0 / attitude_lag;
    b[(7, 1)] = 1.0 / attitude_lag;
    let (a_d, b_d) = discretize(&a, &b, ts);
    Ok(TranslationModel { a_c: a, b_c: b, a_d, b_d, mass, gravity, attitude_lag, ts })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub ts: f64,
    pub np: usize,
    pub nc: usize,
    /// State weights over `(p, v, φ*, θ*)`.
    pub q: [f64; TRANSLATION_STATES],
    /// Input weights over `(φ_cmd, θ_cmd, δ)`.
    pub r: [f64; TRANSLATION_INPUTS],
    /// Per-tick rate bounds: roll and pitch in degrees, thrust normalized.
    pub du_abs: [f64; TRANSLATION_INPUTS],
    /// Input bounds: roll and pitch in degrees, thrust normalized.
    pub u_abs: [f64; TRANSLATION_INPUTS],
    pub attitude_lag: f64,
    pub mass: f64,
    pub gravity: f64,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        Self {
            ts: 0.1,
            np: 40,
            nc: 10,
            q: [40.0, 40.0, 60.0, 80.0, 80.0, 80.0, 0.1, 0.1],
            r: [25.0, 25.0, 8.0],
            du_abs: [0.3, 0.3, 0.0025],
            u_abs: [12.0, 12.0, f64::INFINITY],
            attitude_lag: 6.0,
            mass: 1.0,
            gravity: 9.81,
        }
    }
}

impl TrajectoryConfig {
    pub fn hover_thrust(&self) -> f64 {
        self.mass * self.gravity
    }

    /// Equivalent MPC configuration in internal units. Thrust is also
    /// bounded below by zero.
    pub fn mpc_config(&self) -> MpcConfig {
        let to_internal = |v: [f64; 3]| DVector::from_vec(vec![v[0].to_radians(), v[1].to_radians(), v[2]]);
        let mut cfg = MpcConfig::symmetric(
            self.np,
            self.nc,
            DVector::from_column_slice(&self.q),
            DVector::from_column_slice(&self.r),
            to_internal(self.u_abs),
            to_internal(self.du_abs),
            self.ts,
        );
        cfg.u_min[2] = cfg.u_min[2].max(-1.0);
        cfg
    }
}

/// Output of one trajectory tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryCommand {
    pub roll: f64,
    pub pitch: f64,
    pub thrust: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryMpc {
    cfg: TrajectoryConfig,
    model: TranslationModel,
    mpc: CondensedMpc,
    settings: QpSettings,
    /// Internal estimate of the lagged `(φ*, θ*)`.
    lag: Vector2<f64>,
    previous: Option<QpSolution>,
    tick: u64,
}

impl TrajectoryMpc {
    pub fn new(cfg: TrajectoryConfig, settings: QpSettings) -> Result<Self, TrajectoryMpcError> {
        let model = build_translation_model(cfg.mass, cfg.gravity, cfg.attitude_lag, cfg.ts)?;
        if cfg.u_abs[0] > 90.0 || cfg.u_abs[1] > 90.0 {
            return Err(TrajectoryMpcError::InvalidConfig("angle bounds beyond 90 degrees".into()));
        }
        let mpc = CondensedMpc::new(model.a_d.clone(), model.b_d.clone(), cfg.mpc_config())?;
        Ok(Self { cfg, model, mpc, settings, lag: Vector2::zeros(), previous: None, tick: 0 })
    }

    pub fn config(&self) -> &TrajectoryConfig {
        &self.cfg
    }

    pub fn model(&self) -> &TranslationModel {
        &self.model
    }

    pub fn condensed(&self) -> &CondensedMpc {
        &self.mpc
    }

    pub fn last_solution(&self) -> Option<&QpSolution> {
        self.previous.as_ref()
    }

    pub fn set_lag_state(&mut self, roll: f64, pitch: f64) {
        self.lag = Vector2::new(roll, pitch);
    }

    pub fn lag_state(&self) -> Vector2<f64> {
        self.lag
    }

    /// Command for position `p`, velocity `v` and their references, given
    /// the command issued on the previous tick.
    pub fn position_control_step(
        &mut self,
        p: &Vector3<f64>,
        v: &Vector3<f64>,
        ref_p: &Vector3<f64>,
        ref_v: &Vector3<f64>,
        u_prev: &TrajectoryCommand,
    ) -> Result<TrajectoryCommand, TrajectoryMpcError> {
        let tick = self.tick;
        self.tick += 1;
        let wrap = |source: MpcError| TrajectoryMpcError::Solver { tick, source };

        let mut x0 = DVector::zeros(TRANSLATION_STATES);
        x0.rows_mut(0, 3).copy_from(p);
        x0.rows_mut(3, 3).copy_from(v);
        x0[6] = self.lag.x;
        x0[7] = self.lag.y;
        let mut x_ref = DVector::zeros(TRANSLATION_STATES);
        x_ref.rows_mut(0, 3).copy_from(ref_p);
        x_ref.rows_mut(3, 3).copy_from(ref_v);
        let prev = DVector::from_vec(vec![u_prev.roll, u_prev.pitch, u_prev.thrust / self.cfg.hover_thrust() - 1.0]);

        let qp = self.mpc.build_qp(&x0, &x_ref, &prev).map_err(wrap)?;
        let warm = self.mpc.shifted_warm_start(self.previous.as_ref(), &prev);
        let sol = solve(&qp, Some(&warm), &self.settings).map_err(|e| wrap(e.into()))?;
        let mut u = sol.x.rows(0, TRANSLATION_INPUTS).into_owned();
        enforce_bounds(&mut u, &prev, self.mpc.config());
        self.previous = Some(sol);

        let next = &self.model.a_d * &x0 + &self.model.b_d * &u;
        self.lag = Vector2::new(next[6], next[7]);
        Ok(TrajectoryCommand { roll: u[0], pitch: u[1], thrust: self.cfg.hover_thrust() * (1.0 + u[2]) })
    }
}
