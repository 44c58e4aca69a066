//! Switching attitude MPC over a bank of per-formation linear models.
//!
//! The controller state is `(η, η̇, τ)`: Euler angles, their rates and
//! the realized body torque. Around hover `η̇ = ω`, so the linear model is
//! the torque-lagged rigid body with diagonal inertia.

use nalgebra::{DMatrix, DVector, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::morphology::{Formation, FormationTable};
use crate::mpc::{discretize, enforce_bounds, CondensedMpc, MpcConfig, MpcError};
use crate::qp::{solve, QpProblem, QpSettings, QpSolution};

pub const ATTITUDE_STATES: usize = 9;
pub const ATTITUDE_INPUTS: usize = 3;

pub type AttitudeVector = SVector<f64, ATTITUDE_STATES>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AttitudeMpcError {
    #[error("attitude MPC failed at tick {tick} in formation {formation}: {source}")]
    Solver {
        tick: u64,
        formation: Formation,
        #[source]
        source: MpcError,
    },
    #[error("invalid attitude model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Config(#[from] MpcError),
}

/// Continuous-time linearization at `ω = 0`, `τ = 0`.
pub fn linearize_attitude(
    inertia: &Vector3<f64>,
    tau_alpha: f64,
) -> (SMatrix<f64, ATTITUDE_STATES, ATTITUDE_STATES>, SMatrix<f64, ATTITUDE_STATES, ATTITUDE_INPUTS>) {
    let mut a = SMatrix::<f64, ATTITUDE_STATES, ATTITUDE_STATES>::zeros();
    let mut b = SMatrix::<f64, ATTITUDE_STATES, ATTITUDE_INPUTS>::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = 1.0;
        a[(3 + i, 6 + i)] = 1.0 / inertia[i];
        a[(6 + i, 6 + i)] = -1.0 / tau_alpha;
        b[(6 + i, i)] = 1.0 / tau_alpha;
    }
    (a, b)
}

/// One entry of the model bank.
#[derive(Debug, Clone, PartialEq)]
pub struct AttitudeModel {
    pub formation: Formation,
    pub inertia: Vector3<f64>,
    pub a_c: DMatrix<f64>,
    pub b_c: DMatrix<f64>,
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
}

impl AttitudeModel {
    pub fn new(formation: Formation, inertia: Vector3<f64>, tau_alpha: f64, ts: f64) -> Result<Self, AttitudeMpcError> {
        if inertia.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(AttitudeMpcError::InvalidModel(format!("inertia must be positive, got {inertia:?}")));
        }
        if !(tau_alpha > 0.0 && tau_alpha.is_finite()) || !(ts > 0.0 && ts.is_finite()) {
            return Err(AttitudeMpcError::InvalidModel(format!(
                "time constants must be positive, got τ_α = {tau_alpha}, T_s = {ts}"
            )));
        }
        let (a, b) = linearize_attitude(&inertia, tau_alpha);
        let a_c = DMatrix::from_column_slice(ATTITUDE_STATES, ATTITUDE_STATES, a.as_slice());
        let b_c = DMatrix::from_column_slice(ATTITUDE_STATES, ATTITUDE_INPUTS, b.as_slice());
        let (a_d, b_d) = discretize(&a_c, &b_c, ts);
        Ok(Self { formation, inertia, a_c, b_c, a_d, b_d })
    }
}

/// Weights and bounds used for the attitude layer unless configured.
pub fn default_attitude_config() -> MpcConfig {
    MpcConfig::symmetric(
        40,
        12,
        DVector::from_vec(vec![40.0, 40.0, 40.0, 80.0, 80.0, 80.0, 0.1, 0.1, 0.1]),
        DVector::from_vec(vec![80.0, 80.0, 120.0]),
        DVector::from_element(3, 0.1),
        DVector::from_element(3, 0.03),
        0.01,
    )
}

/// One model and its condensed QP structure per formation.
#[derive(Debug, Clone)]
pub struct ModelBank {
    models: Vec<AttitudeModel>,
    mpcs: Vec<CondensedMpc>,
}

impl ModelBank {
    pub fn new(table: &FormationTable, tau_alpha: f64, cfg: &MpcConfig) -> Result<Self, AttitudeMpcError> {
        if cfg.num_states() != ATTITUDE_STATES || cfg.num_inputs() != ATTITUDE_INPUTS {
            return Err(MpcError::DimensionMismatch(format!(
                "attitude MPC needs {ATTITUDE_STATES} state and {ATTITUDE_INPUTS} input weights"
            ))
            .into());
        }
        let mut models = Vec::with_capacity(4);
        let mut mpcs = Vec::with_capacity(4);
        for f in Formation::ALL {
            let model = AttitudeModel::new(f, table.inertia(f), tau_alpha, cfg.ts)?;
            mpcs.push(CondensedMpc::new(model.a_d.clone(), model.b_d.clone(), cfg.clone())?);
            models.push(model);
        }
        Ok(Self { models, mpcs })
    }

    pub fn select_model(&self, t_f: Formation) -> &AttitudeModel {
        &self.models[t_f.index()]
    }

    pub fn condensed(&self, t_f: Formation) -> &CondensedMpc {
        &self.mpcs[t_f.index()]
    }

    pub fn build_qp(
        &self,
        t_f: Formation,
        x0: &AttitudeVector,
        x_ref: &AttitudeVector,
        u_prev: &Vector3<f64>,
    ) -> Result<QpProblem, MpcError> {
        self.condensed(t_f).build_qp(&to_dyn(x0.as_slice()), &to_dyn(x_ref.as_slice()), &to_dyn(u_prev.as_slice()))
    }
}

fn to_dyn(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Controller instance for one vehicle.
#[derive(Debug, Clone)]
pub struct AttitudeMpc {
    bank: ModelBank,
    cfg: MpcConfig,
    settings: QpSettings,
    previous: Option<QpSolution>,
    last_problem: Option<QpProblem>,
    tick: u64,
}

impl AttitudeMpc {
    pub fn new(table: &FormationTable, tau_alpha: f64, cfg: MpcConfig, settings: QpSettings) -> Result<Self, AttitudeMpcError> {
        let bank = ModelBank::new(table, tau_alpha, &cfg)?;
        Ok(Self { bank, cfg, settings, previous: None, last_problem: None, tick: 0 })
    }

    pub fn bank(&self) -> &ModelBank {
        &self.bank
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// QP and solution from the most recent tick.
    pub fn last_qp(&self) -> Option<(&QpProblem, &QpSolution)> {
        self.last_problem.as_ref().zip(self.previous.as_ref())
    }

    /// Drop the warm-start memory.
    pub fn reset(&mut self) {
        self.previous = None;
        self.last_problem = None;
    }

    /// Desired torque for state `x`, Euler-angle reference and active
    /// formation, given the torque command applied on the previous tick.
    pub fn control_step(
        &mut self,
        x: &AttitudeVector,
        reference: &Vector3<f64>,
        t_f: Formation,
        u_prev: &Vector3<f64>,
    ) -> Result<Vector3<f64>, AttitudeMpcError> {
        let tick = self.tick;
        self.tick += 1;
        let wrap = |source: MpcError| AttitudeMpcError::Solver { tick, formation: t_f, source };

        let mut x_ref = AttitudeVector::zeros();
        x_ref.fixed_rows_mut::<3>(0).copy_from(reference);
        let qp = self.bank.build_qp(t_f, x, &x_ref, u_prev).map_err(wrap)?;
        let u_prev_dyn = to_dyn(u_prev.as_slice());
        let warm = self.bank.condensed(t_f).shifted_warm_start(self.previous.as_ref(), &u_prev_dyn);
        let sol = solve(&qp, Some(&warm), &self.settings).map_err(|e| wrap(e.into()))?;

        let mut u = sol.x.rows(0, ATTITUDE_INPUTS).into_owned();
        enforce_bounds(&mut u, &u_prev_dyn, &self.cfg);
        self.previous = Some(sol);
        self.last_problem = Some(qp);
        Ok(Vector3::new(u[0], u[1], u[2]))
    }
}
