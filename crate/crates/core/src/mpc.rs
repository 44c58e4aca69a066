//! Condensed linear MPC shared by the attitude and trajectory layers.
//!
//! For a discrete model `x⁺ = A x + B u` the predicted states over the
//! horizon are `X = F x₀ + G U`, where `U` stacks the `N_c` free input
//! moves and inputs are held at `u_{N_c−1}` from step `N_c` to `N_p − 1`.
//! The cost
//!
//! ```text
//!     Σ_{k=1..N_p} (x_k − x*)ᵀ Q (x_k − x*) + Σ_{k=0..N_p−1} u_kᵀ R u_k
//! ```
//!
//! becomes `½ Uᵀ H U + gᵀ U` with `H = 2(GᵀQ̄G + R̄)` and
//! `g = 2GᵀQ̄(F x₀ − X*)`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::qp::{ActiveConstraint, QpError, QpProblem, QpSolution, WarmStart, INFINITY_BOUND};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MpcError {
    #[error("invalid MPC configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Horizons, weights and bounds for one MPC layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcConfig {
    pub np: usize,
    pub nc: usize,
    pub q: DVector<f64>,
    pub r: DVector<f64>,
    pub x_min: DVector<f64>,
    pub x_max: DVector<f64>,
    pub u_min: DVector<f64>,
    pub u_max: DVector<f64>,
    pub du_min: DVector<f64>,
    pub du_max: DVector<f64>,
    /// Sample time in seconds.
    pub ts: f64,
}

impl MpcConfig {
    /// Config with symmetric input and rate bounds and no state bounds.
    pub fn symmetric(
        np: usize,
        nc: usize,
        q: DVector<f64>,
        r: DVector<f64>,
        u_abs: DVector<f64>,
        du_abs: DVector<f64>,
        ts: f64,
    ) -> Self {
        let nx = q.len();
        Self {
            np,
            nc,
            x_min: DVector::from_element(nx, f64::NEG_INFINITY),
            x_max: DVector::from_element(nx, f64::INFINITY),
            u_min: -&u_abs,
            u_max: u_abs,
            du_min: -&du_abs,
            du_max: du_abs,
            q,
            r,
            ts,
        }
    }

    pub fn num_states(&self) -> usize {
        self.q.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.r.len()
    }

    pub fn validate(&self) -> Result<(), MpcError> {
        let bad = |m: String| Err(MpcError::InvalidConfig(m));
        if self.np == 0 || self.nc == 0 || self.nc > self.np {
            return bad(format!("need 1 ≤ N_c ≤ N_p, got N_c = {}, N_p = {}", self.nc, self.np));
        }
        if !(self.ts > 0.0 && self.ts.is_finite()) {
            return bad(format!("sample time must be positive, got {}", self.ts));
        }
        let nx = self.num_states();
        let nu = self.num_inputs();
        for (name, v, len) in [
            ("x_min", &self.x_min, nx),
            ("x_max", &self.x_max, nx),
            ("u_min", &self.u_min, nu),
            ("u_max", &self.u_max, nu),
            ("du_min", &self.du_min, nu),
            ("du_max", &self.du_max, nu),
        ] {
            if v.len() != len {
                return Err(MpcError::DimensionMismatch(format!("{name} has length {}, expected {len}", v.len())));
            }
            if v.iter().any(|x| x.is_nan()) {
                return bad(format!("{name} contains NaN"));
            }
        }
        if self.q.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return bad("state weights must be finite and non-negative".into());
        }
        if self.r.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return bad("input weights must be finite and positive".into());
        }
        for (name, lo, hi) in [
            ("state", &self.x_min, &self.x_max),
            ("input", &self.u_min, &self.u_max),
            ("input rate", &self.du_min, &self.du_max),
        ] {
            for i in 0..lo.len() {
                if lo[i] > hi[i] {
                    return bad(format!("{name} bound {i}: min {} exceeds max {}", lo[i], hi[i]));
                }
            }
        }
        for i in 0..nu {
            if self.du_min[i] > 0.0 || self.du_max[i] < 0.0 {
                return bad(format!("input rate bound {i} excludes zero"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum RowKind {
    Input,
    Rate,
    State,
}

/// Meaning of one constraint row: kind, horizon step, component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct RowTag {
    kind: RowKind,
    step: usize,
    comp: usize,
}

/// Prediction matrices and cached QP structure for one model.
#[derive(Debug, Clone)]
pub struct CondensedMpc {
    cfg: MpcConfig,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    /// `N_p·n_x × n_x`, block `k` is `A^{k+1}`.
    f: DMatrix<f64>,
    /// `N_p·n_x × N_c·n_u`.
    g: DMatrix<f64>,
    hessian: DMatrix<f64>,
    /// `2GᵀQ̄`
    gt_q: DMatrix<f64>,
    constraints: DMatrix<f64>,
    tags: Vec<RowTag>,
    tag_index: HashMap<RowTag, usize>,
}

impl CondensedMpc {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, cfg: MpcConfig) -> Result<Self, MpcError> {
        cfg.validate()?;
        let nx = cfg.num_states();
        let nu = cfg.num_inputs();
        if a.shape() != (nx, nx) || b.shape() != (nx, nu) {
            return Err(MpcError::DimensionMismatch(format!(
                "A is {:?} and B is {:?}, expected ({nx}, {nx}) and ({nx}, {nu})",
                a.shape(),
                b.shape()
            )));
        }
        let (np, nc) = (cfg.np, cfg.nc);

        let mut f = DMatrix::zeros(np * nx, nx);
        let mut power = a.clone();
        for k in 0..np {
            f.view_mut((k * nx, 0), (nx, nx)).copy_from(&power);
            power = &a * power;
        }

        // Column block j of step k: Σ A^{k−i} B over the steps i ≤ k whose
        // input is the free move j.
        let mut g = DMatrix::zeros(np * nx, nc * nu);
        let mut impulse = Vec::with_capacity(np);
        let mut ab = b.clone();
        for _ in 0..np {
            impulse.push(ab.clone());
            ab = &a * ab;
        }
        for k in 0..np {
            for i in 0..=k {
                let j = i.min(nc - 1);
                let mut blk = g.view_mut((k * nx, j * nu), (nx, nu));
                blk += &impulse[k - i];
            }
        }

        let q_bar = DVector::from_fn(np * nx, |i, _| cfg.q[i % nx]);
        let mut r_bar = DVector::from_fn(nc * nu, |i, _| cfg.r[i % nu]);
        let tail = (np - nc + 1) as f64;
        for c in 0..nu {
            r_bar[(nc - 1) * nu + c] *= tail;
        }
        let gt_q = 2.0 * g.transpose() * DMatrix::from_diagonal(&q_bar);
        let mut hessian = &gt_q * &g + DMatrix::from_diagonal(&(2.0 * r_bar));
        hessian = 0.5 * (&hessian + hessian.transpose());

        let mut tags = Vec::new();
        for kind in [RowKind::Input, RowKind::Rate] {
            for step in 0..nc {
                for comp in 0..nu {
                    tags.push(RowTag { kind, step, comp });
                }
            }
        }
        for step in 0..np {
            for comp in 0..nx {
                if finite(cfg.x_min[comp]) || finite(cfg.x_max[comp]) {
                    tags.push(RowTag { kind: RowKind::State, step, comp });
                }
            }
        }
        let mut constraints = DMatrix::zeros(tags.len(), nc * nu);
        for (row, tag) in tags.iter().enumerate() {
            match tag.kind {
                RowKind::Input => constraints[(row, tag.step * nu + tag.comp)] = 1.0,
                RowKind::Rate => {
                    constraints[(row, tag.step * nu + tag.comp)] = 1.0;
                    if tag.step > 0 {
                        constraints[(row, (tag.step - 1) * nu + tag.comp)] = -1.0;
                    }
                }
                RowKind::State => {
                    constraints.row_mut(row).copy_from(&g.row(tag.step * nx + tag.comp));
                }
            }
        }
        let tag_index = tags.iter().enumerate().map(|(i, t)| (*t, i)).collect();

        Ok(Self { cfg, a, b, f, g, hessian, gt_q, constraints, tags, tag_index })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn prediction_free(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn prediction_forced(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn hessian(&self) -> &DMatrix<f64> {
        &self.hessian
    }

    pub fn num_decision_vars(&self) -> usize {
        self.cfg.nc * self.cfg.num_inputs()
    }

    /// Condensed QP for the current state, a constant reference and the
    /// previously applied input.
    pub fn build_qp(&self, x0: &DVector<f64>, x_ref: &DVector<f64>, u_prev: &DVector<f64>) -> Result<QpProblem, MpcError> {
        let nx = self.cfg.num_states();
        let nu = self.cfg.num_inputs();
        for (name, v, len) in [("x0", x0, nx), ("x_ref", x_ref, nx), ("u_prev", u_prev, nu)] {
            if v.len() != len {
                return Err(MpcError::DimensionMismatch(format!("{name} has length {}, expected {len}", v.len())));
            }
        }
        let free = &self.f * x0;
        let mut err = free.clone();
        for k in 0..self.cfg.np {
            let mut blk = err.rows_mut(k * nx, nx);
            blk -= x_ref;
        }
        let lin = &self.gt_q * err;

        let m = self.tags.len();
        let mut lo = DVector::zeros(m);
        let mut hi = DVector::zeros(m);
        for (row, tag) in self.tags.iter().enumerate() {
            let c = tag.comp;
            let (l, h) = match tag.kind {
                RowKind::Input => (self.cfg.u_min[c], self.cfg.u_max[c]),
                RowKind::Rate if tag.step == 0 => (u_prev[c] + self.cfg.du_min[c], u_prev[c] + self.cfg.du_max[c]),
                RowKind::Rate => (self.cfg.du_min[c], self.cfg.du_max[c]),
                RowKind::State => {
                    let fx = free[tag.step * nx + c];
                    (self.cfg.x_min[c] - fx, self.cfg.x_max[c] - fx)
                }
            };
            lo[row] = clamp_bound(l);
            hi[row] = clamp_bound(h);
        }
        Ok(QpProblem::new(self.hessian.clone(), lin, self.constraints.clone(), lo, hi)?)
    }

    /// Starting point for the next solve: the previous solution advanced
    /// by one step (or `u_prev` held when there is none), clamped forward
    /// through the input and rate bounds so that it is feasible for those
    /// rows. Active constraints are relabelled to their shifted rows.
    pub fn shifted_warm_start(&self, previous: Option<&QpSolution>, u_prev: &DVector<f64>) -> WarmStart {
        let nu = self.cfg.num_inputs();
        let nc = self.cfg.nc;
        let n = self.num_decision_vars();
        let previous = previous.filter(|p| p.x.len() == n);
        let mut x = DVector::zeros(n);
        let mut last = u_prev.clone();
        for k in 0..nc {
            for c in 0..nu {
                let v = previous.map_or(u_prev[c], |p| p.x[(k + 1).min(nc - 1) * nu + c]);
                let lo = self.cfg.u_min[c].max(last[c] + self.cfg.du_min[c]);
                let hi = self.cfg.u_max[c].min(last[c] + self.cfg.du_max[c]);
                x[k * nu + c] = if lo <= hi { v.clamp(lo, hi) } else { v };
            }
            last.copy_from(&x.rows(k * nu, nu));
        }
        let mut active_set: Vec<ActiveConstraint> = previous
            .map(|p| p.active_set.as_slice())
            .unwrap_or_default()
            .iter()
            .filter_map(|ac| {
                let tag = *self.tags.get(ac.index)?;
                if tag.step == 0 {
                    return None;
                }
                let shifted = RowTag { step: tag.step - 1, ..tag };
                self.tag_index.get(&shifted).map(|&index| ActiveConstraint { index, side: ac.side })
            })
            .collect();
        active_set.sort();
        active_set.dedup();
        WarmStart { x: Some(x), active_set }
    }

    /// Input trajectory over the full prediction horizon for decision `u`.
    pub fn input_sequence(&self, u: &DVector<f64>) -> Vec<DVector<f64>> {
        let nu = self.cfg.num_inputs();
        (0..self.cfg.np)
            .map(|k| u.rows(k.min(self.cfg.nc - 1) * nu, nu).into_owned())
            .collect()
    }

    /// Predicted states `x_1..x_{N_p}` for decision `u`.
    pub fn predict(&self, x0: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.f * x0 + &self.g * u
    }
}

fn finite(v: f64) -> bool {
    v.abs() < INFINITY_BOUND
}

fn clamp_bound(v: f64) -> f64 {
    v.clamp(-INFINITY_BOUND, INFINITY_BOUND)
}

/// Zero-order-hold discretization of `ẋ = A x + B u` via the matrix
/// exponential of the augmented block matrix.
pub fn discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, ts: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let nx = a_c.nrows();
    let nu = b_c.ncols();
    let mut aug = DMatrix::zeros(nx + nu, nx + nu);
    aug.view_mut((0, 0), (nx, nx)).copy_from(&(a_c * ts));
    aug.view_mut((0, nx), (nx, nu)).copy_from(&(b_c * ts));
    let e = aug.exp();
    (e.view((0, 0), (nx, nx)).into_owned(), e.view((0, nx), (nx, nu)).into_owned())
}

/// Project `u` onto `[u_min, u_max] ∩ [u_prev + du_min, u_prev + du_max]`
/// so that both bound families hold exactly in floating point.
pub fn enforce_bounds(u: &mut DVector<f64>, u_prev: &DVector<f64>, cfg: &MpcConfig) {
    for i in 0..u.len() {
        let lo = cfg.u_min[i].max(u_prev[i] + cfg.du_min[i]);
        let hi = cfg.u_max[i].min(u_prev[i] + cfg.du_max[i]);
        let mut v = if lo <= hi { u[i].clamp(lo, hi) } else { u_prev[i] };
        while v > cfg.u_max[i] || v - u_prev[i] > cfg.du_max[i] {
            v = v.next_down();
        }
        while v < cfg.u_min[i] || v - u_prev[i] < cfg.du_min[i] {
            v = v.next_up();
        }
        u[i] = v;
    }
}
