//! Dense strictly convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ xᵀHx + gᵀx
//!     subject to  lo ≤ Cx ≤ hi
//! ```
//!
//! with a primal active-set method. The Hessian is factored once; the
//! working set keeps its `L⁻¹aᵢ` columns and a Cholesky factor of their
//! Gram matrix, updated in place as constraints enter or leave.
//! Infeasible starting points go through an elastic phase-one problem
//! solved by the same iteration.
//!
//! Multipliers use the sign convention `Hx + g + Cᵀλ = 0` with `λᵢ ≥ 0`
//! when the upper bound is active and `λᵢ ≤ 0` when the lower bound is.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

/// Bounds with magnitude at or beyond this are treated as absent.
pub const INFINITY_BOUND: f64 = 1e20;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("Hessian is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("Hessian is not positive definite")]
    NotPositiveDefinite,
    #[error("constraint {index} has lower bound {lo} above upper bound {hi}")]
    InvalidBounds { index: usize, lo: f64, hi: f64 },
    #[error("non-finite problem data")]
    NonFinite,
    #[error("constraints are infeasible (phase one residual {0:.3e})")]
    Infeasible(f64),
    #[error("working set became linearly dependent")]
    DegenerateWorkingSet,
    #[error("iteration limit reached after {} iterations", .0.iterations)]
    MaxIterations(Box<QpSolution>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Lower,
    Upper,
}

/// A constraint row held at one of its bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActiveConstraint {
    pub index: usize,
    pub side: Side,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: DMatrix<f64>,
    pub lo: DVector<f64>,
    pub hi: DVector<f64>,
}

impl QpProblem {
    pub fn new(
        h: DMatrix<f64>,
        g: DVector<f64>,
        c: DMatrix<f64>,
        lo: DVector<f64>,
        hi: DVector<f64>,
    ) -> Result<Self, QpError> {
        let p = Self { h, g, c, lo, hi };
        p.validate()?;
        Ok(p)
    }

    pub fn unconstrained(h: DMatrix<f64>, g: DVector<f64>) -> Result<Self, QpError> {
        let n = g.len();
        Self::new(
            h,
            g,
            DMatrix::zeros(0, n),
            DVector::zeros(0),
            DVector::zeros(0),
        )
    }

    pub fn num_vars(&self) -> usize {
        self.g.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.lo.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Largest bound violation at `x`; absent bounds are skipped.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        let cx = &self.c * x;
        let mut worst = 0.0f64;
        for i in 0..self.num_constraints() {
            if has_lower(self.lo[i]) {
                worst = worst.max(self.lo[i] - cx[i]);
            }
            if has_upper(self.hi[i]) {
                worst = worst.max(cx[i] - self.hi[i]);
            }
        }
        worst
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let n = self.g.len();
        let m = self.lo.len();
        if self.h.nrows() != n || self.h.ncols() != n {
            return Err(QpError::DimensionMismatch(format!(
                "H is {}x{}, expected {n}x{n}",
                self.h.nrows(),
                self.h.ncols()
            )));
        }
        if self.c.nrows() != m || self.c.ncols() != n || self.hi.len() != m {
            return Err(QpError::DimensionMismatch(format!(
                "C is {}x{}, bounds {} / {}, expected {m}x{n}",
                self.c.nrows(),
                self.c.ncols(),
                self.lo.len(),
                self.hi.len()
            )));
        }
        if !self.h.iter().chain(self.g.iter()).chain(self.c.iter()).all(|v| v.is_finite())
            || self.lo.iter().chain(self.hi.iter()).any(|v| v.is_nan())
        {
            return Err(QpError::NonFinite);
        }
        let scale = self.h.amax().max(1.0);
        let asym = (&self.h - self.h.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        for i in 0..m {
            if self.lo[i] > self.hi[i] {
                return Err(QpError::InvalidBounds {
                    index: i,
                    lo: self.lo[i],
                    hi: self.hi[i],
                });
            }
        }
        Ok(())
    }
}

fn has_lower(lo: f64) -> bool {
    lo > -INFINITY_BOUND
}

fn has_upper(hi: f64) -> bool {
    hi < INFINITY_BOUND
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    /// Tolerance on the (scaled) KKT residuals.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
        }
    }
}

/// Optional starting information for [`solve`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WarmStart {
    pub x: Option<DVector<f64>>,
    pub active_set: Vec<ActiveConstraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub lambda: DVector<f64>,
    pub active_set: Vec<ActiveConstraint>,
    pub iterations: usize,
    /// Largest bound violation.
    pub primal_residual: f64,
    /// `‖Hx + g + Cᵀλ‖∞` relative to the magnitude of its terms, plus any
    /// wrong-signed multiplier.
    pub dual_residual: f64,
    /// Largest `|λᵢ · slackᵢ|`, relative like the dual residual.
    pub complementarity: f64,
    pub objective: f64,
    pub converged: bool,
}

impl QpSolution {
    pub fn warm_start(&self) -> WarmStart {
        WarmStart {
            x: Some(self.x.clone()),
            active_set: self.active_set.clone(),
        }
    }
}

/// Reusable solver; holds only settings and scratch space.
#[derive(Debug, Clone, Default)]
pub struct QpSolver {
    pub settings: QpSettings,
}

impl QpSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn solve(&mut self, problem: &QpProblem, warm: Option<&WarmStart>) -> Result<QpSolution, QpError> {
        solve(problem, warm, &self.settings)
    }
}

/// Dense problem stripped of absent rows, with the Hessian factor.
struct Prepared<'a> {
    problem: &'a QpProblem,
    chol: Cholesky<f64, Dyn>,
    /// `L⁻¹ g`
    lg: DVector<f64>,
    /// Row indices of `problem` that carry at least one finite bound.
    rows: Vec<usize>,
    row_norms: Vec<f64>,
}

impl<'a> Prepared<'a> {
    fn new(problem: &'a QpProblem) -> Result<Self, QpError> {
        let chol = Cholesky::new(problem.h.clone()).ok_or(QpError::NotPositiveDefinite)?;
        let lg = chol.l_dirty().solve_lower_triangular(&problem.g).expect("non-singular factor");
        let rows: Vec<usize> = (0..problem.num_constraints())
            .filter(|&i| has_lower(problem.lo[i]) || has_upper(problem.hi[i]))
            .collect();
        let row_norms = (0..problem.num_constraints())
            .map(|i| problem.c.row(i).amax().max(f64::MIN_POSITIVE))
            .collect();
        Ok(Self {
            problem,
            chol,
            lg,
            rows,
            row_norms,
        })
    }

    fn row(&self, i: usize) -> DVector<f64> {
        self.problem.c.row(i).transpose()
    }

    fn bound(&self, a: ActiveConstraint) -> f64 {
        match a.side {
            Side::Lower => self.problem.lo[a.index],
            Side::Upper => self.problem.hi[a.index],
        }
    }

    fn is_equality(&self, i: usize) -> bool {
        self.problem.lo[i] == self.problem.hi[i]
    }

    fn l_inv(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.l_dirty().solve_lower_triangular(v).expect("non-singular factor")
    }

    fn l_inv_t(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol
            .l_dirty()
            .tr_solve_lower_triangular(v)
            .expect("non-singular factor")
    }
}

struct WorkingSet {
    entries: Vec<ActiveConstraint>,
    /// `L⁻¹ aᵢ` for each entry.
    columns: Vec<DVector<f64>>,
    /// Lower Cholesky factor of the Gram matrix of `columns`, by rows.
    factor: Vec<Vec<f64>>,
    member: Vec<bool>,
}

impl WorkingSet {
    fn new(num_constraints: usize) -> Self {
        Self {
            entries: Vec::new(),
            columns: Vec::new(),
            factor: Vec::new(),
            member: vec![false; num_constraints],
        }
    }

    fn contains(&self, index: usize) -> bool {
        self.member[index]
    }

    /// Add `a` unless its row is numerically dependent on the working set.
    fn try_push(&mut self, prep: &Prepared, a: ActiveConstraint) -> bool {
        let col = prep.l_inv(&prep.row(a.index));
        let norm = col.norm();
        if norm == 0.0 {
            return false;
        }
        let w: Vec<f64> = self.columns.iter().map(|c| c.dot(&col)).collect();
        let r = forward(&self.factor, &w);
        let coef = backward(&self.factor, &r);
        let mut resid = col.clone();
        for (c, k) in self.columns.iter().zip(&coef) {
            resid.axpy(-k, c, 1.0);
        }
        let d = resid.norm();
        if !(d > 1e-9 * norm) {
            return false;
        }
        let mut row = r;
        row.push(d);
        self.factor.push(row);
        self.columns.push(col);
        self.entries.push(a);
        self.member[a.index] = true;
        true
    }

    fn remove(&mut self, pos: usize) {
        self.member[self.entries[pos].index] = false;
        self.entries.remove(pos);
        self.columns.remove(pos);
        // Deleting row and column `pos` leaves the trailing block needing
        // a rank-one update with the removed column.
        let mut l: Vec<f64> = self.factor[pos + 1..].iter().map(|row| row[pos]).collect();
        self.factor.remove(pos);
        for row in &mut self.factor[pos..] {
            row.remove(pos);
        }
        let tail = &mut self.factor[pos..];
        for j in 0..tail.len() {
            let ljj = tail[j][pos + j];
            let r = ljj.hypot(l[j]);
            let (c, s) = (r / ljj, l[j] / ljj);
            tail[j][pos + j] = r;
            for i in j + 1..tail.len() {
                let v = (tail[i][pos + j] + s * l[i]) / c;
                tail[i][pos + j] = v;
                l[i] = c * l[i] - s * v;
            }
        }
    }

    /// Minimizer on the working-set manifold and its multipliers.
    fn solve_eqp(&self, prep: &Prepared) -> Result<(DVector<f64>, DVector<f64>), QpError> {
        let mut v = prep.lg.clone();
        if self.factor.iter().enumerate().any(|(i, row)| !(row[i] > 0.0)) {
            return Err(QpError::DegenerateWorkingSet);
        }
        let rhs: Vec<f64> = self
            .entries
            .iter()
            .zip(&self.columns)
            .map(|(&e, c)| -(prep.bound(e) + c.dot(&prep.lg)))
            .collect();
        let lambda = backward(&self.factor, &forward(&self.factor, &rhs));
        for (c, k) in self.columns.iter().zip(&lambda) {
            v.axpy(*k, c, 1.0);
        }
        Ok((-prep.l_inv_t(&v), DVector::from_vec(lambda)))
    }
}

/// Solve `L y = b` for a row-stored lower factor.
fn forward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(b.len());
    for (i, row) in l.iter().enumerate() {
        let s: f64 = row[..i].iter().zip(&y).map(|(a, b)| a * b).sum();
        y.push((b[i] - s) / row[i]);
    }
    y
}

/// Solve `Lᵀ x = y` for a row-stored lower factor.
fn backward(l: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let mut x = y.to_vec();
    for i in (0..l.len()).rev() {
        x[i] /= l[i][i];
        let xi = x[i];
        for (k, a) in l[i][..i].iter().enumerate() {
            x[k] -= a * xi;
        }
    }
    x
}

struct LoopOutcome {
    x: DVector<f64>,
    lambda_w: DVector<f64>,
    working: WorkingSet,
    iterations: usize,
    converged: bool,
}

/// Primal active-set iterations from a feasible `x` and working set.
fn active_set_loop(
    prep: &Prepared,
    mut x: DVector<f64>,
    mut working: WorkingSet,
    max_iter: usize,
) -> Result<LoopOutcome, QpError> {
    let p = prep.problem;
    let g_scale = p.g.amax().max(1.0);
    let mut iterations = 0;
    let mut last_lambda = DVector::zeros(working.entries.len());
    while iterations < max_iter {
        iterations += 1;
        let (x_hat, lambda) = working.solve_eqp(prep)?;
        let step = &x_hat - &x;
        let step_norm = step.amax();
        let c_step = &p.c * &step;
        let c_x = &p.c * &x;

        // A row dependent on the working set has `aᵀp = 0` in exact
        // arithmetic, so it cannot block; skip it and retest.
        let mut skipped: Vec<usize> = Vec::new();
        let (alpha, blocking) = loop {
            let (alpha, blocking) = ratio_test(prep, &working, &c_x, &c_step, step_norm, &skipped);
            match blocking {
                Some(b) if !working.try_push(prep, b) => skipped.push(b.index),
                _ => break (alpha, blocking),
            }
        };

        match blocking {
            Some(_) => {
                x += alpha * step;
            }
            None => {
                x = x_hat;
                let hx_scale = (&p.h * &x).amax().max(g_scale);
                let mut drop: Option<(usize, f64)> = None;
                for (pos, e) in working.entries.iter().enumerate() {
                    if prep.is_equality(e.index) {
                        continue;
                    }
                    let mu = match e.side {
                        Side::Upper => lambda[pos],
                        Side::Lower => -lambda[pos],
                    };
                    let tol = 1e-13 * hx_scale / prep.row_norms[e.index];
                    if mu < -tol {
                        let better = match drop {
                            None => true,
                            Some((best_pos, best_mu)) => {
                                mu < best_mu
                                    || (mu == best_mu && e.index < working.entries[best_pos].index)
                            }
                        };
                        if better {
                            drop = Some((pos, mu));
                        }
                    }
                }
                match drop {
                    Some((pos, _)) => working.remove(pos),
                    None => {
                        return Ok(LoopOutcome {
                            x,
                            lambda_w: lambda,
                            working,
                            iterations,
                            converged: true,
                        });
                    }
                }
            }
        }
        last_lambda = lambda;
    }
    let lambda_w = if last_lambda.len() == working.entries.len() {
        last_lambda
    } else {
        working.solve_eqp(prep).map(|(_, l)| l).unwrap_or_else(|_| DVector::zeros(working.entries.len()))
    };
    Ok(LoopOutcome {
        x,
        lambda_w,
        working,
        iterations,
        converged: false,
    })
}

/// Largest step fraction along `step` keeping every row outside the
/// working set feasible, and the first row that blocks it. Takes the row
/// products `Cx` and `C·step`.
fn ratio_test(
    prep: &Prepared,
    working: &WorkingSet,
    c_x: &DVector<f64>,
    c_step: &DVector<f64>,
    step_norm: f64,
    skipped: &[usize],
) -> (f64, Option<ActiveConstraint>) {
    let p = prep.problem;
    let mut alpha = 1.0;
    let mut blocking = None;
    if step_norm == 0.0 {
        return (alpha, blocking);
    }
    for &i in &prep.rows {
        if working.contains(i) || skipped.contains(&i) {
            continue;
        }
        let (ap, cx) = (c_step[i], c_x[i]);
        let threshold = 1e-12 * prep.row_norms[i] * step_norm;
        if ap > threshold && has_upper(p.hi[i]) {
            let t = (p.hi[i] - cx).max(0.0) / ap;
            if t < alpha {
                alpha = t;
                blocking = Some(ActiveConstraint { index: i, side: Side::Upper });
            }
        } else if ap < -threshold && has_lower(p.lo[i]) {
            let t = (cx - p.lo[i]).max(0.0) / -ap;
            if t < alpha {
                alpha = t;
                blocking = Some(ActiveConstraint { index: i, side: Side::Lower });
            }
        }
    }
    (alpha, blocking)
}

/// Feasible point near `start` via an elastic problem with one slack `t`:
/// minimize `t + ½ε(‖x − start‖² + t²)` s.t. `lo − t ≤ Cx ≤ hi + t`, `t ≥ 0`.
fn phase_one(prep: &Prepared, start: &DVector<f64>, settings: &QpSettings) -> Result<DVector<f64>, QpError> {
    let p = prep.problem;
    let n = p.num_vars();
    let eps = 1e-6;
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &i in &prep.rows {
        let a = p.c.row(i);
        if has_lower(p.lo[i]) {
            let mut r = DVector::zeros(n + 1);
            r.rows_mut(0, n).copy_from(&a.transpose());
            r[n] = 1.0;
            rows.push(r);
            lo.push(p.lo[i]);
            hi.push(f64::INFINITY);
        }
        if has_upper(p.hi[i]) {
            let mut r = DVector::zeros(n + 1);
            r.rows_mut(0, n).copy_from(&a.transpose());
            r[n] = -1.0;
            rows.push(r);
            lo.push(f64::NEG_INFINITY);
            hi.push(p.hi[i]);
        }
    }
    let mut t_row = DVector::zeros(n + 1);
    t_row[n] = 1.0;
    rows.push(t_row);
    lo.push(0.0);
    hi.push(f64::INFINITY);

    let c = DMatrix::from_rows(&rows.iter().map(|r| r.transpose()).collect::<Vec<_>>());
    let h = DMatrix::identity(n + 1, n + 1) * eps;
    let mut g = DVector::zeros(n + 1);
    g.rows_mut(0, n).copy_from(&(-eps * start));
    g[n] = 1.0;
    let elastic = QpProblem {
        h,
        g,
        c,
        lo: DVector::from_vec(lo),
        hi: DVector::from_vec(hi),
    };
    let elastic_prep = Prepared::new(&elastic)?;

    let mut z0 = DVector::zeros(n + 1);
    z0.rows_mut(0, n).copy_from(start);
    z0[n] = p.max_violation(start).max(0.0) * (1.0 + 1e-12) + 1e-300;
    let out = active_set_loop(&elastic_prep, z0, WorkingSet::new(elastic.num_constraints()), settings.max_iter.max(4 * n + 16))?;
    let x = out.x.rows(0, n).into_owned();
    let residual = p.max_violation(&x);
    let bound_scale = prep
        .rows
        .iter()
        .flat_map(|&i| [p.lo[i], p.hi[i]])
        .filter(|v| v.is_finite() && v.abs() < INFINITY_BOUND)
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    if residual > settings.tol * bound_scale {
        return Err(QpError::Infeasible(residual));
    }
    Ok(x)
}

/// Solve `problem`, optionally warm-started.
pub fn solve(problem: &QpProblem, warm: Option<&WarmStart>, settings: &QpSettings) -> Result<QpSolution, QpError> {
    problem.validate()?;
    let prep = Prepared::new(problem)?;
    let n = problem.num_vars();

    let bound_scale = |i: usize| 1.0f64.max(problem.lo[i].abs().min(problem.hi[i].abs()).min(INFINITY_BOUND));
    let start_tol = 1e-12;

    let warm_x = warm.and_then(|w| w.x.as_ref()).filter(|x| x.len() == n);
    let mut x0 = match warm_x {
        Some(x) => x.clone(),
        None => DVector::zeros(n),
    };
    let feasible = prep.rows.iter().all(|&i| {
        let cx = problem.c.row(i).dot(&x0.transpose());
        let tol = start_tol * bound_scale(i);
        (!has_lower(problem.lo[i]) || cx >= problem.lo[i] - tol)
            && (!has_upper(problem.hi[i]) || cx <= problem.hi[i] + tol)
    });
    if !feasible {
        x0 = phase_one(&prep, &x0, settings)?;
    }

    let mut working = WorkingSet::new(problem.num_constraints());
    let at_bound = |a: ActiveConstraint, x: &DVector<f64>| {
        let cx = problem.c.row(a.index).dot(&x.transpose());
        (cx - prep.bound(a)).abs() <= 1e-9 * bound_scale(a.index)
    };
    for &i in &prep.rows {
        if prep.is_equality(i) {
            working.try_push(&prep, ActiveConstraint { index: i, side: Side::Lower });
        }
    }
    if let Some(w) = warm {
        let mut hint = w.active_set.clone();
        hint.sort();
        hint.dedup_by_key(|a| a.index);
        for a in hint {
            if a.index < problem.num_constraints()
                && prep.rows.contains(&a.index)
                && !working.contains(a.index)
                && !prep.is_equality(a.index)
                && match a.side {
                    Side::Lower => has_lower(problem.lo[a.index]),
                    Side::Upper => has_upper(problem.hi[a.index]),
                }
                && at_bound(a, &x0)
            {
                working.try_push(&prep, a);
            }
        }
    }

    let out = active_set_loop(&prep, x0, working, settings.max_iter)?;
    let solution = finish(&prep, out);
    if solution.converged {
        Ok(solution)
    } else {
        Err(QpError::MaxIterations(Box::new(solution)))
    }
}

fn finish(prep: &Prepared, out: LoopOutcome) -> QpSolution {
    let p = prep.problem;
    let m = p.num_constraints();
    let mut lambda = DVector::zeros(m);
    for (pos, e) in out.working.entries.iter().enumerate() {
        lambda[e.index] = out.lambda_w[pos];
    }
    let x = out.x;
    let hx = &p.h * &x;
    let ctl = p.c.transpose() * &lambda;
    let scale = hx.amax().max(p.g.amax()).max(ctl.amax()).max(1.0);
    let stationarity = (&hx + &p.g + &ctl).amax() / scale;

    let cx = &p.c * &x;
    let mut wrong_sign = 0.0f64;
    let mut complementarity = 0.0f64;
    for i in 0..m {
        let l = lambda[i];
        if l == 0.0 {
            continue;
        }
        let eq = prep.is_equality(i);
        if l > 0.0 {
            let slack = if has_upper(p.hi[i]) { (p.hi[i] - cx[i]).abs() } else { f64::INFINITY };
            complementarity = complementarity.max(l * slack);
        } else {
            let slack = if has_lower(p.lo[i]) { (cx[i] - p.lo[i]).abs() } else { f64::INFINITY };
            complementarity = complementarity.max(-l * slack);
        }
        if !eq {
            let side = out.working.entries.iter().find(|e| e.index == i).map(|e| e.side);
            let bad = match side {
                Some(Side::Upper) => (-l).max(0.0),
                Some(Side::Lower) => l.max(0.0),
                None => 0.0,
            };
            wrong_sign = wrong_sign.max(bad);
        }
    }
    let mut active_set = out.working.entries.clone();
    active_set.sort();
    QpSolution {
        objective: p.objective(&x),
        primal_residual: p.max_violation(&x).max(0.0),
        dual_residual: stationarity.max(wrong_sign / scale),
        complementarity: complementarity / scale,
        x,
        lambda,
        active_set,
        iterations: out.iterations,
        converged: out.converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(lo: f64, hi: f64) -> QpProblem {
        QpProblem::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::from_element(1, -2.0),
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, lo),
            DVector::from_element(1, hi),
        )
        .unwrap()
    }

    #[test]
    fn clipped_scalar() {
        let s = solve(&one_dim(f64::NEG_INFINITY, 0.5), None, &QpSettings::default()).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-15);
        assert_eq!(s.active_set, vec![ActiveConstraint { index: 0, side: Side::Upper }]);
        assert!((s.lambda[0] - 1.0).abs() < 1e-12);
        assert!(s.dual_residual < 1e-12);
    }

    #[test]
    fn unconstrained_matches_inverse() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let g = DVector::from_vec(vec![1.0, -2.0]);
        let s = solve(&QpProblem::unconstrained(h.clone(), g.clone()).unwrap(), None, &QpSettings::default()).unwrap();
        let expected = -h.try_inverse().unwrap() * g;
        assert!((s.x - expected).amax() < 1e-14);
        assert!(s.active_set.is_empty());
    }

    #[test]
    fn huge_bounds_are_absent() {
        let s = solve(&one_dim(-1e21, 1e21), None, &QpSettings::default()).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn infeasible_start_goes_through_phase_one() {
        let p = one_dim(2.0, 3.0);
        let warm = WarmStart {
            x: Some(DVector::from_element(1, -10.0)),
            active_set: vec![],
        };
        let s = solve(&p, Some(&warm), &QpSettings::default()).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12);
        assert!(s.lambda[0] < 0.0);
    }

    #[test]
    fn equality_row() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            DVector::zeros(2),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 1.0),
        )
        .unwrap();
        let s = solve(&p, None, &QpSettings::default()).unwrap();
        assert!((s.x[0] - 0.5).abs() < 1e-14 && (s.x[1] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn infeasible_problem() {
        let p = QpProblem::new(
            DMatrix::identity(1, 1),
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_vec(vec![1.0, f64::NEG_INFINITY]),
            DVector::from_vec(vec![f64::INFINITY, 0.0]),
        )
        .unwrap();
        assert!(matches!(solve(&p, None, &QpSettings::default()), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn rejects_bad_problems() {
        let not_pd = QpProblem::unconstrained(DMatrix::from_element(1, 1, -1.0), DVector::zeros(1)).unwrap();
        assert_eq!(solve(&not_pd, None, &QpSettings::default()), Err(QpError::NotPositiveDefinite));
        let asym = QpProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]),
            DVector::zeros(2),
        );
        assert!(matches!(asym, Err(QpError::NotSymmetric(_))));
        assert!(matches!(
            QpProblem::new(
                DMatrix::identity(1, 1),
                DVector::zeros(1),
                DMatrix::identity(1, 1),
                DVector::from_element(1, 1.0),
                DVector::from_element(1, 0.0),
            ),
            Err(QpError::InvalidBounds { index: 0, .. })
        ));
    }

    #[test]
    fn iteration_limit_returns_iterate() {
        let n = 4;
        let p = QpProblem::new(
            DMatrix::identity(n, n),
            DVector::from_element(n, -5.0),
            DMatrix::identity(n, n),
            DVector::from_element(n, -1.0),
            DVector::from_element(n, 1.0),
        )
        .unwrap();
        let settings = QpSettings { tol: 1e-8, max_iter: 2 };
        match solve(&p, None, &settings) {
            Err(QpError::MaxIterations(sol)) => {
                assert!(!sol.converged);
                assert_eq!(sol.iterations, 2);
            }
            other => panic!("expected iteration limit, got {other:?}"),
        }
        let full = solve(&p, None, &QpSettings::default()).unwrap();
        assert!((full.x - DVector::from_element(n, 1.0)).amax() < 1e-14);
    }
}
