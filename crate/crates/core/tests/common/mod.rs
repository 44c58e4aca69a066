//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use morphmpc::plant::{
    body_rates_to_euler_rates, euler_rate_to_body_rates, state_derivative, PlantInputs, PlantParams, PlantState,
};
use morphmpc::qp::QpProblem;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random strictly convex problem with a known feasible point.
pub fn random_problem(rng: &mut ChaCha8Rng) -> QpProblem {
    let n = rng.random_range(1..=6);
    let m = rng.random_range(0..=12);
    let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let h = q.transpose() * &q + DMatrix::identity(n, n) * rng.random_range(0.1..1.0);
    let h = 0.5 * (&h + h.transpose());
    let g = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
    let x_feas = DVector::from_fn(n, |_, _| rng.random_range(-0.5..0.5));
    let cx = &c * &x_feas;
    let mut lo = DVector::zeros(m);
    let mut hi = DVector::zeros(m);
    for i in 0..m {
        let kind = rng.random_range(0..4);
        lo[i] = if kind == 1 { f64::NEG_INFINITY } else { cx[i] - rng.random_range(0.05..0.8) };
        hi[i] = if kind == 2 { f64::INFINITY } else { cx[i] + rng.random_range(0.05..0.8) };
    }
    QpProblem::new(h, g, c, lo, hi).unwrap()
}

/// Accelerated projected gradient on the dual of `problem`, with each
/// two-sided row split into two one-sided rows `aᵀx ≤ b` carrying a
/// multiplier `μ ≥ 0`. The dual is `−½μᵀMμ − qᵀμ + const` with
/// `M = AH⁻¹Aᵀ`, `q = AH⁻¹g + b`; the primal point is recovered as
/// `x = −H⁻¹(g + Aᵀμ)`.
pub fn projected_gradient_oracle(problem: &QpProblem, max_iter: usize) -> DVector<f64> {
    let h_inv = problem.h.clone().try_inverse().unwrap();
    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..problem.lo.len() {
        let a = problem.c.row(i).transpose();
        if problem.hi[i].is_finite() {
            rows.push(a.clone());
            rhs.push(problem.hi[i]);
        }
        if problem.lo[i].is_finite() {
            rows.push(-a);
            rhs.push(-problem.lo[i]);
        }
    }
    let k = rows.len();
    if k == 0 {
        return -&h_inv * &problem.g;
    }
    let a = DMatrix::from_columns(&rows).transpose();
    let m_mat = &a * &h_inv * a.transpose();
    let q_vec = &a * &h_inv * &problem.g + DVector::from_vec(rhs);
    let lipschitz = m_mat.clone().symmetric_eigenvalues().max().max(1e-12);
    let step = 1.0 / lipschitz;

    let m: Vec<f64> = (0..k * k).map(|i| m_mat[(i / k, i % k)]).collect();
    let q: Vec<f64> = q_vec.iter().copied().collect();
    let neg_grad = |mu: &[f64], out: &mut [f64]| {
        for i in 0..k {
            let row = &m[i * k..(i + 1) * k];
            out[i] = row.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() + q[i];
        }
    };
    let dual = |mu: &[f64], mmu: &[f64]| -> f64 {
        mu.iter()
            .zip(mmu)
            .zip(&q)
            .map(|((u, mu_m), qi)| -0.5 * u * (mu_m - qi) - qi * u)
            .sum()
    };

    let mut mu = vec![0.0; k];
    let mut y = vec![0.0; k];
    let mut next = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut t = 1.0f64;
    let mut prev_val = 0.0;
    for _ in 0..max_iter {
        neg_grad(&y, &mut grad);
        for i in 0..k {
            next[i] = (y[i] - step * grad[i]).max(0.0);
        }
        neg_grad(&next, &mut grad);
        let val = dual(&next, &grad);
        if val < prev_val {
            // Adaptive restart.
            y.copy_from_slice(&mu);
            t = 1.0;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut change = 0.0f64;
        for i in 0..k {
            let d = next[i] - mu[i];
            change = change.max(d.abs());
            y[i] = next[i] + beta * d;
            mu[i] = next[i];
        }
        t = t_next;
        prev_val = val;
        if change == 0.0 {
            break;
        }
    }
    let mu = DVector::from_vec(mu);
    -&h_inv * (&problem.g + a.transpose() * mu)
}

/// Rejection-sample a feasible point from a box around `center`.
pub fn sample_feasible(problem: &QpProblem, center: &DVector<f64>, radius: f64, rng: &mut ChaCha8Rng) -> Option<DVector<f64>> {
    for _ in 0..10_000 {
        let x = DVector::from_fn(center.len(), |i, _| center[i] + rng.random_range(-radius..radius));
        if problem.max_violation(&x) <= 0.0 {
            return Some(x);
        }
    }
    None
}

/// Classical RK4 integration of `ẋ = Ax + Bu` with `u` held over `dt`.
pub fn rk4_linear(a: &DMatrix<f64>, b: &DMatrix<f64>, x: &DVector<f64>, u: &DVector<f64>, dt: f64, substeps: usize) -> DVector<f64> {
    let h = dt / substeps as f64;
    let bu = b * u;
    let f = |x: &DVector<f64>| a * x + &bu;
    let mut x = x.clone();
    for _ in 0..substeps {
        let k1 = f(&x);
        let k2 = f(&(&x + &k1 * (0.5 * h)));
        let k3 = f(&(&x + &k2 * (0.5 * h)));
        let k4 = f(&(&x + &k3 * h));
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    x
}

/// Right-hand side of the attitude state `(η, η̇, τ)` evaluated through the
/// nonlinear plant.
pub fn attitude_rhs(x: &DVector<f64>, u: &DVector<f64>, params: &PlantParams) -> DVector<f64> {
    let v3 = |i: usize| Vector3::new(x[i], x[i + 1], x[i + 2]);
    let (eta, eta_dot, tau) = (v3(0), v3(3), v3(6));
    let w = euler_rate_to_body_rates(&eta, &eta_dot);
    let state = PlantState { euler: eta, body_rates: w, torque: tau, ..PlantState::default() };
    let inputs = PlantInputs { torque_cmd: Vector3::new(u[0], u[1], u[2]), thrust: params.mass * params.gravity };
    let d = state_derivative(&state, &inputs, params);
    let w_dot = Vector3::new(d[9], d[10], d[11]);
    // η̈ = ∂(W⁻¹ω)/∂η · η̇ + W⁻¹ω̇, the first term by a central difference.
    let e = 1e-7;
    let shifted = |s: f64| body_rates_to_euler_rates(&(eta + eta_dot * s), &w);
    let eta_ddot = (shifted(e) - shifted(-e)) / (2.0 * e) + body_rates_to_euler_rates(&eta, &w_dot);
    let mut out = DVector::zeros(9);
    out.rows_mut(0, 3).copy_from(&eta_dot);
    out.rows_mut(3, 3).copy_from(&eta_ddot);
    out.rows_mut(6, 3).copy_from(&Vector3::new(d[12], d[13], d[14]));
    out
}

/// Central-difference Jacobians of [`attitude_rhs`] at hover.
pub fn attitude_fd_jacobians(params: &PlantParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let h = 1e-6;
    let x0 = DVector::zeros(9);
    let u0 = DVector::zeros(3);
    let mut a = DMatrix::zeros(9, 9);
    let mut b = DMatrix::zeros(9, 3);
    for j in 0..9 {
        let mut up = x0.clone();
        let mut dn = x0.clone();
        up[j] += h;
        dn[j] -= h;
        a.set_column(j, &((attitude_rhs(&up, &u0, params) - attitude_rhs(&dn, &u0, params)) / (2.0 * h)));
    }
    for j in 0..3 {
        let mut up = u0.clone();
        let mut dn = u0.clone();
        up[j] += h;
        dn[j] -= h;
        b.set_column(j, &((attitude_rhs(&x0, &up, params) - attitude_rhs(&x0, &dn, params)) / (2.0 * h)));
    }
    (a, b)
}

/// First move of the unconstrained finite-horizon problem with one free
/// input per step, from the normal equations of the stacked least squares.
pub fn unconstrained_first_move(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DVector<f64>,
    r: &DVector<f64>,
    np: usize,
    x0: &DVector<f64>,
    x_ref: &DVector<f64>,
) -> DVector<f64> {
    let (nx, nu) = b.shape();
    // Stack x_k = Aᵏx0 + Σ A^{k-1-j} B u_j for k = 1..np.
    let mut phi = DMatrix::zeros(np * nx, nx);
    let mut gamma = DMatrix::zeros(np * nx, np * nu);
    let mut power = DMatrix::identity(nx, nx);
    let mut powers = Vec::with_capacity(np);
    for k in 0..np {
        powers.push(power.clone());
        power = a * &power;
        phi.view_mut((k * nx, 0), (nx, nx)).copy_from(&power);
    }
    for k in 0..np {
        for j in 0..=k {
            gamma.view_mut((k * nx, j * nu), (nx, nu)).copy_from(&(&powers[k - j] * b));
        }
    }
    let qs = DMatrix::from_diagonal(&DVector::from_fn(np * nx, |i, _| q[i % nx].sqrt()));
    let rs = DMatrix::from_diagonal(&DVector::from_fn(np * nu, |i, _| r[i % nu].sqrt()));
    let target = DVector::from_fn(np * nx, |i, _| x_ref[i % nx]) - &phi * x0;
    // min ‖Qs(ΓU − target)‖² + ‖Rs U‖²
    let lhs = gamma.transpose() * &qs * &qs * &gamma + &rs * &rs;
    let rhs = gamma.transpose() * &qs * &qs * target;
    let u = lhs.cholesky().expect("normal equations are positive definite").solve(&rhs);
    u.rows(0, nu).into_owned()
}

/// Absolute KKT residuals of `(x, λ)` recomputed from the problem data:
/// stationarity, primal feasibility, dual sign and complementarity.
pub fn kkt_residuals(problem: &QpProblem, x: &DVector<f64>, lambda: &DVector<f64>) -> [f64; 4] {
    let c = &problem.c;
    let stat = &problem.h * x + &problem.g + c.transpose() * lambda;
    let scale = (&problem.h * x).amax().max(problem.g.amax()).max((c.transpose() * lambda).amax()).max(1.0);
    let cx = c * x;
    let mut primal: f64 = 0.0;
    let mut sign: f64 = 0.0;
    let mut comp: f64 = 0.0;
    for i in 0..cx.len() {
        let (lo, hi) = (problem.lo[i], problem.hi[i]);
        primal = primal.max(lo - cx[i]).max(cx[i] - hi);
        // λ > 0 pushes against the upper bound, λ < 0 against the lower.
        let slack = if lambda[i] > 0.0 { hi - cx[i] } else if lambda[i] < 0.0 { cx[i] - lo } else { 0.0 };
        comp = comp.max((lambda[i] * slack).abs() / scale);
        if !slack.is_finite() {
            sign = f64::INFINITY;
        }
    }
    [stat.amax() / scale, primal.max(0.0), sign, comp]
}
