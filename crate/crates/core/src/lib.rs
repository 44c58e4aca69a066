//! Switching model predictive control for a quadrotor whose arms fold
//! into four formations (X, H, Y, T).
//!
//! - [`morphology`]: mass properties and control allocation per formation
//! - [`plant`]: nonlinear rigid-body model and RK4 integration
//! - [`qp`]: dense active-set QP solver
//! - [`mpc`]: condensed linear MPC shared by both control layers
//! - [`attitude_mpc`]: torque-level MPC with one model per formation
//! - [`trajectory_mpc`]: position MPC producing attitude and thrust commands
//! - [`sim`]: closed-loop scenarios, CSV traces and metrics
//! - [`config`]: INI scenario files

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attitude_mpc;
pub mod config;
pub mod morphology;
pub mod mpc;
pub mod plant;
pub mod qp;
pub mod sim;
pub mod trajectory_mpc;
