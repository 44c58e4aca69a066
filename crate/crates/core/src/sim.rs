//! Closed-loop scenario runner: trajectory MPC, switching attitude MPC,
//! allocation and the nonlinear plant at three nested rates.

use std::fmt::Write as _;
use std::io::{self, Write};

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

use crate::attitude_mpc::{default_attitude_config, AttitudeMpc, AttitudeMpcError, AttitudeVector};
use crate::morphology::{Formation, FormationTable, MorphologyError, MorphologyState, VehicleGeometry};
use crate::mpc::MpcConfig;
use crate::plant::{step_rk4, NoiseModel, PlantError, PlantInputs, PlantParams, PlantState};
use crate::qp::{QpProblem, QpSettings, QpSolution};
use crate::trajectory_mpc::{TrajectoryCommand, TrajectoryConfig, TrajectoryMpc, TrajectoryMpcError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario configuration: {0}")]
    InvalidConfig(String),
    #[error("plant failure at t = {time:.3} s: {source}")]
    Plant { time: f64, source: PlantError },
    #[error("attitude controller failure at t = {time:.3} s: {source}")]
    Attitude { time: f64, source: AttitudeMpcError },
    #[error("trajectory controller failure at t = {time:.3} s: {source}")]
    Trajectory { time: f64, source: TrajectoryMpcError },
    #[error("morphology failure at t = {time:.3} s: {source}")]
    Morphology { time: f64, source: MorphologyError },
    #[error("empty trace")]
    EmptyTrace,
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    Hover,
    Square,
}

impl ScenarioKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioKind::Hover => "hover",
            ScenarioKind::Square => "square",
        }
    }
}

impl std::str::FromStr for ScenarioKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hover" => Ok(ScenarioKind::Hover),
            "square" => Ok(ScenarioKind::Square),
            other => Err(SimError::InvalidConfig(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Piecewise-constant waypoints on a square at fixed altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareReference {
    pub corners: [Vector3<f64>; 4],
    pub segment_duration: f64,
}

impl SquareReference {
    /// Waypoint in force at time `t`. Segment `k` targets corner `k + 1`,
    /// wrapping back to the first corner.
    pub fn at(&self, t: f64) -> Vector3<f64> {
        let k = (t / self.segment_duration).floor().max(0.0) as usize;
        self.corners[(k + 1) % 4]
    }

    pub fn start(&self) -> Vector3<f64> {
        self.corners[0]
    }

    pub fn total_duration(&self) -> f64 {
        4.0 * self.segment_duration
    }
}

pub fn square_reference(side: f64, altitude: f64, segment_duration: f64) -> Result<SquareReference, SimError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(SimError::InvalidConfig(format!("square side must be positive, got {side}")));
    }
    if !(segment_duration > 0.0 && segment_duration.is_finite()) || !altitude.is_finite() {
        return Err(SimError::InvalidConfig(format!(
            "invalid square timing or altitude: {segment_duration} s, {altitude} m"
        )));
    }
    Ok(SquareReference {
        corners: [
            Vector3::new(0.0, 0.0, altitude),
            Vector3::new(side, 0.0, altitude),
            Vector3::new(side, side, altitude),
            Vector3::new(0.0, side, altitude),
        ],
        segment_duration,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareConfig {
    pub side: f64,
    pub altitude: f64,
    pub segment_duration: f64,
}

impl Default for SquareConfig {
    fn default() -> Self {
        Self { side: 2.0, altitude: 2.0, segment_duration: 15.0 }
    }
}

/// Standard deviations of the additive state noise, applied every plant step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub euler_sigma: f64,
    pub rate_sigma: f64,
}

impl NoiseConfig {
    pub const DEFAULT: NoiseConfig = NoiseConfig { euler_sigma: 0.01, rate_sigma: 0.02 };
    pub const NONE: NoiseConfig = NoiseConfig { euler_sigma: 0.0, rate_sigma: 0.0 };

    pub fn scaled(self, k: f64) -> Self {
        Self { euler_sigma: self.euler_sigma * k, rate_sigma: self.rate_sigma * k }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub duration: f64,
    pub seed: u64,
    /// `(time, formation)` pairs; times strictly increasing.
    pub schedule: Vec<(f64, Formation)>,
    pub noise: NoiseConfig,
    /// Hover target position.
    pub target: Vector3<f64>,
    /// Initial position; the vehicle starts at rest and level. Hover
    /// starts on the ground below the target.
    pub start: Vector3<f64>,
    pub square: SquareConfig,
    pub geometry: VehicleGeometry,
    pub formations: FormationTable,
    pub plant: PlantParams,
    pub plant_dt: f64,
    pub attitude: MpcConfig,
    pub trajectory: TrajectoryConfig,
    pub qp: QpSettings,
    /// Keep every n-th attitude QP in the trace; 0 keeps none.
    pub qp_sample_every: usize,
}

fn cycle_schedule(period: f64) -> Vec<(f64, Formation)> {
    Formation::ALL.iter().enumerate().map(|(i, &f)| (i as f64 * period, f)).collect()
}

impl ScenarioConfig {
    pub fn hover() -> Self {
        let target = Vector3::new(0.0, 0.0, 2.0);
        Self {
            kind: ScenarioKind::Hover,
            duration: 60.0,
            seed: 1,
            schedule: cycle_schedule(15.0),
            noise: NoiseConfig::DEFAULT,
            target,
            start: Vector3::zeros(),
            square: SquareConfig::default(),
            geometry: VehicleGeometry::default(),
            formations: FormationTable::default(),
            plant: PlantParams::default(),
            plant_dt: 0.001,
            attitude: default_attitude_config(),
            trajectory: TrajectoryConfig::default(),
            qp: QpSettings::default(),
            qp_sample_every: 0,
        }
    }

    pub fn square() -> Self {
        let square = SquareConfig::default();
        let start = Vector3::new(0.0, 0.0, square.altitude);
        Self {
            kind: ScenarioKind::Square,
            schedule: cycle_schedule(square.segment_duration),
            noise: NoiseConfig::NONE,
            target: start,
            start,
            square,
            ..Self::hover()
        }
    }

    pub fn for_kind(kind: ScenarioKind) -> Self {
        match kind {
            ScenarioKind::Hover => Self::hover(),
            ScenarioKind::Square => Self::square(),
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration));
        }
        for w in self.schedule.windows(2) {
            if !(w[1].0 > w[0].0) {
                return bad(format!("schedule times must be strictly increasing ({} then {})", w[0].0, w[1].0));
            }
        }
        if self.schedule.iter().any(|(t, _)| !(t.is_finite() && *t >= 0.0)) {
            return bad("schedule times must be finite and non-negative".into());
        }
        if !(self.noise.euler_sigma >= 0.0 && self.noise.rate_sigma >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(self.plant_dt > 0.0) {
            return bad(format!("plant step must be positive, got {}", self.plant_dt));
        }
        self.rate_ratios()?;
        self.plant.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.geometry.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        self.attitude.validate().map_err(|e| SimError::InvalidConfig(e.to_string()))?;
        if self.kind == ScenarioKind::Square {
            square_reference(self.square.side, self.square.altitude, self.square.segment_duration)?;
        }
        if self.start.iter().chain(self.target.iter()).any(|v| !v.is_finite()) {
            return bad("start and target must be finite".into());
        }
        Ok(())
    }

    /// Plant steps per attitude tick and attitude ticks per trajectory tick.
    pub fn rate_ratios(&self) -> Result<(usize, usize), SimError> {
        let ratio = |slow: f64, fast: f64, what: &str| {
            let r = slow / fast;
            let n = r.round();
            if n < 1.0 || (r - n).abs() > 1e-9 * n {
                Err(SimError::InvalidConfig(format!("{what} rate ratio {r} is not a positive integer")))
            } else {
                Ok(n as usize)
            }
        };
        Ok((
            ratio(self.attitude.ts, self.plant_dt, "attitude/plant")?,
            ratio(self.trajectory.ts, self.attitude.ts, "trajectory/attitude")?,
        ))
    }

    pub fn initial_formation(&self) -> Formation {
        match self.schedule.first() {
            Some(&(t, f)) if t <= 0.0 => f,
            _ => Formation::X,
        }
    }

    /// Position reference at time `t`.
    pub fn reference_at(&self, t: f64) -> Vector3<f64> {
        match self.kind {
            ScenarioKind::Hover => self.target,
            ScenarioKind::Square => {
                let sq = &self.square;
                square_reference(sq.side, sq.altitude, sq.segment_duration)
                    .map(|r| r.at(t))
                    .unwrap_or(self.target)
            }
        }
    }
}

/// One attitude tick: state at the start of the tick and the commands held
/// over it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub time: f64,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub euler: Vector3<f64>,
    pub body_rates: Vector3<f64>,
    pub torque_cmd: Vector3<f64>,
    pub torque: Vector3<f64>,
    pub motor_forces: Vector4<f64>,
    pub formation: Formation,
    pub attitude_ref: Vector3<f64>,
    pub position_ref: Vector3<f64>,
    /// Thrust command from the trajectory layer, N.
    pub thrust_cmd: f64,
}

pub const CSV_HEADER: &str = "t,px,py,pz,vx,vy,vz,roll,pitch,yaw,wx,wy,wz,\
tau_cmd_x,tau_cmd_y,tau_cmd_z,tau_x,tau_y,tau_z,f1,f2,f3,f4,formation,\
roll_ref,pitch_ref,yaw_ref,px_ref,py_ref,pz_ref";

/// An attitude QP captured during a run together with its solution.
#[derive(Debug, Clone)]
pub struct QpSample {
    pub tick: u64,
    pub problem: QpProblem,
    pub solution: QpSolution,
}

#[derive(Debug, Clone, Default)]
pub struct SimTrace {
    /// Attitude tick period, s.
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    /// Attitude ticks at which a trajectory tick fired.
    pub trajectory_ticks: Vec<usize>,
    /// Plant steps taken per attitude tick.
    pub plant_steps: Vec<usize>,
    pub qp_samples: Vec<QpSample>,
}

impl SimTrace {
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        let mut line = String::with_capacity(512);
        for r in &self.rows {
            line.clear();
            let _ = write!(line, "{}", r.time);
            for v in [&r.position, &r.velocity, &r.euler, &r.body_rates, &r.torque_cmd, &r.torque] {
                for x in v.iter() {
                    let _ = write!(line, ",{x}");
                }
            }
            for x in r.motor_forces.iter() {
                let _ = write!(line, ",{x}");
            }
            let _ = write!(line, ",{}", r.formation);
            for v in [&r.attitude_ref, &r.position_ref] {
                for x in v.iter() {
                    let _ = write!(line, ",{x}");
                }
            }
            writeln!(out, "{line}")?;
        }
        out.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("CSV is ASCII")
    }
}

/// Run the closed loop described by `cfg`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<SimTrace, SimError> {
    cfg.validate()?;
    let (plant_per_att, att_per_traj) = cfg.rate_ratios()?;
    let dt_att = cfg.attitude.ts;
    let ticks = (cfg.duration / dt_att).round() as usize;

    let mut switches: Vec<(usize, Formation)> =
        cfg.schedule.iter().map(|&(t, f)| ((t / dt_att).round() as usize, f)).collect();
    switches.retain(|&(k, _)| k > 0);
    let mut next_switch = 0;

    let mut formation = cfg.initial_formation();
    let morph = |f: Formation, time: f64| {
        MorphologyState::for_formation(&cfg.geometry, &cfg.formations, f)
            .map_err(|source| SimError::Morphology { time, source })
    };
    let mut morphology = morph(formation, 0.0)?;
    let mut plant = cfg.plant;
    plant.inertia = morphology.inertia;

    let mut attitude = AttitudeMpc::new(&cfg.formations, cfg.plant.tau_alpha, cfg.attitude.clone(), cfg.qp)
        .map_err(|source| SimError::Attitude { time: 0.0, source })?;
    let mut trajectory =
        TrajectoryMpc::new(cfg.trajectory.clone(), cfg.qp).map_err(|source| SimError::Trajectory { time: 0.0, source })?;
    let mut noise = NoiseModel::new(cfg.noise.euler_sigma, cfg.noise.rate_sigma, cfg.seed)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let mut state = PlantState::hover_at(cfg.start);
    let mut traj_cmd = TrajectoryCommand { roll: 0.0, pitch: 0.0, thrust: cfg.trajectory.hover_thrust() };
    let mut torque_cmd = Vector3::zeros();
    let mut position_ref = cfg.reference_at(0.0);

    let mut trace = SimTrace {
        dt: dt_att,
        rows: Vec::with_capacity(ticks),
        trajectory_ticks: Vec::with_capacity(ticks / att_per_traj + 1),
        plant_steps: Vec::with_capacity(ticks),
        qp_samples: Vec::new(),
    };

    for k in 0..ticks {
        let time = k as f64 * dt_att;
        if next_switch < switches.len() && switches[next_switch].0 == k {
            formation = switches[next_switch].1;
            next_switch += 1;
            morphology = morph(formation, time)?;
            plant.inertia = morphology.inertia;
        }

        if k % att_per_traj == 0 {
            position_ref = cfg.reference_at(time);
            traj_cmd = trajectory
                .position_control_step(&state.position, &state.velocity, &position_ref, &Vector3::zeros(), &traj_cmd)
                .map_err(|source| SimError::Trajectory { time, source })?;
            trace.trajectory_ticks.push(k);
        }
        let attitude_ref = Vector3::new(traj_cmd.roll, traj_cmd.pitch, 0.0);

        let mut x = AttitudeVector::zeros();
        x.fixed_rows_mut::<3>(0).copy_from(&state.euler);
        x.fixed_rows_mut::<3>(3).copy_from(&state.euler_rates());
        x.fixed_rows_mut::<3>(6).copy_from(&state.torque);
        torque_cmd = attitude
            .control_step(&x, &attitude_ref, formation, &torque_cmd)
            .map_err(|source| SimError::Attitude { time, source })?;
        if cfg.qp_sample_every > 0 && k % cfg.qp_sample_every == 0 {
            if let Some((p, s)) = attitude.last_qp() {
                trace.qp_samples.push(QpSample { tick: k as u64, problem: p.clone(), solution: s.clone() });
            }
        }

        let wrench = Vector4::new(traj_cmd.thrust, torque_cmd.x, torque_cmd.y, torque_cmd.z);
        let forces = morphology.motor_forces(&wrench).map_err(|source| SimError::Morphology { time, source })?;
        let applied = morphology.allocation * forces;
        let inputs = PlantInputs {
            thrust: applied[0].max(0.0),
            torque_cmd: Vector3::new(applied[1], applied[2], applied[3]),
        };

        trace.rows.push(TraceRow {
            time,
            position: state.position,
            velocity: state.velocity,
            euler: state.euler,
            body_rates: state.body_rates,
            torque_cmd,
            torque: state.torque,
            motor_forces: forces,
            formation,
            attitude_ref,
            position_ref,
            thrust_cmd: traj_cmd.thrust,
        });

        for _ in 0..plant_per_att {
            let n = noise.sample();
            state = step_rk4(&state, &inputs, &plant, cfg.plant_dt, &n).map_err(|source| SimError::Plant { time, source })?;
        }
        trace.plant_steps.push(plant_per_att);
    }
    Ok(trace)
}

/// Metrics for one maximal interval of constant reference and formation.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentMetrics {
    pub start: f64,
    pub end: f64,
    pub formation: Formation,
    pub reference: Vector3<f64>,
    /// Largest per-axis `|p − p*|` over the steady window.
    pub steady_error: Vector3<f64>,
    /// Per-axis RMSE over the whole segment.
    pub rmse: Vector3<f64>,
    /// Euclidean position error on the segment's last row.
    pub final_error: f64,
    /// Mean motor forces over the steady window.
    pub mean_forces: Vector4<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    pub segments: Vec<SegmentMetrics>,
    /// Largest steady-state error over all segments, per axis.
    pub steady_error: Vector3<f64>,
    pub max_torque: Vector3<f64>,
    pub max_torque_rate: Vector3<f64>,
    /// Samples breaking `|τ| ≤ u_max` or `|Δτ| ≤ Δu_max`, counted per axis and bound.
    pub violations: usize,
    /// Motor force samples below zero.
    pub negative_forces: usize,
    /// Mean motor forces per formation over the steady windows.
    pub formation_forces: [Option<Vector4<f64>>; 4],
    /// Per-axis RMSE over the whole trace.
    pub rmse: Vector3<f64>,
}

/// Bounds and windows used by [`compute_metrics`].
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsConfig {
    pub u_max: Vector3<f64>,
    pub du_max: Vector3<f64>,
    pub steady_window: f64,
}

impl MetricsConfig {
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        let a = &cfg.attitude;
        let sym = |lo: f64, hi: f64| hi.min(-lo);
        Self {
            u_max: Vector3::from_fn(|i, _| sym(a.u_min[i], a.u_max[i])),
            du_max: Vector3::from_fn(|i, _| sym(a.du_min[i], a.du_max[i])),
            steady_window: 5.0,
        }
    }
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self::from_scenario(&ScenarioConfig::hover())
    }
}

pub fn compute_metrics(trace: &SimTrace, cfg: &MetricsConfig) -> Result<MetricsSummary, SimError> {
    let rows = &trace.rows;
    if rows.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let dt = if trace.dt > 0.0 { trace.dt } else { 0.01 };

    let mut max_torque = Vector3::<f64>::zeros();
    let mut max_rate = Vector3::<f64>::zeros();
    let mut violations = 0;
    let mut negative_forces = 0;
    let mut sq = Vector3::zeros();
    let mut prev = Vector3::<f64>::zeros();
    for r in rows {
        for i in 0..3 {
            let u = r.torque_cmd[i];
            let du = u - prev[i];
            max_torque[i] = f64::max(max_torque[i], u.abs());
            max_rate[i] = f64::max(max_rate[i], du.abs());
            violations += usize::from(u.abs() > cfg.u_max[i]) + usize::from(du.abs() > cfg.du_max[i]);
            let e = r.position[i] - r.position_ref[i];
            sq[i] += e * e;
        }
        negative_forces += r.motor_forces.iter().filter(|&&f| f < 0.0).count();
        prev = r.torque_cmd;
    }
    let rmse = (sq / rows.len() as f64).map(f64::sqrt);

    let mut segments = Vec::new();
    let mut begin = 0;
    for i in 1..=rows.len() {
        let split = i == rows.len()
            || rows[i].formation != rows[begin].formation
            || rows[i].position_ref != rows[begin].position_ref;
        if split {
            segments.push(segment_metrics(&rows[begin..i], dt, cfg.steady_window));
            begin = i;
        }
    }

    let mut steady_error = Vector3::zeros();
    let mut sums = [(Vector4::zeros(), 0usize); 4];
    for s in &segments {
        steady_error = steady_error.sup(&s.steady_error);
        let slot = &mut sums[s.formation.index()];
        slot.0 += s.mean_forces;
        slot.1 += 1;
    }
    let formation_forces = sums.map(|(sum, n)| (n > 0).then(|| sum / n as f64));

    Ok(MetricsSummary {
        segments,
        steady_error,
        max_torque,
        max_torque_rate: max_rate,
        violations,
        negative_forces,
        formation_forces,
        rmse,
    })
}

fn segment_metrics(rows: &[TraceRow], dt: f64, window: f64) -> SegmentMetrics {
    let first = &rows[0];
    let last = &rows[rows.len() - 1];
    let window_rows = ((window / dt).round() as usize).clamp(1, rows.len());
    let steady = &rows[rows.len() - window_rows..];

    let mut steady_error = Vector3::zeros();
    let mut forces = Vector4::zeros();
    for r in steady {
        steady_error = steady_error.sup(&(r.position - r.position_ref).abs());
        forces += r.motor_forces;
    }
    let mut sq = Vector3::zeros();
    for r in rows {
        sq += (r.position - r.position_ref).map(|e| e * e);
    }
    SegmentMetrics {
        start: first.time,
        end: last.time + dt,
        formation: first.formation,
        reference: first.position_ref,
        steady_error,
        rmse: (sq / rows.len() as f64).map(f64::sqrt),
        final_error: (last.position - last.position_ref).norm(),
        mean_forces: forces / steady.len() as f64,
    }
}

impl MetricsSummary {
    /// Key-value text report.
    pub fn report(&self) -> String {
        let mut s = String::new();
        let v3 = |v: &Vector3<f64>| format!("{},{},{}", v.x, v.y, v.z);
        let _ = writeln!(s, "steady_error = {}", v3(&self.steady_error));
        let _ = writeln!(s, "rmse = {}", v3(&self.rmse));
        let _ = writeln!(s, "max_torque = {}", v3(&self.max_torque));
        let _ = writeln!(s, "max_torque_rate = {}", v3(&self.max_torque_rate));
        let _ = writeln!(s, "violations = {}", self.violations);
        let _ = writeln!(s, "negative_forces = {}", self.negative_forces);
        for f in Formation::ALL {
            if let Some(m) = self.formation_forces[f.index()] {
                let _ = writeln!(s, "mean_forces_{} = {},{},{},{}", f, m[0], m[1], m[2], m[3]);
            }
        }
        for (i, seg) in self.segments.iter().enumerate() {
            let _ = writeln!(
                s,
                "segment_{i} = {},{},{},{},{},{}",
                seg.start,
                seg.end,
                seg.formation,
                v3(&seg.steady_error),
                seg.final_error,
                seg.mean_forces.sum()
            );
        }
        s
    }
}
