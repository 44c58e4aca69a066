//! Geometry-dependent mass properties and control allocation.
//!
//! Every arm pivots about a servo mounted at one corner of the central body.
//! Rotating an arm moves both the arm link and the motor assembly at its tip,
//! which shifts the center of gravity, changes the composite inertia and
//! changes the lever arms used by the mixer.
//!
//! Axis convention: `x` is longitudinal (body half length `l`, arm term
//! `α·sin θ`), `y` is lateral (body half width `w`, arm term `α·cos θ`).
//! Corners are numbered 1..4 with `(x, y)` sign patterns
//! `(+,+)`, `(+,−)`, `(−,−)`, `(−,+)`.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use thiserror::Error;

/// Allocation matrices with a condition number above this are rejected.
pub const MAX_ALLOCATION_CONDITION: f64 = 1e6;

/// `(x, y)` sign pattern of each corner.
pub const CORNER_SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, -1.0), (-1.0, 1.0)];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MorphologyError {
    #[error("servo angle {index} = {value} rad is outside [0, pi/2]")]
    AngleOutOfRange { index: usize, value: f64 },
    #[error("invalid vehicle geometry: {0}")]
    InvalidGeometry(String),
    #[error("allocation matrix is ill-conditioned (condition number {condition:.3e})")]
    IllConditioned { condition: f64 },
    #[error(
        "allocation singular for servo angles {angles_deg:?} deg (condition number {condition:.3e})"
    )]
    AllocationSingular { angles_deg: [f64; 4], condition: f64 },
    #[error("unknown formation tag `{0}`")]
    UnknownFormation(String),
}

/// Physical dimensions and mass split of the vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleGeometry {
    /// Central body mass, kg.
    pub body_mass: f64,
    /// Mass of one arm link, kg.
    pub arm_mass: f64,
    /// Mass of one motor/rotor/propeller assembly, kg.
    pub motor_mass: f64,
    /// Body half length along x, m. Also the servo x offset.
    pub half_length: f64,
    /// Body half width along y, m. Also the servo y offset.
    pub half_width: f64,
    /// Body half height, m.
    pub half_height: f64,
    /// Distance from servo axis to the motor center, m.
    pub arm_length: f64,
    /// CoG of the central body relative to the geometric center, m.
    pub body_cog_offset: Vector3<f64>,
    /// Height of the motor assemblies above the geometric center, m.
    pub motor_z_offset: f64,
    /// Thrust coefficient `b` (row one of the mixer).
    pub thrust_coeff: f64,
    /// Yaw torque per unit motor force `κ`, m.
    pub torque_coeff: f64,
    /// Motor assemblies are modelled as solid cylinders of this radius, m.
    pub motor_radius: f64,
    /// Height of the motor cylinder, m.
    pub motor_height: f64,
}

impl Default for VehicleGeometry {
    fn default() -> Self {
        // 0.6 + 4 * (0.025 + 0.075) = 1 kg total.
        Self {
            body_mass: 0.6,
            arm_mass: 0.025,
            motor_mass: 0.075,
            half_length: 0.055,
            half_width: 0.045,
            half_height: 0.02,
            arm_length: 0.15,
            body_cog_offset: Vector3::zeros(),
            motor_z_offset: 0.02,
            thrust_coeff: 1.0,
            torque_coeff: 0.016,
            motor_radius: 0.014,
            motor_height: 0.02,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<(), MorphologyError> {
        let positive = [
            ("body_mass", self.body_mass),
            ("arm_mass", self.arm_mass),
            ("motor_mass", self.motor_mass),
            ("half_length", self.half_length),
            ("half_width", self.half_width),
            ("half_height", self.half_height),
            ("arm_length", self.arm_length),
            ("thrust_coeff", self.thrust_coeff),
            ("torque_coeff", self.torque_coeff),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(MorphologyError::InvalidGeometry(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        let non_negative = [
            ("motor_radius", self.motor_radius),
            ("motor_height", self.motor_height),
        ];
        for (name, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(MorphologyError::InvalidGeometry(format!(
                    "{name} must be non-negative and finite, got {value}"
                )));
            }
        }
        if !self.motor_z_offset.is_finite() || !self.body_cog_offset.iter().all(|v| v.is_finite()) {
            return Err(MorphologyError::InvalidGeometry(
                "offsets must be finite".to_string(),
            ));
        }
        Ok(())
    }

    /// Total mass; independent of the servo angles.
    pub fn total_mass(&self) -> f64 {
        self.body_mass + 4.0 * (self.arm_mass + self.motor_mass)
    }
}

/// The four servo angles in radians, each in `[0, π/2]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ServoAngles([f64; 4]);

impl ServoAngles {
    pub fn new(angles: [f64; 4]) -> Result<Self, MorphologyError> {
        for (index, &value) in angles.iter().enumerate() {
            if !(0.0..=FRAC_PI_2).contains(&value) {
                return Err(MorphologyError::AngleOutOfRange { index, value });
            }
        }
        Ok(Self(angles))
    }

    pub fn from_degrees(degrees: [f64; 4]) -> Result<Self, MorphologyError> {
        let mut rad = degrees.map(f64::to_radians);
        // 90.0_f64.to_radians() lands one ulp above FRAC_PI_2.
        for r in &mut rad {
            if (*r - FRAC_PI_2).abs() < 1e-12 {
                *r = FRAC_PI_2;
            }
        }
        Self::new(rad)
    }

    pub fn radians(&self) -> [f64; 4] {
        self.0
    }

    pub fn degrees(&self) -> [f64; 4] {
        self.0.map(f64::to_degrees)
    }

    pub fn get(&self, i: usize) -> f64 {
        self.0[i]
    }
}

/// Named arm configuration, the value of the switching signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Formation {
    X,
    H,
    Y,
    T,
}

impl Formation {
    pub const ALL: [Formation; 4] = [Formation::X, Formation::H, Formation::Y, Formation::T];

    pub fn index(self) -> usize {
        match self {
            Formation::X => 0,
            Formation::H => 1,
            Formation::Y => 2,
            Formation::T => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Formation::X => "X",
            Formation::H => "H",
            Formation::Y => "Y",
            Formation::T => "T",
        }
    }
}

impl fmt::Display for Formation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Formation {
    type Err = MorphologyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "X" | "x" => Ok(Formation::X),
            "H" | "h" => Ok(Formation::H),
            "Y" | "y" => Ok(Formation::Y),
            "T" | "t" => Ok(Formation::T),
            other => Err(MorphologyError::UnknownFormation(other.to_string())),
        }
    }
}

/// Default servo angles for each formation.
pub fn formation_servo_angles(f: Formation) -> ServoAngles {
    let deg = match f {
        Formation::X => [45.0, 45.0, 45.0, 45.0],
        Formation::H => [0.0, 0.0, 0.0, 0.0],
        Formation::Y => [0.0, 45.0, 45.0, 0.0],
        Formation::T => [90.0, 90.0, 0.0, 0.0],
    };
    ServoAngles::from_degrees(deg).expect("formation table angles are within range")
}

/// Principal inertia `(I_xx, I_yy, I_zz)` per formation, measured on the CAD model.
pub fn table_inertia(f: Formation) -> Vector3<f64> {
    match f {
        Formation::X => Vector3::new(0.004233, 0.004380, 0.007834),
        Formation::H => Vector3::new(0.005885, 0.001812, 0.006918),
        Formation::Y => Vector3::new(0.005042, 0.003096, 0.007369),
        Formation::T => Vector3::new(0.003654, 0.003917, 0.006792),
    }
}

/// Servo angles and authoritative inertia for the four named formations.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationTable {
    pub angles: [ServoAngles; 4],
    pub inertia: [Vector3<f64>; 4],
}

impl Default for FormationTable {
    fn default() -> Self {
        Self {
            angles: Formation::ALL.map(formation_servo_angles),
            inertia: Formation::ALL.map(table_inertia),
        }
    }
}

impl FormationTable {
    pub fn servo_angles(&self, f: Formation) -> ServoAngles {
        self.angles[f.index()]
    }

    pub fn inertia(&self, f: Formation) -> Vector3<f64> {
        self.inertia[f.index()]
    }
}

fn servo_position(g: &VehicleGeometry, corner: usize) -> Vector3<f64> {
    let (sx, sy) = CORNER_SIGNS[corner];
    Vector3::new(sx * g.half_length, sy * g.half_width, 0.0)
}

/// Unit vector along arm `corner` for servo angle `theta`.
fn arm_direction(corner: usize, theta: f64) -> Vector3<f64> {
    let (sx, sy) = CORNER_SIGNS[corner];
    Vector3::new(sx * theta.sin(), sy * theta.cos(), 0.0)
}

/// Arm-link CoG relative to the geometric center (midpoint of the link).
fn arm_cog(g: &VehicleGeometry, corner: usize, theta: f64) -> Vector3<f64> {
    servo_position(g, corner) + 0.5 * g.arm_length * arm_direction(corner, theta)
}

/// Motor assembly center relative to the geometric center.
fn motor_center(g: &VehicleGeometry, corner: usize, theta: f64) -> Vector3<f64> {
    let mut p = servo_position(g, corner) + g.arm_length * arm_direction(corner, theta);
    p.z = g.motor_z_offset;
    p
}

/// Center of gravity relative to the geometric center.
pub fn compute_cog(g: &VehicleGeometry, angles: &ServoAngles) -> Vector3<f64> {
    let mut moment = g.body_mass * g.body_cog_offset;
    for i in 0..4 {
        let theta = angles.get(i);
        moment += g.arm_mass * arm_cog(g, i, theta) + g.motor_mass * motor_center(g, i, theta);
    }
    moment / g.total_mass()
}

/// Thrust application points relative to the CoG.
pub fn motor_positions(
    g: &VehicleGeometry,
    angles: &ServoAngles,
    r_cog: &Vector3<f64>,
) -> [Vector3<f64>; 4] {
    std::array::from_fn(|i| {
        let (sx, sy) = CORNER_SIGNS[i];
        let theta = angles.get(i);
        Vector3::new(
            sx * (g.half_length + g.arm_length * theta.sin()) - r_cog.x,
            sy * (g.half_width + g.arm_length * theta.cos()) - r_cog.y,
            g.motor_z_offset - r_cog.z,
        )
    })
}

/// Mixer mapping motor forces to `(T, τ_x, τ_y, τ_z)`.
///
/// A force `f` along body `+z` at `(x, y)` produces `τ_x = y·f` and
/// `τ_y = −x·f`; motors 1 and 3 spin so that their drag yields `−κ·f` in yaw.
pub fn allocation_matrix(motors: &[Vector3<f64>; 4], b: f64, kappa: f64) -> Matrix4<f64> {
    let mut a = Matrix4::zeros();
    for (i, m) in motors.iter().enumerate() {
        let spin = if i % 2 == 0 { -1.0 } else { 1.0 };
        a[(0, i)] = b;
        a[(1, i)] = m.y;
        a[(2, i)] = -m.x;
        a[(3, i)] = spin * kappa;
    }
    a
}

/// 2-norm condition number of the mixer.
pub fn allocation_condition(a: &Matrix4<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Motor forces realizing `wrench = (T, τ_x, τ_y, τ_z)`.
pub fn motor_forces_from_wrench(
    a: &Matrix4<f64>,
    wrench: &Vector4<f64>,
) -> Result<Vector4<f64>, MorphologyError> {
    let condition = allocation_condition(a);
    if !(condition <= MAX_ALLOCATION_CONDITION) {
        return Err(MorphologyError::IllConditioned { condition });
    }
    a.lu()
        .solve(wrench)
        .ok_or(MorphologyError::IllConditioned { condition })
}

/// Inertia of a body with tensor `self_inertia` about its own CoG, expressed
/// about a parallel frame whose origin is `-offset` from that CoG.
pub fn parallel_axis(self_inertia: &Matrix3<f64>, mass: f64, offset: &Vector3<f64>) -> Matrix3<f64> {
    self_inertia + mass * (offset.norm_squared() * Matrix3::identity() - offset * offset.transpose())
}

fn box_inertia(mass: f64, hx: f64, hy: f64, hz: f64) -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vector3::new(
        mass * (hy * hy + hz * hz) / 3.0,
        mass * (hx * hx + hz * hz) / 3.0,
        mass * (hx * hx + hy * hy) / 3.0,
    ))
}

fn rod_inertia(mass: f64, length: f64, dir: &Vector3<f64>) -> Matrix3<f64> {
    mass * length * length / 12.0 * (Matrix3::identity() - dir * dir.transpose())
}

fn cylinder_inertia(mass: f64, radius: f64, height: f64) -> Matrix3<f64> {
    let lateral = mass * (3.0 * radius * radius + height * height) / 12.0;
    Matrix3::from_diagonal(&Vector3::new(lateral, lateral, 0.5 * mass * radius * radius))
}

/// Full composite inertia tensor about the geometric center.
pub fn composite_inertia_tensor(g: &VehicleGeometry, angles: &ServoAngles) -> Matrix3<f64> {
    let mut total = parallel_axis(
        &box_inertia(g.body_mass, g.half_length, g.half_width, g.half_height),
        g.body_mass,
        &g.body_cog_offset,
    );
    let motor_self = cylinder_inertia(g.motor_mass, g.motor_radius, g.motor_height);
    for i in 0..4 {
        let theta = angles.get(i);
        let dir = arm_direction(i, theta);
        total += parallel_axis(
            &rod_inertia(g.arm_mass, g.arm_length, &dir),
            g.arm_mass,
            &arm_cog(g, i, theta),
        );
        total += parallel_axis(&motor_self, g.motor_mass, &motor_center(g, i, theta));
    }
    total
}

/// Diagonal of [`composite_inertia_tensor`]; products of inertia are dropped.
pub fn composite_inertia(g: &VehicleGeometry, angles: &ServoAngles) -> Vector3<f64> {
    composite_inertia_tensor(g, angles).diagonal()
}

/// Everything the controller and plant need to know about one arm configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct MorphologyState {
    pub angles: ServoAngles,
    pub r_cog: Vector3<f64>,
    pub motor_positions: [Vector3<f64>; 4],
    pub inertia: Vector3<f64>,
    pub allocation: Matrix4<f64>,
    pub total_mass: f64,
}

impl MorphologyState {
    /// Morphology for arbitrary angles, with inertia from the geometric model.
    pub fn from_angles(g: &VehicleGeometry, angles: ServoAngles) -> Result<Self, MorphologyError> {
        let inertia = composite_inertia(g, &angles);
        Self::with_inertia(g, angles, inertia)
    }

    /// Morphology for a named formation, with inertia taken from `table`.
    pub fn for_formation(
        g: &VehicleGeometry,
        table: &FormationTable,
        f: Formation,
    ) -> Result<Self, MorphologyError> {
        Self::with_inertia(g, table.servo_angles(f), table.inertia(f))
    }

    fn with_inertia(
        g: &VehicleGeometry,
        angles: ServoAngles,
        inertia: Vector3<f64>,
    ) -> Result<Self, MorphologyError> {
        g.validate()?;
        if !inertia.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(MorphologyError::InvalidGeometry(format!(
                "inertia must be positive, got {inertia:?}"
            )));
        }
        let r_cog = compute_cog(g, &angles);
        let motors = motor_positions(g, &angles, &r_cog);
        let allocation = allocation_matrix(&motors, g.thrust_coeff, g.torque_coeff);
        Ok(Self {
            angles,
            r_cog,
            motor_positions: motors,
            inertia,
            allocation,
            total_mass: g.total_mass(),
        })
    }

    /// Motor forces for a `(T, τ_x, τ_y, τ_z)` wrench.
    pub fn motor_forces(&self, wrench: &Vector4<f64>) -> Result<Vector4<f64>, MorphologyError> {
        motor_forces_from_wrench(&self.allocation, wrench).map_err(|e| match e {
            MorphologyError::IllConditioned { condition } => MorphologyError::AllocationSingular {
                angles_deg: self.angles.degrees(),
                condition,
            },
            other => other,
        })
    }
}
