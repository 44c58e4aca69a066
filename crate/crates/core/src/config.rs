//! Scenario configuration files.
//!
//! A flat INI-style file with sections `geometry`, `plant`,
//! `attitude_mpc`, `trajectory` and `scenario`. Values are SI; vectors are
//! comma separated; `inf` is accepted for unbounded entries. Keys that are
//! absent keep their defaults; unknown keys are rejected.
//!
//! ```text
//! [scenario]
//! kind = square
//! duration = 60
//! schedule = 0:X, 15:H, 30:Y, 45:T
//!
//! [attitude_mpc]
//! r = 80, 80, 120
//! ```

use std::path::Path;
use std::str::FromStr;

use ini::Ini;
use nalgebra::{DVector, Vector3};
use thiserror::Error;

use crate::morphology::{Formation, ServoAngles};
use crate::sim::{ScenarioConfig, ScenarioKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read configuration: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed configuration: {0}")]
    Syntax(String),
    #[error("unknown key '{key}' in section [{section}]")]
    UnknownKey { section: String, key: String },
    #[error("bad value for {section}.{key}: {reason}")]
    BadValue { section: String, key: String, reason: String },
}

/// Read a configuration file on top of the defaults for its scenario kind.
pub fn load_config(path: &Path, default_kind: ScenarioKind) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, default_kind)
}

/// Parse configuration text on top of the defaults for its scenario kind,
/// `default_kind` when the text names none.
pub fn parse_config(text: &str, default_kind: ScenarioKind) -> Result<ScenarioConfig, ConfigError> {
    let ini = Ini::load_from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let kind = match ini.section(Some("scenario")).and_then(|s| s.get("kind")) {
        Some(v) => ScenarioKind::from_str(v).map_err(|e| bad("scenario", "kind", e))?,
        None => default_kind,
    };
    let mut cfg = ScenarioConfig::for_kind(kind);
    apply_config(&ini, &mut cfg)?;
    Ok(cfg)
}

/// Parse a `time:formation` list such as `0:X, 15:H`.
pub fn parse_schedule(text: &str) -> Result<Vec<(f64, Formation)>, String> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let (t, f) = item.split_once(':').ok_or_else(|| format!("expected time:formation, got '{}'", item.trim()))?;
            let t: f64 = t.trim().parse().map_err(|_| format!("bad time '{}'", t.trim()))?;
            let f = Formation::from_str(f.trim()).map_err(|e| e.to_string())?;
            Ok((t, f))
        })
        .collect()
}

fn bad(section: &str, key: &str, reason: impl ToString) -> ConfigError {
    ConfigError::BadValue { section: section.into(), key: key.into(), reason: reason.to_string() }
}

struct Value<'a> {
    section: &'a str,
    key: &'a str,
    raw: &'a str,
}

impl Value<'_> {
    fn err(&self, reason: impl ToString) -> ConfigError {
        bad(self.section, self.key, reason)
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        parse_f64(self.raw).map_err(|e| self.err(e))
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        self.raw.trim().parse().map_err(|e| self.err(e))
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        self.raw.trim().parse().map_err(|e| self.err(e))
    }

    fn list(&self, len: usize) -> Result<Vec<f64>, ConfigError> {
        let v = self.raw.split(',').map(parse_f64).collect::<Result<Vec<_>, _>>().map_err(|e| self.err(e))?;
        if v.len() != len {
            return Err(self.err(format!("expected {len} values, got {}", v.len())));
        }
        Ok(v)
    }

    fn vec3(&self) -> Result<Vector3<f64>, ConfigError> {
        Ok(Vector3::from_vec(self.list(3)?))
    }

    fn dvec(&self, len: usize) -> Result<DVector<f64>, ConfigError> {
        Ok(DVector::from_vec(self.list(len)?))
    }

    fn array<const N: usize>(&self) -> Result<[f64; N], ConfigError> {
        let v = self.list(N)?;
        Ok(std::array::from_fn(|i| v[i]))
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let s = s.trim();
    s.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))
}

/// Per-formation key suffix such as `inertia_t`.
fn formation_key(key: &str, prefix: &str) -> Option<Formation> {
    key.strip_prefix(prefix).and_then(|f| Formation::from_str(f).ok())
}

fn apply_config(ini: &Ini, cfg: &mut ScenarioConfig) -> Result<(), ConfigError> {
    for (section, props) in ini.iter() {
        let section = section.unwrap_or("");
        for (key, raw) in props.iter() {
            let v = Value { section, key, raw };
            let unknown = || ConfigError::UnknownKey { section: section.into(), key: key.into() };
            match section {
                "geometry" => apply_geometry(cfg, &v).and_then(|known| if known { Ok(()) } else { Err(unknown()) })?,
                "plant" => match key {
                    "mass" => cfg.plant.mass = v.f64()?,
                    "gravity" => cfg.plant.gravity = v.f64()?,
                    "tau_alpha" => cfg.plant.tau_alpha = v.f64()?,
                    "dt" => cfg.plant_dt = v.f64()?,
                    "noise_euler_sigma" => cfg.noise.euler_sigma = v.f64()?,
                    "noise_rate_sigma" => cfg.noise.rate_sigma = v.f64()?,
                    _ => return Err(unknown()),
                },
                "attitude_mpc" => {
                    let a = &mut cfg.attitude;
                    match key {
                        "np" => a.np = v.usize()?,
                        "nc" => a.nc = v.usize()?,
                        "ts" => a.ts = v.f64()?,
                        "q" => a.q = v.dvec(9)?,
                        "r" => a.r = v.dvec(3)?,
                        "u_max" => {
                            a.u_max = v.dvec(3)?;
                            a.u_min = -&a.u_max;
                        }
                        "du_max" => {
                            a.du_max = v.dvec(3)?;
                            a.du_min = -&a.du_max;
                        }
                        "x_min" => a.x_min = v.dvec(9)?,
                        "x_max" => a.x_max = v.dvec(9)?,
                        "qp_tol" => cfg.qp.tol = v.f64()?,
                        "qp_max_iter" => cfg.qp.max_iter = v.usize()?,
                        _ => return Err(unknown()),
                    }
                }
                "trajectory" => {
                    let t = &mut cfg.trajectory;
                    match key {
                        "np" => t.np = v.usize()?,
                        "nc" => t.nc = v.usize()?,
                        "ts" => t.ts = v.f64()?,
                        "q" => t.q = v.array()?,
                        "r" => t.r = v.array()?,
                        "u_max" => t.u_abs = v.array()?,
                        "du_max" => t.du_abs = v.array()?,
                        "attitude_lag" => t.attitude_lag = v.f64()?,
                        "mass" => t.mass = v.f64()?,
                        "gravity" => t.gravity = v.f64()?,
                        _ => return Err(unknown()),
                    }
                }
                "scenario" => match key {
                    "kind" => {}
                    "duration" => cfg.duration = v.f64()?,
                    "seed" => cfg.seed = v.u64()?,
                    "schedule" => cfg.schedule = parse_schedule(raw).map_err(|e| v.err(e))?,
                    "noise_scale" => {
                        let k = v.f64()?;
                        cfg.noise = cfg.noise.scaled(k);
                    }
                    "target" => cfg.target = v.vec3()?,
                    "start" => cfg.start = v.vec3()?,
                    "side" => cfg.square.side = v.f64()?,
                    "altitude" => cfg.square.altitude = v.f64()?,
                    "segment_duration" => cfg.square.segment_duration = v.f64()?,
                    "qp_sample_every" => cfg.qp_sample_every = v.usize()?,
                    _ => return Err(unknown()),
                },
                "" if props.is_empty() => {}
                other => {
                    return Err(ConfigError::Syntax(format!(
                        "unknown section [{other}] (key '{key}')"
                    )))
                }
            }
        }
    }
    Ok(())
}

fn apply_geometry(cfg: &mut ScenarioConfig, v: &Value) -> Result<bool, ConfigError> {
    let g = &mut cfg.geometry;
    match v.key {
        "body_mass" => g.body_mass = v.f64()?,
        "arm_mass" => g.arm_mass = v.f64()?,
        "motor_mass" => g.motor_mass = v.f64()?,
        "half_length" => g.half_length = v.f64()?,
        "half_width" => g.half_width = v.f64()?,
        "half_height" => g.half_height = v.f64()?,
        "arm_length" => g.arm_length = v.f64()?,
        "body_cog_offset" => g.body_cog_offset = v.vec3()?,
        "motor_z_offset" => g.motor_z_offset = v.f64()?,
        "thrust_coeff" => g.thrust_coeff = v.f64()?,
        "torque_coeff" => g.torque_coeff = v.f64()?,
        "motor_radius" => g.motor_radius = v.f64()?,
        "motor_height" => g.motor_height = v.f64()?,
        key => {
            if let Some(f) = formation_key(key, "inertia_") {
                cfg.formations.inertia[f.index()] = v.vec3()?;
            } else if let Some(f) = formation_key(key, "servo_deg_") {
                let deg = v.array::<4>()?;
                cfg.formations.angles[f.index()] = ServoAngles::from_degrees(deg).map_err(|e| v.err(e))?;
            } else {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
