//! Key-value config text: one `key = value [unit]` per line, `#` comments.
//!
//! Values are converted to SI on load. A `config = A|B` line picks the base
//! defaults; every other key overrides one field. Lists are comma separated
//! and share one trailing unit, e.g. `segment_lengths = 150, 150, 150, 70 mm`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::fmt::Write;

use crate::control::{ControlError, ControllerConfig};
use crate::params::{default_params, LegConfig, ParamError, RobotParams, SimSettings};

/// Everything a trial needs.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSet {
    pub robot: RobotParams,
    pub sim: SimSettings,
    pub controller: ControllerConfig,
}

impl ConfigSet {
    pub fn defaults(leg: LegConfig) -> Self {
        ConfigSet { robot: default_params(leg), sim: SimSettings::default(), controller: ControllerConfig::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.robot.validate()?;
        self.sim.validate()?;
        self.controller.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ConfigError {
    /// Malformed line; `line` is 1-based, 0 for `--set` overrides.
    Parse {
        line: usize,
        message: String,
    },
    UnknownKey {
        line: usize,
        key: String,
    },
    Invalid(ParamError),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Parse { line: 0, message } => write!(f, "{message}"),
            ConfigError::Parse { line, message } => write!(f, "line {line}: {message}"),
            ConfigError::UnknownKey { line: 0, key } => write!(f, "unknown key `{key}`"),
            ConfigError::UnknownKey { line, key } => write!(f, "line {line}: unknown key `{key}`"),
            ConfigError::Invalid(e) => write!(f, "invalid value: {e}"),
        }
    }
}

impl core::error::Error for ConfigError {}

impl From<ParamError> for ConfigError {
    fn from(e: ParamError) -> Self {
        ConfigError::Invalid(e)
    }
}

impl From<ControlError> for ConfigError {
    fn from(e: ControlError) -> Self {
        ConfigError::Invalid(ParamError { key: e.key, reason: e.reason })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Dim {
    None,
    Mass,
    Length,
    Angle,
    Time,
    Frequency,
    LinearStiffness,
    RotaryStiffness,
    Torque,
    Pressure,
    Inertia,
    Damping,
    RotaryDamping,
    Velocity,
    Acceleration,
}

const UNITS: &[(&str, Dim, f64)] = &[
    ("kg", Dim::Mass, 1.0),
    ("g", Dim::Mass, 1e-3),
    ("m", Dim::Length, 1.0),
    ("cm", Dim::Length, 1e-2),
    ("mm", Dim::Length, 1e-3),
    ("rad", Dim::Angle, 1.0),
    ("deg", Dim::Angle, PI / 180.0),
    ("s", Dim::Time, 1.0),
    ("ms", Dim::Time, 1e-3),
    ("Hz", Dim::Frequency, 1.0),
    ("N/m", Dim::LinearStiffness, 1.0),
    ("N/mm", Dim::LinearStiffness, 1e3),
    ("N*m/rad", Dim::RotaryStiffness, 1.0),
    ("Nm/rad", Dim::RotaryStiffness, 1.0),
    ("N*m", Dim::Torque, 1.0),
    ("Nm", Dim::Torque, 1.0),
    ("Pa", Dim::Pressure, 1.0),
    ("kPa", Dim::Pressure, 1e3),
    ("bar", Dim::Pressure, 1e5),
    ("kg*m^2", Dim::Inertia, 1.0),
    ("N*s/m", Dim::Damping, 1.0),
    ("N*m*s/rad", Dim::RotaryDamping, 1.0),
    ("Nms/rad", Dim::RotaryDamping, 1.0),
    ("m/s", Dim::Velocity, 1.0),
    ("m/s^2", Dim::Acceleration, 1.0),
    ("%", Dim::None, 0.01),
];

fn unit_of(dim: Dim) -> &'static str {
    match dim {
        Dim::None => "",
        Dim::Mass => "kg",
        Dim::Length => "m",
        Dim::Angle => "rad",
        Dim::Time => "s",
        Dim::Frequency => "Hz",
        Dim::LinearStiffness => "N/m",
        Dim::RotaryStiffness => "N*m/rad",
        Dim::Torque => "N*m",
        Dim::Pressure => "Pa",
        Dim::Inertia => "kg*m^2",
        Dim::Damping => "N*s/m",
        Dim::RotaryDamping => "N*m*s/rad",
        Dim::Velocity => "m/s",
        Dim::Acceleration => "m/s^2",
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Scalar(Dim),
    List(Dim),
    Integer,
    Bool,
    Word,
}

const KEYS: &[(&str, Kind)] = &[
    ("config", Kind::Word),
    ("total_mass", Kind::Scalar(Dim::Mass)),
    ("trunk_mass_fraction", Kind::Scalar(Dim::None)),
    ("segment_lengths", Kind::List(Dim::Length)),
    ("resting_joint_angles", Kind::List(Dim::Angle)),
    ("knee_stiffness", Kind::Scalar(Dim::LinearStiffness)),
    ("knee_cam_radius", Kind::Scalar(Dim::Length)),
    ("biarticular_stiffness", Kind::Scalar(Dim::LinearStiffness)),
    ("biarticular_insertion_radius", Kind::Scalar(Dim::Length)),
    ("selda_stiffness", Kind::Scalar(Dim::RotaryStiffness)),
    ("selda_bias_torque", Kind::Scalar(Dim::Torque)),
    ("selda_pulley_radius", Kind::Scalar(Dim::Length)),
    ("selda_coupling_ratio", Kind::Scalar(Dim::None)),
    ("selda_spring", Kind::Word),
    ("selda_precharge_pressure", Kind::Scalar(Dim::Pressure)),
    ("selda_motor_inertia", Kind::Scalar(Dim::Inertia)),
    ("selda_motor_lag", Kind::Scalar(Dim::Time)),
    ("selda_motor_stroke", Kind::Scalar(Dim::Angle)),
    ("foot_flexion_limit", Kind::Scalar(Dim::Angle)),
    ("pantograph_stiffness", Kind::Scalar(Dim::RotaryStiffness)),
    ("motor_torque_limit", Kind::Scalar(Dim::Torque)),
    ("hip_gear_ratio", Kind::Scalar(Dim::None)),
    ("hip_armature", Kind::Scalar(Dim::Inertia)),
    ("joint_armature", Kind::Scalar(Dim::Inertia)),
    ("joint_damping", Kind::Scalar(Dim::RotaryDamping)),
    ("stop_stiffness", Kind::Scalar(Dim::RotaryStiffness)),
    ("stop_damping", Kind::Scalar(Dim::RotaryDamping)),
    ("boom_radius", Kind::Scalar(Dim::Length)),
    ("leg_resting_length", Kind::Scalar(Dim::Length)),
    ("physics_dt", Kind::Scalar(Dim::Time)),
    ("control_dt", Kind::Scalar(Dim::Time)),
    ("integrator", Kind::Word),
    ("contact_stiffness", Kind::Scalar(Dim::LinearStiffness)),
    ("contact_damping", Kind::Scalar(Dim::Damping)),
    ("friction_coefficient", Kind::Scalar(Dim::None)),
    ("friction_reg_velocity", Kind::Scalar(Dim::Velocity)),
    ("total_duration", Kind::Scalar(Dim::Time)),
    ("seed", Kind::Integer),
    ("gravity", Kind::Scalar(Dim::Acceleration)),
    ("initial_clearance", Kind::Scalar(Dim::Length)),
    ("hip_amplitude", Kind::Scalar(Dim::Angle)),
    ("hip_offset", Kind::Scalar(Dim::Angle)),
    ("hip_frequency", Kind::Scalar(Dim::Frequency)),
    ("hip_kp", Kind::Scalar(Dim::RotaryStiffness)),
    ("hip_kd", Kind::Scalar(Dim::RotaryDamping)),
    ("ankle_enabled", Kind::Bool),
    ("ankle_torque", Kind::Scalar(Dim::Torque)),
    ("ankle_timing", Kind::Word),
    ("activation_start", Kind::Scalar(Dim::None)),
    ("activation_end", Kind::Scalar(Dim::None)),
];

/// Names of all recognised keys, in serialization order.
pub fn keys() -> impl Iterator<Item = &'static str> {
    KEYS.iter().map(|k| k.0)
}

enum Value {
    Numbers(Vec<f64>),
    Int(u64),
    Bool(bool),
    Word(String),
}

fn parse_value(kind: Kind, raw: &str) -> Result<Value, String> {
    match kind {
        Kind::Word => Ok(Value::Word(raw.to_string())),
        Kind::Bool => match raw.to_ascii_lowercase().as_str() {
            "true" | "yes" | "on" | "1" => Ok(Value::Bool(true)),
            "false" | "no" | "off" | "0" => Ok(Value::Bool(false)),
            _ => Err(format!("expected a boolean, got `{raw}`")),
        },
        Kind::Integer => raw.parse().map(Value::Int).map_err(|_| format!("expected an integer, got `{raw}`")),
        Kind::Scalar(dim) | Kind::List(dim) => {
            let (numbers, unit) = split_unit(raw);
            let scale = match unit {
                None => 1.0,
                Some(u) => {
                    let &(_, d, s) = UNITS.iter().find(|e| e.0 == u).ok_or_else(|| format!("unknown unit `{u}`"))?;
                    if d != dim {
                        return Err(format!("unit `{u}` does not fit a value in {}", unit_of(dim)));
                    }
                    s
                }
            };
            let mut out = Vec::new();
            for item in numbers.split(',') {
                let item = item.trim();
                let v: f64 = item.parse().map_err(|_| format!("expected a number, got `{item}`"))?;
                out.push(v * scale);
            }
            if matches!(kind, Kind::Scalar(_)) && out.len() != 1 {
                return Err("expected a single number".to_string());
            }
            Ok(Value::Numbers(out))
        }
    }
}

/// Splits a trailing unit token off a numeric value.
fn split_unit(raw: &str) -> (&str, Option<&str>) {
    let raw = raw.trim();
    if let Some(n) = raw.strip_suffix('%') {
        return (n.trim_end(), Some("%"));
    }
    match raw.rsplit_once(char::is_whitespace) {
        Some((n, u)) if u.parse::<f64>().is_err() && !n.trim_end().ends_with(',') => (n.trim_end(), Some(u)),
        _ => (raw, None),
    }
}

fn assign(set: &mut ConfigSet, key: &str, value: Value) -> Result<(), String> {
    let r = &mut set.robot;
    let s = &mut set.sim;
    let c = &mut set.controller;
    match value {
        Value::Numbers(v) => {
            let x = v[0];
            match key {
                "total_mass" => r.total_mass = x,
                "trunk_mass_fraction" => r.trunk_mass_fraction = x,
                "segment_lengths" => r.segment_lengths = v,
                "resting_joint_angles" => r.resting_joint_angles = v,
                "knee_stiffness" => r.knee_stiffness = x,
                "knee_cam_radius" => r.knee_cam_radius = x,
                "biarticular_stiffness" => r.biarticular_stiffness = x,
                "biarticular_insertion_radius" => r.biarticular_insertion_radius = x,
                "selda_stiffness" => r.selda_stiffness = x,
                "selda_bias_torque" => r.selda_bias_torque = x,
                "selda_pulley_radius" => r.selda_pulley_radius = x,
                "selda_coupling_ratio" => r.selda_coupling_ratio = x,
                "selda_precharge_pressure" => r.selda_precharge_pressure = x,
                "selda_motor_inertia" => r.selda_motor_inertia = x,
                "selda_motor_lag" => r.selda_motor_lag = x,
                "selda_motor_stroke" => r.selda_motor_stroke = x,
                "foot_flexion_limit" => r.foot_flexion_limit = x,
                "pantograph_stiffness" => r.pantograph_stiffness = x,
                "motor_torque_limit" => r.motor_torque_limit = x,
                "hip_gear_ratio" => r.hip_gear_ratio = x,
                "hip_armature" => r.hip_armature = x,
                "joint_armature" => r.joint_armature = x,
                "joint_damping" => r.joint_damping = x,
                "stop_stiffness" => r.stop_stiffness = x,
                "stop_damping" => r.stop_damping = x,
                "boom_radius" => r.boom_radius = x,
                "leg_resting_length" => r.leg_resting_length = x,
                "physics_dt" => s.physics_dt = x,
                "control_dt" => s.control_dt = x,
                "contact_stiffness" => s.contact.stiffness = x,
                "contact_damping" => s.contact.damping = x,
                "friction_coefficient" => s.contact.friction = x,
                "friction_reg_velocity" => s.contact.reg_velocity = x,
                "total_duration" => s.total_duration = x,
                "gravity" => s.gravity = x,
                "initial_clearance" => s.initial_clearance = x,
                "hip_amplitude" => c.amplitude = x,
                "hip_offset" => c.offset = x,
                "hip_frequency" => c.frequency = x,
                "hip_kp" => c.kp = x,
                "hip_kd" => c.kd = x,
                "ankle_torque" => c.ankle_torque = x,
                "activation_start" => c.activation_start = x,
                "activation_end" => c.activation_end = x,
                _ => unreachable!("numeric key {key}"),
            }
        }
        Value::Int(n) => s.seed = n,
        Value::Bool(b) => c.ankle_enabled = b,
        Value::Word(w) => match key {
            "config" => {}
            "selda_spring" => r.selda_spring = w.parse().map_err(|_| format!("unknown spring model `{w}`"))?,
            "integrator" => s.integrator = w.parse().map_err(|_| format!("unknown integrator `{w}`"))?,
            "ankle_timing" => c.ankle_timing = w.parse().map_err(|_| format!("unknown ankle timing `{w}`"))?,
            _ => unreachable!("word key {key}"),
        },
    }
    Ok(())
}

fn split_line(line: &str) -> Option<(&str, &str)> {
    let line = line.split('#').next().unwrap_or("").trim();
    if line.is_empty() {
        return None;
    }
    Some(match line.split_once('=') {
        Some((k, v)) => (k.trim(), v.trim()),
        None => (line, ""),
    })
}

/// Applies one `key = value` pair on top of `set` without validating.
pub fn apply(set: &mut ConfigSet, key: &str, value: &str) -> Result<(), ConfigError> {
    apply_at(set, key, value, 0)
}

fn apply_at(set: &mut ConfigSet, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    let &(_, kind) =
        KEYS.iter().find(|k| k.0 == key).ok_or_else(|| ConfigError::UnknownKey { line, key: key.to_string() })?;
    if value.is_empty() {
        return Err(ConfigError::Parse { line, message: format!("missing value for `{key}`") });
    }
    let parsed = parse_value(kind, value).map_err(|m| ConfigError::Parse { line, message: format!("{key}: {m}") })?;
    if key == "config" {
        let leg: LegConfig =
            value.parse().map_err(|_| ConfigError::Parse { line, message: format!("unknown leg config `{value}`") })?;
        set.robot = default_params(leg);
        return Ok(());
    }
    assign(set, key, parsed).map_err(|m| ConfigError::Parse { line, message: format!("{key}: {m}") })
}

/// Parses config text without validating the result. Unspecified keys keep
/// the defaults of the selected leg (B when no `config` line is given).
pub fn parse_unvalidated(text: &str) -> Result<ConfigSet, ConfigError> {
    let mut set = ConfigSet::defaults(LegConfig::B);
    // the base config applies first wherever it appears
    for (i, line) in text.lines().enumerate() {
        if let Some(("config", v)) = split_line(line) {
            apply_at(&mut set, "config", v, i + 1)?;
        }
    }
    for (i, line) in text.lines().enumerate() {
        if let Some((k, v)) = split_line(line) {
            if k != "config" {
                apply_at(&mut set, k, v, i + 1)?;
            }
        }
    }
    Ok(set)
}

/// Parses and validates config text.
pub fn parse(text: &str) -> Result<ConfigSet, ConfigError> {
    let set = parse_unvalidated(text)?;
    set.validate()?;
    Ok(set)
}

/// Writes every key in SI units. Floats use the shortest representation that
/// reads back bit-identical.
pub fn serialize(set: &ConfigSet) -> String {
    let mut out = String::new();
    let r = &set.robot;
    let s = &set.sim;
    let c = &set.controller;
    let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    for &(key, kind) in KEYS {
        let value = match key {
            "config" => r.leg_config().label().to_string(),
            "segment_lengths" => list(&r.segment_lengths),
            "resting_joint_angles" => list(&r.resting_joint_angles),
            "selda_spring" => r.selda_spring.name().to_string(),
            "integrator" => s.integrator.name().to_string(),
            "ankle_timing" => c.ankle_timing.name().to_string(),
            "seed" => s.seed.to_string(),
            "ankle_enabled" => c.ankle_enabled.to_string(),
            _ => {
                let x = match key {
                    "total_mass" => r.total_mass,
                    "trunk_mass_fraction" => r.trunk_mass_fraction,
                    "knee_stiffness" => r.knee_stiffness,
                    "knee_cam_radius" => r.knee_cam_radius,
                    "biarticular_stiffness" => r.biarticular_stiffness,
                    "biarticular_insertion_radius" => r.biarticular_insertion_radius,
                    "selda_stiffness" => r.selda_stiffness,
                    "selda_bias_torque" => r.selda_bias_torque,
                    "selda_pulley_radius" => r.selda_pulley_radius,
                    "selda_coupling_ratio" => r.selda_coupling_ratio,
                    "selda_precharge_pressure" => r.selda_precharge_pressure,
                    "selda_motor_inertia" => r.selda_motor_inertia,
                    "selda_motor_lag" => r.selda_motor_lag,
                    "selda_motor_stroke" => r.selda_motor_stroke,
                    "foot_flexion_limit" => r.foot_flexion_limit,
                    "pantograph_stiffness" => r.pantograph_stiffness,
                    "motor_torque_limit" => r.motor_torque_limit,
                    "hip_gear_ratio" => r.hip_gear_ratio,
                    "hip_armature" => r.hip_armature,
                    "joint_armature" => r.joint_armature,
                    "joint_damping" => r.joint_damping,
                    "stop_stiffness" => r.stop_stiffness,
                    "stop_damping" => r.stop_damping,
                    "boom_radius" => r.boom_radius,
                    "leg_resting_length" => r.leg_resting_length,
                    "physics_dt" => s.physics_dt,
                    "control_dt" => s.control_dt,
                    "contact_stiffness" => s.contact.stiffness,
                    "contact_damping" => s.contact.damping,
                    "friction_coefficient" => s.contact.friction,
                    "friction_reg_velocity" => s.contact.reg_velocity,
                    "total_duration" => s.total_duration,
                    "gravity" => s.gravity,
                    "initial_clearance" => s.initial_clearance,
                    "hip_amplitude" => c.amplitude,
                    "hip_offset" => c.offset,
                    "hip_frequency" => c.frequency,
                    "hip_kp" => c.kp,
                    "hip_kd" => c.kd,
                    "ankle_torque" => c.ankle_torque,
                    "activation_start" => c.activation_start,
                    "activation_end" => c.activation_end,
                    _ => unreachable!("unserialized key {key}"),
                };
                format!("{x:?}")
            }
        };
        let unit = match kind {
            Kind::Scalar(d) | Kind::List(d) => unit_of(d),
            _ => "",
        };
        let _ =
            if unit.is_empty() { writeln!(out, "{key} = {value}") } else { writeln!(out, "{key} = {value} {unit}") };
    }
    out
}
