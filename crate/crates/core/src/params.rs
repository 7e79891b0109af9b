//! Physical parameters of the two leg configurations and simulation settings.
//!
//! Everything is stored in SI units (m, kg, s, N, rad). Unit conversion from
//! the mixed units of a config file happens once, at parse time, in
//! [`crate::config`].

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::elastics::SeldaSpring;

/// Leg topology.
///
/// `A` is the three-segment pantograph leg; `B` appends an actuated foot
/// segment driven by the pneumatic series-elastic transmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LegConfig {
    A,
    B,
}

impl LegConfig {
    pub fn label(self) -> &'static str {
        match self {
            LegConfig::A => "A",
            LegConfig::B => "B",
        }
    }
}

impl core::str::FromStr for LegConfig {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim() {
            "A" | "a" => Ok(LegConfig::A),
            "B" | "b" => Ok(LegConfig::B),
            _ => Err(()),
        }
    }
}

/// Fixed-step integration scheme.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Integrator {
    /// Velocity first, then position with the new velocity (symplectic Euler).
    #[default]
    SemiImplicitEuler,
    /// Classic fourth-order Runge-Kutta.
    Rk4,
}

impl Integrator {
    pub fn name(self) -> &'static str {
        match self {
            Integrator::SemiImplicitEuler => "semi_implicit_euler",
            Integrator::Rk4 => "rk4",
        }
    }
}

impl core::str::FromStr for Integrator {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "semi_implicit_euler" | "semiimpliciteuler" | "euler" | "symplectic_euler" => {
                Ok(Integrator::SemiImplicitEuler)
            }
            "rk4" => Ok(Integrator::Rk4),
            _ => Err(()),
        }
    }
}

/// A parameter failed validation. `key` is the config-file key of the
/// offending value.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamError {
    pub key: &'static str,
    pub reason: &'static str,
}

impl fmt::Display for ParamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid value for `{}`: {}", self.key, self.reason)
    }
}

impl core::error::Error for ParamError {}

fn check(ok: bool, key: &'static str, reason: &'static str) -> Result<(), ParamError> {
    if ok {
        Ok(())
    } else {
        Err(ParamError { key, reason })
    }
}

fn positive(v: f64, key: &'static str) -> Result<(), ParamError> {
    check(v.is_finite() && v > 0.0, key, "must be a finite value > 0")
}

fn non_negative(v: f64, key: &'static str) -> Result<(), ParamError> {
    check(v.is_finite() && v >= 0.0, key, "must be a finite value >= 0")
}

/// Robot design parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotParams {
    /// Total robot mass [kg].
    pub total_mass: f64,
    /// Share of the total mass carried by the trunk (hip point). The rest is
    /// spread over the segments proportionally to their length.
    pub trunk_mass_fraction: f64,
    /// Segment lengths from hip to tip [m]: femur, shank, ankle segment and,
    /// for configuration B, the foot.
    pub segment_lengths: Vec<f64>,
    /// Resting interior angles [rad]: knee, ankle and (B only) foot joint.
    pub resting_joint_angles: Vec<f64>,
    /// Knee spring stiffness [N/m].
    pub knee_stiffness: f64,
    /// Knee cam radius [m].
    pub knee_cam_radius: f64,
    /// Biarticular spring stiffness [N/m].
    pub biarticular_stiffness: f64,
    /// Biarticular spring insertion radius at knee and ankle [m].
    pub biarticular_insertion_radius: f64,
    /// Linear stiffness of the pneumatic transmission seen from the motor
    /// [N·m/rad].
    pub selda_stiffness: f64,
    /// Motor-side torque produced by the line pre-pressure [N·m].
    pub selda_bias_torque: f64,
    /// Pulley radius on both ends of the transmission [m].
    pub selda_pulley_radius: f64,
    /// Foot rotation per unit of motor rotation.
    pub selda_coupling_ratio: f64,
    /// Air-spring law of the line.
    pub selda_spring: SeldaSpring,
    /// Gauge pre-charge of the line [Pa]; used by the isothermal model.
    pub selda_precharge_pressure: f64,
    /// Ankle motor rotor inertia [kg·m²].
    pub selda_motor_inertia: f64,
    /// First-order lag between commanded and delivered motor torque [s].
    /// Zero delivers the command directly.
    pub selda_motor_lag: f64,
    /// Usable motor rotation from the pressure end-stop [rad].
    pub selda_motor_stroke: f64,
    /// Maximum foot flexion away from the extended end-stop [rad].
    pub foot_flexion_limit: f64,
    /// Torsional stiffness of the pantograph's parallel linkage against
    /// distortion, i.e. knee and ankle moving in opposite senses
    /// [N·m/rad].
    pub pantograph_stiffness: f64,
    /// Rated torque of each motor [N·m].
    pub motor_torque_limit: f64,
    /// Hip gearbox reduction.
    pub hip_gear_ratio: f64,
    /// Reflected rotor inertia at the hip joint [kg·m²].
    pub hip_armature: f64,
    /// Rotor-equivalent inertia of each passive joint [kg·m²].
    pub joint_armature: f64,
    /// Parasitic viscous damping at each passive joint and at the ankle motor
    /// [N·m·s/rad].
    pub joint_damping: f64,
    /// Stiffness of all angular end-stops [N·m/rad].
    pub stop_stiffness: f64,
    /// Damping of all angular end-stops [N·m·s/rad].
    pub stop_damping: f64,
    /// Boom rod length from pivot to hip [m].
    pub boom_radius: f64,
    /// Nominal virtual leg length at rest [m]; a calibration target only.
    pub leg_resting_length: f64,
}

impl RobotParams {
    pub fn segment_count(&self) -> usize {
        self.segment_lengths.len()
    }

    pub fn has_foot(&self) -> bool {
        self.segment_lengths.len() == 4
    }

    pub fn leg_config(&self) -> LegConfig {
        if self.has_foot() {
            LegConfig::B
        } else {
            LegConfig::A
        }
    }

    pub fn trunk_mass(&self) -> f64 {
        self.total_mass * self.trunk_mass_fraction
    }

    /// Point mass of each segment, proportional to its length.
    pub fn segment_masses(&self) -> Vec<f64> {
        let leg_mass = self.total_mass - self.trunk_mass();
        let total_len: f64 = self.segment_lengths.iter().sum();
        self.segment_lengths.iter().map(|l| leg_mass * l / total_len).collect()
    }

    /// Torque limit at the hip joint, after the gearbox [N·m].
    pub fn hip_torque_limit(&self) -> f64 {
        self.hip_gear_ratio * self.motor_torque_limit
    }

    /// Extended (end-stop) angle of the foot joint, when there is one.
    pub fn foot_extended_angle(&self) -> Option<f64> {
        if self.has_foot() {
            self.resting_joint_angles.get(2).copied()
        } else {
            None
        }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive(self.total_mass, "total_mass")?;
        check(
            self.trunk_mass_fraction > 0.0 && self.trunk_mass_fraction <= 1.0,
            "trunk_mass_fraction",
            "must lie in (0, 1]",
        )?;
        let n = self.segment_lengths.len();
        check(n == 3 || n == 4, "segment_lengths", "needs 3 (config A) or 4 (config B) entries")?;
        for (i, l) in self.segment_lengths.iter().enumerate() {
            // A zero-length foot is allowed so that configuration B can
            // degenerate into configuration A.
            if i == 3 {
                non_negative(*l, "segment_lengths")?;
            } else {
                positive(*l, "segment_lengths")?;
            }
        }
        check(
            self.resting_joint_angles.len() == n - 1,
            "resting_joint_angles",
            "needs one entry per interior joint (segments - 1)",
        )?;
        for a in &self.resting_joint_angles {
            check(a.is_finite() && *a > 0.0 && *a <= PI, "resting_joint_angles", "each angle must lie in (0, pi]")?;
        }
        positive(self.knee_stiffness, "knee_stiffness")?;
        positive(self.knee_cam_radius, "knee_cam_radius")?;
        positive(self.biarticular_stiffness, "biarticular_stiffness")?;
        positive(self.biarticular_insertion_radius, "biarticular_insertion_radius")?;
        positive(self.selda_stiffness, "selda_stiffness")?;
        non_negative(self.selda_bias_torque, "selda_bias_torque")?;
        positive(self.selda_pulley_radius, "selda_pulley_radius")?;
        positive(self.selda_coupling_ratio, "selda_coupling_ratio")?;
        non_negative(self.selda_precharge_pressure, "selda_precharge_pressure")?;
        if self.selda_spring == SeldaSpring::Isothermal {
            check(
                self.selda_precharge_pressure > 0.0 && self.selda_bias_torque > 0.0,
                "selda_spring",
                "isothermal model needs a positive pre-charge pressure and bias torque",
            )?;
        }
        positive(self.selda_motor_inertia, "selda_motor_inertia")?;
        non_negative(self.selda_motor_lag, "selda_motor_lag")?;
        positive(self.selda_motor_stroke, "selda_motor_stroke")?;
        positive(self.foot_flexion_limit, "foot_flexion_limit")?;
        non_negative(self.pantograph_stiffness, "pantograph_stiffness")?;
        positive(self.motor_torque_limit, "motor_torque_limit")?;
        positive(self.hip_gear_ratio, "hip_gear_ratio")?;
        positive(self.hip_armature, "hip_armature")?;
        positive(self.joint_armature, "joint_armature")?;
        non_negative(self.joint_damping, "joint_damping")?;
        positive(self.stop_stiffness, "stop_stiffness")?;
        non_negative(self.stop_damping, "stop_damping")?;
        positive(self.boom_radius, "boom_radius")?;
        positive(self.leg_resting_length, "leg_resting_length")?;
        Ok(())
    }
}

/// Design parameters of either leg configuration.
pub fn default_params(config: LegConfig) -> RobotParams {
    let deg = PI / 180.0;
    let (total_mass, segment_lengths, resting_joint_angles) = match config {
        LegConfig::A => (1.05, vec![0.150, 0.150, 0.150], vec![130.0 * deg, 160.0 * deg]),
        LegConfig::B => (1.20, vec![0.150, 0.150, 0.150, 0.070], vec![130.0 * deg, 160.0 * deg, PI]),
    };
    RobotParams {
        total_mass,
        trunk_mass_fraction: 0.8,
        segment_lengths,
        resting_joint_angles,
        knee_stiffness: 10.9e3,
        knee_cam_radius: 0.030,
        biarticular_stiffness: 9.8e3,
        biarticular_insertion_radius: 0.030,
        selda_stiffness: 0.15,
        selda_bias_torque: 0.15,
        selda_pulley_radius: 0.030,
        selda_coupling_ratio: 3.0,
        selda_spring: SeldaSpring::Linear,
        selda_precharge_pressure: 0.5e5,
        selda_motor_inertia: 5.0e-5,
        selda_motor_lag: 0.005,
        selda_motor_stroke: 2.0 * PI,
        foot_flexion_limit: 0.65,
        pantograph_stiffness: 240.0,
        motor_torque_limit: 1.3,
        hip_gear_ratio: 5.0,
        hip_armature: 5.0e-4,
        joint_armature: 2.0e-5,
        joint_damping: 0.03,
        stop_stiffness: 300.0,
        stop_damping: 0.02,
        boom_radius: 1.55,
        leg_resting_length: 0.408,
    }
}

/// Compliant ground contact parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactParams {
    /// Normal stiffness [N/m].
    pub stiffness: f64,
    /// Normal damping [N·s/m].
    pub damping: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Velocity scale of the tanh friction regularization [m/s].
    pub reg_velocity: f64,
}

impl Default for ContactParams {
    fn default() -> Self {
        ContactParams { stiffness: 1.5e5, damping: 250.0, friction: 0.8, reg_velocity: 0.05 }
    }
}

/// Numerical and environment settings of a trial.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimSettings {
    /// Physics step [s].
    pub physics_dt: f64,
    /// Controller period [s]; a positive integer multiple of `physics_dt`.
    pub control_dt: f64,
    pub integrator: Integrator,
    pub contact: ContactParams,
    /// Simulated duration of a trial [s].
    pub total_duration: f64,
    /// Reserved; nothing in the simulation is random.
    pub seed: u64,
    /// Gravitational acceleration [m/s²].
    pub gravity: f64,
    /// Tip height above ground at the start of a trial [m].
    pub initial_clearance: f64,
}

impl Default for SimSettings {
    fn default() -> Self {
        SimSettings {
            physics_dt: 5.0e-5,
            control_dt: 1.0e-3,
            integrator: Integrator::SemiImplicitEuler,
            contact: ContactParams::default(),
            total_duration: 20.0,
            seed: 0,
            gravity: crate::GRAVITY,
            initial_clearance: 0.005,
        }
    }
}

impl SimSettings {
    /// Physics steps per controller tick.
    pub fn substeps(&self) -> usize {
        libm::round(self.control_dt / self.physics_dt) as usize
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        positive(self.physics_dt, "physics_dt")?;
        positive(self.control_dt, "control_dt")?;
        let ratio = self.control_dt / self.physics_dt;
        let rounded = libm::round(ratio);
        check(
            rounded >= 1.0 && libm::fabs(ratio - rounded) <= 1e-9 * rounded,
            "control_dt",
            "must be a positive integer multiple of physics_dt",
        )?;
        non_negative(self.contact.stiffness, "contact_stiffness")?;
        non_negative(self.contact.damping, "contact_damping")?;
        non_negative(self.contact.friction, "contact_friction")?;
        non_negative(self.contact.reg_velocity, "contact_reg_velocity")?;
        check(
            self.contact.friction == 0.0 || self.contact.reg_velocity > 0.0,
            "contact_reg_velocity",
            "must be > 0 when friction is enabled",
        )?;
        non_negative(self.total_duration, "total_duration")?;
        non_negative(self.gravity, "gravity")?;
        non_negative(self.initial_clearance, "initial_clearance")?;
        Ok(())
    }
}
