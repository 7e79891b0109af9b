//! Feedforward gait control: a sinusoidal hip reference tracked by a PD law
//! and a timed step torque on the ankle motor.
//!
//! The cycle phase is `frac(t·f)`. Phase zero is the upward zero crossing of
//! the hip reference, where the leg starts swinging rearward.

use core::f64::consts::TAU;
use core::fmt;

use libm::{cos, floor, sin};

/// Which clock the ankle activation window refers to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AnkleTiming {
    /// Phase of the open-loop hip oscillator.
    #[default]
    Clock,
    /// Time since the most recent touchdown, in units of the cycle period.
    Touchdown,
}

impl AnkleTiming {
    pub fn name(self) -> &'static str {
        match self {
            AnkleTiming::Clock => "clock",
            AnkleTiming::Touchdown => "touchdown",
        }
    }
}

impl core::str::FromStr for AnkleTiming {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "clock" => Ok(AnkleTiming::Clock),
            "touchdown" => Ok(AnkleTiming::Touchdown),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControllerConfig {
    /// Hip swing amplitude [rad].
    pub amplitude: f64,
    /// Constant added to the hip reference [rad]. Negative values bias
    /// the swing forward, which sets the walking direction.
    pub offset: f64,
    /// Oscillation frequency [Hz].
    pub frequency: f64,
    /// Proportional gain at the hip joint [N·m/rad].
    pub kp: f64,
    /// Derivative gain at the hip joint [N·m·s/rad].
    pub kd: f64,
    /// Ankle motor step torque [N·m].
    pub ankle_torque: f64,
    /// Cycle fraction where the ankle torque switches on.
    pub activation_start: f64,
    /// Cycle fraction where the ankle torque switches off.
    pub activation_end: f64,
    pub ankle_enabled: bool,
    pub ankle_timing: AnkleTiming,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            amplitude: 18.0 * core::f64::consts::PI / 180.0,
            offset: -0.47,
            frequency: 1.65,
            kp: 40.0,
            kd: 0.35,
            ankle_torque: 1.0,
            activation_start: 0.20,
            activation_end: 0.5,
            ankle_enabled: false,
            ankle_timing: AnkleTiming::Clock,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ControlError {
    pub key: &'static str,
    pub reason: &'static str,
}

impl fmt::Display for ControlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid value for `{}`: {}", self.key, self.reason)
    }
}

impl core::error::Error for ControlError {}

impl ControllerConfig {
    /// Step cycle period [s].
    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    /// Active ankle configuration with the given activation start.
    pub fn with_ankle_timing(mut self, start: f64) -> Self {
        self.ankle_enabled = true;
        self.activation_start = start;
        self
    }

    pub fn passive(mut self) -> Self {
        self.ankle_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let err = |key, reason| Err(ControlError { key, reason });
        if !(self.frequency.is_finite() && self.frequency > 0.0) {
            return err("hip_frequency", "must be > 0");
        }
        if !self.amplitude.is_finite() {
            return err("hip_amplitude", "must be finite");
        }
        if !self.offset.is_finite() {
            return err("hip_offset", "must be finite");
        }
        if !(self.kp.is_finite() && self.kp >= 0.0) {
            return err("hip_kp", "must be >= 0");
        }
        if !(self.kd.is_finite() && self.kd >= 0.0) {
            return err("hip_kd", "must be >= 0");
        }
        if !self.ankle_torque.is_finite() {
            return err("ankle_torque", "must be finite");
        }
        if !(self.activation_start >= 0.0 && self.activation_start < self.activation_end) {
            return err("activation_start", "must satisfy 0 <= start < end");
        }
        if !(self.activation_end <= 1.0) {
            return err("activation_end", "must be <= 1");
        }
        Ok(())
    }
}

/// Fractional part of `t·f`, in `[0, 1)`.
pub fn cycle_phase(t: f64, frequency: f64) -> f64 {
    let c = t * frequency;
    let ph = c - floor(c);
    if ph >= 1.0 {
        0.0
    } else {
        ph
    }
}

/// Hip angle reference `offset + A·sin(2π·f·t)` [rad].
pub fn hip_reference(t: f64, cfg: &ControllerConfig) -> f64 {
    cfg.offset + cfg.amplitude * sin(TAU * cycle_phase(t, cfg.frequency))
}

/// Analytic time derivative of [`hip_reference`] [rad/s].
pub fn hip_reference_rate(t: f64, cfg: &ControllerConfig) -> f64 {
    TAU * cfg.frequency * cfg.amplitude * cos(TAU * cycle_phase(t, cfg.frequency))
}

/// PD tracking torque at the hip, saturated at `±limit` [N·m].
pub fn hip_pd_torque(
    reference: f64,
    angle: f64,
    reference_rate: f64,
    rate: f64,
    cfg: &ControllerConfig,
    limit: f64,
) -> f64 {
    let e = reference - angle;
    let de = reference_rate - rate;
    (cfg.kp * e + cfg.kd * de).clamp(-limit, limit)
}

/// Whether a cycle phase falls inside the half-open activation window.
pub fn ankle_window_active(phase: f64, cfg: &ControllerConfig) -> bool {
    cfg.ankle_enabled && phase >= cfg.activation_start && phase < cfg.activation_end
}

/// Ankle motor torque reference on the open-loop clock [N·m].
pub fn ankle_command(t: f64, cfg: &ControllerConfig) -> f64 {
    if ankle_window_active(cycle_phase(t, cfg.frequency), cfg) {
        cfg.ankle_torque
    } else {
        0.0
    }
}

/// Controller outputs held between control ticks.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ControlOutput {
    /// Saturated hip torque [N·m].
    pub hip_torque: f64,
    /// Saturated ankle motor torque reference [N·m].
    pub ankle_command: f64,
    /// Hip reference at the tick [rad].
    pub hip_reference: f64,
    /// Cycle phase used by the ankle law.
    pub phase: f64,
}

/// Sampled gait controller. Keeps the last touchdown time for the
/// touchdown-referenced ankle timing.
#[derive(Clone, Debug)]
pub struct GaitController {
    pub cfg: ControllerConfig,
    hip_limit: f64,
    ankle_limit: f64,
    last_touchdown: Option<f64>,
    was_in_contact: bool,
}

impl GaitController {
    pub fn new(cfg: ControllerConfig, hip_limit: f64, ankle_limit: f64) -> Self {
        GaitController { cfg, hip_limit, ankle_limit, last_touchdown: None, was_in_contact: false }
    }

    pub fn update(&mut self, t: f64, hip_angle: f64, hip_rate: f64, in_contact: bool) -> ControlOutput {
        if in_contact && !self.was_in_contact {
            self.last_touchdown = Some(t);
        }
        self.was_in_contact = in_contact;

        let cfg = &self.cfg;
        let reference = hip_reference(t, cfg);
        let hip_torque = hip_pd_torque(reference, hip_angle, hip_reference_rate(t, cfg), hip_rate, cfg, self.hip_limit);
        let (phase, ankle) = match cfg.ankle_timing {
            AnkleTiming::Clock => {
                let ph = cycle_phase(t, cfg.frequency);
                (ph, ankle_command(t, cfg))
            }
            AnkleTiming::Touchdown => match self.last_touchdown {
                Some(td) => {
                    let ph = cycle_phase(t - td, cfg.frequency);
                    let on = ankle_window_active(ph, cfg) && (t - td) * cfg.frequency < 1.0;
                    (ph, if on { cfg.ankle_torque } else { 0.0 })
                }
                None => (cycle_phase(t, cfg.frequency), 0.0),
            },
        };
        ControlOutput {
            hip_torque,
            ankle_command: ankle.clamp(-self.ankle_limit, self.ankle_limit),
            hip_reference: reference,
            phase,
        }
    }
}
