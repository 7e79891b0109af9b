//! Planar dynamics, control laws and gait analysis for a compliant hopping leg
//! mounted on a rotating boom, whose distal foot joint is driven through a
//! pre-pressurized pneumatic rolling-diaphragm line acting as a series spring.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches files,
//! threads or the command line lives in the `selda-sim` companion crate.
//!
//! Module map:
//!
//! - [`params`]: robot parameters, simulation settings and the two leg
//!   configurations.
//! - [`config`]: the key-value config text format.
//! - [`kinematics`]: forward kinematics of the serial chain, biarticular
//!   spring geometry and the boom-to-plane mapping.
//! - [`elastics`]: knee cam spring, biarticular spring and the pneumatic
//!   series-elastic ankle transmission.
//! - [`dynamics`]: equations of motion, ground contact and fixed-step
//!   integration.
//! - [`control`]: sinusoidal hip reference with PD tracking and the ankle
//!   step-torque timing law.
//! - [`gait`]: trajectory logs, trial runner, step detection and metrics.

#![no_std]
#![warn(missing_debug_implementations)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod config;
pub mod control;
pub mod dynamics;
pub mod elastics;
pub mod gait;
pub mod kinematics;
pub mod linalg;
pub mod params;

pub use config::{ConfigError, ConfigSet};
pub use control::{AnkleTiming, ControlOutput, ControllerConfig};
pub use dynamics::{ContactPoint, Model, SimError, SimState};
pub use elastics::{SeldaSpring, SeldaState};
pub use gait::{GaitMetrics, StepWindow, TrajectoryLog};
pub use kinematics::{BoomState, JointState};
pub use params::{Integrator, LegConfig, ParamError, RobotParams, SimSettings};

/// Standard gravity [m/s²].
pub const GRAVITY: f64 = 9.81;
