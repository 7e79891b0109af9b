//! Equations of motion of the trunk-plus-leg system in the unrolled plane.
//!
//! Generalized coordinates are the hip position `(x, y)` followed by the
//! joint coordinates of [`crate::kinematics`]. The trunk does not rotate.
//! The trunk mass sits at the hip; each segment is a point mass at
//! mid-length, and every joint carries a small rotor inertia so the mass
//! matrix stays positive definite even for a zero-length foot.
//!
//! The ankle motor rotor is a separate one-dimensional body coupled to the
//! foot only through the pneumatic line.
//!
//! The ground is the line `y = 0`. The single contact point is the distal
//! tip of the chain.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use libm::{exp, tanh};

use crate::control::ControlOutput;
use crate::elastics::{
    biarticular_energy, biarticular_torques, end_stop_energy, end_stop_torque, knee_energy, knee_torque,
    pantograph_energy, pantograph_torques, selda_deflection, selda_energy, selda_torque, SeldaState,
};
use crate::kinematics::{
    biarticular_deflection, direction, direction_derivative, segment_angles, segment_rates, JointState, BEND,
    MAX_SEGMENTS,
};
use crate::linalg::{solve_spd, Matrix, Vector, MAX_DOF};
use crate::params::{ContactParams, Integrator, ParamError, RobotParams, SimSettings};

/// Smallest interior angle the knee and ankle can fold to [rad]; full
/// extension (π) is the other mechanical limit.
pub const JOINT_FLEXION_LIMIT: f64 = 0.35;

/// Offsets into the flat integration vector.
const Q: usize = 0;
const QD: usize = MAX_DOF;
const MOTOR_ANGLE: usize = 2 * MAX_DOF;
const MOTOR_RATE: usize = MOTOR_ANGLE + 1;
const MOTOR_TORQUE: usize = MOTOR_ANGLE + 2;
const WORK_ACTUATOR: usize = MOTOR_ANGLE + 3;
const WORK_DISSIPATED: usize = MOTOR_ANGLE + 4;
const WORK_CONTACT: usize = MOTOR_ANGLE + 5;
const STATE_LEN: usize = MOTOR_ANGLE + 6;

type Flat = [f64; STATE_LEN];

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    InvalidParams(ParamError),
    /// The mass matrix lost positive definiteness.
    SingularMassMatrix {
        t: f64,
        dump: String,
    },
    /// A state component became NaN or infinite.
    NonFinite {
        t: f64,
        dump: String,
    },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::InvalidParams(e) => write!(f, "{e}"),
            SimError::SingularMassMatrix { t, dump } => {
                write!(f, "singular mass matrix at t = {t} s; state: {dump}")
            }
            SimError::NonFinite { t, dump } => write!(f, "non-finite state at t = {t} s; state: {dump}"),
        }
    }
}

impl core::error::Error for SimError {}

impl From<ParamError> for SimError {
    fn from(e: ParamError) -> Self {
        SimError::InvalidParams(e)
    }
}

/// Energy flows accumulated since the start of a trial [J].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WorkLedger {
    /// Work done by the hip and ankle motors.
    pub actuator: f64,
    /// Energy removed by joint damping and end-stop damping (positive).
    pub dissipated: f64,
    /// Work done by ground reaction forces on the tip.
    pub contact: f64,
}

/// Full simulation state.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    /// Number of generalized coordinates in use.
    pub dof: usize,
    /// `[x, y, hip, knee, ankle, (foot)]`.
    pub q: Vector,
    pub qd: Vector,
    pub selda: SeldaState,
    pub contact: bool,
    /// Ground reaction force on the tip `(tangential, normal)` [N].
    pub grf: [f64; 2],
    /// Tip x at the most recent touchdown, while in contact [m].
    pub contact_anchor: Option<f64>,
    pub work: WorkLedger,
}

impl SimState {
    pub fn trunk_position(&self) -> [f64; 2] {
        [self.q[0], self.q[1]]
    }

    pub fn trunk_velocity(&self) -> [f64; 2] {
        [self.qd[0], self.qd[1]]
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.q[2..self.dof]
    }

    pub fn joint_velocities(&self) -> &[f64] {
        &self.qd[2..self.dof]
    }

    pub fn joint_state(&self) -> JointState {
        JointState::new(self.joint_angles().to_vec(), self.joint_velocities().to_vec())
    }

    pub fn is_finite(&self) -> bool {
        self.t.is_finite()
            && self.q[..self.dof].iter().chain(&self.qd[..self.dof]).all(|v| v.is_finite())
            && self.selda.motor_angle.is_finite()
            && self.selda.motor_velocity.is_finite()
            && self.selda.applied_torque.is_finite()
    }

    fn to_flat(&self) -> Flat {
        let mut x = [0.0; STATE_LEN];
        x[Q..Q + MAX_DOF].copy_from_slice(&self.q);
        x[QD..QD + MAX_DOF].copy_from_slice(&self.qd);
        x[MOTOR_ANGLE] = self.selda.motor_angle;
        x[MOTOR_RATE] = self.selda.motor_velocity;
        x[MOTOR_TORQUE] = self.selda.applied_torque;
        x[WORK_ACTUATOR] = self.work.actuator;
        x[WORK_DISSIPATED] = self.work.dissipated;
        x[WORK_CONTACT] = self.work.contact;
        x
    }

    fn dump(&self) -> String {
        format!(
            "t={} q={:?} qd={:?} motor=({}, {}, {})",
            self.t,
            &self.q[..self.dof],
            &self.qd[..self.dof],
            self.selda.motor_angle,
            self.selda.motor_velocity,
            self.selda.applied_torque
        )
    }
}

/// The distal contact point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactPoint {
    /// World position [m].
    pub position: [f64; 2],
    /// World velocity [m/s].
    pub velocity: [f64; 2],
    /// Depth below the ground, zero above it [m].
    pub penetration: f64,
    /// Tip x at touchdown, while in contact [m].
    pub anchor_x: Option<f64>,
}

/// Clamped Kelvin-Voigt normal force and tanh-regularized Coulomb friction.
/// Returns `(normal, tangential)` [N].
pub fn contact_force(c: &ContactPoint, contact: &ContactParams) -> (f64, f64) {
    if c.penetration <= 0.0 {
        return (0.0, 0.0);
    }
    let normal = (contact.stiffness * c.penetration - contact.damping * c.velocity[1]).max(0.0);
    let tangential = if normal > 0.0 && contact.friction > 0.0 {
        -contact.friction * normal * tanh(c.velocity[0] / contact.reg_velocity)
    } else {
        0.0
    };
    (normal, tangential)
}

/// Torques applied by the actuators, held over a physics step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AppliedTorques {
    /// Hip joint torque [N·m].
    pub hip: f64,
    /// Ankle motor torque reference [N·m].
    pub ankle_motor: f64,
}

impl From<&ControlOutput> for AppliedTorques {
    fn from(c: &ControlOutput) -> Self {
        AppliedTorques { hip: c.hip_torque, ankle_motor: c.ankle_command }
    }
}

/// Generalized accelerations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Accelerations {
    /// `[ẍ, ÿ, hip, knee, ankle, (foot)]`.
    pub qdd: Vector,
    /// Ankle motor rotor acceleration [rad/s²].
    pub motor: f64,
}

/// Kinetic and potential energy [J].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Energy {
    pub kinetic: f64,
    /// Gravity, springs, transmission and end-stops; contact excluded.
    pub potential: f64,
}

impl Energy {
    pub fn total(&self) -> f64 {
        self.kinetic + self.potential
    }
}

/// Point masses and their Jacobians at one configuration.
struct Bodies {
    /// Trunk first, then each segment.
    mass: [f64; MAX_SEGMENTS + 1],
    pos: [[f64; 2]; MAX_SEGMENTS + 1],
    /// `jac[i][c]`: derivative of body `i` position w.r.t. coordinate `c`.
    jac: [[[f64; 2]; MAX_DOF]; MAX_SEGMENTS + 1],
    /// Velocity-product acceleration of each body.
    bias: [[f64; 2]; MAX_SEGMENTS + 1],
    tip_pos: [f64; 2],
    tip_jac: [[f64; 2]; MAX_DOF],
}

/// A validated robot and its simulation settings, with derived constants.
#[derive(Clone, Debug)]
pub struct Model {
    pub params: RobotParams,
    pub settings: SimSettings,
    segments: usize,
    dof: usize,
    lengths: [f64; MAX_SEGMENTS],
    masses: [f64; MAX_SEGMENTS + 1],
    armature: Vector,
    total_mass: f64,
}

impl Model {
    pub fn new(params: RobotParams, settings: SimSettings) -> Result<Self, ParamError> {
        params.validate()?;
        settings.validate()?;
        let segments = params.segment_count();
        let mut lengths = [0.0; MAX_SEGMENTS];
        lengths[..segments].copy_from_slice(&params.segment_lengths);
        let mut masses = [0.0; MAX_SEGMENTS + 1];
        masses[0] = params.trunk_mass();
        for (i, m) in params.segment_masses().into_iter().enumerate() {
            masses[i + 1] = m;
        }
        let mut armature = [0.0; MAX_DOF];
        armature[2] = params.hip_armature;
        for a in armature.iter_mut().take(2 + segments).skip(3) {
            *a = params.joint_armature;
        }
        Ok(Model {
            total_mass: params.total_mass,
            segments,
            dof: 2 + segments,
            lengths,
            masses,
            armature,
            params,
            settings,
        })
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn has_foot(&self) -> bool {
        self.segments == 4
    }

    /// Leg at its resting pose with the given hip angle, at rest, tip
    /// `initial_clearance` above the ground.
    pub fn initial_state(&self, hip: f64) -> SimState {
        let mut q = [0.0; MAX_DOF];
        q[2] = hip;
        q[3..2 + self.segments].copy_from_slice(&self.params.resting_joint_angles);
        let phi = segment_angles(&q[2..self.dof]);
        let drop: f64 = (0..self.segments).map(|k| self.lengths[k] * direction(phi[k])[1]).sum();
        q[1] = -drop + self.settings.initial_clearance;
        let mut s = SimState {
            t: 0.0,
            dof: self.dof,
            q,
            qd: [0.0; MAX_DOF],
            selda: SeldaState::default(),
            contact: false,
            grf: [0.0; 2],
            contact_anchor: None,
            work: WorkLedger::default(),
        };
        self.refresh_observables(&mut s, None);
        s
    }

    fn bodies(&self, q: &Vector, qd: &Vector) -> Bodies {
        let n = self.segments;
        let joints = &q[2..self.dof];
        let phi = segment_angles(joints);
        let omega = segment_rates(&qd[2..self.dof]);

        // d(phi_k)/d(joint_c)
        let mut dphi = [[0.0; MAX_SEGMENTS]; MAX_SEGMENTS];
        for k in 0..n {
            dphi[k][0] = 1.0;
            for c in 1..=k {
                dphi[k][c] = -BEND[c - 1];
            }
        }
        let mut seg = [[0.0; 2]; MAX_SEGMENTS];
        let mut seg_d = [[0.0; 2]; MAX_SEGMENTS];
        let mut seg_acc = [[0.0; 2]; MAX_SEGMENTS];
        for k in 0..n {
            let u = direction(phi[k]);
            let du = direction_derivative(phi[k]);
            let l = self.lengths[k];
            seg[k] = [l * u[0], l * u[1]];
            seg_d[k] = [l * du[0], l * du[1]];
            let w2 = omega[k] * omega[k];
            seg_acc[k] = [-l * u[0] * w2, -l * u[1] * w2];
        }

        let base = [q[0], q[1]];
        let mut b = Bodies {
            mass: self.masses,
            pos: [[0.0; 2]; MAX_SEGMENTS + 1],
            jac: [[[0.0; 2]; MAX_DOF]; MAX_SEGMENTS + 1],
            bias: [[0.0; 2]; MAX_SEGMENTS + 1],
            tip_pos: base,
            tip_jac: [[0.0; 2]; MAX_DOF],
        };
        for i in 0..=n {
            b.pos[i] = base;
            b.jac[i][0] = [1.0, 0.0];
            b.jac[i][1] = [0.0, 1.0];
        }
        b.tip_jac[0] = [1.0, 0.0];
        b.tip_jac[1] = [0.0, 1.0];

        for k in 0..n {
            // segment k contributes fully to bodies beyond it, half to its own
            for i in (k + 1)..=n {
                let w = if i == k + 1 { 0.5 } else { 1.0 };
                b.pos[i][0] += w * seg[k][0];
                b.pos[i][1] += w * seg[k][1];
                b.bias[i][0] += w * seg_acc[k][0];
                b.bias[i][1] += w * seg_acc[k][1];
                for c in 0..n {
                    let d = dphi[k][c];
                    if d != 0.0 {
                        b.jac[i][2 + c][0] += w * seg_d[k][0] * d;
                        b.jac[i][2 + c][1] += w * seg_d[k][1] * d;
                    }
                }
            }
            b.tip_pos[0] += seg[k][0];
            b.tip_pos[1] += seg[k][1];
            for c in 0..n {
                let d = dphi[k][c];
                if d != 0.0 {
                    b.tip_jac[2 + c][0] += seg_d[k][0] * d;
                    b.tip_jac[2 + c][1] += seg_d[k][1] * d;
                }
            }
        }
        b
    }

    fn mass_matrix_of(&self, b: &Bodies) -> Matrix {
        let n = self.dof;
        let mut m = [[0.0; MAX_DOF]; MAX_DOF];
        for i in 0..=self.segments {
            let mi = b.mass[i];
            if mi == 0.0 {
                continue;
            }
            for r in 0..n {
                let jr = b.jac[i][r];
                for c in r..n {
                    let jc = b.jac[i][c];
                    m[r][c] += mi * (jr[0] * jc[0] + jr[1] * jc[1]);
                }
            }
        }
        for r in 0..n {
            m[r][r] += self.armature[r];
            for c in 0..r {
                m[r][c] = m[c][r];
            }
        }
        m
    }

    /// Mass matrix of the chain at a configuration.
    pub fn mass_matrix(&self, state: &SimState) -> Matrix {
        self.mass_matrix_of(&self.bodies(&state.q, &state.qd))
    }

    /// The distal contact point at a state.
    pub fn contact_point(&self, state: &SimState) -> ContactPoint {
        let b = self.bodies(&state.q, &state.qd);
        let v = tip_velocity(&b, &state.qd, self.dof);
        ContactPoint {
            position: b.tip_pos,
            velocity: v,
            penetration: (-b.tip_pos[1]).max(0.0),
            anchor_x: state.contact_anchor,
        }
    }

    /// Femur angle at which the resting leg's hip-to-tip line is vertical.
    /// The hip controller measures its angle from here.
    pub fn hip_zero(&self) -> f64 {
        let mut joints = [0.0; MAX_SEGMENTS];
        joints[1..self.segments].copy_from_slice(&self.params.resting_joint_angles);
        let phi = segment_angles(&joints[..self.segments]);
        let (mut dx, mut dy) = (0.0, 0.0);
        for k in 0..self.segments {
            let u = direction(phi[k]);
            dx += self.lengths[k] * u[0];
            dy += self.lengths[k] * u[1];
        }
        -libm::atan2(-dx, -dy)
    }

    /// Angle of the hip-to-tip line from the downward vertical, positive
    /// behind, and its rate.
    pub fn virtual_leg(&self, state: &SimState) -> (f64, f64) {
        let tip = self.contact_point(state);
        let dx = tip.position[0] - state.q[0];
        let dy = tip.position[1] - state.q[1];
        let vx = tip.velocity[0] - state.qd[0];
        let vy = tip.velocity[1] - state.qd[1];
        let r2 = dx * dx + dy * dy;
        (libm::atan2(-dx, -dy), (dy * vx - dx * vy) / r2)
    }

    /// Centre of mass of trunk and leg [m].
    pub fn center_of_mass(&self, state: &SimState) -> [f64; 2] {
        let b = self.bodies(&state.q, &state.qd);
        let mut c = [0.0; 2];
        for i in 0..=self.segments {
            c[0] += b.mass[i] * b.pos[i][0];
            c[1] += b.mass[i] * b.pos[i][1];
        }
        [c[0] / self.total_mass, c[1] / self.total_mass]
    }

    /// Total linear momentum of trunk and leg [kg·m/s].
    pub fn linear_momentum(&self, state: &SimState) -> [f64; 2] {
        let b = self.bodies(&state.q, &state.qd);
        let mut p = [0.0; 2];
        for i in 0..=self.segments {
            let mut v = [0.0; 2];
            for c in 0..self.dof {
                v[0] += b.jac[i][c][0] * state.qd[c];
                v[1] += b.jac[i][c][1] * state.qd[c];
            }
            p[0] += b.mass[i] * v[0];
            p[1] += b.mass[i] * v[1];
        }
        p
    }

    /// Mechanical energy of the system, contact spring excluded.
    pub fn energy(&self, state: &SimState) -> Energy {
        let b = self.bodies(&state.q, &state.qd);
        let m = self.mass_matrix_of(&b);
        let n = self.dof;
        let mut kinetic = 0.0;
        for r in 0..n {
            for c in 0..n {
                kinetic += 0.5 * state.qd[r] * m[r][c] * state.qd[c];
            }
        }
        let p = &self.params;
        let g = self.settings.gravity;
        let mut potential = 0.0;
        for i in 0..=self.segments {
            potential += b.mass[i] * g * b.pos[i][1];
        }
        let knee = state.q[3];
        let ankle = state.q[4];
        potential += knee_energy(knee, p) + biarticular_energy(biarticular_deflection(knee, ankle, p), p);
        potential += pantograph_energy(knee, ankle, p);
        for c in 3..2 + self.segments.min(3) {
            potential +=
                end_stop_energy(state.q[c], PI, -1.0, p) + end_stop_energy(state.q[c], JOINT_FLEXION_LIMIT, 1.0, p);
        }
        if self.has_foot() {
            kinetic += 0.5 * p.selda_motor_inertia * state.selda.motor_velocity * state.selda.motor_velocity;
            let foot = state.q[5];
            let motor = state.selda.motor_angle;
            potential += selda_energy(motor, foot, p);
            let ext = self.foot_extended();
            potential += end_stop_energy(foot, ext, -1.0, p);
            potential += end_stop_energy(foot, ext - p.foot_flexion_limit, 1.0, p);
            potential += end_stop_energy(motor, 0.0, 1.0, p);
            potential += end_stop_energy(motor, p.selda_motor_stroke, -1.0, p);
        }
        Energy { kinetic, potential }
    }

    fn foot_extended(&self) -> f64 {
        self.params.resting_joint_angles[2]
    }

    /// Time derivative of the flat state.
    fn derivatives(&self, x: &Flat, u: &AppliedTorques, t: f64) -> Result<Flat, SimError> {
        let p = &self.params;
        let n = self.dof;
        let mut q = [0.0; MAX_DOF];
        let mut qd = [0.0; MAX_DOF];
        q.copy_from_slice(&x[Q..Q + MAX_DOF]);
        qd.copy_from_slice(&x[QD..QD + MAX_DOF]);
        let b = self.bodies(&q, &qd);
        let m = self.mass_matrix_of(&b);

        let mut force = [0.0; MAX_DOF];
        let mut p_actuator = 0.0;
        let mut p_nonconservative = 0.0;

        // gravity and velocity-product terms
        let g = self.settings.gravity;
        for i in 0..=self.segments {
            let mi = b.mass[i];
            for c in 0..n {
                let j = b.jac[i][c];
                force[c] -= mi * (j[1] * g + j[0] * b.bias[i][0] + j[1] * b.bias[i][1]);
            }
        }

        // hip actuator
        force[2] += u.hip;
        p_actuator += u.hip * qd[2];

        // knee and biarticular springs, joint damping
        let (knee, ankle) = (q[3], q[4]);
        let (bk, ba) = biarticular_torques(biarticular_deflection(knee, ankle, p), p);
        let (pk, pa) = pantograph_torques(knee, ankle, p);
        force[3] += knee_torque(knee, 0.0, p) + bk + pk;
        force[4] += ba + pa;
        for c in 3..n {
            let damping = -p.joint_damping * qd[c];
            force[c] += damping;
            p_nonconservative += damping * qd[c];
        }
        for c in 3..2 + self.segments.min(3) {
            let (t_stop, nc_stop) = self.stops(q[c], qd[c], JOINT_FLEXION_LIMIT, PI);
            force[c] += t_stop;
            p_nonconservative += nc_stop * qd[c];
        }

        // pneumatic ankle transmission and end-stops
        let mut motor_acc = 0.0;
        let mut lag_rate = 0.0;
        if self.has_foot() {
            let foot = q[5];
            let foot_rate = qd[5];
            let motor = x[MOTOR_ANGLE];
            let motor_rate = x[MOTOR_RATE];
            let selda = selda_torque(&SeldaState { motor_angle: motor, ..Default::default() }, foot, p);
            force[5] += selda.foot;

            let ext = self.foot_extended();
            let (t_foot, nc_foot) = self.stops(foot, foot_rate, ext - p.foot_flexion_limit, ext);
            force[5] += t_foot;
            p_nonconservative += nc_foot * foot_rate;

            let (t_motor, nc_motor) = self.stops(motor, motor_rate, 0.0, p.selda_motor_stroke);
            let applied = x[MOTOR_TORQUE];
            let motor_damping = -p.joint_damping * motor_rate;
            motor_acc = (applied + selda.motor_reaction + t_motor + motor_damping) / p.selda_motor_inertia;
            p_actuator += applied * motor_rate;
            p_nonconservative += (nc_motor + motor_damping) * motor_rate;

            if p.selda_motor_lag > 0.0 {
                lag_rate = (u.ankle_motor - applied) / p.selda_motor_lag;
            }
        }

        // ground contact at the tip
        let v_tip = tip_velocity(&b, &qd, n);
        let cp = ContactPoint {
            position: b.tip_pos,
            velocity: v_tip,
            penetration: (-b.tip_pos[1]).max(0.0),
            anchor_x: None,
        };
        let (fn_, ft) = contact_force(&cp, &self.settings.contact);
        for c in 0..n {
            force[c] += b.tip_jac[c][0] * ft + b.tip_jac[c][1] * fn_;
        }
        let p_contact = ft * v_tip[0] + fn_ * v_tip[1];

        let qdd = solve_spd(&m, &force, n)
            .ok_or_else(|| SimError::SingularMassMatrix { t, dump: format!("q={:?} qd={:?}", &q[..n], &qd[..n]) })?;

        let mut dx = [0.0; STATE_LEN];
        dx[Q..Q + n].copy_from_slice(&qd[..n]);
        dx[QD..QD + n].copy_from_slice(&qdd[..n]);
        dx[MOTOR_ANGLE] = x[MOTOR_RATE];
        dx[MOTOR_RATE] = motor_acc;
        dx[MOTOR_TORQUE] = lag_rate;
        dx[WORK_ACTUATOR] = p_actuator;
        dx[WORK_DISSIPATED] = -p_nonconservative;
        dx[WORK_CONTACT] = p_contact;
        Ok(dx)
    }

    /// Lower and upper end-stop torque on a coordinate, and its
    /// non-conservative (damping) part.
    fn stops(&self, angle: f64, rate: f64, lower: f64, upper: f64) -> (f64, f64) {
        let p = &self.params;
        let lo = end_stop_torque(angle, rate, lower, 1.0, p);
        let hi = end_stop_torque(angle, rate, upper, -1.0, p);
        let spring_lo = if angle < lower { p.stop_stiffness * (lower - angle) } else { 0.0 };
        let spring_hi = if angle > upper { -p.stop_stiffness * (angle - upper) } else { 0.0 };
        (lo + hi, (lo - spring_lo) + (hi - spring_hi))
    }

    /// Generalized accelerations for a state under the given actuator
    /// torques. The ankle motor torque is taken as delivered.
    pub fn compute_accelerations(&self, state: &SimState, torques: &AppliedTorques) -> Result<Accelerations, SimError> {
        let mut x = state.to_flat();
        x[MOTOR_TORQUE] = torques.ankle_motor;
        let dx = self.derivatives(&x, torques, state.t)?;
        let mut qdd = [0.0; MAX_DOF];
        qdd.copy_from_slice(&dx[QD..QD + MAX_DOF]);
        Ok(Accelerations { qdd, motor: dx[MOTOR_RATE] })
    }

    /// Rate of change of mechanical energy accounted for by actuator power,
    /// contact power and dissipation at a state [W]:
    /// `(actuator, contact, dissipation)`.
    pub fn power_flows(&self, state: &SimState, torques: &AppliedTorques) -> Result<(f64, f64, f64), SimError> {
        let mut x = state.to_flat();
        x[MOTOR_TORQUE] = torques.ankle_motor;
        let dx = self.derivatives(&x, torques, state.t)?;
        Ok((dx[WORK_ACTUATOR], dx[WORK_CONTACT], dx[WORK_DISSIPATED]))
    }

    /// Advances the state by one physics step with the actuator torques held.
    pub fn step(&self, state: &SimState, torques: &AppliedTorques) -> Result<SimState, SimError> {
        let dt = self.settings.physics_dt;
        let p = &self.params;
        let mut x = state.to_flat();
        let cmd = torques.ankle_motor.clamp(-p.motor_torque_limit, p.motor_torque_limit);
        let u =
            AppliedTorques { hip: torques.hip.clamp(-p.hip_torque_limit(), p.hip_torque_limit()), ankle_motor: cmd };
        let lagged = p.selda_motor_lag > 0.0;
        if !lagged {
            x[MOTOR_TORQUE] = cmd;
        }
        let t = state.t;

        let next = match self.settings.integrator {
            Integrator::SemiImplicitEuler => {
                let dx = self.derivatives(&x, &u, t)?;
                let mut y = x;
                for i in 0..MAX_DOF {
                    y[QD + i] = x[QD + i] + dt * dx[QD + i];
                    y[Q + i] = x[Q + i] + dt * y[QD + i];
                }
                y[MOTOR_RATE] = x[MOTOR_RATE] + dt * dx[MOTOR_RATE];
                y[MOTOR_ANGLE] = x[MOTOR_ANGLE] + dt * y[MOTOR_RATE];
                if lagged {
                    // exact update of the first-order lag under a held command
                    y[MOTOR_TORQUE] = cmd + (x[MOTOR_TORQUE] - cmd) * exp(-dt / p.selda_motor_lag);
                }
                for k in [WORK_ACTUATOR, WORK_DISSIPATED, WORK_CONTACT] {
                    y[k] = x[k] + dt * dx[k];
                }
                y
            }
            Integrator::Rk4 => {
                let k1 = self.derivatives(&x, &u, t)?;
                let k2 = self.derivatives(&axpy(&x, 0.5 * dt, &k1), &u, t + 0.5 * dt)?;
                let k3 = self.derivatives(&axpy(&x, 0.5 * dt, &k2), &u, t + 0.5 * dt)?;
                let k4 = self.derivatives(&axpy(&x, dt, &k3), &u, t + dt)?;
                let mut y = x;
                for i in 0..STATE_LEN {
                    y[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                y
            }
        };

        let mut s = SimState {
            t: t + dt,
            dof: self.dof,
            q: [0.0; MAX_DOF],
            qd: [0.0; MAX_DOF],
            selda: SeldaState { commanded_torque: cmd, ..state.selda },
            contact: state.contact,
            grf: state.grf,
            contact_anchor: state.contact_anchor,
            work: WorkLedger {
                actuator: next[WORK_ACTUATOR],
                dissipated: next[WORK_DISSIPATED],
                contact: next[WORK_CONTACT],
            },
        };
        s.q.copy_from_slice(&next[Q..Q + MAX_DOF]);
        s.qd.copy_from_slice(&next[QD..QD + MAX_DOF]);
        s.selda.motor_angle = next[MOTOR_ANGLE];
        s.selda.motor_velocity = next[MOTOR_RATE];
        s.selda.applied_torque = next[MOTOR_TORQUE];
        if !s.is_finite() {
            return Err(SimError::NonFinite { t: s.t, dump: s.dump() });
        }
        self.refresh_observables(&mut s, Some(state));
        Ok(s)
    }

    /// Recomputes contact flag, ground force and transmission observables.
    fn refresh_observables(&self, s: &mut SimState, previous: Option<&SimState>) {
        let cp = self.contact_point(s);
        let (fn_, ft) = contact_force(&cp, &self.settings.contact);
        s.grf = [ft, fn_];
        s.contact = fn_ > 0.0;
        let was = previous.map(|p| p.contact).unwrap_or(false);
        s.contact_anchor = match (was, s.contact) {
            (false, true) => Some(cp.position[0]),
            (true, true) => s.contact_anchor,
            _ => None,
        };
        if self.has_foot() {
            let d = selda_deflection(s.selda.motor_angle, s.q[5], &self.params);
            s.selda.deflection = d;
            s.selda.engaged = d > 0.0;
        }
    }
}

fn tip_velocity(b: &Bodies, qd: &Vector, n: usize) -> [f64; 2] {
    let mut v = [0.0; 2];
    for c in 0..n {
        v[0] += b.tip_jac[c][0] * qd[c];
        v[1] += b.tip_jac[c][1] * qd[c];
    }
    v
}

fn axpy(x: &Flat, a: f64, y: &Flat) -> Flat {
    let mut r = *x;
    for i in 0..STATE_LEN {
        r[i] += a * y[i];
    }
    r
}

/// Runs `steps` physics steps with constant torques, keeping every state.
pub fn simulate_constant(
    model: &Model,
    start: &SimState,
    torques: &AppliedTorques,
    steps: usize,
) -> Result<Vec<SimState>, SimError> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(start.clone());
    let mut s = start.clone();
    for _ in 0..steps {
        s = model.step(&s, torques)?;
        out.push(s.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{default_params, LegConfig};
    use core::f64::consts::PI;

    fn model(config: LegConfig) -> Model {
        Model::new(default_params(config), SimSettings::default()).unwrap()
    }

    #[test]
    fn contact_force_examples() {
        let params = ContactParams { stiffness: 5000.0, damping: 50.0, friction: 0.8, reg_velocity: 0.01 };
        let above = ContactPoint { position: [0.0, 0.01], ..Default::default() };
        assert_eq!(contact_force(&above, &params), (0.0, 0.0));
        let pressed = ContactPoint { position: [0.0, -0.001], penetration: 0.001, ..Default::default() };
        let (n, t) = contact_force(&pressed, &params);
        assert!((n - 5.0).abs() < 1e-12);
        assert_eq!(t, 0.0);
        let separating = ContactPoint { penetration: 0.001, velocity: [0.0, 1.0], ..Default::default() };
        assert_eq!(contact_force(&separating, &params), (0.0, 0.0));
        let sliding = ContactPoint { penetration: 0.001, velocity: [1.0, 0.0], ..Default::default() };
        let (n, t) = contact_force(&sliding, &params);
        assert!((t + 0.8 * n).abs() < 1e-9);
    }

    #[test]
    fn free_fall_at_rest() {
        for config in [LegConfig::A, LegConfig::B] {
            let mut m = model(config);
            // lift well clear of the ground
            let mut s = m.initial_state(0.0);
            s.q[1] += 1.0;
            m.params.selda_bias_torque = 0.0;
            let acc = m.compute_accelerations(&s, &AppliedTorques::default()).unwrap();
            assert!((acc.qdd[1] + 9.81).abs() < 1e-9, "{:?}", acc.qdd);
            assert!(acc.qdd[0].abs() < 1e-9);
            for c in 2..m.dof() {
                assert!(acc.qdd[c].abs() < 1e-9, "joint {c}: {}", acc.qdd[c]);
            }
        }
    }

    #[test]
    fn static_stance_equilibrium() {
        // Straight vertical leg, no gravity on the leg segments: the ground
        // force balancing the weight leaves every coordinate unaccelerated.
        let mut p = default_params(LegConfig::A);
        p.trunk_mass_fraction = 1.0;
        p.resting_joint_angles = alloc::vec![PI, PI];
        let mut settings = SimSettings::default();
        let m_total = p.total_mass;
        let weight = m_total * settings.gravity;
        settings.contact.damping = 0.0;
        let m = Model::new(p, settings).unwrap();
        let mut s = m.initial_state(0.0);
        let penetration = weight / m.settings.contact.stiffness;
        s.q[1] -= m.settings.initial_clearance + penetration;
        let cp = m.contact_point(&s);
        let (n, _) = contact_force(&cp, &m.settings.contact);
        assert!((n - weight).abs() < 1e-9);
        let acc = m.compute_accelerations(&s, &AppliedTorques::default()).unwrap();
        for c in 0..m.dof() {
            assert!(acc.qdd[c].abs() < 1e-9, "coordinate {c}: {}", acc.qdd[c]);
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_positive() {
        let m = model(LegConfig::B);
        let s = m.initial_state(0.2);
        let mm = m.mass_matrix(&s);
        for r in 0..m.dof() {
            assert!(mm[r][r] > 0.0);
            for c in 0..m.dof() {
                assert_eq!(mm[r][c], mm[c][r]);
            }
        }
        assert!((mm[0][0] - 1.2).abs() < 1e-12);
    }

    #[test]
    fn zero_length_foot_is_regular() {
        let mut p = default_params(LegConfig::B);
        p.segment_lengths[3] = 0.0;
        p.total_mass = 1.05;
        let m = Model::new(p, SimSettings::default()).unwrap();
        let s = m.initial_state(0.0);
        m.compute_accelerations(&s, &AppliedTorques::default()).unwrap();
    }

    #[test]
    fn initial_state_clearance() {
        for config in [LegConfig::A, LegConfig::B] {
            let m = model(config);
            let s = m.initial_state(0.0);
            let cp = m.contact_point(&s);
            assert!((cp.position[1] - 0.005).abs() < 1e-12);
            assert!(!s.contact);
        }
    }

    #[test]
    fn step_is_deterministic() {
        let m = model(LegConfig::B);
        let s0 = m.initial_state(0.1);
        let u = AppliedTorques { hip: 0.5, ankle_motor: 1.0 };
        let a = simulate_constant(&m, &s0, &u, 500).unwrap();
        let b = simulate_constant(&m, &s0, &u, 500).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn non_finite_state_aborts() {
        let m = model(LegConfig::A);
        let mut s = m.initial_state(0.0);
        s.qd[3] = f64::NAN;
        match m.step(&s, &AppliedTorques::default()) {
            Err(SimError::NonFinite { .. }) | Err(SimError::SingularMassMatrix { .. }) => {}
            other => panic!("expected abort, got {other:?}"),
        }
    }
}
