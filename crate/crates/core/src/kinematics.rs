//! Planar kinematics of the serial leg and of the boom.
//!
//! Conventions: the hip frame has `x` pointing in the direction of travel and
//! `y` pointing up. Absolute segment angles are measured from the downward
//! vertical and are positive when the segment points behind the hip, so a
//! segment with absolute angle `phi` has direction `(-sin phi, -cos phi)`.
//!
//! The first joint coordinate is the hip angle (absolute femur angle). The
//! remaining coordinates are interior angles, `pi` meaning a straight joint.
//! Interior joints bend alternately: the knee points forward, the ankle heel
//! points backward and the foot joint again forward.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use libm::{cos, sin};

use crate::params::RobotParams;

pub const MAX_SEGMENTS: usize = 4;

/// Bend direction of interior joint `i`: the absolute angle of segment
/// `i + 1` is that of segment `i` plus `BEND[i] * (pi - interior_i)`.
/// The foot flexes the same way as the ankle so ground load bends it
/// against the tendon.
pub const BEND: [f64; MAX_SEGMENTS - 1] = [1.0, -1.0, -1.0];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum KinematicsError {
    DimensionMismatch { expected: usize, got: usize },
}

impl fmt::Display for KinematicsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KinematicsError::DimensionMismatch { expected, got } => {
                write!(f, "expected {expected} joint coordinates, got {got}")
            }
        }
    }
}

impl core::error::Error for KinematicsError {}

/// Hip angle followed by interior angles, with matching rates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JointState {
    /// `[hip, knee, ankle, (foot)]` [rad].
    pub angles: Vec<f64>,
    /// Rates of `angles` [rad/s].
    pub velocities: Vec<f64>,
}

impl JointState {
    pub fn new(angles: Vec<f64>, velocities: Vec<f64>) -> Self {
        JointState { angles, velocities }
    }

    /// Hip at `hip` and every interior joint at its resting angle, at rest.
    pub fn resting(p: &RobotParams, hip: f64) -> Self {
        let mut angles = Vec::with_capacity(p.segment_count());
        angles.push(hip);
        angles.extend_from_slice(&p.resting_joint_angles);
        let velocities = alloc::vec![0.0; angles.len()];
        JointState { angles, velocities }
    }

    pub fn hip(&self) -> f64 {
        self.angles[0]
    }
}

/// Unit direction of a segment with absolute angle `phi`.
#[inline]
pub fn direction(phi: f64) -> [f64; 2] {
    [-sin(phi), -cos(phi)]
}

/// Derivative of [`direction`] with respect to `phi`.
#[inline]
pub fn direction_derivative(phi: f64) -> [f64; 2] {
    [-cos(phi), sin(phi)]
}

/// Absolute segment angles from joint coordinates.
pub fn segment_angles(joints: &[f64]) -> [f64; MAX_SEGMENTS] {
    let mut phi = [0.0; MAX_SEGMENTS];
    if joints.is_empty() {
        return phi;
    }
    phi[0] = joints[0];
    for i in 1..joints.len().min(MAX_SEGMENTS) {
        phi[i] = phi[i - 1] + BEND[i - 1] * (PI - joints[i]);
    }
    phi
}

/// Absolute segment rates from joint rates.
pub fn segment_rates(rates: &[f64]) -> [f64; MAX_SEGMENTS] {
    let mut w = [0.0; MAX_SEGMENTS];
    if rates.is_empty() {
        return w;
    }
    w[0] = rates[0];
    for i in 1..rates.len().min(MAX_SEGMENTS) {
        w[i] = w[i - 1] - BEND[i - 1] * rates[i];
    }
    w
}

/// Joint positions of a chain hanging from the origin, ending with the tip.
///
/// Works for any number of segments up to [`MAX_SEGMENTS`]; `joints` holds
/// one absolute angle followed by `lengths.len() - 1` interior angles.
pub fn chain_points(lengths: &[f64], joints: &[f64]) -> Result<Vec<[f64; 2]>, KinematicsError> {
    if joints.len() != lengths.len() || lengths.len() > MAX_SEGMENTS {
        return Err(KinematicsError::DimensionMismatch { expected: lengths.len(), got: joints.len() });
    }
    let phi = segment_angles(joints);
    let mut points = Vec::with_capacity(lengths.len() + 1);
    let mut p = [0.0, 0.0];
    points.push(p);
    for (l, phi) in lengths.iter().zip(phi.iter()) {
        let d = direction(*phi);
        p = [p[0] + l * d[0], p[1] + l * d[1]];
        points.push(p);
    }
    Ok(points)
}

/// Joint positions of the leg in the hip frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LegChain {
    /// Hip, each interior joint, then the distal tip [m].
    pub points: Vec<[f64; 2]>,
}

impl LegChain {
    pub fn tip(&self) -> [f64; 2] {
        *self.points.last().expect("chain has at least the hip point")
    }

    /// Distance from hip to tip [m].
    pub fn virtual_length(&self) -> f64 {
        let t = self.tip();
        libm::hypot(t[0], t[1])
    }

    /// Angle of the hip-to-tip line from the downward vertical, positive
    /// behind the hip [rad].
    pub fn virtual_angle(&self) -> f64 {
        let t = self.tip();
        libm::atan2(-t[0], -t[1])
    }
}

pub fn forward_kinematics(q: &JointState, p: &RobotParams) -> Result<LegChain, KinematicsError> {
    Ok(LegChain { points: chain_points(&p.segment_lengths, &q.angles)? })
}

/// Tip velocity in the hip frame by propagating segment rates along the
/// chain [m/s].
pub fn tip_velocity(q: &JointState, p: &RobotParams) -> Result<[f64; 2], KinematicsError> {
    let n = p.segment_count();
    if q.angles.len() != n || q.velocities.len() != n {
        let got = if q.angles.len() != n { q.angles.len() } else { q.velocities.len() };
        return Err(KinematicsError::DimensionMismatch { expected: n, got });
    }
    let phi = segment_angles(&q.angles);
    let w = segment_rates(&q.velocities);
    let mut v = [0.0, 0.0];
    for i in 0..n {
        let d = direction_derivative(phi[i]);
        v[0] += p.segment_lengths[i] * d[0] * w[i];
        v[1] += p.segment_lengths[i] * d[1] * w[i];
    }
    Ok(v)
}

/// Stretch of the biarticular spring [m]. Positive when knee and ankle are
/// flexed beyond their resting angles.
pub fn biarticular_deflection(knee: f64, ankle: f64, p: &RobotParams) -> f64 {
    let rest = &p.resting_joint_angles;
    p.biarticular_insertion_radius * ((rest[0] - knee) + (rest[1] - ankle))
}

/// Boom encoder angles and rates.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoomState {
    /// Horizontal (yaw) boom angle [rad].
    pub theta_h: f64,
    /// Vertical (pitch) boom angle [rad].
    pub theta_v: f64,
    pub theta_h_rate: f64,
    pub theta_v_rate: f64,
}

/// Position and velocity in the unrolled plane of travel.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PlanarState {
    pub x: f64,
    pub y: f64,
    pub xd: f64,
    pub yd: f64,
}

/// Unrolls the boom angles onto the plane: `x` is the arc length travelled
/// at the boom tip and `y` the height above the pivot plane.
pub fn boom_to_plane(b: &BoomState, boom_radius: f64) -> PlanarState {
    let c = cos(b.theta_v);
    PlanarState {
        x: boom_radius * b.theta_h,
        y: boom_radius * sin(b.theta_v),
        xd: boom_radius * b.theta_h_rate,
        yd: boom_radius * c * b.theta_v_rate,
    }
}

/// Inverse of [`boom_to_plane`] for `|y| < boom_radius`.
pub fn plane_to_boom(s: &PlanarState, boom_radius: f64) -> BoomState {
    let theta_v = libm::asin((s.y / boom_radius).clamp(-1.0, 1.0));
    let c = cos(theta_v);
    BoomState {
        theta_h: s.x / boom_radius,
        theta_v,
        theta_h_rate: s.xd / boom_radius,
        theta_v_rate: if c > 0.0 { s.yd / (boom_radius * c) } else { 0.0 },
    }
}

/// Distance travelled along the unrolled plane in one boom revolution [m].
pub fn revolution_distance(boom_radius: f64) -> f64 {
    2.0 * PI * boom_radius
}
