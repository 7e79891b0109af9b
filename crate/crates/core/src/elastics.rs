//! Spring laws of the leg: knee cam spring, biarticular spring, and the
//! pneumatic series-elastic ankle transmission.
//!
//! Torques on interior joints are generalized forces on the interior angle:
//! positive torque opens (extends) the joint.
//!
//! The ankle transmission is a single pre-pressurized air line between a
//! motor-side cylinder and a foot-side cylinder. The line pressure pushes the
//! motor against its end-stop and the foot against its extended end-stop.
//! Rotating the motor away from its stop, or flexing the foot away from its
//! stop, compresses the line. The tendon on the foot side can only pull.

use alloc::vec::Vec;
use core::fmt;

use crate::params::RobotParams;

/// Atmospheric pressure used by the isothermal line model [Pa].
pub const ATMOSPHERIC_PRESSURE: f64 = 101_325.0;

/// Air-spring law of the pneumatic line.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SeldaSpring {
    /// Constant stiffness `selda_stiffness`.
    #[default]
    Linear,
    /// Isothermal gas in a closed line: `p·V = const`. Piston displacement and
    /// line volume are chosen so that the bias torque and the small-deflection
    /// stiffness match `selda_bias_torque` and `selda_stiffness` at the
    /// configured pre-charge.
    Isothermal,
}

impl SeldaSpring {
    pub fn name(self) -> &'static str {
        match self {
            SeldaSpring::Linear => "linear",
            SeldaSpring::Isothermal => "isothermal",
        }
    }
}

impl core::str::FromStr for SeldaSpring {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "linear" => Ok(SeldaSpring::Linear),
            "isothermal" => Ok(SeldaSpring::Isothermal),
            _ => Err(()),
        }
    }
}

/// Restoring torque of the knee cam spring, with parasitic damping [N·m].
pub fn knee_torque(knee: f64, knee_rate: f64, p: &RobotParams) -> f64 {
    let k = p.knee_stiffness * p.knee_cam_radius * p.knee_cam_radius;
    k * (p.resting_joint_angles[0] - knee) - p.joint_damping * knee_rate
}

pub fn knee_energy(knee: f64, p: &RobotParams) -> f64 {
    let k = p.knee_stiffness * p.knee_cam_radius * p.knee_cam_radius;
    let d = p.resting_joint_angles[0] - knee;
    0.5 * k * d * d
}

/// Torques of the biarticular spring on knee and ankle for a given spring
/// deflection (see [`crate::kinematics::biarticular_deflection`]).
pub fn biarticular_torques(deflection: f64, p: &RobotParams) -> (f64, f64) {
    let force = p.biarticular_stiffness * deflection;
    let tau = p.biarticular_insertion_radius * force;
    (tau, tau)
}

pub fn biarticular_energy(deflection: f64, p: &RobotParams) -> f64 {
    0.5 * p.biarticular_stiffness * deflection * deflection
}

/// Distortion of the pantograph parallelogram [rad]: zero while knee and
/// ankle flex together by equal amounts from rest.
pub fn pantograph_distortion(knee: f64, ankle: f64, p: &RobotParams) -> f64 {
    let rest = &p.resting_joint_angles;
    (knee - rest[0]) - (ankle - rest[1])
}

/// Restoring torques `(knee, ankle)` of the parallel linkage.
pub fn pantograph_torques(knee: f64, ankle: f64, p: &RobotParams) -> (f64, f64) {
    let tau = p.pantograph_stiffness * pantograph_distortion(knee, ankle, p);
    (-tau, tau)
}

pub fn pantograph_energy(knee: f64, ankle: f64, p: &RobotParams) -> f64 {
    let d = pantograph_distortion(knee, ankle, p);
    0.5 * p.pantograph_stiffness * d * d
}

/// Motor-side state of the ankle transmission.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeldaState {
    /// Motor rotation away from the pressure end-stop [rad].
    pub motor_angle: f64,
    pub motor_velocity: f64,
    /// Torque reference sent to the motor, after saturation [N·m].
    pub commanded_torque: f64,
    /// Torque actually delivered by the motor (lagged command) [N·m].
    pub applied_torque: f64,
    /// Line compression seen from the motor [rad].
    pub deflection: f64,
    /// True while the tendon transmits a pull.
    pub engaged: bool,
}

/// Torques produced by the ankle transmission.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SeldaTorque {
    /// Spring part of the line torque, motor side; zero when slack [N·m].
    pub pull: f64,
    /// Torque on the foot joint, positive towards extension [N·m].
    pub foot: f64,
    /// Torque on the foot joint including the quasi-static reaction of the
    /// extension end-stop when the foot rests against it [N·m].
    pub foot_net: f64,
    /// Torque of the line on the motor rotor [N·m].
    pub motor_reaction: f64,
}

/// Foot flexion away from its extended end-stop [rad].
pub fn foot_flexion(foot_angle: f64, p: &RobotParams) -> f64 {
    match p.foot_extended_angle() {
        Some(ext) => ext - foot_angle,
        None => 0.0,
    }
}

/// Line compression seen from the motor [rad].
pub fn selda_deflection(motor_angle: f64, foot_angle: f64, p: &RobotParams) -> f64 {
    motor_angle + p.selda_coupling_ratio * foot_flexion(foot_angle, p)
}

/// Piston displacement per radian of motor rotation [m³/rad] and the closed
/// line volume at the pre-charge [m³] of the isothermal model.
fn isothermal_geometry(p: &RobotParams) -> (f64, f64) {
    let displacement = p.selda_bias_torque / p.selda_precharge_pressure;
    let absolute = p.selda_precharge_pressure + ATMOSPHERIC_PRESSURE;
    let volume = absolute * displacement * displacement / p.selda_stiffness;
    (displacement, volume)
}

/// Compressions beyond this fraction of the line volume continue linearly.
const ISOTHERMAL_MAX_COMPRESSION: f64 = 0.9;

/// Spring torque of the line for a deflection `d` > 0 (bias excluded).
pub fn line_spring_torque(d: f64, p: &RobotParams) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    match p.selda_spring {
        SeldaSpring::Linear => p.selda_stiffness * d,
        SeldaSpring::Isothermal => {
            let (disp, vol) = isothermal_geometry(p);
            let absolute = p.selda_precharge_pressure + ATMOSPHERIC_PRESSURE;
            let d_max = ISOTHERMAL_MAX_COMPRESSION * vol / disp;
            let spring = |d: f64| absolute * disp * (vol / (vol - disp * d) - 1.0);
            if d <= d_max {
                spring(d)
            } else {
                let slope = absolute * vol * disp * disp / ((vol - disp * d_max) * (vol - disp * d_max));
                spring(d_max) + slope * (d - d_max)
            }
        }
    }
}

/// Stored energy of the spring part of the line [J].
pub fn line_spring_energy(d: f64, p: &RobotParams) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    match p.selda_spring {
        SeldaSpring::Linear => 0.5 * p.selda_stiffness * d * d,
        SeldaSpring::Isothermal => {
            let (disp, vol) = isothermal_geometry(p);
            let absolute = p.selda_precharge_pressure + ATMOSPHERIC_PRESSURE;
            let d_max = ISOTHERMAL_MAX_COMPRESSION * vol / disp;
            let energy = |d: f64| -absolute * vol * libm::log((vol - disp * d) / vol) - absolute * disp * d;
            if d <= d_max {
                energy(d)
            } else {
                let slope = absolute * vol * disp * disp / ((vol - disp * d_max) * (vol - disp * d_max));
                let e = d - d_max;
                energy(d_max) + line_spring_torque(d_max, p) * e + 0.5 * slope * e * e
            }
        }
    }
}

/// Potential energy of the transmission, bias work included [J].
pub fn selda_energy(motor_angle: f64, foot_angle: f64, p: &RobotParams) -> f64 {
    let d = selda_deflection(motor_angle, foot_angle, p);
    line_spring_energy(d, p) + p.selda_bias_torque * d
}

/// Torques of the series-elastic ankle transmission.
///
/// The tendon pull `k_a·d` is unilateral; the pre-pressure bias always pushes
/// the foot towards its extended end-stop and the motor towards its stop.
/// Torques reach the foot scaled by the coupling ratio.
pub fn selda_torque(s: &SeldaState, foot_angle: f64, p: &RobotParams) -> SeldaTorque {
    let d = selda_deflection(s.motor_angle, foot_angle, p);
    let pull = line_spring_torque(d, p);
    let line = pull + p.selda_bias_torque;
    let foot = p.selda_coupling_ratio * line;
    let at_stop = foot_flexion(foot_angle, p) <= 0.0;
    SeldaTorque { pull, foot, foot_net: if at_stop { 0.0 } else { foot }, motor_reaction: -line }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ElasticsError {
    TooFewSweepPoints(usize),
}

impl fmt::Display for ElasticsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ElasticsError::TooFewSweepPoints(n) => {
                write!(f, "stiffness sweep needs at least 2 motor angles, got {n}")
            }
        }
    }
}

impl core::error::Error for ElasticsError {}

/// Quasi-static torque/angle curve of the transmission with the foot clamped
/// at its extended stop.
#[derive(Clone, Debug, PartialEq)]
pub struct StiffnessCurve {
    /// `(motor angle [rad], holding torque [N·m])`.
    pub points: Vec<(f64, f64)>,
    /// Least-squares slope [N·m/rad].
    pub slope: f64,
    /// Least-squares intercept [N·m].
    pub intercept: f64,
}

/// Holding torque needed at the motor for each swept angle, and its linear
/// fit.
pub fn characterize_stiffness(p: &RobotParams, sweep: &[f64]) -> Result<StiffnessCurve, ElasticsError> {
    if sweep.len() < 2 {
        return Err(ElasticsError::TooFewSweepPoints(sweep.len()));
    }
    let clamped_foot = p.foot_extended_angle().unwrap_or(core::f64::consts::PI);
    let points: Vec<(f64, f64)> = sweep
        .iter()
        .map(|&theta| {
            let s = SeldaState { motor_angle: theta, ..Default::default() };
            (theta, -selda_torque(&s, clamped_foot, p).motor_reaction)
        })
        .collect();
    let (slope, intercept) = linear_fit(&points);
    Ok(StiffnessCurve { points, slope, intercept })
}

/// Ordinary least squares `y = slope·x + intercept`.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, my - slope * mx)
}

/// Torque of a one-sided angular end-stop at `limit`. `side` is `+1` for a
/// lower limit (stop pushes towards larger angles) and `-1` for an upper
/// limit.
pub fn end_stop_torque(angle: f64, rate: f64, limit: f64, side: f64, p: &RobotParams) -> f64 {
    let penetration = side * (limit - angle);
    if penetration <= 0.0 {
        return 0.0;
    }
    let t = p.stop_stiffness * penetration - p.stop_damping * side * rate;
    side * t.max(0.0)
}

pub fn end_stop_energy(angle: f64, limit: f64, side: f64, p: &RobotParams) -> f64 {
    let penetration = side * (limit - angle);
    if penetration <= 0.0 {
        0.0
    } else {
        0.5 * p.stop_stiffness * penetration * penetration
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::biarticular_deflection;
    use crate::params::{default_params, LegConfig};
    use proptest::prelude::*;

    #[test]
    fn knee_examples() {
        let p = default_params(LegConfig::A);
        let a0 = p.resting_joint_angles[0];
        let ten = 10f64.to_radians();
        assert_eq!(knee_torque(a0, 0.0, &p), 0.0);
        // 10900 N/m * 0.03^2 m^2 = 9.81 N·m/rad
        assert!((knee_torque(a0 - ten, 0.0, &p) - 9.81 * ten).abs() < 1e-12);
        assert!((knee_torque(a0 - ten, 0.0, &p) - 1.712).abs() < 1e-3);
        assert!((knee_torque(a0 + ten, 0.0, &p) + 1.712).abs() < 1e-3);
    }

    #[test]
    fn knee_damping_opposes_motion() {
        let p = default_params(LegConfig::A);
        let a0 = p.resting_joint_angles[0];
        assert!((knee_torque(a0, 2.0, &p) + 2.0 * p.joint_damping).abs() < 1e-15);
    }

    #[test]
    fn biarticular_examples() {
        let p = default_params(LegConfig::A);
        assert_eq!(biarticular_torques(0.0, &p), (0.0, 0.0));
        let (tk, ta) = biarticular_torques(0.003, &p);
        assert!((tk - 0.882).abs() < 1e-12 && (ta - 0.882).abs() < 1e-12);
        let (tk2, _) = biarticular_torques(0.006, &p);
        assert!((tk2 - 2.0 * tk).abs() < 1e-12);
    }

    fn unit_ratio() -> RobotParams {
        RobotParams { selda_coupling_ratio: 1.0, ..default_params(LegConfig::B) }
    }

    #[test]
    fn coupling_ratio_scales_foot_torque_and_deflection() {
        let p = default_params(LegConfig::B);
        let ext = p.foot_extended_angle().unwrap();
        let n = p.selda_coupling_ratio;
        let t = selda_torque(&SeldaState::default(), ext - 0.1, &p);
        assert!((t.pull - 0.15 * n * 0.1).abs() < 1e-12);
        assert!((t.foot - n * (t.pull + p.selda_bias_torque)).abs() < 1e-12);
    }

    #[test]
    fn selda_at_rest_is_balanced_by_stop() {
        let p = unit_ratio();
        let ext = p.foot_extended_angle().unwrap();
        let t = selda_torque(&SeldaState::default(), ext, &p);
        assert_eq!(t.pull, 0.0);
        assert_eq!(t.foot_net, 0.0);
        assert!((t.foot - p.selda_bias_torque).abs() < 1e-15);
        assert!((t.motor_reaction + p.selda_bias_torque).abs() < 1e-15);
    }

    #[test]
    fn selda_pull_is_measured_stiffness() {
        let p = unit_ratio();
        let ext = p.foot_extended_angle().unwrap();
        let s = SeldaState { motor_angle: 1.0, ..Default::default() };
        let t = selda_torque(&s, ext, &p);
        assert!((t.pull - 0.15).abs() < 1e-15);
        assert!((t.motor_reaction + 0.15 + p.selda_bias_torque).abs() < 1e-15);
    }

    #[test]
    fn selda_tendon_cannot_push() {
        let p = unit_ratio();
        let ext = p.foot_extended_angle().unwrap();
        let s = SeldaState { motor_angle: -0.5, ..Default::default() };
        let t = selda_torque(&s, ext, &p);
        assert_eq!(t.pull, 0.0);
        assert!((t.foot - p.selda_bias_torque).abs() < 1e-15);
    }

    #[test]
    fn foot_flexion_loads_the_line() {
        let p = unit_ratio();
        let ext = p.foot_extended_angle().unwrap();
        let t = selda_torque(&SeldaState::default(), ext - 0.4, &p);
        assert!((t.pull - 0.15 * 0.4).abs() < 1e-12);
        assert_eq!(t.foot, t.foot_net);
    }

    #[test]
    fn characterization_recovers_stiffness() {
        let p = default_params(LegConfig::B);
        let c = characterize_stiffness(&p, &[0.0, 1.0, 2.0]).unwrap();
        assert!((c.slope - 0.15).abs() < 1e-12);
        assert!((c.intercept - p.selda_bias_torque).abs() < 1e-12);
        let mut no_bias = p.clone();
        no_bias.selda_bias_torque = 0.0;
        let c2 = characterize_stiffness(&no_bias, &[0.0, 1.0, 2.0]).unwrap();
        assert!((c2.slope - c.slope).abs() < 1e-12);
        assert_eq!(characterize_stiffness(&p, &[1.0]).unwrap_err(), ElasticsError::TooFewSweepPoints(1));
    }

    #[test]
    fn isothermal_model_matches_linear_near_rest() {
        let mut p = default_params(LegConfig::B);
        p.selda_spring = SeldaSpring::Isothermal;
        // Independent route: p·V = const with the line volume and piston
        // displacement implied by 0.5 bar pre-charge and the bias torque.
        let p_gauge = 0.5e5;
        let p_abs = p_gauge + ATMOSPHERIC_PRESSURE;
        let disp = 0.15 / p_gauge;
        let vol = p_abs * disp * disp / 0.15;
        let torque = |th: f64| (p_abs * vol / (vol - disp * th) - ATMOSPHERIC_PRESSURE) * disp;
        let h = 1e-6;
        let oracle_slope = (torque(h) - torque(0.0)) / h;
        assert!((oracle_slope - 0.15).abs() / 0.15 < 0.10);
        let c = characterize_stiffness(&p, &[0.0, h]).unwrap();
        assert!((c.slope - oracle_slope).abs() / 0.15 < 1e-4);
        assert!((c.slope - p.selda_stiffness).abs() / p.selda_stiffness < 0.10);
        // stiffening with compression
        let wide = characterize_stiffness(&p, &[0.0, 1.0, 2.0]).unwrap();
        assert!(wide.slope > 0.15);
        assert!(
            (torque(1.5)
                - (-selda_torque(&SeldaState { motor_angle: 1.5, ..Default::default() }, PI_EXT, &p).motor_reaction))
                .abs()
                < 1e-9
        );
    }

    const PI_EXT: f64 = core::f64::consts::PI;

    #[test]
    fn end_stops_push_back() {
        let p = default_params(LegConfig::B);
        assert_eq!(end_stop_torque(0.1, 0.0, 0.0, 1.0, &p), 0.0);
        assert!(end_stop_torque(-0.01, 0.0, 0.0, 1.0, &p) > 0.0);
        assert!(end_stop_torque(1.01, 0.0, 1.0, -1.0, &p) < 0.0);
        // separating fast never pulls
        assert_eq!(end_stop_torque(-0.001, 100.0, 0.0, 1.0, &p), 0.0);
    }

    fn closed_cycle_work(p: &RobotParams, path: impl Fn(f64) -> (f64, f64, f64, f64)) -> f64 {
        // Trapezoidal work integral of all spring torques around a closed
        // path (knee, ankle, foot, motor) parameterised on [0, 1].
        let n = 20_000;
        let torques = |s: f64| {
            let (kn, an, ft, m) = path(s);
            let (bk, ba) = biarticular_torques(biarticular_deflection(kn, an, p), p);
            let st = selda_torque(&SeldaState { motor_angle: m, ..Default::default() }, ft, p);
            [knee_torque(kn, 0.0, p) + bk, ba, st.foot, st.motor_reaction]
        };
        let mut work = 0.0;
        for i in 0..n {
            let (s0, s1) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
            let (a, b) = (path(s0), path(s1));
            let (t0, t1) = (torques(s0), torques(s1));
            let dq = [b.0 - a.0, b.1 - a.1, b.2 - a.2, b.3 - a.3];
            for k in 0..4 {
                work += 0.5 * (t0[k] + t1[k]) * dq[k];
            }
        }
        work
    }

    #[test]
    fn springs_do_no_net_work_over_closed_cycle() {
        let mut p = default_params(LegConfig::B);
        p.joint_damping = 0.0;
        let a0 = p.resting_joint_angles[0];
        let b0 = p.resting_joint_angles[1];
        let ext = p.foot_extended_angle().unwrap();
        let tau = core::f64::consts::TAU;
        let path = |s: f64| {
            (
                a0 - 0.3 * libm::sin(tau * s),
                b0 - 0.2 * libm::sin(2.0 * tau * s),
                ext - 0.5 * (1.0 - libm::cos(tau * s)),
                0.8 * (1.0 - libm::cos(tau * s)) - 0.2 * libm::sin(tau * s),
            )
        };
        let w = closed_cycle_work(&p, path);
        assert!(w.abs() < 1e-6, "closed-cycle work {w}");
    }

    proptest! {
        #[test]
        fn pull_never_negative(m in -3.0f64..7.0, f in 1.5f64..3.5) {
            let p = default_params(LegConfig::B);
            let t = selda_torque(&SeldaState { motor_angle: m, ..Default::default() }, f, &p);
            prop_assert!(t.pull >= 0.0);
        }

        #[test]
        fn knee_and_biarticular_are_odd(d in -0.8f64..0.8) {
            let p = default_params(LegConfig::A);
            let a0 = p.resting_joint_angles[0];
            prop_assert!((knee_torque(a0 + d, 0.0, &p) + knee_torque(a0 - d, 0.0, &p)).abs() < 1e-12);
            let (k1, _) = biarticular_torques(d * 0.03, &p);
            let (k2, _) = biarticular_torques(-d * 0.03, &p);
            prop_assert!((k1 + k2).abs() < 1e-12);
        }

        #[test]
        fn energies_are_potentials_of_torques(
            kn in 1.5f64..3.0, an in 2.0f64..3.1, ft in 2.0f64..3.1, m in 0.0f64..3.0,
            iso in proptest::bool::ANY,
        ) {
            let mut p = default_params(LegConfig::B);
            if iso { p.selda_spring = SeldaSpring::Isothermal; }
            let h = 1e-6;
            let energy = |kn: f64, an: f64, ft: f64, m: f64| {
                knee_energy(kn, &p)
                    + biarticular_energy(biarticular_deflection(kn, an, &p), &p)
                    + selda_energy(m, ft, &p)
            };
            let (bk, ba) = biarticular_torques(biarticular_deflection(kn, an, &p), &p);
            let st = selda_torque(&SeldaState { motor_angle: m, ..Default::default() }, ft, &p);
            let analytic = [
                knee_torque(kn, 0.0, &p) + bk,
                ba,
                st.foot,
                st.motor_reaction,
            ];
            let numeric = [
                -(energy(kn + h, an, ft, m) - energy(kn - h, an, ft, m)) / (2.0 * h),
                -(energy(kn, an + h, ft, m) - energy(kn, an - h, ft, m)) / (2.0 * h),
                -(energy(kn, an, ft + h, m) - energy(kn, an, ft - h, m)) / (2.0 * h),
                -(energy(kn, an, ft, m + h) - energy(kn, an, ft, m - h)) / (2.0 * h),
            ];
            for k in 0..4 {
                let scale = analytic[k].abs().max(1.0);
                prop_assert!((analytic[k] - numeric[k]).abs() <= 1e-6 * scale,
                    "component {}: {} vs {}", k, analytic[k], numeric[k]);
            }
        }
    }
}
