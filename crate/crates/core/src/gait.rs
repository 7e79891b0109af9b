//! Trials, trajectory logs, step detection and gait statistics.

use alloc::vec::Vec;
use core::fmt;

use crate::control::{ControlOutput, ControllerConfig, GaitController};
use crate::dynamics::{AppliedTorques, Model, SimError, SimState};
use crate::kinematics::{revolution_distance, MAX_SEGMENTS};
use crate::params::{ParamError, RobotParams, SimSettings};

/// One logged sample, taken at a controller tick.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LogRecord {
    pub t: f64,
    /// Whole-robot centre of mass in the unrolled plane [m].
    pub x_com: f64,
    pub y_com: f64,
    pub xd_com: f64,
    pub yd_com: f64,
    /// Hip, knee, ankle, foot; unused entries are zero [rad].
    pub joint_angles: [f64; MAX_SEGMENTS],
    pub joint_velocities: [f64; MAX_SEGMENTS],
    /// Hip-to-tip line from the vertical [rad].
    pub leg_angle: f64,
    pub hip_reference: f64,
    pub hip_torque: f64,
    pub ankle_command: f64,
    /// Torque delivered by the ankle motor [N·m].
    pub ankle_torque: f64,
    pub motor_angle: f64,
    /// Ground reaction `(tangential, normal)` [N].
    pub grf: [f64; 2],
    /// Height of the tip above ground; negative while penetrating [m].
    pub tip_height: f64,
    pub contact: bool,
    pub selda_deflection: f64,
    pub phase: f64,
    /// Mechanical energy and accumulated energy flows [J].
    pub energy: f64,
    pub work_actuator: f64,
    pub work_dissipated: f64,
    pub work_contact: f64,
}

/// Uniformly sampled trial record.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryLog {
    /// Sampling period [s].
    pub sample_period: f64,
    /// Number of joint coordinates in use.
    pub joints: usize,
    /// Boom radius of the robot, for revolution bookkeeping [m].
    pub boom_radius: f64,
    pub records: Vec<LogRecord>,
}

impl TrajectoryLog {
    pub fn new(sample_period: f64, joints: usize, boom_radius: f64) -> Self {
        TrajectoryLog { sample_period, joints, boom_radius, records: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Keeps every `factor`-th record.
    pub fn decimate(&self, factor: usize) -> TrajectoryLog {
        let factor = factor.max(1);
        TrajectoryLog {
            sample_period: self.sample_period * factor as f64,
            joints: self.joints,
            boom_radius: self.boom_radius,
            records: self.records.iter().step_by(factor).copied().collect(),
        }
    }

    /// Index of the first record at or after `t`.
    fn index_at(&self, t: f64) -> usize {
        self.records.partition_point(|r| r.t < t - 0.25 * self.sample_period)
    }
}

/// Trial aborted by the simulator. `partial` holds everything logged before
/// the failure.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialError {
    pub error: SimError,
    pub partial: TrajectoryLog,
}

impl fmt::Display for TrialError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "trial aborted after {} samples: {}", self.partial.len(), self.error)
    }
}

impl core::error::Error for TrialError {}

impl From<ParamError> for TrialError {
    fn from(e: ParamError) -> Self {
        TrialError { error: SimError::InvalidParams(e), partial: TrajectoryLog::default() }
    }
}

fn record(model: &Model, s: &SimState, out: &ControlOutput, t: f64) -> LogRecord {
    let com = model.center_of_mass(s);
    let momentum = model.linear_momentum(s);
    let m = model.params.total_mass;
    let n = model.dof() - 2;
    let mut joint_angles = [0.0; MAX_SEGMENTS];
    let mut joint_velocities = [0.0; MAX_SEGMENTS];
    joint_angles[..n].copy_from_slice(s.joint_angles());
    joint_velocities[..n].copy_from_slice(s.joint_velocities());
    let tip = model.contact_point(s);
    LogRecord {
        t,
        x_com: com[0],
        y_com: com[1],
        xd_com: momentum[0] / m,
        yd_com: momentum[1] / m,
        joint_angles,
        joint_velocities,
        leg_angle: model.virtual_leg(s).0,
        hip_reference: out.hip_reference,
        hip_torque: out.hip_torque,
        ankle_command: out.ankle_command,
        ankle_torque: s.selda.applied_torque,
        motor_angle: s.selda.motor_angle,
        grf: s.grf,
        tip_height: tip.position[1],
        contact: s.contact,
        selda_deflection: s.selda.deflection,
        phase: out.phase,
        energy: model.energy(s).total(),
        work_actuator: s.work.actuator,
        work_dissipated: s.work.dissipated,
        work_contact: s.work.contact,
    }
}

/// Simulates one trial from the standard initial condition (resting pose,
/// tip 5 mm above ground, at rest) for `settings.total_duration`.
///
/// Controllers run at every control tick and are held in between; the log
/// is sampled at the same ticks.
pub fn run_trial(
    params: &RobotParams,
    settings: &SimSettings,
    ctrl: &ControllerConfig,
) -> Result<TrajectoryLog, TrialError> {
    let model = Model::new(params.clone(), *settings)?;
    ctrl.validate().map_err(|e| ParamError { key: e.key, reason: e.reason })?;
    let mut controller = GaitController::new(*ctrl, params.hip_torque_limit(), params.motor_torque_limit);
    let zero = model.hip_zero();
    let mut s = model.initial_state(crate::control::hip_reference(0.0, ctrl) + zero);
    let ticks = libm::round(settings.total_duration / settings.control_dt) as usize;
    let substeps = settings.substeps();
    let mut log = TrajectoryLog::new(settings.control_dt, model.dof() - 2, params.boom_radius);
    log.records.reserve(ticks + 1);

    for k in 0..=ticks {
        let t = k as f64 * settings.control_dt;
        s.t = t;
        let out = controller.update(t, s.q[2] - zero, s.qd[2], s.contact);
        log.records.push(record(&model, &s, &out, t));
        if k == ticks {
            break;
        }
        let u = AppliedTorques::from(&out);
        for _ in 0..substeps {
            s = match model.step(&s, &u) {
                Ok(next) => next,
                Err(error) => return Err(TrialError { error, partial: log }),
            };
        }
    }
    Ok(log)
}

/// Contact flickers and steps shorter than this are merged [s].
pub const DEFAULT_DEBOUNCE: f64 = 0.050;

/// One step: from a touchdown to the next touchdown.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepWindow {
    pub touchdown: f64,
    /// End of the (debounced) contact phase.
    pub liftoff: Option<f64>,
    /// Time of maximum CoM height before the next touchdown.
    pub apex: Option<f64>,
    /// Next touchdown; `None` for the last, incomplete step.
    pub next_touchdown: Option<f64>,
}

impl StepWindow {
    pub fn is_complete(&self) -> bool {
        self.next_touchdown.is_some()
    }
}

/// Finds touchdowns (rising edges of the contact flag), liftoffs (falling
/// edges) and apexes. Contact phases separated by less than `debounce`
/// seconds are merged into one. An all-airborne log yields no steps.
pub fn detect_steps(log: &TrajectoryLog, debounce: f64) -> Vec<StepWindow> {
    // raw contact intervals as [start, end) record indices
    let mut intervals: Vec<(usize, Option<usize>)> = Vec::new();
    let mut prev = false;
    for (i, r) in log.records.iter().enumerate() {
        if r.contact && !prev {
            intervals.push((i, None));
        } else if !r.contact && prev {
            if let Some(last) = intervals.last_mut() {
                last.1 = Some(i);
            }
        }
        prev = r.contact;
    }
    // a log that starts in contact has no touchdown at its first sample
    if intervals.first().is_some_and(|iv| iv.0 == 0) && log.records.first().is_some_and(|r| r.contact) {
        intervals.remove(0);
    }

    let t = |i: usize| log.records[i].t;
    let mut merged: Vec<(usize, Option<usize>)> = Vec::new();
    for iv in intervals {
        if let Some(last) = merged.last_mut() {
            let close_gap = last.1.is_some_and(|end| t(iv.0) - t(end) < debounce);
            let short_step = t(iv.0) - t(last.0) < debounce;
            if close_gap || short_step {
                last.1 = iv.1;
                continue;
            }
        }
        merged.push(iv);
    }

    let mut steps = Vec::with_capacity(merged.len());
    for (k, &(start, end)) in merged.iter().enumerate() {
        let next = merged.get(k + 1).map(|iv| iv.0);
        let stop = next.unwrap_or(log.records.len());
        let apex =
            (start..stop).max_by(|&a, &b| log.records[a].y_com.total_cmp(&log.records[b].y_com).then(b.cmp(&a))).map(t);
        steps.push(StepWindow {
            touchdown: t(start),
            liftoff: end.map(t),
            apex: if next.is_some() { apex } else { None },
            next_touchdown: next.map(t),
        });
    }
    steps
}

/// Which complete steps enter the statistics.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AnalysisWindow {
    /// Leading complete steps discarded as transient.
    pub skip_steps: usize,
    /// Optional cap on the number of analysed steps.
    pub max_steps: Option<usize>,
}

impl Default for AnalysisWindow {
    fn default() -> Self {
        AnalysisWindow { skip_steps: 3, max_steps: None }
    }
}

/// Order statistics of one per-step quantity.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Summary {
        if values.is_empty() {
            return Summary::default();
        }
        let mut v: Vec<f64> = values.to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let lo = libm::floor(pos) as usize;
            let hi = (lo + 1).min(v.len() - 1);
            v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
        };
        Summary {
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepMetrics {
    pub touchdown: f64,
    /// CoM advance between this touchdown and the next [m].
    pub length: f64,
    /// Highest minus lowest CoM height within the step [m].
    pub height: f64,
    pub duration: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GaitMetrics {
    pub steps: Vec<StepMetrics>,
    /// Distance over time of the analysed window [m/s].
    pub mean_velocity: f64,
    /// Time to travel one boom revolution at the mean velocity [s].
    pub revolution_time: f64,
    pub distance: f64,
    pub duration: f64,
    pub length: Summary,
    pub height: Summary,
    pub step_duration: Summary,
    /// Alternating step heights differ by more than 10 % of their mean.
    pub period_two: bool,
}

impl GaitMetrics {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MetricsError {
    InsufficientSteps { needed: usize, found: usize },
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricsError::InsufficientSteps { needed, found } => {
                write!(f, "need at least {needed} complete steps, found {found}")
            }
        }
    }
}

impl core::error::Error for MetricsError {}

/// Relative difference of alternating step heights that flags period-2
/// hopping.
pub const PERIOD_TWO_THRESHOLD: f64 = 0.10;

pub fn is_period_two(heights: &[f64]) -> bool {
    if heights.len() < 2 {
        return false;
    }
    let mean = heights.iter().sum::<f64>() / heights.len() as f64;
    let avg = |odd: usize| {
        let v: Vec<f64> = heights.iter().skip(odd).step_by(2).copied().collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    libm::fabs(avg(0) - avg(1)) > PERIOD_TWO_THRESHOLD * libm::fabs(mean)
}

/// Per-step and aggregate gait statistics over the complete steps of the
/// analysis window.
pub fn compute_metrics(
    log: &TrajectoryLog,
    steps: &[StepWindow],
    window: &AnalysisWindow,
) -> Result<GaitMetrics, MetricsError> {
    let complete: Vec<&StepWindow> = steps.iter().filter(|s| s.is_complete()).collect();
    let take = window.max_steps.unwrap_or(usize::MAX);
    let analysed: Vec<&StepWindow> = complete.iter().skip(window.skip_steps).take(take).copied().collect();
    if analysed.is_empty() {
        return Err(MetricsError::InsufficientSteps { needed: window.skip_steps + 1, found: complete.len() });
    }

    let mut per_step = Vec::with_capacity(analysed.len());
    for s in &analysed {
        let next = s.next_touchdown.expect("complete step");
        let (a, b) = (log.index_at(s.touchdown), log.index_at(next));
        let slice = &log.records[a..=b.min(log.records.len() - 1)];
        let (lo, hi) = slice[..slice.len().saturating_sub(1).max(1)]
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.y_com), hi.max(r.y_com)));
        per_step.push(StepMetrics {
            touchdown: s.touchdown,
            length: log.records[b].x_com - log.records[a].x_com,
            height: (hi - lo).max(0.0),
            duration: next - s.touchdown,
        });
    }

    let first = analysed[0];
    let last_td = analysed[analysed.len() - 1].next_touchdown.expect("complete step");
    let distance = log.records[log.index_at(last_td)].x_com - log.records[log.index_at(first.touchdown)].x_com;
    let duration = last_td - first.touchdown;
    let mean_velocity = distance / duration;
    let revolution_time =
        if mean_velocity > 0.0 { revolution_distance(log.boom_radius) / mean_velocity } else { f64::INFINITY };
    let lengths: Vec<f64> = per_step.iter().map(|s| s.length).collect();
    let heights: Vec<f64> = per_step.iter().map(|s| s.height).collect();
    let durations: Vec<f64> = per_step.iter().map(|s| s.duration).collect();
    Ok(GaitMetrics {
        mean_velocity,
        revolution_time,
        distance,
        duration,
        length: Summary::of(&lengths),
        height: Summary::of(&heights),
        step_duration: Summary::of(&durations),
        period_two: is_period_two(&heights),
        steps: per_step,
    })
}

/// Runs a trial and reduces it to gait metrics with default step detection.
pub fn trial_metrics(
    params: &RobotParams,
    settings: &SimSettings,
    ctrl: &ControllerConfig,
    window: &AnalysisWindow,
) -> Result<(TrajectoryLog, Result<GaitMetrics, MetricsError>), TrialError> {
    let log = run_trial(params, settings, ctrl)?;
    let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
    let metrics = compute_metrics(&log, &steps, window);
    Ok((log, metrics))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn synthetic(duration: f64, dt: f64, f: impl Fn(f64) -> (f64, f64, bool)) -> TrajectoryLog {
        let n = libm::round(duration / dt) as usize;
        let mut log = TrajectoryLog::new(dt, 3, 1.55);
        for i in 0..=n {
            let t = i as f64 * dt;
            let (x, y, c) = f(t);
            log.records.push(LogRecord { t, x_com: x, y_com: y, contact: c, ..Default::default() });
        }
        log
    }

    #[test]
    fn touchdowns_every_other_toggle() {
        // contact toggles every 0.3 s, starting airborne
        let log = synthetic(1.8, 0.001, |t| (0.0, 0.0, (libm::floor(t / 0.3 + 1e-9) as i64) % 2 == 1));
        let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
        let tds: Vec<f64> = steps.iter().map(|s| s.touchdown).collect();
        assert_eq!(tds.len(), 3);
        for (got, want) in tds.iter().zip([0.3, 0.9, 1.5]) {
            assert!((got - want).abs() < 1e-9, "{tds:?}");
        }
        assert!((steps[0].liftoff.unwrap() - 0.6).abs() < 1e-9);
        assert!(steps[2].next_touchdown.is_none());
    }

    #[test]
    fn contact_chatter_is_merged() {
        // touchdown at 0.5 s with a 2 ms flicker right after
        let log = synthetic(1.0, 0.001, |t| {
            let c = (0.5..0.51).contains(&t) || (0.512..0.7).contains(&t);
            (0.0, 0.0, c)
        });
        let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
        assert_eq!(steps.len(), 1);
        assert!((steps[0].touchdown - 0.5).abs() < 1e-9);
        assert!((steps[0].liftoff.unwrap() - 0.7).abs() < 1e-9);
    }

    #[test]
    fn airborne_log_has_no_steps() {
        let log = synthetic(1.0, 0.001, |_| (0.0, 1.0, false));
        assert!(detect_steps(&log, DEFAULT_DEBOUNCE).is_empty());
        let err = compute_metrics(&log, &[], &AnalysisWindow::default()).unwrap_err();
        assert_eq!(err, MetricsError::InsufficientSteps { needed: 4, found: 0 });
    }

    #[test]
    fn step_height_of_sine_squared_bounce() {
        let period = 0.6;
        let h = 0.04;
        let log = synthetic(6.0, 0.001, |t| {
            let s = libm::sin(PI * t / period);
            (1.2 * t, 0.4 + h * s * s, libm::fmod(t + 1e-9, period) < 0.2)
        });
        let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
        let m = compute_metrics(&log, &steps, &AnalysisWindow::default()).unwrap();
        for s in &m.steps {
            assert!((s.height - h).abs() < 1e-9, "{}", s.height);
            assert!((s.length - 1.2 * period).abs() < 1e-9);
        }
        assert!((m.mean_velocity - 1.2).abs() < 1e-9);
        assert!(!m.period_two);
    }

    #[test]
    fn revolution_time_at_constant_speed() {
        let log = synthetic(10.0, 0.001, |t| (1.2 * t, 0.3, libm::fmod(t + 1e-9, 0.5) < 0.2));
        let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
        let m = compute_metrics(&log, &steps, &AnalysisWindow::default()).unwrap();
        assert!((m.revolution_time - 2.0 * PI * 1.55 / 1.2).abs() < 1e-6);
        assert!((m.revolution_time - 8.12).abs() < 0.01);
    }

    #[test]
    fn period_two_threshold() {
        assert!(is_period_two(&[0.05, 0.07, 0.05, 0.07, 0.05, 0.07]));
        assert!(!is_period_two(&[0.06, 0.0605, 0.06, 0.0605]));
        assert!(!is_period_two(&[0.06]));
    }

    #[test]
    fn summary_quartiles() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!((s.min, s.q1, s.median, s.q3, s.max, s.mean), (1.0, 2.0, 3.0, 4.0, 5.0, 3.0));
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((s.q1, s.median, s.q3), (1.75, 2.5, 3.25));
    }

    #[test]
    fn step_lengths_telescope() {
        let log =
            synthetic(8.0, 0.001, |t| (0.9 * t + 0.05 * libm::sin(7.0 * t), 0.3, libm::fmod(t + 1e-9, 0.55) < 0.2));
        let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
        let m = compute_metrics(&log, &steps, &AnalysisWindow { skip_steps: 2, max_steps: None }).unwrap();
        let total: f64 = m.steps.iter().map(|s| s.length).sum();
        assert!((total - m.distance).abs() < 1e-9);
    }

    #[test]
    fn decimation_keeps_every_other_sample() {
        let log = synthetic(1.0, 0.001, |t| (t, 0.0, false));
        let half = log.decimate(2);
        assert_eq!(half.len(), 501);
        assert_eq!(half.sample_period, 0.002);
        assert_eq!(half.records[1].t, log.records[2].t);
        let _ = vec![0];
    }

    proptest! {
        #[test]
        fn summary_is_ordered(v in proptest::collection::vec(-1e3f64..1e3, 1..40)) {
            let s = Summary::of(&v);
            prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
            prop_assert!(s.min <= s.mean && s.mean <= s.max);
        }

        #[test]
        fn random_strides_telescope(
            speed in 0.2f64..2.0, wobble in 0.0f64..0.1, period in 0.3f64..0.8, skip in 0usize..4,
        ) {
            let log = synthetic(8.0, 0.001, |t| {
                (speed * t + wobble * libm::sin(9.0 * t), 0.3, libm::fmod(t + 1e-9, period) < 0.15)
            });
            let steps = detect_steps(&log, DEFAULT_DEBOUNCE);
            let m = compute_metrics(&log, &steps, &AnalysisWindow { skip_steps: skip, max_steps: None }).unwrap();
            let total: f64 = m.steps.iter().map(|s| s.length).sum();
            prop_assert!((total - m.distance).abs() < 1e-9);
            prop_assert!((m.step_duration.mean - period).abs() < 2e-3);
        }
    }
}
