use core::f64::consts::{PI, TAU};

use proptest::prelude::*;
use selda_core::dynamics::AppliedTorques;
use selda_core::gait::{compute_metrics, detect_steps, run_trial, AnalysisWindow, DEFAULT_DEBOUNCE};
use selda_core::params::{default_params, ContactParams};
use selda_core::{ControllerConfig, Integrator, LegConfig, Model, RobotParams, SimSettings, SimState, TrajectoryLog};

fn short(duration: f64) -> SimSettings {
    SimSettings { total_duration: duration, ..SimSettings::default() }
}

fn active(start: f64) -> ControllerConfig {
    ControllerConfig::default().with_ankle_timing(start)
}

fn undamped(leg: LegConfig) -> RobotParams {
    RobotParams { joint_damping: 0.0, stop_damping: 0.0, ..default_params(leg) }
}

fn isolated() -> SimSettings {
    SimSettings {
        gravity: 0.0,
        contact: ContactParams { stiffness: 0.0, damping: 0.0, friction: 0.0, reg_velocity: 0.0 },
        ..SimSettings::default()
    }
}

/// Airborne state with the leg bent away from rest and moving.
fn flying(model: &Model, height: f64, spin: f64) -> SimState {
    let mut s = model.initial_state(0.1);
    s.q[1] += height;
    s.q[3] -= 0.15;
    s.q[4] -= 0.1;
    s.qd[0] = 0.4;
    s.qd[1] = 0.2;
    s.qd[2] = spin;
    s.qd[3] = -1.0;
    s.qd[4] = 0.7;
    s
}

fn flight_phases(log: &TrajectoryLog) -> Vec<(usize, usize)> {
    let mut phases = Vec::new();
    let mut start = None;
    for (i, r) in log.records.iter().enumerate() {
        match (start, r.contact) {
            (None, false) if i > 0 => start = Some(i),
            (Some(a), true) => {
                phases.push((a, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    phases
}

#[test]
fn flight_energy_is_balanced_by_recorded_work() {
    let log = run_trial(&default_params(LegConfig::B), &short(6.0), &active(0.2)).unwrap();
    let phases = flight_phases(&log);
    assert!(phases.len() > 5);
    for (a, b) in phases {
        let (ra, rb) = (&log.records[a], &log.records[b]);
        let de = rb.energy - ra.energy;
        let work = (rb.work_actuator - ra.work_actuator) + (rb.work_contact - ra.work_contact)
            - (rb.work_dissipated - ra.work_dissipated);
        assert!((de - work).abs() <= 0.005 * ra.energy.abs(), "flight at t={} residual {}", ra.t, de - work);
    }
}

#[test]
fn ground_never_pulls_and_penetration_stays_small() {
    for ctrl in [ControllerConfig::default().passive(), active(0.05), active(0.3)] {
        let log = run_trial(&default_params(LegConfig::B), &short(8.0), &ctrl).unwrap();
        for r in &log.records {
            assert!(r.grf[1] >= 0.0);
            assert!(r.tip_height >= -1e-3, "penetration {} at t={}", -r.tip_height, r.t);
        }
    }
}

#[test]
fn momentum_is_conserved_without_external_forces() {
    let settings = SimSettings { integrator: Integrator::Rk4, physics_dt: 2.5e-5, control_dt: 2.5e-5, ..isolated() };
    // config A keeps the state clear of end-stops, whose force kinks cost
    // the integrator its order
    let model = Model::new(undamped(LegConfig::A), settings).unwrap();
    let mut s = flying(&model, 0.0, 1.5);
    let p0 = model.linear_momentum(&s);
    let u = AppliedTorques { hip: 0.8, ankle_motor: 0.5 };
    for _ in 0..20_000 {
        s = model.step(&s, &u).unwrap();
    }
    let p1 = model.linear_momentum(&s);
    let scale = p0[0].hypot(p0[1]);
    assert!((p1[0] - p0[0]).hypot(p1[1] - p0[1]) <= 1e-8 * scale, "{p0:?} -> {p1:?}");
}

#[test]
fn zero_torque_zero_gravity_run_conserves_energy() {
    let settings = SimSettings { integrator: Integrator::Rk4, physics_dt: 1e-5, control_dt: 1e-5, ..isolated() };
    let model = Model::new(undamped(LegConfig::A), settings).unwrap();
    let mut s = flying(&model, 0.0, 0.5);
    let e0 = model.energy(&s).total();
    for _ in 0..1_000_000 {
        s = model.step(&s, &AppliedTorques::default()).unwrap();
    }
    let e1 = model.energy(&s).total();
    assert!((e1 - e0).abs() <= 1e-6 * e0, "{e0} -> {e1}");
}

fn final_state(leg: LegConfig, integrator: Integrator, dt: f64, duration: f64) -> SimState {
    let settings = SimSettings { integrator, physics_dt: dt, control_dt: dt, ..SimSettings::default() };
    let model = Model::new(default_params(leg), settings).unwrap();
    let mut s = flying(&model, 0.3, 0.5);
    for _ in 0..(duration / dt).round() as usize {
        s = model.step(&s, &AppliedTorques::default()).unwrap();
    }
    s
}

fn state_error(a: &SimState, b: &SimState) -> f64 {
    (0..a.dof).map(|i| (a.q[i] - b.q[i]).abs()).fold(0.0, f64::max)
}

fn observed_order(leg: LegConfig, integrator: Integrator, dt: f64) -> f64 {
    let duration = 0.1;
    let reference = final_state(leg, integrator, dt / 64.0, duration);
    let coarse = state_error(&final_state(leg, integrator, dt, duration), &reference);
    let fine = state_error(&final_state(leg, integrator, dt / 2.0, duration), &reference);
    (coarse / fine).log2()
}

#[test]
fn semi_implicit_euler_is_first_order() {
    let order = observed_order(LegConfig::B, Integrator::SemiImplicitEuler, 2e-4);
    assert!((order - 1.0).abs() < 0.2, "order {order}");
}

#[test]
fn rk4_is_fourth_order() {
    // the foot of config B rests on its stop, so A gives the smooth case
    let order = observed_order(LegConfig::A, Integrator::Rk4, 1.25e-4);
    assert!((order - 4.0).abs() < 0.3, "order {order}");
}

#[test]
fn ballistic_trunk_follows_projectile() {
    // a rigid-looking leg: everything at rest, so only gravity acts
    for (integrator, dt, tol) in [(Integrator::SemiImplicitEuler, 1e-4, 1e-4), (Integrator::Rk4, 1e-3, 1e-9)] {
        let settings = SimSettings { integrator, physics_dt: dt, control_dt: dt, ..SimSettings::default() };
        let model = Model::new(default_params(LegConfig::A), settings).unwrap();
        let mut s = model.initial_state(model.hip_zero());
        s.q[1] += 1.0;
        let y0 = s.q[1];
        let n = (0.2 / dt).round() as usize;
        for _ in 0..n {
            s = model.step(&s, &AppliedTorques::default()).unwrap();
        }
        let t = n as f64 * dt;
        assert!((s.q[1] - (y0 - 0.5 * 9.81 * t * t)).abs() < tol, "{integrator:?}");
    }
}

#[test]
fn repeated_trials_are_bit_identical() {
    let p = default_params(LegConfig::B);
    let a = run_trial(&p, &short(3.0), &active(0.15)).unwrap();
    let b = run_trial(&p, &short(3.0), &active(0.15)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn unexcited_robot_settles_to_stance() {
    let ctrl = ControllerConfig { amplitude: 0.0, offset: 0.0, ..ControllerConfig::default().passive() };
    let log = run_trial(&default_params(LegConfig::B), &short(3.5), &ctrl).unwrap();
    let last = log.records.last().unwrap();
    assert!(last.xd_com.abs() < 1e-3 && last.yd_com.abs() < 1e-3, "{last:?}");
    assert!(last.contact);
}

#[test]
fn step_lengths_telescope_and_survive_resampling() {
    let log = run_trial(&default_params(LegConfig::B), &short(12.0), &ControllerConfig::default().passive()).unwrap();
    let window = AnalysisWindow::default();
    let m = compute_metrics(&log, &detect_steps(&log, DEFAULT_DEBOUNCE), &window).unwrap();
    let total: f64 = m.steps.iter().map(|s| s.length).sum();
    assert!((total - m.distance).abs() < 1e-9);

    let coarse = log.decimate(2);
    let c = compute_metrics(&coarse, &detect_steps(&coarse, DEFAULT_DEBOUNCE), &window).unwrap();
    assert_eq!(c.step_count(), m.step_count());
    assert!((c.mean_velocity - m.mean_velocity).abs() <= 0.01 * m.mean_velocity.abs());
    assert!((c.height.median - m.height.median).abs() <= 0.01 * m.height.median);
}

#[test]
fn zero_foot_config_b_is_config_a() {
    let mut b = default_params(LegConfig::B);
    b.total_mass = 1.05;
    b.segment_lengths[3] = 0.0;
    let ctrl = ControllerConfig::default().passive();
    let la = run_trial(&default_params(LegConfig::A), &short(4.0), &ctrl).unwrap();
    let lb = run_trial(&b, &short(4.0), &ctrl).unwrap();
    for (ra, rb) in la.records.iter().zip(&lb.records) {
        assert!((ra.x_com - rb.x_com).abs() < 1e-9 && (ra.y_com - rb.y_com).abs() < 1e-9);
    }
}

fn elastic_forces(model: &Model, s: &SimState) -> ([f64; 6], f64) {
    let acc = model.compute_accelerations(s, &AppliedTorques::default()).unwrap();
    let m = model.mass_matrix(s);
    let mut f = [0.0; 6];
    for (i, fi) in f.iter_mut().enumerate().take(s.dof) {
        *fi = (0..s.dof).map(|j| m[i][j] * acc.qdd[j]).sum();
    }
    (f, model.params.selda_motor_inertia * acc.motor)
}

fn closed_cycle_work(centre: [f64; 4], amp: [f64; 4], phase: [f64; 4]) -> f64 {
    let model = Model::new(undamped(LegConfig::B), isolated()).unwrap();
    let base = model.initial_state(0.0);
    let n = 20_000;
    let path = |u: f64, k: usize| centre[k] + amp[k] * (TAU * u + phase[k]).sin();
    let slope = |u: f64, k: usize| TAU * amp[k] * (TAU * u + phase[k]).cos();
    let mut work = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        let mut s = base.clone();
        s.q[3] = path(u, 0);
        s.q[4] = path(u, 1);
        s.q[5] = path(u, 2);
        s.selda.motor_angle = path(u, 3);
        let (f, fm) = elastic_forces(&model, &s);
        work += (f[3] * slope(u, 0) + f[4] * slope(u, 1) + f[5] * slope(u, 2) + fm * slope(u, 3)) / n as f64;
    }
    work
}

#[test]
fn closed_cycle_through_stops_does_no_work() {
    // sweeps the foot onto its stop and the line through slack
    let w = closed_cycle_work([2.2, 2.7, PI - 0.2, 0.3], [0.3, 0.35, 0.3, 0.8], [0.0, 1.0, 2.0, 3.0]);
    assert!(w.abs() < 1e-6, "work {w}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn closed_elastic_cycles_do_no_work(
        knee in 1.8f64..2.6, ankle in 2.3f64..3.0, foot in 2.6f64..3.1,
        a in prop::array::uniform4(0.0f64..0.3), ph in prop::array::uniform4(0.0f64..TAU),
    ) {
        let w = closed_cycle_work([knee, ankle, foot, 0.5], a, ph);
        prop_assert!(w.abs() < 1e-6, "work {}", w);
    }

    #[test]
    fn power_balance_at_random_states(
        h in -0.004f64..0.05, spin in -3.0f64..3.0, hip in -2.0f64..2.0, motor in -1.0f64..1.0,
    ) {
        let settings = SimSettings { integrator: Integrator::Rk4, physics_dt: 1e-6, control_dt: 1e-6, ..SimSettings::default() };
        let model = Model::new(default_params(LegConfig::B), settings).unwrap();
        let mut s = flying(&model, h, spin);
        s.q[1] -= 0.005;
        let u = AppliedTorques { hip, ankle_motor: motor };
        let next = model.step(&s, &u).unwrap();
        let de = model.energy(&next).total() - model.energy(&s).total();
        let dw = (next.work.actuator - s.work.actuator) + (next.work.contact - s.work.contact)
            - (next.work.dissipated - s.work.dissipated);
        let (pa, pc, pd) = model.power_flows(&s, &u).unwrap();
        let flow = (pa.abs() + pc.abs() + pd.abs()) * 1e-6;
        prop_assert!((de - dw).abs() <= 1e-6 * flow + 1e-14, "dE {} vs work {}", de, dw);
    }
}
