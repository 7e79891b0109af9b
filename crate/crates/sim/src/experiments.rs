//! Multi-trial experiments: A/B comparison and ankle timing sweeps.

use std::fmt::Write as _;

use rayon::prelude::*;
use selda_core::gait::{trial_metrics, AnalysisWindow, MetricsError};
use selda_core::{ConfigSet, GaitMetrics, TrajectoryLog};

use crate::configfile::config_hash;
use crate::csvio::{RunInfo, SummaryRow};
use crate::error::{Error, Result};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SELDA_SIM_THREADS";

#[derive(Clone, Debug)]
pub struct Trial {
    pub label: String,
    pub set: ConfigSet,
}

impl Trial {
    pub fn new(label: impl Into<String>, set: ConfigSet) -> Self {
        Trial { label: label.into(), set }
    }

    pub fn run_info(&self) -> RunInfo {
        RunInfo { config_hash: config_hash(&self.set), seed: self.set.sim.seed }
    }

    /// Simulates the trial. On abort the error carries the partial log.
    pub fn run(&self, window: &AnalysisWindow) -> Result<TrialResult> {
        let (log, metrics) = trial_metrics(&self.set.robot, &self.set.sim, &self.set.controller, window)
            .map_err(|e| Error::Trial { label: self.label.clone(), error: Box::new(e) })?;
        Ok(TrialResult { trial: self.clone(), log, metrics })
    }
}

#[derive(Clone, Debug)]
pub struct TrialResult {
    pub trial: Trial,
    pub log: TrajectoryLog,
    pub metrics: Result<GaitMetrics, MetricsError>,
}

impl TrialResult {
    pub fn label(&self) -> &str {
        &self.trial.label
    }

    pub fn summary_row(&self) -> SummaryRow {
        let c = &self.trial.set.controller;
        SummaryRow::new(
            &self.trial.label,
            self.trial.set.robot.leg_config().label(),
            c.ankle_enabled,
            c.activation_start,
            &self.metrics,
            &config_hash(&self.trial.set),
        )
    }

    /// Mean velocity, NaN without enough steps.
    pub fn velocity(&self) -> f64 {
        self.metrics.as_ref().map_or(f64::NAN, |m| m.mean_velocity)
    }
}

/// Thread count from `SELDA_SIM_THREADS`, `None` when unset.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Usage(format!("{THREADS_ENV} must be a positive integer, got `{v}`"))),
        },
    }
}

/// Runs trials on at most `threads` workers. Results keep the input order.
pub fn run_all(trials: &[Trial], window: &AnalysisWindow, threads: Option<usize>) -> Result<Vec<Result<TrialResult>>> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::Usage(format!("cannot start worker threads: {e}")))?;
    Ok(pool.install(|| trials.par_iter().map(|t| t.run(window)).collect()))
}

/// Parses `start:stop:step` (inclusive) or a comma list of cycle fractions.
pub fn parse_timings(spec: &str) -> Result<Vec<f64>> {
    let bad = |m: &str| Error::Usage(format!("invalid --timings `{spec}`: {m}"));
    let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad(&format!("`{}` is not a number", s.trim())));
    let values = if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        let [a, b, h] = parts[..] else {
            return Err(bad("expected start:stop:step"));
        };
        let (a, b, h) = (num(a)?, num(b)?, num(h)?);
        if ![a, b, h].iter().all(|v| v.is_finite()) || h <= 0.0 || b < a {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let n = ((b - a) / h + 1e-9).floor() as usize;
        (0..=n).map(|i| a + i as f64 * h).collect()
    } else {
        spec.split(',').map(num).collect::<Result<Vec<_>>>()?
    };
    if values.is_empty() {
        return Err(bad("no timings"));
    }
    Ok(values.into_iter().map(|v| (v * 1e12).round() / 1e12).collect())
}

/// `t05` for 5 %, `t12p5` for 12.5 %.
pub fn timing_label(timing: f64) -> String {
    let pct = (timing * 100.0 * 1e9).round() / 1e9;
    if pct.fract() == 0.0 {
        format!("t{:02}", pct as i64)
    } else {
        format!("t{pct}").replace('.', "p")
    }
}

/// Passive reference plus one active trial per timing.
pub fn sweep_trials(base: &ConfigSet, timings: &[f64]) -> Result<Vec<Trial>> {
    let end = base.controller.activation_end;
    let mut trials = vec![Trial::new("passive", passive(base))];
    for &t in timings {
        if !(0.0..end).contains(&t) {
            return Err(Error::Usage(format!("timing {t} outside [0, activation_end = {end})")));
        }
        let mut set = base.clone();
        set.controller = set.controller.with_ankle_timing(t);
        trials.push(Trial::new(timing_label(t), set));
    }
    Ok(trials)
}

pub fn passive(set: &ConfigSet) -> ConfigSet {
    let mut s = set.clone();
    s.controller = s.controller.passive();
    s
}

/// Both configurations with the ankle motor off.
pub fn comparison_trials(a: &ConfigSet, b: &ConfigSet) -> Vec<Trial> {
    vec![Trial::new("A", passive(a)), Trial::new("B", passive(b))]
}

fn metric_lines(out: &mut String, label: &str, m: &Result<GaitMetrics, MetricsError>) {
    match m {
        Ok(m) => {
            let _ = writeln!(
                out,
                "{label:<8} {:>6} {:>9.3} {:>9.1} {:>9.3} {:>9.3} {:>9.3} {:>6}",
                m.step_count(),
                m.mean_velocity,
                m.revolution_time,
                m.length.median,
                m.height.median,
                m.step_duration.median,
                if m.period_two { "yes" } else { "no" }
            );
        }
        Err(e) => {
            let _ = writeln!(out, "{label:<8} {e}");
        }
    }
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        "{:<8} {:>6} {:>9} {:>9} {:>9} {:>9} {:>9} {:>6}",
        "trial", "steps", "v [m/s]", "rev [s]", "L [m]", "h [m]", "T [s]", "p2"
    );
}

/// One line of gait metrics per trial.
pub fn metrics_table(results: &[TrialResult]) -> String {
    let mut out = String::new();
    header(&mut out);
    for r in results {
        metric_lines(&mut out, r.label(), &r.metrics);
    }
    out
}

/// Table of both configurations with B/A ratios.
pub fn comparison_report(results: &[TrialResult]) -> String {
    let mut out = metrics_table(results);
    if let [a, b] = results {
        if let (Ok(ma), Ok(mb)) = (&a.metrics, &b.metrics) {
            let _ = writeln!(
                out,
                "\nB/A  velocity {:.2}x  step length {:.2}x  step duration {:.2}x",
                mb.mean_velocity / ma.mean_velocity,
                mb.length.median / ma.length.median,
                mb.step_duration.median / ma.step_duration.median
            );
        }
    }
    out.push_str("hardware reference: A 0.62 m/s, B 1.20 m/s, step length 378 -> 730 mm\n");
    out
}

/// Active trials ranked by mean velocity, fastest first. NaN ranks last.
pub fn ranking(results: &[TrialResult]) -> Vec<&TrialResult> {
    let mut active: Vec<&TrialResult> = results.iter().filter(|r| r.trial.set.controller.ankle_enabled).collect();
    active.sort_by(|a, b| {
        let key = |r: &TrialResult| if r.velocity().is_nan() { f64::NEG_INFINITY } else { r.velocity() };
        key(b).total_cmp(&key(a))
    });
    active
}

/// Ratio of the fastest to the slowest active velocity.
pub fn velocity_spread(results: &[TrialResult]) -> f64 {
    let v: Vec<f64> = ranking(results).iter().map(|r| r.velocity()).filter(|v| v.is_finite()).collect();
    match (v.first(), v.last()) {
        (Some(hi), Some(lo)) if *lo > 0.0 => hi / lo,
        _ => f64::NAN,
    }
}

pub fn sweep_report(results: &[TrialResult]) -> String {
    let mut out = metrics_table(results);
    let ranked = ranking(results);
    if !ranked.is_empty() {
        let names: Vec<&str> = ranked.iter().map(|r| r.label()).collect();
        let _ = writeln!(out, "\nranking: {}", names.join(" > "));
        let _ = writeln!(out, "velocity spread (max/min): {:.3}", velocity_spread(results));
    }
    out.push_str("hardware reference: best 1.30 m/s at 20%, worst 1.14 m/s at 15%, passive 1.20 m/s\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use selda_core::LegConfig;

    #[test]
    fn range_timings_include_stop() {
        let t = parse_timings("0.05:0.30:0.05").unwrap();
        assert_eq!(t, vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3]);
        assert_eq!(parse_timings("0.1, 0.2").unwrap(), vec![0.1, 0.2]);
        assert!(parse_timings("0.3:0.1:0.05").is_err());
        assert!(parse_timings("0.1:x:0.05").is_err());
        assert!(parse_timings("0.1:0.2").is_err());
    }

    proptest::proptest! {
        #[test]
        fn ranges_cover_start_to_stop(a in 0.0f64..0.2, n in 1usize..12, h in 0.005f64..0.05) {
            let b = a + n as f64 * h;
            let t = parse_timings(&format!("{a}:{b}:{h}")).unwrap();
            proptest::prop_assert_eq!(t.len(), n + 1);
            proptest::prop_assert!((t[0] - a).abs() < 1e-12 && (t[n] - b).abs() < 1e-9);
            proptest::prop_assert!(t.windows(2).all(|w| w[1] > w[0]));
        }
    }

    #[test]
    fn labels() {
        assert_eq!(timing_label(0.05), "t05");
        assert_eq!(timing_label(0.3), "t30");
        assert_eq!(timing_label(0.125), "t12p5");
    }

    #[test]
    fn sweep_has_passive_reference_first() {
        let base = ConfigSet::defaults(LegConfig::B);
        let trials = sweep_trials(&base, &[0.05, 0.3]).unwrap();
        let labels: Vec<&str> = trials.iter().map(|t| t.label.as_str()).collect();
        assert_eq!(labels, ["passive", "t05", "t30"]);
        assert!(!trials[0].set.controller.ankle_enabled);
        assert!(trials[2].set.controller.ankle_enabled);
        assert_eq!(trials[2].set.controller.activation_start, 0.3);
        assert!(sweep_trials(&base, &[0.5]).is_err());
    }
}
