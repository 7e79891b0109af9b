//! CSV files: `#`-prefixed metadata lines, then a one-line header, then rows.
//!
//! Floats are written in their shortest round-trip form, so reading a file
//! back yields bit-identical values.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use selda_core::elastics::StiffnessCurve;
use selda_core::gait::{GaitMetrics, LogRecord, MetricsError, Summary};
use selda_core::kinematics::MAX_SEGMENTS;
use selda_core::TrajectoryLog;

use crate::error::{Error, Result};

/// Column order of trajectory logs. Joint columns are always present; those
/// beyond the leg's joint count hold zeros.
pub const LOG_COLUMNS: [&str; 29] = [
    "t",
    "x_com",
    "y_com",
    "xd_com",
    "yd_com",
    "hip",
    "knee",
    "ankle",
    "foot",
    "hip_rate",
    "knee_rate",
    "ankle_rate",
    "foot_rate",
    "leg_angle",
    "hip_reference",
    "hip_torque",
    "ankle_command",
    "ankle_torque",
    "motor_angle",
    "grf_x",
    "grf_y",
    "tip_height",
    "contact",
    "selda_deflection",
    "phase",
    "energy",
    "work_actuator",
    "work_dissipated",
    "work_contact",
];

const LOG_UNITS: [&str; 29] = [
    "s", "m", "m", "m/s", "m/s", "rad", "rad", "rad", "rad", "rad/s", "rad/s", "rad/s", "rad/s", "rad", "rad", "N*m",
    "N*m", "N*m", "rad", "N", "N", "m", "0/1", "rad", "1", "J", "J", "J", "J",
];

pub const SUMMARY_COLUMNS: [&str; 29] = [
    "trial",
    "config",
    "ankle_enabled",
    "activation_start",
    "step_count",
    "mean_velocity",
    "revolution_time",
    "distance",
    "duration",
    "length_mean",
    "length_min",
    "length_q1",
    "length_median",
    "length_q3",
    "length_max",
    "height_mean",
    "height_min",
    "height_q1",
    "height_median",
    "height_q3",
    "height_max",
    "step_duration_mean",
    "step_duration_min",
    "step_duration_q1",
    "step_duration_median",
    "step_duration_q3",
    "step_duration_max",
    "period_two",
    "config_sha256",
];

pub const STEP_COLUMNS: [&str; 6] = ["trial", "step", "touchdown", "length", "height", "duration"];

/// `# key: value` lines written above the header.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Metadata(pub Vec<(String, String)>);

impl Metadata {
    pub fn new() -> Self {
        Metadata::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.push((key.to_string(), value.to_string()));
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Provenance of one run: hash of the resolved config and its seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RunInfo {
    pub config_hash: String,
    pub seed: u64,
}

impl RunInfo {
    fn metadata(&self, kind: &str) -> Metadata {
        Metadata::new().with("file", kind).with("config_sha256", &self.config_hash).with("seed", self.seed)
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn fmt_bool(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

fn units_line(columns: &[&str], units: &[&str]) -> String {
    columns.iter().zip(units).map(|(c, u)| format!("{c} [{u}]")).collect::<Vec<_>>().join(", ")
}

fn write_table<W: Write>(mut w: W, meta: &Metadata, columns: &[&str], rows: &[Vec<String>]) -> std::io::Result<()> {
    for (k, v) in &meta.0 {
        writeln!(w, "# {k}: {v}")?;
    }
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    csv.write_record(columns)?;
    for row in rows {
        csv.write_record(row)?;
    }
    csv.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn save(path: &Path, meta: &Metadata, columns: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = create(path)?;
    write_table(&mut w, meta, columns, rows).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

/// A parsed CSV file: metadata plus string cells.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn parse(path: &Path, text: &str) -> Result<Table> {
        let mut meta = Metadata::new();
        let mut body = 0;
        for line in text.split_inclusive('\n') {
            let Some(rest) = line.strip_prefix('#') else { break };
            if let Some((k, v)) = rest.trim().split_once(':') {
                meta.0.push((k.trim().to_string(), v.trim().to_string()));
            }
            body += line.len();
        }
        let format = |message: String| Error::Format { path: path.to_path_buf(), message };
        let mut reader = csv::ReaderBuilder::new().from_reader(&text.as_bytes()[body..]);
        let columns: Vec<String> =
            reader.headers().map_err(|e| format(e.to_string()))?.iter().map(str::to_string).collect();
        if columns.is_empty() || columns.iter().all(String::is_empty) {
            return Err(format("missing header line".into()));
        }
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| format(e.to_string()))?;
            rows.push(rec.iter().map(str::to_string).collect());
        }
        Ok(Table { path: path.to_path_buf(), meta, columns, rows })
    }

    pub fn read(path: &Path) -> Result<Table> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Table::parse(path, &text)
    }

    fn format_error(&self, message: String) -> Error {
        Error::Format { path: self.path.clone(), message }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.columns
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| self.format_error(format!("no column `{name}` (available: {})", self.columns.join(", "))))
    }

    pub fn strings(&self, name: &str) -> Result<Vec<&str>> {
        let i = self.column_index(name)?;
        Ok(self.rows.iter().map(|r| r.get(i).map_or("", String::as_str)).collect())
    }

    pub fn numbers(&self, name: &str) -> Result<Vec<f64>> {
        let i = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(n, r)| {
                let cell = r.get(i).map_or("", String::as_str);
                cell.parse().map_err(|_| {
                    self.format_error(format!("row {}: `{cell}` in column `{name}` is not a number", n + 1))
                })
            })
            .collect()
    }

    fn expect_columns(&self, expected: &[&str]) -> Result<()> {
        if self.columns.iter().map(String::as_str).eq(expected.iter().copied()) {
            Ok(())
        } else {
            Err(self.format_error(format!("unexpected header, expected {}", expected.join(","))))
        }
    }
}

fn log_row(r: &LogRecord) -> Vec<String> {
    let mut v = Vec::with_capacity(LOG_COLUMNS.len());
    v.extend([r.t, r.x_com, r.y_com, r.xd_com, r.yd_com].map(fmt_f64));
    v.extend(r.joint_angles.map(fmt_f64));
    v.extend(r.joint_velocities.map(fmt_f64));
    v.extend(
        [
            r.leg_angle,
            r.hip_reference,
            r.hip_torque,
            r.ankle_command,
            r.ankle_torque,
            r.motor_angle,
            r.grf[0],
            r.grf[1],
            r.tip_height,
        ]
        .map(fmt_f64),
    );
    v.push(fmt_bool(r.contact).to_string());
    v.extend([r.selda_deflection, r.phase, r.energy, r.work_actuator, r.work_dissipated, r.work_contact].map(fmt_f64));
    v
}

fn log_metadata(log: &TrajectoryLog, info: &RunInfo) -> Metadata {
    info.metadata("trajectory")
        .with("sample_period", fmt_f64(log.sample_period))
        .with("joints", log.joints)
        .with("boom_radius", fmt_f64(log.boom_radius))
        .with("units", units_line(&LOG_COLUMNS, &LOG_UNITS))
}

pub fn write_log<W: Write>(w: W, log: &TrajectoryLog, info: &RunInfo) -> std::io::Result<()> {
    let rows: Vec<Vec<String>> = log.records.iter().map(log_row).collect();
    write_table(w, &log_metadata(log, info), &LOG_COLUMNS, &rows)
}

pub fn save_log(path: &Path, log: &TrajectoryLog, info: &RunInfo) -> Result<()> {
    let rows: Vec<Vec<String>> = log.records.iter().map(log_row).collect();
    save(path, &log_metadata(log, info), &LOG_COLUMNS, &rows)
}

/// Reads a log written by [`save_log`] or [`write_log`].
pub fn log_from_table(table: &Table) -> Result<(TrajectoryLog, RunInfo)> {
    table.expect_columns(&LOG_COLUMNS)?;
    let meta =
        |key: &str| table.meta.get(key).ok_or_else(|| table.format_error(format!("missing `# {key}:` metadata")));
    let num = |key: &str| -> Result<f64> {
        let v = meta(key)?;
        v.parse().map_err(|_| table.format_error(format!("bad `{key}` metadata `{v}`")))
    };
    let int = |key: &str| -> Result<u64> {
        let v = meta(key)?;
        v.parse().map_err(|_| table.format_error(format!("bad `{key}` metadata `{v}`")))
    };
    let mut log = TrajectoryLog::new(num("sample_period")?, int("joints")? as usize, num("boom_radius")?);
    let info = RunInfo { config_hash: meta("config_sha256")?.to_string(), seed: int("seed")? };
    for (n, row) in table.rows.iter().enumerate() {
        let bad = |c: &str| table.format_error(format!("row {}: bad value `{c}`", n + 1));
        let mut x = [0.0; 29];
        for (i, cell) in row.iter().enumerate().take(29) {
            x[i] = cell.parse().map_err(|_| bad(cell))?;
        }
        if row.len() != 29 {
            return Err(table.format_error(format!("row {}: expected 29 fields, got {}", n + 1, row.len())));
        }
        let mut joint_angles = [0.0; MAX_SEGMENTS];
        let mut joint_velocities = [0.0; MAX_SEGMENTS];
        joint_angles.copy_from_slice(&x[5..9]);
        joint_velocities.copy_from_slice(&x[9..13]);
        log.records.push(LogRecord {
            t: x[0],
            x_com: x[1],
            y_com: x[2],
            xd_com: x[3],
            yd_com: x[4],
            joint_angles,
            joint_velocities,
            leg_angle: x[13],
            hip_reference: x[14],
            hip_torque: x[15],
            ankle_command: x[16],
            ankle_torque: x[17],
            motor_angle: x[18],
            grf: [x[19], x[20]],
            tip_height: x[21],
            contact: x[22] != 0.0,
            selda_deflection: x[23],
            phase: x[24],
            energy: x[25],
            work_actuator: x[26],
            work_dissipated: x[27],
            work_contact: x[28],
        });
    }
    Ok((log, info))
}

pub fn read_log(path: &Path) -> Result<(TrajectoryLog, RunInfo)> {
    log_from_table(&Table::read(path)?)
}

/// One line of a summary table.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub trial: String,
    pub config: String,
    pub ankle_enabled: bool,
    pub activation_start: f64,
    pub step_count: usize,
    pub mean_velocity: f64,
    pub revolution_time: f64,
    pub distance: f64,
    pub duration: f64,
    pub length: Summary,
    pub height: Summary,
    pub step_duration: Summary,
    pub period_two: bool,
    pub config_hash: String,
}

fn nan_summary() -> Summary {
    Summary { min: f64::NAN, q1: f64::NAN, median: f64::NAN, q3: f64::NAN, max: f64::NAN, mean: f64::NAN }
}

impl SummaryRow {
    /// Failed metrics become NaN cells with a zero step count.
    pub fn new(
        trial: &str,
        config: &str,
        ankle_enabled: bool,
        activation_start: f64,
        metrics: &Result<GaitMetrics, MetricsError>,
        config_hash: &str,
    ) -> Self {
        let mut row = SummaryRow {
            trial: trial.to_string(),
            config: config.to_string(),
            ankle_enabled,
            activation_start,
            step_count: 0,
            mean_velocity: f64::NAN,
            revolution_time: f64::NAN,
            distance: f64::NAN,
            duration: f64::NAN,
            length: nan_summary(),
            height: nan_summary(),
            step_duration: nan_summary(),
            period_two: false,
            config_hash: config_hash.to_string(),
        };
        if let Ok(m) = metrics {
            row.step_count = m.step_count();
            row.mean_velocity = m.mean_velocity;
            row.revolution_time = m.revolution_time;
            row.distance = m.distance;
            row.duration = m.duration;
            row.length = m.length;
            row.height = m.height;
            row.step_duration = m.step_duration;
            row.period_two = m.period_two;
        }
        row
    }

    fn cells(&self) -> Vec<String> {
        let s = |x: &Summary| [x.mean, x.min, x.q1, x.median, x.q3, x.max].map(fmt_f64);
        let mut v = vec![
            self.trial.clone(),
            self.config.clone(),
            fmt_bool(self.ankle_enabled).to_string(),
            fmt_f64(self.activation_start),
            self.step_count.to_string(),
        ];
        v.extend([self.mean_velocity, self.revolution_time, self.distance, self.duration].map(fmt_f64));
        v.extend(s(&self.length));
        v.extend(s(&self.height));
        v.extend(s(&self.step_duration));
        v.push(fmt_bool(self.period_two).to_string());
        v.push(self.config_hash.clone());
        v
    }
}

pub fn save_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let cells: Vec<Vec<String>> = rows.iter().map(SummaryRow::cells).collect();
    let meta = Metadata::new().with("file", "summary").with(
        "units",
        "mean_velocity [m/s], revolution_time [s], distance [m], duration [s], length_* [m], height_* [m], step_duration_* [s]",
    );
    save(path, &meta, &SUMMARY_COLUMNS, &cells)
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>> {
    let t = Table::read(path)?;
    t.expect_columns(&SUMMARY_COLUMNS)?;
    let mut out = Vec::with_capacity(t.rows.len());
    for (n, r) in t.rows.iter().enumerate() {
        if r.len() != SUMMARY_COLUMNS.len() {
            return Err(t.format_error(format!("row {}: wrong field count", n + 1)));
        }
        let bad = || t.format_error(format!("row {}: bad value", n + 1));
        let f = |i: usize| r[i].parse::<f64>().map_err(|_| bad());
        let b = |i: usize| match r[i].as_str() {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad()),
        };
        let summary = |i: usize| -> Result<Summary> {
            Ok(Summary { mean: f(i)?, min: f(i + 1)?, q1: f(i + 2)?, median: f(i + 3)?, q3: f(i + 4)?, max: f(i + 5)? })
        };
        out.push(SummaryRow {
            trial: r[0].clone(),
            config: r[1].clone(),
            ankle_enabled: b(2)?,
            activation_start: f(3)?,
            step_count: r[4].parse().map_err(|_| bad())?,
            mean_velocity: f(5)?,
            revolution_time: f(6)?,
            distance: f(7)?,
            duration: f(8)?,
            length: summary(9)?,
            height: summary(15)?,
            step_duration: summary(21)?,
            period_two: b(27)?,
            config_hash: r[28].clone(),
        });
    }
    Ok(out)
}

/// Per-step metrics of several trials, one row per step.
pub fn save_steps<'a>(path: &Path, trials: impl IntoIterator<Item = (&'a str, &'a GaitMetrics)>) -> Result<()> {
    let mut rows = Vec::new();
    for (label, m) in trials {
        for (i, s) in m.steps.iter().enumerate() {
            rows.push(vec![
                label.to_string(),
                i.to_string(),
                fmt_f64(s.touchdown),
                fmt_f64(s.length),
                fmt_f64(s.height),
                fmt_f64(s.duration),
            ]);
        }
    }
    let meta =
        Metadata::new().with("file", "steps").with("units", "touchdown [s], length [m], height [m], duration [s]");
    save(path, &meta, &STEP_COLUMNS, &rows)
}

/// Two-column stiffness curve with the fitted slope in the metadata.
pub fn save_stiffness(path: &Path, curve: &StiffnessCurve, info: &RunInfo) -> Result<()> {
    let meta = info
        .metadata("stiffness")
        .with("fitted_slope", format!("{} N*m/rad", fmt_f64(curve.slope)))
        .with("fitted_intercept", format!("{} N*m", fmt_f64(curve.intercept)))
        .with("units", "motor_angle [rad], torque [N*m]");
    let rows: Vec<Vec<String>> = curve.points.iter().map(|&(a, t)| vec![fmt_f64(a), fmt_f64(t)]).collect();
    save(path, &meta, &["motor_angle", "torque"], &rows)
}
