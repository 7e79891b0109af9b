//! Command line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use selda_core::elastics::characterize_stiffness;
use selda_core::gait::AnalysisWindow;
use selda_core::{config, LegConfig};

use crate::configfile;
use crate::csvio::{save_log, save_steps, save_stiffness, save_summary, RunInfo, Table};
use crate::error::{Error, Result};
use crate::experiments::{self, Trial, TrialResult};
use crate::svg::{save_svg, PlotKind, PlotSpec};

#[derive(Parser, Debug)]
#[command(name = "selda-sim", version, about = "Planar hopping leg simulator with a series-elastic ankle")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// Config file. Built-in defaults of leg B when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set hip_frequency=1.8`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Clone, Copy)]
pub struct WindowArgs {
    /// Leading complete steps excluded from the statistics.
    #[arg(long, default_value_t = 3)]
    pub skip_steps: usize,
}

impl WindowArgs {
    fn window(self) -> AnalysisWindow {
        AnalysisWindow { skip_steps: self.skip_steps, max_steps: None }
    }
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sweep the ankle motor angle with the foot clamped and fit the stiffness.
    Characterize {
        #[command(flatten)]
        config: ConfigArgs,
        /// First motor angle [rad].
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        /// Last motor angle [rad].
        #[arg(long, default_value_t = 2.0)]
        to: f64,
        #[arg(long, default_value_t = 21)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one trial and write its log and gait metrics.
    Hop {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        window: WindowArgs,
        /// Output directory.
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Run configurations A and B with the ankle motor off.
    Compare {
        #[arg(long)]
        config_a: Option<PathBuf>,
        #[arg(long)]
        config_b: Option<PathBuf>,
        /// Override applied to both configurations. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Passive trial plus one active trial per ankle activation timing.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// `start:stop:step` or a comma list of cycle fractions.
        #[arg(long, default_value = "0.05:0.30:0.05")]
        timings: String,
        #[command(flatten)]
        window: WindowArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Render columns of a CSV file as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(PlotKind), default_value = "timeseries")]
        kind: PlotKind,
        #[arg(long)]
        x: String,
        /// Comma separated y columns.
        #[arg(long, value_delimiter = ',', required = true)]
        y: Vec<String>,
        #[arg(long, default_value = "")]
        title: String,
        #[arg(long)]
        x_label: Option<String>,
        #[arg(long)]
        y_label: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the resolved configuration.
    Config {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

impl clap::builder::ValueParserFactory for PlotKind {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| s.parse::<PlotKind>())
    }
}

fn load(args: &ConfigArgs) -> Result<selda_core::ConfigSet> {
    configfile::load(args.config.as_deref(), LegConfig::B, &args.set)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn log_name(label: &str) -> String {
    format!("trial_{label}.csv")
}

/// Writes summary, steps and per-trial logs. Aborted trials leave their
/// partial log behind; the first abort is returned after everything is
/// written.
fn write_results(dir: &Path, results: Vec<Result<TrialResult>>, trials: &[Trial]) -> Result<Vec<TrialResult>> {
    create_dir(dir)?;
    let mut ok = Vec::new();
    let mut first_abort = None;
    for (r, trial) in results.into_iter().zip(trials) {
        match r {
            Ok(r) => {
                save_log(&dir.join(log_name(r.label())), &r.log, &trial.run_info())?;
                ok.push(r);
            }
            Err(Error::Trial { label, error }) => {
                save_log(&dir.join(log_name(&label)), &error.partial, &trial.run_info())?;
                first_abort.get_or_insert(Error::Trial { label, error });
            }
            Err(e) => return Err(e),
        }
    }
    let rows: Vec<_> = ok.iter().map(TrialResult::summary_row).collect();
    save_summary(&dir.join("summary.csv"), &rows)?;
    save_steps(&dir.join("steps.csv"), ok.iter().filter_map(|r| r.metrics.as_ref().ok().map(|m| (r.label(), m))))?;
    match first_abort {
        Some(e) => Err(e),
        None => Ok(ok),
    }
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Characterize { config, from, to, points, out } => {
            let set = load(&config)?;
            if points < 2 || !from.is_finite() || !to.is_finite() || to <= from {
                return Err(Error::Usage("need --points >= 2 and --to > --from".into()));
            }
            let sweep: Vec<f64> = (0..points).map(|i| from + (to - from) * i as f64 / (points - 1) as f64).collect();
            let curve = characterize_stiffness(&set.robot, &sweep).map_err(|e| Error::Usage(e.to_string()))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                create_dir(dir)?;
            }
            let info = RunInfo { config_hash: configfile::config_hash(&set), seed: set.sim.seed };
            save_stiffness(&out, &curve, &info)?;
            println!("fitted slope {:.6} N*m/rad, intercept {:.6} N*m", curve.slope, curve.intercept);
        }
        Command::Hop { config, window, out } => {
            let set = load(&config)?;
            let trial = Trial::new(set.robot.leg_config().label(), set);
            let results = vec![trial.run(&window.window())];
            let ok = write_results(&out, results, std::slice::from_ref(&trial))?;
            print!("{}", experiments::metrics_table(&ok));
        }
        Command::Compare { config_a, config_b, set, window, out } => {
            let a = configfile::load(config_a.as_deref(), LegConfig::A, &set)?;
            let b = configfile::load(config_b.as_deref(), LegConfig::B, &set)?;
            let trials = experiments::comparison_trials(&a, &b);
            let results = experiments::run_all(&trials, &window.window(), experiments::thread_cap()?)?;
            let ok = write_results(&out, results, &trials)?;
            print!("{}", experiments::comparison_report(&ok));
        }
        Command::Sweep { config, timings, window, out } => {
            let set = load(&config)?;
            let trials = experiments::sweep_trials(&set, &experiments::parse_timings(&timings)?)?;
            let results = experiments::run_all(&trials, &window.window(), experiments::thread_cap()?)?;
            let ok = write_results(&out, results, &trials)?;
            print!("{}", experiments::sweep_report(&ok));
        }
        Command::Plot { input, kind, x, y, title, x_label, y_label, out } => {
            let table = Table::read(&input)?;
            let spec = PlotSpec {
                kind,
                x_label: x_label.unwrap_or_else(|| x.clone()),
                y_label: y_label.unwrap_or_else(|| y.join(", ")),
                x,
                y,
                title,
                output: out,
            };
            save_svg(&spec, &table)?;
        }
        Command::Config { config } => {
            print!("{}", config::serialize(&load(&config)?));
        }
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and maps
/// the outcome to an exit status: 0 success, 1 config or usage error,
/// 2 simulation abort.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
