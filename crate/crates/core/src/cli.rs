//! Batch command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 gait bound or continuity violation.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::thread;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{compute_metrics, trajectory_rms, AnalysisError, Metrics};
use crate::dynamics::{DynamicsError, HeadState};
use crate::gait::{build_gait_unchecked, check_bounds, check_smoothness, GaitConfig, GaitError};
use crate::model::{build_operators, validate_params, RobotParams};
use crate::simulation::{simulate, SimError, SimMode, SimOptions, Trajectory, MIN_STEPS_PER_PERIOD};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub mode: SimMode,
    /// Integration step (s).
    pub dt: f64,
    /// Cycles analysed after the transient.
    pub cycles: usize,
    /// Leading cycles simulated but excluded from the metrics window.
    pub transient_cycles: usize,
    pub full_bodies: bool,
    /// Write every `record_every`-th integration step.
    pub record_every: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            mode: SimMode::Projection,
            dt: 2.5e-4,
            cycles: 5,
            transient_cycles: 2,
            full_bodies: false,
            record_every: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub trajectory_path: PathBuf,
    pub metrics_path: PathBuf,
    pub gait_signals_path: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            trajectory_path: "trajectory.csv".into(),
            metrics_path: "metrics.json".into(),
            gait_signals_path: "gait_signals.csv".into(),
        }
    }
}

impl OutputConfig {
    /// Moves every output into `dir`, keeping the file names.
    pub fn redirect(&mut self, dir: &Path) {
        for path in [
            &mut self.trajectory_path,
            &mut self.metrics_path,
            &mut self.gait_signals_path,
        ] {
            let name = path.file_name().map(PathBuf::from).unwrap_or_default();
            *path = dir.join(name);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub robot: RobotParams,
    pub gait: GaitConfig,
    pub sim: SimConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks everything short of the gait's geometric bounds.
    pub fn validate(&self) -> Result<(), CliError> {
        validate_params(self.robot)
            .map_err(|e| CliError::Config(format!("robot.{}: {e}", e.field())))?;
        build_gait_unchecked(&self.gait, &self.robot).map_err(CliError::from)?;
        if self.sim.cycles < 1 {
            return Err(CliError::Config("sim.cycles: must be at least 1".into()));
        }
        if self.sim.record_every < 1 {
            return Err(CliError::Config("sim.record_every: must be at least 1".into()));
        }
        let limit = self.gait.period / MIN_STEPS_PER_PERIOD;
        if !(self.sim.dt > 0.0 && self.sim.dt <= limit * (1.0 + 1e-12)) {
            return Err(CliError::Config(format!(
                "sim.dt: must lie in (0, period / {MIN_STEPS_PER_PERIOD} = {limit}]"
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        (self.sim.transient_cycles + self.sim.cycles) as f64 * self.gait.period
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            duration: self.duration(),
            dt: self.sim.dt,
            record_every: self.sim.record_every,
            full_bodies: self.sim.full_bodies,
            initial: HeadState::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("gait violation: {0}")]
    Gait(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Gait(_) => 4,
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Config(format!("cannot write {}: {e}", path.display()))
    }
}

impl From<GaitError> for CliError {
    fn from(e: GaitError) -> Self {
        match e {
            GaitError::Config { .. } => CliError::Config(e.to_string()),
            GaitError::Bounds(v) => CliError::Gait(v.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid { .. } => CliError::Config(e.to_string()),
            SimError::Params(p) => CliError::Config(format!("robot.{}: {p}", p.field())),
            SimError::Gait(g) => g.into(),
            SimError::Dynamics {
                source: DynamicsError::Params(p),
                ..
            } => CliError::Config(format!("robot.{}: {p}", p.field())),
            SimError::Dynamics { .. } | SimError::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        CliError::Config(format!("sim.cycles: {e}"))
    }
}

#[derive(Debug, Parser)]
#[command(name = "metaworm", version, about = "Planar dynamics of a metameric earthworm robot")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Run-config JSON file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory receiving all outputs (overrides the configured directories).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one run and write its trajectory CSV and metrics JSON.
    Simulate(RunArgs),
    /// Run the paper, projection and kinematic modes and compare them.
    Compare(RunArgs),
    /// Sample the gait, check bounds and smoothness, write its signals.
    GaitCheck(RunArgs),
    /// Print the incidence operators D1, D2, D3.
    OperatorsDump {
        /// Number of segments.
        #[arg(long)]
        n: usize,
    },
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&load(&a)?),
        Command::Compare(a) => cmd_compare(&load(&a)?),
        Command::GaitCheck(a) => cmd_gait_check(&load(&a)?),
        Command::OperatorsDump { n } => {
            print!("{}", operators_dump(n)?);
            Ok(())
        }
    }
}

fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.out {
        cfg.output.redirect(dir);
    }
    Ok(cfg)
}

/// `%g`-style formatting with 9 significant digits; `-0` prints as `0`.
pub fn format_g9(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn trajectory_header(n: usize, full_bodies: bool) -> String {
    let mut h = String::from("t,x1,y1,theta1,vx1,vy1,omega1");
    if full_bodies {
        for i in 2..=n + 1 {
            write!(h, ",x{i},y{i},theta{i}").unwrap();
        }
    }
    h
}

pub fn write_trajectory_csv(traj: &Trajectory, n: usize, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "{}", trajectory_header(n, traj.bodies.is_some()))?;
    let mut line = String::new();
    for (k, s) in traj.samples.iter().enumerate() {
        line.clear();
        write!(line, "{:.6}", s.t).unwrap();
        for v in [s.x1, s.y1, s.theta1, s.vx1, s.vy1, s.omega1] {
            line.push(',');
            line.push_str(&format_g9(v));
        }
        if let Some(bodies) = &traj.bodies {
            let b = &bodies[k];
            for i in 1..b.len() {
                for v in [b.x[i], b.y[i], b.theta[i]] {
                    line.push(',');
                    line.push_str(&format_g9(v));
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>, CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).expect("metrics serialize");
    writeln!(w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn run_mode(cfg: &RunConfig, mode: SimMode) -> Result<(Trajectory, Metrics), CliError> {
    let traj = simulate(&cfg.robot, &cfg.gait, mode, &cfg.sim_options())?;
    let metrics = compute_metrics(&traj, cfg.sim.transient_cycles)?;
    Ok((traj, metrics))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    info!(
        "simulating {} s of {} gait in {} mode",
        cfg.duration(),
        cfg.gait.kind.as_str(),
        cfg.sim.mode.as_str()
    );
    let (traj, metrics) = run_mode(cfg, cfg.sim.mode)?;

    let path = &cfg.output.trajectory_path;
    let mut w = create(path)?;
    write_trajectory_csv(&traj, cfg.robot.n, &mut w)
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))?;
    write_json(&cfg.output.metrics_path, &metrics)?;
    info!(
        "wrote {} samples to {}",
        traj.samples.len(),
        path.display()
    );
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmsDeviation {
    pub paper_vs_projection: f64,
    pub paper_vs_kinematic: f64,
    pub projection_vs_kinematic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub paper: Metrics,
    pub projection: Metrics,
    pub kinematic: Metrics,
    /// RMS head-position distance between trajectories (m).
    pub rms_deviation: RmsDeviation,
}

/// Runs all three modes concurrently on the same configuration.
pub fn compare(cfg: &RunConfig) -> Result<Comparison, CliError> {
    cfg.validate()?;
    let [paper, projection, kinematic] = thread::scope(|s| {
        let handles = SimMode::ALL.map(|mode| s.spawn(move || run_mode(cfg, mode)));
        handles.map(|h| h.join().expect("simulation thread panicked"))
    });
    let (paper, projection, kinematic) = (paper?, projection?, kinematic?);
    Ok(Comparison {
        rms_deviation: RmsDeviation {
            paper_vs_projection: trajectory_rms(&paper.0, &projection.0),
            paper_vs_kinematic: trajectory_rms(&paper.0, &kinematic.0),
            projection_vs_kinematic: trajectory_rms(&projection.0, &kinematic.0),
        },
        paper: paper.1,
        projection: projection.1,
        kinematic: kinematic.1,
    })
}

pub fn cmd_compare(cfg: &RunConfig) -> Result<(), CliError> {
    let cmp = compare(cfg)?;
    write_json(&cfg.output.metrics_path, &cmp)
}

/// Samples per period written by `gait-check`.
pub const GAIT_SIGNAL_SAMPLES: usize = 1200;
const GAIT_CHECK_SAMPLES: usize = 12_000;

pub fn cmd_gait_check(cfg: &RunConfig) -> Result<(), CliError> {
    validate_params(cfg.robot)
        .map_err(|e| CliError::Config(format!("robot.{}: {e}", e.field())))?;
    let traj = build_gait_unchecked(&cfg.gait, &cfg.robot)?;

    let path = &cfg.output.gait_signals_path;
    let mut w = create(path)?;
    let mut header = String::from("t");
    for i in 1..=traj.n() {
        write!(header, ",l{i}_left,l{i}_right").unwrap();
    }
    let mut body = header + "\n";
    for k in 0..=GAIT_SIGNAL_SAMPLES {
        let t = traj.period() * k as f64 / GAIT_SIGNAL_SAMPLES as f64;
        write!(body, "{t:.6}").unwrap();
        for a in traj.sample(t) {
            write!(body, ",{},{}", format_g9(a.left.l), format_g9(a.right.l)).unwrap();
        }
        body.push('\n');
    }
    w.write_all(body.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| CliError::io(path, e))?;

    check_bounds(&traj, &cfg.gait, &cfg.robot, GAIT_CHECK_SAMPLES)
        .and_then(|_| check_smoothness(&traj, GAIT_CHECK_SAMPLES))
        .map_err(|v| CliError::Gait(v.to_string()))?;
    info!("gait ok; signals written to {}", path.display());
    Ok(())
}

pub fn operators_dump(n: usize) -> Result<String, CliError> {
    let ops = build_operators(n).map_err(|e| CliError::Config(format!("--n: {e}")))?;
    let mut out = String::new();
    for (name, m) in [("D1", &ops.d1), ("D2", &ops.d2), ("D3", &ops.d3)] {
        writeln!(out, "{name} ({}x{})", m.nrows(), m.ncols()).unwrap();
        write!(out, "{m}").unwrap();
    }
    Ok(out)
}
