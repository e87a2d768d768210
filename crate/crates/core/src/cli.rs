//! Command-line front end: simulate, estimate, evaluate, run-all.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::eval::{error_table, summarize, RunReport, RunRow};
use crate::experiment::{report_name, run_estimator, simulate, track_errors, Estimator, ExperimentError};
use crate::io::{read_frames, read_poses, write_error_table, write_frames, write_track, write_truth, Header, IoError};
use crate::world::TimedPose;

#[derive(Debug, Parser)]
#[command(
    name = "reflector-loc",
    version,
    about = "Reflector-based vehicle localization experiments"
)]
pub struct Cli {
    /// Run configuration (JSON). The built-in reference experiment is used
    /// when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write ground truth (truth.csv) and the sensor log (sensors.jsonl).
    Simulate,
    /// Run one estimator over a sensor log and write <estimator>.csv.
    Estimate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "pf")]
        estimator: Estimator,
    },
    /// Compare trajectories against truth; the first trajectory is the
    /// baseline for the improvement row.
    Evaluate {
        #[arg(long)]
        truth: PathBuf,
        #[arg(required = true)]
        trajectories: Vec<PathBuf>,
    },
    /// Simulate, estimate with every estimator and report over all
    /// configured runs.
    RunAll,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },
    #[error("data error: {0}")]
    Experiment(#[from] ExperimentError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(ConfigError::Read { .. }) => 3,
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Data { .. } | CliError::Experiment(_) => 4,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn from_io(path: &Path, e: IoError) -> CliError {
    match e {
        IoError::Io(source) => CliError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CliError::Data {
            path: path.to_path_buf(),
            reason: other.to_string(),
        },
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(io_err(path))
}

struct Context {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Context {
    fn header(&self, seed: u64) -> Header {
        Header {
            config_hash: self.config.hash(),
            seed,
        }
    }
}

fn load(cli: &Cli) -> Result<Context, CliError> {
    let config = match &cli.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::reference(),
    };
    let seed = cli.seed.unwrap_or(config.seed);
    let out = cli.out.clone().unwrap_or_else(|| config.output_dir.clone());
    fs::create_dir_all(&out).map_err(io_err(&out))?;
    Ok(Context { config, seed, out })
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(summary) => {
            print!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Executes a parsed command and returns the text to print.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    let ctx = load(cli)?;
    match &cli.command {
        Command::Simulate => cmd_simulate(&ctx, &ctx.out, ctx.seed),
        Command::Estimate { log, estimator } => cmd_estimate(&ctx, log, *estimator),
        Command::Evaluate { truth, trajectories } => cmd_evaluate(&ctx, truth, trajectories),
        Command::RunAll => cmd_run_all(&ctx),
    }
}

fn cmd_simulate(ctx: &Context, dir: &Path, seed: u64) -> Result<String, CliError> {
    let sim = simulate(&ctx.config.scenario, seed)?;
    let header = ctx.header(seed);
    let truth_path = dir.join("truth.csv");
    let mut w = create(&truth_path)?;
    write_truth(&mut w, &header, &sim.truth)
        .and_then(|_| w.flush())
        .map_err(io_err(&truth_path))?;
    let log_path = dir.join("sensors.jsonl");
    let mut w = create(&log_path)?;
    write_frames(&mut w, &header, &sim.frames)
        .and_then(|_| w.flush())
        .map_err(io_err(&log_path))?;
    Ok(format!(
        "wrote {} truth samples to {} and {} frames to {}\n",
        sim.truth.len(),
        truth_path.display(),
        sim.frames.len(),
        log_path.display()
    ))
}

fn cmd_estimate(ctx: &Context, log: &Path, estimator: Estimator) -> Result<String, CliError> {
    let frames = read_frames(open(log)?).map_err(|e| from_io(log, e))?;
    let initial = ctx.config.scenario.trajectory.initial_pose;
    let track =
        run_estimator(estimator, &frames, &ctx.config.scenario, initial, ctx.seed).map_err(|e| CliError::Data {
            path: log.to_path_buf(),
            reason: e.to_string(),
        })?;
    let path = ctx.out.join(format!("{}.csv", estimator.name()));
    let mut w = create(&path)?;
    write_track(&mut w, &ctx.header(ctx.seed), estimator, &track)
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    Ok(format!(
        "wrote {} {} estimates to {}\n",
        track.len(),
        estimator,
        path.display()
    ))
}

/// Report column name for a trajectory file: its stem, with the laser
/// baseline shortened to `laser`.
fn column_name(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("est");
    match stem.parse::<Estimator>() {
        Ok(e) => report_name(e).to_string(),
        Err(_) => stem.to_string(),
    }
}

fn cmd_evaluate(ctx: &Context, truth_path: &Path, trajectories: &[PathBuf]) -> Result<String, CliError> {
    let truth = read_poses(open(truth_path)?).map_err(|e| from_io(truth_path, e))?;
    let mut names = Vec::new();
    let mut tracks = Vec::new();
    for p in trajectories {
        let poses = read_poses(open(p)?).map_err(|e| from_io(p, e))?;
        names.push(column_name(p));
        tracks.push((p.clone(), poses));
    }
    let warmup = ctx.config.scenario.warmup;
    let (summaries, columns) = evaluate_tracks(&truth, &tracks, warmup)?;
    let report = RunReport::new(names.clone(), vec![RunRow { run: 1, summaries }]).map_err(|e| CliError::Data {
        path: truth_path.to_path_buf(),
        reason: e.to_string(),
    })?;
    write_reports(ctx, &report, ctx.seed)?;
    let path = ctx.out.join("errors.csv");
    let mut w = create(&path)?;
    write_error_table(&mut w, &ctx.header(ctx.seed), &names, &error_table(&columns))
        .and_then(|_| w.flush())
        .map_err(io_err(&path))?;
    Ok(report.to_csv())
}

type ErrorColumn = Vec<(f64, f64)>;

fn evaluate_tracks(
    truth: &[TimedPose],
    tracks: &[(PathBuf, Vec<TimedPose>)],
    warmup: f64,
) -> Result<(Vec<crate::eval::Summary>, Vec<ErrorColumn>), CliError> {
    let mut summaries = Vec::new();
    let mut columns = Vec::new();
    for (path, poses) in tracks {
        let data = |reason: String| CliError::Data {
            path: path.clone(),
            reason,
        };
        let points: Vec<_> = poses
            .iter()
            .map(|p| crate::experiment::TrackPoint {
                t: p.t,
                pose: p.pose,
                n_matched: 0,
                quality: 0.0,
            })
            .collect();
        let errs = track_errors(&points, truth, warmup).map_err(|e| data(e.to_string()))?;
        let values: Vec<f64> = errs.iter().map(|(_, e)| *e).collect();
        summaries.push(summarize(&values).map_err(|e| data(e.to_string()))?);
        columns.push(errs);
    }
    Ok((summaries, columns))
}

fn write_reports(ctx: &Context, report: &RunReport, seed: u64) -> Result<(), CliError> {
    let header = ctx.header(seed);
    let csv_path = ctx.out.join("report.csv");
    let mut w = create(&csv_path)?;
    writeln!(w, "{}", header.line())
        .and_then(|_| w.write_all(report.to_csv().as_bytes()))
        .and_then(|_| w.flush())
        .map_err(io_err(&csv_path))?;

    let mut json = serde_json::Map::new();
    json.insert("config_hash".into(), header.config_hash.clone().into());
    json.insert("seed".into(), header.seed.into());
    if let serde_json::Value::Object(body) = report.to_json() {
        json.extend(body);
    }
    let json_path = ctx.out.join("report.json");
    let text = serde_json::to_string_pretty(&serde_json::Value::Object(json)).expect("report serializes");
    fs::write(&json_path, text + "\n").map_err(io_err(&json_path))?;
    Ok(())
}

fn cmd_run_all(ctx: &Context) -> Result<String, CliError> {
    let scenario = &ctx.config.scenario;
    let mut rows = Vec::new();
    for k in 0..ctx.config.runs {
        let seed = ctx.seed.wrapping_add(k as u64);
        let dir = ctx.out.join(format!("run_{:02}", k + 1));
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let sim = simulate(scenario, seed)?;
        let header = ctx.header(seed);
        let truth_path = dir.join("truth.csv");
        let mut w = create(&truth_path)?;
        write_truth(&mut w, &header, &sim.truth)
            .and_then(|_| w.flush())
            .map_err(io_err(&truth_path))?;
        let log_path = dir.join("sensors.jsonl");
        let mut w = create(&log_path)?;
        write_frames(&mut w, &header, &sim.frames)
            .and_then(|_| w.flush())
            .map_err(io_err(&log_path))?;

        let mut summaries = Vec::new();
        let mut columns = Vec::new();
        for e in Estimator::ALL {
            let track = run_estimator(e, &sim.frames, scenario, scenario.trajectory.initial_pose, seed)?;
            let path = dir.join(format!("{}.csv", e.name()));
            let mut w = create(&path)?;
            write_track(&mut w, &header, e, &track)
                .and_then(|_| w.flush())
                .map_err(io_err(&path))?;
            let errs = track_errors(&track, &sim.truth, scenario.warmup).map_err(ExperimentError::from)?;
            let values: Vec<f64> = errs.iter().map(|(_, e)| *e).collect();
            summaries.push(summarize(&values).map_err(ExperimentError::from)?);
            columns.push(errs);
        }
        let names: Vec<String> = Estimator::ALL.iter().map(|e| report_name(*e).to_string()).collect();
        let path = dir.join("errors.csv");
        let mut w = create(&path)?;
        write_error_table(&mut w, &header, &names, &error_table(&columns))
            .and_then(|_| w.flush())
            .map_err(io_err(&path))?;
        rows.push(RunRow { run: k + 1, summaries });
    }
    let names = Estimator::ALL.iter().map(|e| report_name(*e).to_string()).collect();
    let report = RunReport::new(names, rows).map_err(ExperimentError::from)?;
    write_reports(ctx, &report, ctx.seed)?;
    Ok(report.to_csv())
}
