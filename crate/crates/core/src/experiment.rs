//! Estimator passes over a recorded frame stream, and the full
//! simulate / estimate / evaluate pipeline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use thiserror::Error;

use crate::eval::{position_errors, summarize, EvalError, RunReport, RunRow, Summary};
use crate::kinematics::{encoders_to_twist, integrate_pose, BodyTwist, KinematicsError, VehicleGeometry};
use crate::lasernav::{LaserNavConfig, LaserNavigator, LasernavError};
use crate::pf::{AngularSource, ParticleFilter, PfConfig, PfError};
use crate::sim::{
    generate_truth, simulate_sensors, NoiseModel, Payload, SensorFrame, SensorTiming, SimError, TrajectorySpec,
};
use crate::world::{Pose2D, ReflectorMap, TimedPose};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Pf(#[from] PfError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("no estimates after the warmup window")]
    NoEstimates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Pf,
    Lasernav,
    Deadreckon,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Lasernav, Estimator::Pf, Estimator::Deadreckon];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Pf => "pf",
            Estimator::Lasernav => "lasernav",
            Estimator::Deadreckon => "deadreckon",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pf" => Ok(Estimator::Pf),
            "lasernav" | "laser" => Ok(Estimator::Lasernav),
            "deadreckon" => Ok(Estimator::Deadreckon),
            other => Err(format!(
                "unknown estimator `{other}` (expected pf, lasernav or deadreckon)"
            )),
        }
    }
}

/// Everything needed to simulate and estimate one run, minus the seed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub geom: VehicleGeometry,
    pub map: ReflectorMap,
    pub trajectory: TrajectorySpec,
    pub tick: f64,
    pub noise: NoiseModel,
    pub timing: SensorTiming,
    pub pf: PfConfig,
    pub lasernav: LaserNavConfig,
    pub pf_init: PfInit,
    /// Estimates earlier than this many seconds are left out of the metrics.
    pub warmup: f64,
}

/// Where the filter's particles start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PfInit {
    /// Uniform over the map bounds and all headings.
    #[default]
    Global,
    /// Inside the redistribution box around the trajectory's start pose.
    Known,
}

/// One row of an estimated trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub t: f64,
    pub pose: Pose2D,
    pub n_matched: usize,
    /// Fit residual for lasernav, degenerate-scan flag (0/1) for pf.
    pub quality: f64,
}

impl TrackPoint {
    pub fn timed(&self) -> TimedPose {
        TimedPose {
            t: self.t,
            pose: self.pose,
        }
    }
}

/// Seed of the filter's own generator, kept apart from the sensor stream.
pub fn pf_seed(run_seed: u64) -> u64 {
    run_seed ^ 0x9E37_79B9_7F4A_7C15
}

pub fn run_pf(
    frames: &[SensorFrame],
    map: &ReflectorMap,
    geom: &VehicleGeometry,
    config: &PfConfig,
    seed: u64,
    start_pose: Option<&Pose2D>,
) -> Result<Vec<TrackPoint>, PfError> {
    let start = frames.first().map_or(0.0, |f| f.t);
    let mut filter = match start_pose {
        Some(p) => ParticleFilter::new_at(map.clone(), *geom, *config, seed, start, p)?,
        None => ParticleFilter::new(map.clone(), *geom, *config, seed, start)?,
    };
    let mut out = Vec::new();
    for frame in frames {
        if let Some(e) = filter.step(frame)? {
            out.push(TrackPoint {
                t: e.t,
                pose: e.pose,
                n_matched: e.n_matched,
                quality: if e.degenerate { 1.0 } else { 0.0 },
            });
        }
    }
    Ok(out)
}

/// Laser-only fixes. Scans without two matches are skipped and the prior
/// stays at the last good fix.
pub fn run_lasernav(
    frames: &[SensorFrame],
    map: &ReflectorMap,
    geom: &VehicleGeometry,
    config: &LaserNavConfig,
    initial_center: Pose2D,
) -> Vec<TrackPoint> {
    let mut nav = LaserNavigator::new(*config, *geom, initial_center);
    let mut out = Vec::new();
    for frame in frames {
        if let Payload::LrfScan(scan) = &frame.payload {
            match nav.process_scan(&scan.detections, map) {
                Ok(fix) => out.push(TrackPoint {
                    t: frame.t,
                    pose: fix.pose,
                    n_matched: fix.n_matched,
                    quality: fix.residual_rms,
                }),
                Err(LasernavError::InsufficientMatches { .. }) => {}
                Err(e) => unreachable!("navigator produced a malformed association: {e}"),
            }
        }
    }
    out
}

/// Odometry-only integration from a known start, emitted at each
/// odometry frame.
pub fn run_deadreckon(
    frames: &[SensorFrame],
    geom: &VehicleGeometry,
    source: AngularSource,
    initial: Pose2D,
) -> Result<Vec<TrackPoint>, KinematicsError> {
    let mut pose = initial;
    let mut last = frames.first().map_or(0.0, |f| f.t);
    let mut out = Vec::new();
    for frame in frames {
        if let Payload::Odometry(odo) = &frame.payload {
            let dt = frame.t - last;
            last = frame.t;
            if dt <= 0.0 {
                continue;
            }
            let enc = encoders_to_twist(odo.w_l, odo.w_r, geom);
            let w = match source {
                AngularSource::Gyro => odo.gyro_w,
                AngularSource::Encoders => enc.w,
                AngularSource::Average => 0.5 * (odo.gyro_w + enc.w),
            };
            pose = integrate_pose(&pose, BodyTwist::new(enc.v, w), dt)?;
            out.push(TrackPoint {
                t: frame.t,
                pose,
                n_matched: 0,
                quality: 0.0,
            });
        }
    }
    Ok(out)
}

pub fn run_estimator(
    which: Estimator,
    frames: &[SensorFrame],
    scenario: &Scenario,
    initial: Pose2D,
    seed: u64,
) -> Result<Vec<TrackPoint>, ExperimentError> {
    Ok(match which {
        Estimator::Pf => {
            let start = (scenario.pf_init == PfInit::Known).then_some(&initial);
            run_pf(
                frames,
                &scenario.map,
                &scenario.geom,
                &scenario.pf,
                pf_seed(seed),
                start,
            )?
        }
        Estimator::Lasernav => run_lasernav(frames, &scenario.map, &scenario.geom, &scenario.lasernav, initial),
        Estimator::Deadreckon => run_deadreckon(frames, &scenario.geom, scenario.pf.angular_source, initial)?,
    })
}

/// Ground truth and sensor stream of one seeded run.
pub struct Simulated {
    pub truth: Vec<TimedPose>,
    pub frames: Vec<SensorFrame>,
}

pub fn simulate(scenario: &Scenario, seed: u64) -> Result<Simulated, ExperimentError> {
    let truth = generate_truth(&scenario.trajectory, &scenario.geom, scenario.tick)?;
    let frames = simulate_sensors(
        &truth,
        &scenario.map,
        &scenario.geom,
        &scenario.noise,
        &scenario.timing,
        seed,
    )?;
    Ok(Simulated { truth, frames })
}

/// Position errors (mm) of a track after the warmup window.
pub fn track_errors(track: &[TrackPoint], truth: &[TimedPose], warmup: f64) -> Result<Vec<(f64, f64)>, EvalError> {
    let kept: Vec<TimedPose> = track.iter().filter(|p| p.t >= warmup).map(TrackPoint::timed).collect();
    let errs = position_errors(&kept, truth)?;
    Ok(kept.iter().map(|p| p.t).zip(errs).collect())
}

pub fn track_summary(track: &[TrackPoint], truth: &[TimedPose], warmup: f64) -> Result<Summary, ExperimentError> {
    let errs: Vec<f64> = track_errors(track, truth, warmup)?
        .into_iter()
        .map(|(_, e)| e)
        .collect();
    if errs.is_empty() {
        return Err(ExperimentError::NoEstimates);
    }
    Ok(summarize(&errs)?)
}

/// Outcome of one simulated run with every requested estimator.
pub struct RunOutcome {
    pub sim: Simulated,
    pub tracks: Vec<(Estimator, Vec<TrackPoint>)>,
    pub summaries: Vec<Summary>,
}

pub fn run_once(scenario: &Scenario, seed: u64, estimators: &[Estimator]) -> Result<RunOutcome, ExperimentError> {
    let sim = simulate(scenario, seed)?;
    let initial = scenario.trajectory.initial_pose;
    let mut tracks = Vec::with_capacity(estimators.len());
    let mut summaries = Vec::with_capacity(estimators.len());
    for &e in estimators {
        let track = run_estimator(e, &sim.frames, scenario, initial, seed)?;
        summaries.push(track_summary(&track, &sim.truth, scenario.warmup)?);
        tracks.push((e, track));
    }
    Ok(RunOutcome { sim, tracks, summaries })
}

/// Runs seeds `seed, seed + 1, …` and tabulates one row per run.
pub fn run_series(
    scenario: &Scenario,
    seed: u64,
    runs: usize,
    estimators: &[Estimator],
) -> Result<RunReport, ExperimentError> {
    let rows = (0..runs)
        .map(|k| {
            let out = run_once(scenario, seed.wrapping_add(k as u64), estimators)?;
            Ok(RunRow {
                run: k + 1,
                summaries: out.summaries,
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(RunReport::new(
        estimators.iter().map(|e| report_name(*e).to_string()).collect(),
        rows,
    )?)
}

/// Column prefix used in reports.
pub fn report_name(e: Estimator) -> &'static str {
    match e {
        Estimator::Lasernav => "laser",
        other => other.name(),
    }
}
