//! Ground-truth generation and sensor simulation.
//!
//! Truth is integrated with the exact constant-twist arc, so the first-order
//! model used by the estimators carries a genuine model error. All noise is
//! drawn from one seeded ChaCha stream in a fixed order: frames in time
//! order (odometry before LRF at equal timestamps); within an odometry frame
//! left encoder, right encoder, gyro; within a scan, for each reflector in
//! map order a detection draw then range and bearing noise (only when
//! visible), followed by the clutter count and two coordinates per clutter
//! point. Standard normals are always drawn and scaled so the order does not
//! depend on parameter values.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{
    drive_to_twist, rotation_center_to_sensor, twist_to_encoders, BodyTwist, DriveCommand, KinematicsError,
    VehicleGeometry,
};
use crate::world::{observe_point, wrap_angle, Point2, Pose2D, ReflectorDetection, ReflectorMap};

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("tick must be positive and finite, got {0}")]
    InvalidTick(f64),
    #[error("segment {index}: duration {duration} s is not a multiple of tick {tick} s")]
    NonDividingTick { index: usize, duration: f64, tick: f64 },
    #[error("segment {index}: duration must be positive, got {duration}")]
    InvalidDuration { index: usize, duration: f64 },
    #[error("segment {index}: {source}")]
    Segment { index: usize, source: KinematicsError },
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error("truth trajectory is empty")]
    EmptyTruth,
    #[error("truth sample {0} is not strictly after its predecessor")]
    NotTimeOrdered(usize),
    #[error("noise model: `{0}` out of range")]
    InvalidNoise(&'static str),
    #[error("sensor timing: `{0}` must be positive")]
    InvalidTiming(&'static str),
}

/// Sensor error model, SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    pub encoder_rate_stddev: f64,
    pub gyro_rate_stddev: f64,
    pub gyro_bias: f64,
    pub lrf_range_stddev: f64,
    pub lrf_bearing_stddev: f64,
    /// Extra bearing stddev per rad/s of true yaw rate.
    pub bearing_smear_gain: f64,
    pub detection_prob: f64,
    /// Mean false detections per scan.
    pub clutter_rate: f64,
    pub max_lrf_range: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            encoder_rate_stddev: 0.0,
            gyro_rate_stddev: 0.0,
            gyro_bias: 0.0,
            lrf_range_stddev: 0.0,
            lrf_bearing_stddev: 0.0,
            bearing_smear_gain: 0.05,
            detection_prob: 1.0,
            clutter_rate: 0.0,
            max_lrf_range: 30.0,
        }
    }
}

impl NoiseModel {
    /// No noise, no clutter, every reflector in range detected.
    pub fn noiseless() -> Self {
        Self {
            bearing_smear_gain: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let nonneg = [
            ("encoder_rate_stddev", self.encoder_rate_stddev),
            ("gyro_rate_stddev", self.gyro_rate_stddev),
            ("lrf_range_stddev", self.lrf_range_stddev),
            ("lrf_bearing_stddev", self.lrf_bearing_stddev),
            ("bearing_smear_gain", self.bearing_smear_gain),
            ("clutter_rate", self.clutter_rate),
            ("max_lrf_range", self.max_lrf_range),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(SimError::InvalidNoise(name));
            }
        }
        if !self.gyro_bias.is_finite() {
            return Err(SimError::InvalidNoise("gyro_bias"));
        }
        if !(0.0..=1.0).contains(&self.detection_prob) {
            return Err(SimError::InvalidNoise("detection_prob"));
        }
        Ok(())
    }
}

/// Reporting periods of the two sensor streams, seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorTiming {
    pub odometry_period: f64,
    pub lrf_period: f64,
}

impl Default for SensorTiming {
    fn default() -> Self {
        Self {
            odometry_period: 0.1,
            lrf_period: 0.45,
        }
    }
}

impl SensorTiming {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.odometry_period.is_finite() && self.odometry_period > 0.0) {
            return Err(SimError::InvalidTiming("odometry_period"));
        }
        if !(self.lrf_period.is_finite() && self.lrf_period > 0.0) {
            return Err(SimError::InvalidTiming("lrf_period"));
        }
        Ok(())
    }
}

/// Encoder and gyro rates in rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Odometry {
    pub w_l: f64,
    pub w_r: f64,
    pub gyro_w: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LrfScan {
    pub detections: Vec<ReflectorDetection>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Odometry(Odometry),
    LrfScan(LrfScan),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorFrame {
    pub t: f64,
    pub payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    odo: Option<OdoRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lrf: Option<Vec<ReflectorDetection>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdoRecord {
    wl: f64,
    wr: f64,
    gyro: f64,
}

#[derive(Debug, Error)]
pub enum FrameParseError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("frame must carry exactly one of `odo` or `lrf`")]
    Shape,
    #[error("invalid detection: {0}")]
    Detection(#[from] crate::world::WorldError),
    #[error("non-finite timestamp")]
    Time,
}

impl SensorFrame {
    /// One JSON-Lines record, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        let rec = match &self.payload {
            Payload::Odometry(o) => FrameRecord {
                t: self.t,
                odo: Some(OdoRecord {
                    wl: o.w_l,
                    wr: o.w_r,
                    gyro: o.gyro_w,
                }),
                lrf: None,
            },
            Payload::LrfScan(s) => FrameRecord {
                t: self.t,
                odo: None,
                lrf: Some(s.detections.clone()),
            },
        };
        serde_json::to_string(&rec).expect("frame serializes")
    }

    pub fn from_json_line(line: &str) -> Result<Self, FrameParseError> {
        let rec: FrameRecord = serde_json::from_str(line)?;
        if !rec.t.is_finite() {
            return Err(FrameParseError::Time);
        }
        let payload = match (rec.odo, rec.lrf) {
            (Some(o), None) => Payload::Odometry(Odometry {
                w_l: o.wl,
                w_r: o.wr,
                gyro_w: o.gyro,
            }),
            (None, Some(dets)) => {
                let detections = dets
                    .into_iter()
                    .map(|d| ReflectorDetection::new(d.range, d.bearing))
                    .collect::<Result<Vec<_>, _>>()?;
                Payload::LrfScan(LrfScan { detections })
            }
            _ => return Err(FrameParseError::Shape),
        };
        Ok(SensorFrame { t: rec.t, payload })
    }
}

/// One constant-command stretch of the reference trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub v_d: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub initial_pose: Pose2D,
    pub segments: Vec<Segment>,
}

impl TrajectorySpec {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

pub use crate::world::TimedPose as TruthSample;

/// Exact pose after moving for `dt` at constant `twist`.
pub fn arc_step(p: &Pose2D, twist: BodyTwist, dt: f64) -> Pose2D {
    let dth = twist.w * dt;
    if dth.abs() < 1e-12 {
        let d = twist.v * dt;
        return Pose2D {
            x: p.x + d * p.theta.cos(),
            y: p.y + d * p.theta.sin(),
            theta: wrap_angle(p.theta + dth),
        };
    }
    let r = twist.v / twist.w;
    let th = p.theta + dth;
    Pose2D {
        x: p.x + r * (th.sin() - p.theta.sin()),
        y: p.y - r * (th.cos() - p.theta.cos()),
        theta: wrap_angle(th),
    }
}

/// The constant twist that carries `from` to `to` along an arc in `dt`.
/// Exact whenever the motion between the two poses was a single arc.
pub fn arc_twist(from: &Pose2D, to: &Pose2D, dt: f64) -> BodyTwist {
    let dth = wrap_angle(to.theta - from.theta);
    let half = 0.5 * dth;
    let dir = from.theta + half;
    let proj = (to.x - from.x) * dir.cos() + (to.y - from.y) * dir.sin();
    let dist = if half.abs() < 1e-9 {
        proj
    } else {
        proj * half / half.sin()
    };
    BodyTwist::new(dist / dt, dth / dt)
}

/// Samples the rotation-center trajectory every `tick` seconds, starting at
/// t = 0 with the initial pose.
pub fn generate_truth(spec: &TrajectorySpec, geom: &VehicleGeometry, tick: f64) -> Result<Vec<TruthSample>, SimError> {
    if !(tick.is_finite() && tick > 0.0) {
        return Err(SimError::InvalidTick(tick));
    }
    let mut plan = Vec::with_capacity(spec.segments.len());
    for (index, seg) in spec.segments.iter().enumerate() {
        if !(seg.duration.is_finite() && seg.duration > 0.0) {
            return Err(SimError::InvalidDuration {
                index,
                duration: seg.duration,
            });
        }
        let steps = (seg.duration / tick).round();
        if (steps * tick - seg.duration).abs() > TIME_EPS || steps < 1.0 {
            return Err(SimError::NonDividingTick {
                index,
                duration: seg.duration,
                tick,
            });
        }
        let twist = drive_to_twist(
            DriveCommand {
                v_d: seg.v_d,
                delta: seg.delta,
            },
            geom,
        )
        .map_err(|source| SimError::Segment { index, source })?;
        plan.push((steps as usize, twist));
    }

    let total: usize = plan.iter().map(|(n, _)| n).sum();
    let mut out = Vec::with_capacity(total + 1);
    let mut pose = spec.initial_pose;
    out.push(TruthSample { t: 0.0, pose });
    let mut k = 0usize;
    for (steps, twist) in plan {
        for _ in 0..steps {
            k += 1;
            pose = arc_step(&pose, twist, tick);
            out.push(TruthSample {
                t: k as f64 * tick,
                pose,
            });
        }
    }
    Ok(out)
}

/// Time-indexed view over a truth trajectory.
pub struct TruthTrack<'a> {
    samples: &'a [TruthSample],
}

impl<'a> TruthTrack<'a> {
    pub fn new(samples: &'a [TruthSample]) -> Result<Self, SimError> {
        if samples.is_empty() {
            return Err(SimError::EmptyTruth);
        }
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(SimError::NotTimeOrdered(i + 1));
            }
        }
        Ok(Self { samples })
    }

    pub fn start(&self) -> f64 {
        self.samples[0].t
    }

    pub fn end(&self) -> f64 {
        self.samples[self.samples.len() - 1].t
    }

    /// Pose at `t`, linearly interpolated between samples (shortest-arc
    /// for heading). `None` outside the sampled span.
    pub fn pose_at(&self, t: f64) -> Option<Pose2D> {
        let s = self.samples;
        if t < s[0].t - TIME_EPS || t > s[s.len() - 1].t + TIME_EPS {
            return None;
        }
        let idx = s.partition_point(|x| x.t < t);
        if idx < s.len() && (s[idx].t - t).abs() <= TIME_EPS {
            return Some(s[idx].pose);
        }
        if idx > 0 && (s[idx - 1].t - t).abs() <= TIME_EPS {
            return Some(s[idx - 1].pose);
        }
        if idx == 0 {
            return Some(s[0].pose);
        }
        if idx >= s.len() {
            return Some(s[s.len() - 1].pose);
        }
        let (a, b) = (&s[idx - 1], &s[idx]);
        let f = (t - a.t) / (b.t - a.t);
        Some(Pose2D {
            x: a.pose.x + f * (b.pose.x - a.pose.x),
            y: a.pose.y + f * (b.pose.y - a.pose.y),
            theta: wrap_angle(a.pose.theta + f * wrap_angle(b.pose.theta - a.pose.theta)),
        })
    }

    /// Average twist over `[t0, t1]`, fitted as a single arc.
    pub fn twist_between(&self, t0: f64, t1: f64) -> Option<BodyTwist> {
        if t1 - t0 <= TIME_EPS {
            return Some(BodyTwist::default());
        }
        Some(arc_twist(&self.pose_at(t0)?, &self.pose_at(t1)?, t1 - t0))
    }
}

fn event_times(start: f64, end: f64, period: f64, first: u64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = first;
    loop {
        let t = start + k as f64 * period;
        if t > end + TIME_EPS {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Produces the merged odometry / LRF frame stream for a truth trajectory.
///
/// Odometry frames start one period after the first truth sample and carry
/// the wheel and gyro rates of the motion over the preceding period. Scans
/// start at the first truth sample and snapshot the world at their
/// timestamp. When both fall on the same instant the odometry frame comes
/// first, so the merged stream is non-decreasing in time while each stream
/// on its own is strictly increasing.
pub fn simulate_sensors(
    truth: &[TruthSample],
    map: &ReflectorMap,
    geom: &VehicleGeometry,
    noise: &NoiseModel,
    timing: &SensorTiming,
    seed: u64,
) -> Result<Vec<SensorFrame>, SimError> {
    noise.validate()?;
    timing.validate()?;
    geom.validate()?;
    let track = TruthTrack::new(truth)?;
    let (t0, t_end) = (track.start(), track.end());
    let odo_times = event_times(t0, t_end, timing.odometry_period, 1);
    let lrf_times = event_times(t0, t_end, timing.lrf_period, 0);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut frames = Vec::with_capacity(odo_times.len() + lrf_times.len());
    let (mut i, mut j) = (0, 0);
    while i < odo_times.len() || j < lrf_times.len() {
        let take_odo = match (odo_times.get(i), lrf_times.get(j)) {
            (Some(&a), Some(&b)) => a <= b + TIME_EPS,
            (Some(_), None) => true,
            _ => false,
        };
        if take_odo {
            let t = odo_times[i];
            i += 1;
            let twist = track
                .twist_between(t - timing.odometry_period, t)
                .expect("odometry time inside truth span");
            let (w_l, w_r) = twist_to_encoders(twist, geom)?;
            let w_l = w_l + noise.encoder_rate_stddev * normal(&mut rng);
            let w_r = w_r + noise.encoder_rate_stddev * normal(&mut rng);
            let gyro_w = twist.w + noise.gyro_bias + noise.gyro_rate_stddev * normal(&mut rng);
            frames.push(SensorFrame {
                t,
                payload: Payload::Odometry(Odometry { w_l, w_r, gyro_w }),
            });
        } else {
            let t = match frames.last() {
                Some(prev) if (prev.t - lrf_times[j]).abs() <= TIME_EPS => prev.t,
                _ => lrf_times[j],
            };
            j += 1;
            let center = track.pose_at(t).expect("scan time inside truth span");
            let yaw_rate = scan_yaw_rate(&track, t, timing.odometry_period);
            let scan = simulate_scan(&center, yaw_rate, map, geom, noise, &mut rng);
            frames.push(SensorFrame {
                t,
                payload: Payload::LrfScan(scan),
            });
        }
    }
    Ok(frames)
}

fn scan_yaw_rate(track: &TruthTrack<'_>, t: f64, window: f64) -> f64 {
    let a = (t - window).max(track.start());
    let (a, b) = if t - a > TIME_EPS {
        (a, t)
    } else {
        (t, (t + window).min(track.end()))
    };
    track.twist_between(a, b).map(|tw| tw.w).unwrap_or(0.0)
}

fn simulate_scan(
    center: &Pose2D,
    yaw_rate: f64,
    map: &ReflectorMap,
    geom: &VehicleGeometry,
    noise: &NoiseModel,
    rng: &mut ChaCha8Rng,
) -> LrfScan {
    let sensor = rotation_center_to_sensor(center, geom.d);
    let bearing_sd = noise.lrf_bearing_stddev + noise.bearing_smear_gain * yaw_rate.abs();
    let mut detections = Vec::new();
    for r in map.reflectors() {
        let ideal = observe_point(&sensor, &r.position);
        if ideal.range > noise.max_lrf_range {
            continue;
        }
        let u: f64 = rng.random();
        if u >= noise.detection_prob {
            continue;
        }
        let range = (ideal.range + noise.lrf_range_stddev * normal(rng)).max(0.0);
        let bearing = wrap_angle(ideal.bearing + bearing_sd * normal(rng));
        detections.push(ReflectorDetection { range, bearing });
    }
    if noise.clutter_rate > 0.0 {
        let count = Poisson::new(noise.clutter_rate)
            .expect("positive clutter rate")
            .sample(rng) as usize;
        let b = map.bounds();
        for _ in 0..count {
            let x = b.xmin + rng.random::<f64>() * b.width();
            let y = b.ymin + rng.random::<f64>() * b.height();
            detections.push(observe_point(&sensor, &Point2::new(x, y)));
        }
    }
    // a rotating head reports in angular order
    detections.sort_by(|a, b| a.bearing.total_cmp(&b.bearing));
    LrfScan { detections }
}
