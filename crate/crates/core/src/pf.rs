//! Reflector particle filter.
//!
//! Particles hypothesize the pose of the target rotation center. Odometry
//! frames move every particle with the first-order kinematic step; laser
//! scans are re-projected from each particle's laser mount, matched to the
//! reflector map and scored with a unit-variance normal kernel on the summed
//! squared match distance. After every scored scan the weighted mean is
//! emitted and the set is redrawn: most particles scatter in a box around
//! the heaviest quarter of the set, the rest are spread over the whole map.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{encoders_to_twist, step_pose, VehicleGeometry};
use crate::lasernav::associate_points_with;
use crate::sim::{LrfScan, Odometry, Payload, SensorFrame};
use crate::world::{transform_detection_to_world, wrap_angle, Point2, Pose2D, ReflectorMap};

/// `(2 pi)^(-1/2)`, the peak of the standard normal density.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Error, PartialEq)]
pub enum PfError {
    #[error("particle filter needs at least one particle")]
    NoParticles,
    #[error("map bounds are degenerate; cannot spread particles")]
    DegenerateBounds,
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("all particle weights are zero")]
    ZeroWeights,
    #[error("frame at t={t} arrived after t={last}")]
    OutOfOrder { t: f64, last: f64 },
    #[error("pf config: `{0}` out of range")]
    InvalidConfig(&'static str),
}

/// Which sensor supplies the yaw rate used in prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AngularSource {
    #[default]
    Gyro,
    Encoders,
    Average,
}

/// Zero-mean Gaussian perturbation added to each particle's twist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionNoise {
    pub v_stddev: f64,
    pub w_stddev: f64,
}

impl Default for MotionNoise {
    fn default() -> Self {
        Self {
            v_stddev: 0.02,
            w_stddev: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PfConfig {
    #[serde(rename = "M", alias = "particles")]
    pub particles: usize,
    /// Share of the redrawn set placed around elite anchors.
    pub exploit_fraction: f64,
    /// Top share of particles (by weight) eligible as anchors.
    pub elite_quantile: f64,
    /// Half-width of the square position box around an anchor, meters.
    pub redistribution_range: f64,
    /// Half-width of the heading interval around an anchor, radians.
    pub heading_jitter: f64,
    /// Low-weight share the uniform remainder is meant to replace. Kept for
    /// reporting; the remainder size is `1 - exploit_fraction`.
    pub floor_quantile: f64,
    pub angular_source: AngularSource,
    /// Association gate, meters.
    pub gate: f64,
    /// Divisor applied to match distances before the kernel, meters.
    pub distance_scale: f64,
    /// Squared-distance charge per unmatched detection, m^2. Defaults to
    /// `gate^2`.
    pub unmatched_penalty: Option<f64>,
    /// Use the arithmetic weighted mean of headings instead of the circular
    /// mean.
    pub arithmetic_heading_mean: bool,
    pub motion_noise: MotionNoise,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            particles: 150,
            exploit_fraction: 0.95,
            elite_quantile: 0.25,
            redistribution_range: 0.25,
            heading_jitter: 0.175,
            floor_quantile: 0.15,
            angular_source: AngularSource::Gyro,
            gate: 0.5,
            distance_scale: 0.1,
            unmatched_penalty: None,
            arithmetic_heading_mean: false,
            motion_noise: MotionNoise::default(),
        }
    }
}

impl PfConfig {
    pub fn validate(&self) -> Result<(), PfError> {
        if self.particles == 0 {
            return Err(PfError::InvalidConfig("M"));
        }
        if !(0.0..=1.0).contains(&self.exploit_fraction) {
            return Err(PfError::InvalidConfig("exploit_fraction"));
        }
        if !(self.elite_quantile > 0.0 && self.elite_quantile <= 1.0) {
            return Err(PfError::InvalidConfig("elite_quantile"));
        }
        if !(0.0..=1.0).contains(&self.floor_quantile) {
            return Err(PfError::InvalidConfig("floor_quantile"));
        }
        let nonneg = [
            ("redistribution_range", self.redistribution_range),
            ("heading_jitter", self.heading_jitter),
            ("motion_noise.v_stddev", self.motion_noise.v_stddev),
            ("motion_noise.w_stddev", self.motion_noise.w_stddev),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(PfError::InvalidConfig(name));
            }
        }
        if !(self.gate.is_finite() && self.gate > 0.0) {
            return Err(PfError::InvalidConfig("gate"));
        }
        if !(self.distance_scale.is_finite() && self.distance_scale > 0.0) {
            return Err(PfError::InvalidConfig("distance_scale"));
        }
        if let Some(p) = self.unmatched_penalty {
            if !(p.is_finite() && p >= 0.0) {
                return Err(PfError::InvalidConfig("unmatched_penalty"));
            }
        }
        Ok(())
    }

    pub fn penalty(&self) -> f64 {
        self.unmatched_penalty.unwrap_or(self.gate * self.gate)
    }

    /// Number of particles placed around anchors on each redraw.
    pub fn exploit_count(&self) -> usize {
        let n = (self.exploit_fraction * self.particles as f64 - 1e-9).ceil().max(0.0) as usize;
        n.min(self.particles)
    }

    pub fn elite_count(&self) -> usize {
        let n = (self.elite_quantile * self.particles as f64 - 1e-9).ceil() as usize;
        n.clamp(1, self.particles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose2D,
    pub weight: f64,
}

/// Outcome of scoring one scan.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeighReport {
    /// Every raw weight underflowed; weights were reset to uniform.
    pub degenerate: bool,
    /// Matched detections of the heaviest particle.
    pub n_matched: usize,
}

/// Unit-variance normal density of the summed squared residual.
#[inline]
pub fn match_likelihood(sum_sq: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * sum_sq).exp()
}

/// Fixed-size weighted particle set with its own random stream.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<Particle>,
    rng: ChaCha8Rng,
    points: Vec<Point2>,
    scratch: Vec<(f64, usize, usize)>,
}

fn uniform_pose(rng: &mut ChaCha8Rng, map: &ReflectorMap) -> Pose2D {
    let b = map.bounds();
    let x = b.xmin + rng.random::<f64>() * b.width();
    let y = b.ymin + rng.random::<f64>() * b.height();
    // maps [0, 1) onto (-pi, pi]
    let theta = PI - rng.random::<f64>() * 2.0 * PI;
    Pose2D { x, y, theta }
}

impl ParticleSet {
    /// Spreads `config.particles` particles uniformly over the map bounds
    /// and all headings, with equal weights.
    pub fn initialize(map: &ReflectorMap, config: &PfConfig, seed: u64) -> Result<Self, PfError> {
        if config.particles == 0 {
            return Err(PfError::NoParticles);
        }
        if map.bounds().is_degenerate() {
            return Err(PfError::DegenerateBounds);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = 1.0 / config.particles as f64;
        let particles = (0..config.particles)
            .map(|_| Particle {
                pose: uniform_pose(&mut rng, map),
                weight: w,
            })
            .collect();
        Ok(Self::with_rng(particles, rng))
    }

    /// Spreads particles over the redistribution box around a known pose:
    /// position within `redistribution_range`, heading within
    /// `heading_jitter`.
    pub fn initialize_around(center: &Pose2D, config: &PfConfig, seed: u64) -> Result<Self, PfError> {
        if config.particles == 0 {
            return Err(PfError::NoParticles);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = 1.0 / config.particles as f64;
        let r = config.redistribution_range;
        let j = config.heading_jitter;
        let particles = (0..config.particles)
            .map(|_| {
                let dx = r * (2.0 * rng.random::<f64>() - 1.0);
                let dy = r * (2.0 * rng.random::<f64>() - 1.0);
                let dth = j * (2.0 * rng.random::<f64>() - 1.0);
                Particle {
                    pose: Pose2D {
                        x: center.x + dx,
                        y: center.y + dy,
                        theta: wrap_angle(center.theta + dth),
                    },
                    weight: w,
                }
            })
            .collect();
        Ok(Self::with_rng(particles, rng))
    }

    /// Builds a set from explicit particles. Weights are taken as given.
    pub fn from_particles(particles: Vec<Particle>, seed: u64) -> Result<Self, PfError> {
        if particles.is_empty() {
            return Err(PfError::NoParticles);
        }
        Ok(Self::with_rng(particles, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn with_rng(particles: Vec<Particle>, rng: ChaCha8Rng) -> Self {
        Self {
            particles,
            rng,
            points: Vec::new(),
            scratch: Vec::new(),
        }
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    /// Moves every particle by the odometry twist plus its own motion noise.
    /// Weights are untouched. Two standard normals (v, then w) are drawn per
    /// particle in index order.
    pub fn predict(
        &mut self,
        odo: &Odometry,
        geom: &VehicleGeometry,
        dt: f64,
        config: &PfConfig,
    ) -> Result<(), PfError> {
        if !(dt > 0.0) {
            return Err(PfError::NonPositiveDt(dt));
        }
        let enc = encoders_to_twist(odo.w_l, odo.w_r, geom);
        let w = match config.angular_source {
            AngularSource::Gyro => odo.gyro_w,
            AngularSource::Encoders => enc.w,
            AngularSource::Average => 0.5 * (odo.gyro_w + enc.w),
        };
        let noise = config.motion_noise;
        for p in &mut self.particles {
            let nv: f64 = StandardNormal.sample(&mut self.rng);
            let nw: f64 = StandardNormal.sample(&mut self.rng);
            let v_i = enc.v + noise.v_stddev * nv;
            let w_i = w + noise.w_stddev * nw;
            p.pose = step_pose(&p.pose, v_i * dt, w_i * dt);
        }
        Ok(())
    }

    /// Summed scaled squared residual for one particle, plus its match count.
    fn particle_cost(
        &mut self,
        pose: &Pose2D,
        scan: &LrfScan,
        map: &ReflectorMap,
        d: f64,
        config: &PfConfig,
    ) -> (f64, usize) {
        let sensor = pose.advance(d);
        self.points.clear();
        self.points.extend(
            scan.detections
                .iter()
                .map(|det| transform_detection_to_world(&sensor, det)),
        );
        let assoc = associate_points_with(&self.points, map, config.gate, &mut self.scratch);
        let mut sum = 0.0;
        for &(i, id) in &assoc.pairs {
            let r = map.get(id).expect("associated reflector is in the map");
            sum += self.points[i].distance_sq(&r.position);
        }
        sum += assoc.unmatched_detections.len() as f64 * config.penalty();
        let scale_sq = config.distance_scale * config.distance_scale;
        (sum / scale_sq, assoc.pairs.len())
    }

    /// Scores every particle against a scan and normalizes the weights.
    ///
    /// An empty scan leaves the set unchanged. If every raw weight
    /// underflows the weights become uniform and the report is flagged
    /// degenerate.
    pub fn weigh(
        &mut self,
        scan: &LrfScan,
        map: &ReflectorMap,
        geom: &VehicleGeometry,
        config: &PfConfig,
    ) -> WeighReport {
        if scan.detections.is_empty() {
            return WeighReport::default();
        }
        let mut best = (f64::NEG_INFINITY, 0usize);
        let mut total = 0.0;
        for k in 0..self.particles.len() {
            let pose = self.particles[k].pose;
            let (cost, matched) = self.particle_cost(&pose, scan, map, geom.d, config);
            let w = match_likelihood(cost);
            self.particles[k].weight = w;
            total += w;
            if w > best.0 {
                best = (w, matched);
            }
        }
        if !(total > 0.0) || !total.is_finite() {
            let u = 1.0 / self.particles.len() as f64;
            for p in &mut self.particles {
                p.weight = u;
            }
            return WeighReport {
                degenerate: true,
                n_matched: best.1,
            };
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        WeighReport {
            degenerate: false,
            n_matched: best.1,
        }
    }

    /// Weighted mean position with circular-mean heading (or the arithmetic
    /// heading mean when `arithmetic_heading_mean` is set).
    pub fn estimate(&self, arithmetic_heading_mean: bool) -> Result<Pose2D, PfError> {
        let mut sw = 0.0;
        let (mut sx, mut sy) = (0.0, 0.0);
        let (mut ss, mut sc, mut st) = (0.0, 0.0, 0.0);
        for p in &self.particles {
            let w = p.weight;
            sw += w;
            sx += w * p.pose.x;
            sy += w * p.pose.y;
            ss += w * p.pose.theta.sin();
            sc += w * p.pose.theta.cos();
            st += w * p.pose.theta;
        }
        if !(sw > 0.0) {
            return Err(PfError::ZeroWeights);
        }
        let theta = if arithmetic_heading_mean { st / sw } else { ss.atan2(sc) };
        Ok(Pose2D::new(sx / sw, sy / sw, theta))
    }

    /// Redraws the whole set. The first `exploit_count` particles are
    /// placed uniformly in a box of `+-redistribution_range` (position) and
    /// `+-heading_jitter` (heading) around anchors sampled, proportionally
    /// to weight, from the heaviest `elite_quantile` of the set; the rest are
    /// spread over the map. Weights reset to `1/M`. Draw order per exploit
    /// particle: anchor, dx, dy, dtheta; per uniform particle: x, y, theta.
    pub fn redistribute(&mut self, map: &ReflectorMap, config: &PfConfig) {
        let m = self.particles.len();
        let n_elite = ((config.elite_quantile * m as f64 - 1e-9).ceil() as usize).clamp(1, m);
        let n_exploit = ((config.exploit_fraction * m as f64 - 1e-9).ceil().max(0.0) as usize).min(m);

        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            self.particles[b]
                .weight
                .total_cmp(&self.particles[a].weight)
                .then(a.cmp(&b))
        });
        let elite = &order[..n_elite];
        let elite_total: f64 = elite.iter().map(|&i| self.particles[i].weight).sum();
        let mut cumulative = Vec::with_capacity(n_elite);
        let mut acc = 0.0;
        for &i in elite {
            acc += if elite_total > 0.0 {
                self.particles[i].weight / elite_total
            } else {
                1.0 / n_elite as f64
            };
            cumulative.push(acc);
        }

        let range = config.redistribution_range;
        let jitter = config.heading_jitter;
        let mut next = Vec::with_capacity(m);
        let w = 1.0 / m as f64;
        for _ in 0..n_exploit {
            let u: f64 = self.rng.random::<f64>() * acc;
            let slot = cumulative.partition_point(|&c| c <= u).min(n_elite - 1);
            let anchor = self.particles[elite[slot]].pose;
            let dx = (2.0 * self.rng.random::<f64>() - 1.0) * range;
            let dy = (2.0 * self.rng.random::<f64>() - 1.0) * range;
            let dth = (2.0 * self.rng.random::<f64>() - 1.0) * jitter;
            next.push(Particle {
                pose: Pose2D {
                    x: anchor.x + dx,
                    y: anchor.y + dy,
                    theta: wrap_angle(anchor.theta + dth),
                },
                weight: w,
            });
        }
        for _ in n_exploit..m {
            next.push(Particle {
                pose: uniform_pose(&mut self.rng, map),
                weight: w,
            });
        }
        self.particles = next;
    }
}

/// One emitted pose, produced on every scored laser scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfEstimate {
    pub t: f64,
    pub pose: Pose2D,
    pub n_matched: usize,
    pub degenerate: bool,
}

/// The filter as a frame-driven state machine.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    set: ParticleSet,
    config: PfConfig,
    geom: VehicleGeometry,
    map: ReflectorMap,
    last_frame: f64,
    last_odometry: f64,
    last_odo: Option<Odometry>,
}

impl ParticleFilter {
    /// Global initialization over the map; the filter clock starts at
    /// `start_time`.
    pub fn new(
        map: ReflectorMap,
        geom: VehicleGeometry,
        config: PfConfig,
        seed: u64,
        start_time: f64,
    ) -> Result<Self, PfError> {
        config.validate()?;
        let set = ParticleSet::initialize(&map, &config, seed)?;
        Ok(Self::from_set(set, map, geom, config, start_time))
    }

    /// Starts from a known pose instead of the whole map.
    pub fn new_at(
        map: ReflectorMap,
        geom: VehicleGeometry,
        config: PfConfig,
        seed: u64,
        start_time: f64,
        start_pose: &Pose2D,
    ) -> Result<Self, PfError> {
        config.validate()?;
        let set = ParticleSet::initialize_around(start_pose, &config, seed)?;
        Ok(Self::from_set(set, map, geom, config, start_time))
    }

    pub fn from_set(
        set: ParticleSet,
        map: ReflectorMap,
        geom: VehicleGeometry,
        config: PfConfig,
        start_time: f64,
    ) -> Self {
        Self {
            set,
            config,
            geom,
            map,
            last_frame: start_time,
            last_odometry: start_time,
            last_odo: None,
        }
    }

    pub fn set(&self) -> &ParticleSet {
        &self.set
    }

    pub fn config(&self) -> &PfConfig {
        &self.config
    }

    /// Odometry frames only predict. A scan first extends the last
    /// odometry rates up to its own timestamp, then is weighed, estimated
    /// and redistributed; an empty scan is ignored and a degenerate one
    /// skips redistribution.
    pub fn step(&mut self, frame: &SensorFrame) -> Result<Option<PfEstimate>, PfError> {
        if frame.t < self.last_frame - 1e-9 {
            return Err(PfError::OutOfOrder {
                t: frame.t,
                last: self.last_frame,
            });
        }
        self.last_frame = self.last_frame.max(frame.t);
        match &frame.payload {
            Payload::Odometry(odo) => {
                let dt = frame.t - self.last_odometry;
                self.set.predict(odo, &self.geom, dt, &self.config)?;
                self.last_odometry = frame.t;
                self.last_odo = Some(*odo);
                Ok(None)
            }
            Payload::LrfScan(scan) => {
                if scan.detections.is_empty() {
                    return Ok(None);
                }
                // carry the particles from the last odometry instant to the
                // scan instant on the latest rates
                let gap = frame.t - self.last_odometry;
                if let (Some(odo), true) = (self.last_odo, gap > 1e-9) {
                    self.set.predict(&odo, &self.geom, gap, &self.config)?;
                    self.last_odometry = frame.t;
                }
                let report = self.set.weigh(scan, &self.map, &self.geom, &self.config);
                let pose = self.set.estimate(self.config.arithmetic_heading_mean)?;
                if !report.degenerate {
                    self.set.redistribute(&self.map, &self.config);
                }
                Ok(Some(PfEstimate {
                    t: frame.t,
                    pose,
                    n_matched: report.n_matched,
                    degenerate: report.degenerate,
                }))
            }
        }
    }
}
