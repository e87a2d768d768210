//! Laser-only reflector navigation: gated nearest-neighbour association of
//! anonymous detections and a closed-form rigid fit of the laser pose,
//! reported at the rotation center.
//!
//! This is an idealized stand-in for a commercial reflector navigator; the
//! matching logic of such units is proprietary.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{sensor_to_rotation_center, VehicleGeometry};
use crate::world::{transform_detection_to_world, wrap_angle, Point2, Pose2D, ReflectorDetection, ReflectorMap};

#[derive(Debug, Error, PartialEq)]
pub enum LasernavError {
    #[error("only {n_matched} matched reflector(s); at least 2 are needed for a fix")]
    InsufficientMatches { n_matched: usize },
    #[error("association refers to detection {0} which does not exist")]
    UnknownDetection(usize),
    #[error("association refers to reflector id {0} which is not in the map")]
    UnknownReflector(u32),
    #[error("association pairs a detection or reflector more than once")]
    DuplicatePair,
}

/// Detection-to-reflector pairing. Pairs are ordered by detection index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Association {
    pub pairs: Vec<(usize, u32)>,
    pub unmatched_detections: Vec<usize>,
}

impl Association {
    pub fn n_matched(&self) -> usize {
        self.pairs.len()
    }
}

/// Greedy global nearest-neighbour association of world-frame points.
///
/// Every (point, reflector) pair within `gate` is a candidate; candidates
/// are accepted in ascending distance order as long as neither side is
/// already taken. `scratch` is reused between calls.
pub fn associate_points_with(
    points: &[Point2],
    map: &ReflectorMap,
    gate: f64,
    scratch: &mut Vec<(f64, usize, usize)>,
) -> Association {
    let gate_sq = gate * gate;
    scratch.clear();
    for (i, p) in points.iter().enumerate() {
        for (j, r) in map.reflectors().iter().enumerate() {
            let d2 = p.distance_sq(&r.position);
            if d2 <= gate_sq {
                scratch.push((d2, i, j));
            }
        }
    }
    scratch.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut det_used = vec![false; points.len()];
    let mut refl_used = vec![false; map.len()];
    let mut pairs = Vec::new();
    for &(_, i, j) in scratch.iter() {
        if det_used[i] || refl_used[j] {
            continue;
        }
        det_used[i] = true;
        refl_used[j] = true;
        pairs.push((i, map.reflectors()[j].id));
    }
    pairs.sort_unstable_by_key(|p| p.0);
    let unmatched_detections = det_used
        .iter()
        .enumerate()
        .filter(|(_, used)| !**used)
        .map(|(i, _)| i)
        .collect();
    Association {
        pairs,
        unmatched_detections,
    }
}

pub fn associate_points(points: &[Point2], map: &ReflectorMap, gate: f64) -> Association {
    associate_points_with(points, map, gate, &mut Vec::new())
}

/// Projects detections from the prior laser pose and associates them.
pub fn associate(
    detections: &[ReflectorDetection],
    prior_sensor_pose: &Pose2D,
    map: &ReflectorMap,
    gate: f64,
) -> Association {
    let points: Vec<Point2> = detections
        .iter()
        .map(|d| transform_detection_to_world(prior_sensor_pose, d))
        .collect();
    associate_points(&points, map, gate)
}

/// Least-squares rigid transform taking `local` onto `world`.
///
/// Returns `(pose, residual_rms)` where applying `pose` to each local point
/// best matches its world counterpart. Uses centroid alignment and the
/// rotation angle of the 2x2 cross-covariance, so the result is always a
/// proper rotation.
pub fn register_rigid_2d(local: &[Point2], world: &[Point2]) -> (Pose2D, f64) {
    assert_eq!(local.len(), world.len());
    assert!(!local.is_empty());
    let n = local.len() as f64;
    let centroid = |pts: &[Point2]| {
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |(ax, ay), p| (ax + p.x, ay + p.y));
        Point2::new(sx / n, sy / n)
    };
    let cl = centroid(local);
    let cw = centroid(world);
    let (mut dot, mut cross) = (0.0, 0.0);
    for (a, b) in local.iter().zip(world) {
        let (ax, ay) = (a.x - cl.x, a.y - cl.y);
        let (bx, by) = (b.x - cw.x, b.y - cw.y);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
    }
    let theta = cross.atan2(dot);
    let (s, c) = theta.sin_cos();
    let tx = cw.x - (c * cl.x - s * cl.y);
    let ty = cw.y - (s * cl.x + c * cl.y);
    let pose = Pose2D::new(tx, ty, theta);

    let sq: f64 = local
        .iter()
        .zip(world)
        .map(|(a, b)| {
            let px = tx + c * a.x - s * a.y;
            let py = ty + s * a.x + c * a.y;
            (px - b.x).powi(2) + (py - b.y).powi(2)
        })
        .sum();
    (pose, (sq / n).sqrt())
}

/// Laser-derived pose at the rotation center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaserFix {
    pub pose: Pose2D,
    /// The fitted laser pose before the offset conversion.
    pub sensor_pose: Pose2D,
    pub n_matched: usize,
    pub residual_rms: f64,
}

fn check_association(
    detections: &[ReflectorDetection],
    assoc: &Association,
    map: &ReflectorMap,
) -> Result<(), LasernavError> {
    let mut det_seen = vec![false; detections.len()];
    let mut ids = Vec::with_capacity(assoc.pairs.len());
    for &(i, id) in &assoc.pairs {
        if i >= detections.len() {
            return Err(LasernavError::UnknownDetection(i));
        }
        if map.get(id).is_none() {
            return Err(LasernavError::UnknownReflector(id));
        }
        if det_seen[i] || ids.contains(&id) {
            return Err(LasernavError::DuplicatePair);
        }
        det_seen[i] = true;
        ids.push(id);
    }
    Ok(())
}

/// Solves the laser pose from associated detections and converts it to the
/// rotation center.
pub fn solve_fix(
    detections: &[ReflectorDetection],
    assoc: &Association,
    map: &ReflectorMap,
    geom: &VehicleGeometry,
) -> Result<LaserFix, LasernavError> {
    check_association(detections, assoc, map)?;
    let n_matched = assoc.pairs.len();
    if n_matched < 2 {
        return Err(LasernavError::InsufficientMatches { n_matched });
    }
    let origin = Pose2D::default();
    let (local, world): (Vec<Point2>, Vec<Point2>) = assoc
        .pairs
        .iter()
        .map(|&(i, id)| {
            let local = transform_detection_to_world(&origin, &detections[i]);
            let world = map.get(id).expect("checked above").position;
            (local, world)
        })
        .unzip();
    let (sensor_pose, residual_rms) = register_rigid_2d(&local, &world);
    Ok(LaserFix {
        pose: sensor_to_rotation_center(&sensor_pose, geom.d),
        sensor_pose,
        n_matched,
        residual_rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaserNavConfig {
    /// Association gate, meters.
    pub gate: f64,
    /// Predict the next association prior by repeating the motion between
    /// the last two fixes. Off means the last fix itself is the prior.
    pub extrapolate: bool,
    /// Half-width of the heading sweep used to reacquire, radians. Zero
    /// disables the sweep.
    pub reacquire_span: f64,
}

impl Default for LaserNavConfig {
    fn default() -> Self {
        Self {
            gate: 0.5,
            extrapolate: true,
            reacquire_span: 0.5,
        }
    }
}

/// Motion from `a` to `b` expressed in `a`'s frame.
fn relative(a: &Pose2D, b: &Pose2D) -> (f64, f64, f64) {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let (s, c) = a.theta.sin_cos();
    (c * dx + s * dy, -s * dx + c * dy, wrap_angle(b.theta - a.theta))
}

fn compose(a: &Pose2D, (fx, fy, dth): (f64, f64, f64)) -> Pose2D {
    let (s, c) = a.theta.sin_cos();
    Pose2D {
        x: a.x + c * fx - s * fy,
        y: a.y + s * fx + c * fy,
        theta: wrap_angle(a.theta + dth),
    }
}

/// Scan-to-scan laser navigator. Each scan is associated from a prior
/// built from earlier fixes only; no odometry is used.
#[derive(Debug, Clone)]
pub struct LaserNavigator {
    config: LaserNavConfig,
    geom: VehicleGeometry,
    prior_sensor: Pose2D,
    last_fix: Option<Pose2D>,
    per_scan: (f64, f64, f64),
    scans_since_fix: u32,
    fixes: u32,
}

impl LaserNavigator {
    /// `initial_center` is the rotation-center pose the unit is started at.
    pub fn new(config: LaserNavConfig, geom: VehicleGeometry, initial_center: Pose2D) -> Self {
        Self {
            config,
            geom,
            prior_sensor: initial_center.advance(geom.d),
            last_fix: None,
            per_scan: (0.0, 0.0, 0.0),
            scans_since_fix: 0,
            fixes: 0,
        }
    }

    pub fn prior_sensor_pose(&self) -> &Pose2D {
        &self.prior_sensor
    }

    fn gated_cost(&self, detections: &[ReflectorDetection], prior: &Pose2D, map: &ReflectorMap) -> (f64, Association) {
        let gate = self.config.gate;
        let points: Vec<Point2> = detections
            .iter()
            .map(|d| transform_detection_to_world(prior, d))
            .collect();
        let assoc = associate_points(&points, map, gate);
        let matched: f64 = assoc
            .pairs
            .iter()
            .map(|&(i, id)| points[i].distance_sq(&map.get(id).expect("associated id is in the map").position))
            .sum();
        (matched + gate * gate * assoc.unmatched_detections.len() as f64, assoc)
    }

    /// Associates from the prior. Until two fixes have fixed the motion, or
    /// when fewer than half the detections associate, the prior heading is
    /// swept and the association with the lowest gated cost is kept.
    fn associate_with_retry(&self, detections: &[ReflectorDetection], map: &ReflectorMap) -> Association {
        const STEP: f64 = 0.05;
        let (mut best_cost, mut best) = self.gated_cost(detections, &self.prior_sensor, map);
        let settled = !self.config.extrapolate || self.fixes >= 2;
        if (settled && 2 * best.n_matched() >= detections.len()) || self.config.reacquire_span <= 0.0 {
            return best;
        }
        let steps = (self.config.reacquire_span / STEP).floor() as i32;
        for k in 1..=steps {
            for sign in [1.0, -1.0] {
                let mut prior = self.prior_sensor;
                prior.theta = wrap_angle(prior.theta + sign * f64::from(k) * STEP);
                let (cost, cand) = self.gated_cost(detections, &prior, map);
                if cost < best_cost {
                    best_cost = cost;
                    best = cand;
                }
            }
        }
        best
    }

    pub fn process_scan(
        &mut self,
        detections: &[ReflectorDetection],
        map: &ReflectorMap,
    ) -> Result<LaserFix, LasernavError> {
        let assoc = self.associate_with_retry(detections, map);
        self.scans_since_fix += 1;
        let fix = match solve_fix(detections, &assoc, map, &self.geom) {
            Ok(fix) => fix,
            Err(e) => {
                if self.config.extrapolate {
                    self.prior_sensor = compose(&self.prior_sensor, self.per_scan);
                }
                return Err(e);
            }
        };
        if self.config.extrapolate {
            if let Some(last) = self.last_fix {
                let (fx, fy, dth) = relative(&last, &fix.sensor_pose);
                let k = f64::from(self.scans_since_fix);
                self.per_scan = (fx / k, fy / k, dth / k);
            }
            self.prior_sensor = compose(&fix.sensor_pose, self.per_scan);
        } else {
            self.prior_sensor = fix.sensor_pose;
        }
        self.last_fix = Some(fix.sensor_pose);
        self.scans_since_fix = 0;
        self.fixes += 1;
        Ok(fix)
    }
}
