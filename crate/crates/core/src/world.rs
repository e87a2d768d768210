//! Planar geometry shared by every estimator: poses, reflector maps and
//! range/bearing detections.
//!
//! All quantities are SI. The world frame is right-handed with headings
//! measured counterclockwise from +x and kept in (-pi, pi].

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("negative detection range {0}")]
    NegativeRange(f64),
    #[error("reflector map must contain at least one reflector")]
    EmptyMap,
    #[error("duplicate reflector id {0}")]
    DuplicateId(u32),
    #[error("reflector {id} at ({x}, {y}) lies outside the map bounds")]
    OutOfBounds { id: u32, x: f64, y: f64 },
    #[error("invalid bounds [{0}, {1}, {2}, {3}]")]
    InvalidBounds(f64, f64, f64, f64),
    #[error("map document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("reading map: {0}")]
    Io(#[from] std::io::Error),
}

/// Wraps a finite angle into (-pi, pi].
pub fn normalize_angle(a: f64) -> Result<f64, WorldError> {
    if !a.is_finite() {
        return Err(WorldError::NonFinite("angle"));
    }
    Ok(wrap_angle(a))
}

/// Infallible form of [`normalize_angle`] for values already known finite.
#[inline]
pub fn wrap_angle(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        self.distance_sq(other).sqrt()
    }

    pub fn distance_sq(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Planar pose. `theta` is kept in (-pi, pi] by every constructor and
/// operation in this crate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2D {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        debug_assert!(x.is_finite() && y.is_finite() && theta.is_finite());
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn try_new(x: f64, y: f64, theta: f64) -> Result<Self, WorldError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(WorldError::NonFinite("pose position"));
        }
        Ok(Self {
            x,
            y,
            theta: normalize_angle(theta)?,
        })
    }

    pub fn position(&self) -> Point2 {
        Point2::new(self.x, self.y)
    }

    /// Point at `forward` meters along the heading.
    pub fn advance(&self, forward: f64) -> Pose2D {
        Pose2D {
            x: self.x + forward * self.theta.cos(),
            y: self.y + forward * self.theta.sin(),
            theta: self.theta,
        }
    }
}

/// A pose with its timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedPose {
    pub t: f64,
    pub pose: Pose2D,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reflector {
    pub id: u32,
    pub position: Point2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl Bounds {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, WorldError> {
        let ok = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) && xmax >= xmin && ymax >= ymin;
        if !ok {
            return Err(WorldError::InvalidBounds(xmin, ymin, xmax, ymax));
        }
        Ok(Self { xmin, ymin, xmax, ymax })
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn is_degenerate(&self) -> bool {
        self.width() <= 0.0 || self.height() <= 0.0
    }
}

/// Surveyed reflector positions plus the rectangle of the working
/// environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectorMap {
    reflectors: Vec<Reflector>,
    bounds: Bounds,
}

#[derive(Serialize, Deserialize)]
struct MapDocument {
    bounds: [f64; 4],
    reflectors: Vec<ReflectorEntry>,
}

#[derive(Serialize, Deserialize)]
struct ReflectorEntry {
    id: u32,
    x: f64,
    y: f64,
}

impl ReflectorMap {
    pub fn new(reflectors: Vec<Reflector>, bounds: Bounds) -> Result<Self, WorldError> {
        if reflectors.is_empty() {
            return Err(WorldError::EmptyMap);
        }
        let mut seen = HashSet::with_capacity(reflectors.len());
        for r in &reflectors {
            if !seen.insert(r.id) {
                return Err(WorldError::DuplicateId(r.id));
            }
            if !r.position.x.is_finite() || !r.position.y.is_finite() {
                return Err(WorldError::NonFinite("reflector position"));
            }
            if !bounds.contains(&r.position) {
                return Err(WorldError::OutOfBounds {
                    id: r.id,
                    x: r.position.x,
                    y: r.position.y,
                });
            }
        }
        Ok(Self { reflectors, bounds })
    }

    pub fn from_json_str(s: &str) -> Result<Self, WorldError> {
        let doc: MapDocument = serde_json::from_str(s)?;
        Self::from_document(doc)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self, WorldError> {
        let doc: MapDocument = serde_json::from_value(v)?;
        Self::from_document(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, WorldError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    fn from_document(doc: MapDocument) -> Result<Self, WorldError> {
        let [xmin, ymin, xmax, ymax] = doc.bounds;
        let bounds = Bounds::new(xmin, ymin, xmax, ymax)?;
        let reflectors = doc
            .reflectors
            .into_iter()
            .map(|e| Reflector {
                id: e.id,
                position: Point2::new(e.x, e.y),
            })
            .collect();
        Self::new(reflectors, bounds)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let doc = MapDocument {
            bounds: [self.bounds.xmin, self.bounds.ymin, self.bounds.xmax, self.bounds.ymax],
            reflectors: self
                .reflectors
                .iter()
                .map(|r| ReflectorEntry {
                    id: r.id,
                    x: r.position.x,
                    y: r.position.y,
                })
                .collect(),
        };
        serde_json::to_value(doc).expect("map document serializes")
    }

    pub fn reflectors(&self) -> &[Reflector] {
        &self.reflectors
    }

    pub fn bounds(&self) -> &Bounds {
        &self.bounds
    }

    pub fn len(&self) -> usize {
        self.reflectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reflectors.is_empty()
    }

    pub fn get(&self, id: u32) -> Option<&Reflector> {
        self.reflectors.iter().find(|r| r.id == id)
    }
}

/// Range/bearing to a reflector, relative to the laser origin and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectorDetection {
    pub range: f64,
    pub bearing: f64,
}

impl ReflectorDetection {
    pub fn new(range: f64, bearing: f64) -> Result<Self, WorldError> {
        if !range.is_finite() {
            return Err(WorldError::NonFinite("range"));
        }
        if range < 0.0 {
            return Err(WorldError::NegativeRange(range));
        }
        Ok(Self {
            range,
            bearing: normalize_angle(bearing)?,
        })
    }
}

/// Projects a detection taken from `pose` into world coordinates.
pub fn transform_detection_to_world(pose: &Pose2D, det: &ReflectorDetection) -> Point2 {
    let a = pose.theta + det.bearing;
    Point2::new(pose.x + det.range * a.cos(), pose.y + det.range * a.sin())
}

/// Inverse of [`transform_detection_to_world`]: what a sensor at `pose`
/// would measure for a point target.
pub fn observe_point(pose: &Pose2D, target: &Point2) -> ReflectorDetection {
    let dx = target.x - pose.x;
    let dy = target.y - pose.y;
    ReflectorDetection {
        range: dx.hypot(dy),
        bearing: wrap_angle(dy.atan2(dx) - pose.theta),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert!((normalize_angle(-1.5 * PI).unwrap() - PI / 2.0).abs() < 1e-12);
        assert_eq!(normalize_angle(-PI).unwrap(), PI);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn transform_examples() {
        let p = transform_detection_to_world(&Pose2D::new(0.0, 0.0, 0.0), &ReflectorDetection::new(1.0, 0.0).unwrap());
        assert!((p.x - 1.0).abs() < EPS && p.y.abs() < EPS);

        let p = transform_detection_to_world(
            &Pose2D::new(0.0, 0.0, PI / 2.0),
            &ReflectorDetection::new(1.0, 0.0).unwrap(),
        );
        assert!(p.x.abs() < EPS && (p.y - 1.0).abs() < EPS);

        // hand evaluation: angle pi/3, range 2
        let p = transform_detection_to_world(
            &Pose2D::new(2.0, 3.0, PI / 6.0),
            &ReflectorDetection::new(2.0, PI / 6.0).unwrap(),
        );
        assert!((p.x - 3.0).abs() < EPS);
        assert!((p.y - (3.0 + 3f64.sqrt())).abs() < EPS);
    }

    #[test]
    fn detection_rejects_negative_range() {
        assert!(matches!(
            ReflectorDetection::new(-0.1, 0.0),
            Err(WorldError::NegativeRange(_))
        ));
    }

    #[test]
    fn map_validation() {
        let b = Bounds::new(0.0, 0.0, 10.0, 10.0).unwrap();
        assert!(matches!(ReflectorMap::new(vec![], b), Err(WorldError::EmptyMap)));
        let r = |id, x, y| Reflector {
            id,
            position: Point2::new(x, y),
        };
        assert!(matches!(
            ReflectorMap::new(vec![r(1, 1.0, 1.0), r(1, 2.0, 2.0)], b),
            Err(WorldError::DuplicateId(1))
        ));
        assert!(matches!(
            ReflectorMap::new(vec![r(1, 11.0, 1.0)], b),
            Err(WorldError::OutOfBounds { id: 1, .. })
        ));
        // on the boundary is allowed
        assert!(ReflectorMap::new(vec![r(1, 10.0, 0.0)], b).is_ok());
    }

    #[test]
    fn map_json_roundtrip() {
        let doc =
            r#"{"bounds": [0, 0, 25, 20], "reflectors": [{"id": 0, "x": 1.5, "y": 2}, {"id": 3, "x": 25, "y": 20}]}"#;
        let m = ReflectorMap::from_json_str(doc).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get(3).unwrap().position, Point2::new(25.0, 20.0));
        let back = ReflectorMap::from_json_value(m.to_json_value()).unwrap();
        assert_eq!(back, m);
        assert!(ReflectorMap::from_json_str(r#"{"bounds": [0, 0, 1, 1], "reflectors": []}"#).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_periodic_and_idempotent(a in -50.0f64..50.0, k in -20i32..20) {
            let n = normalize_angle(a).unwrap();
            prop_assert!(n > -PI && n <= PI);
            prop_assert!((normalize_angle(n).unwrap() - n).abs() < 1e-12);
            let shifted = normalize_angle(a + TAU * k as f64).unwrap();
            // compare on the circle, both wraps may land on either side of +-pi
            let d = wrap_angle(shifted - n);
            prop_assert!(d.abs() < 1e-9);
        }

        #[test]
        fn projected_range_is_preserved(x in -100.0f64..100.0, y in -100.0f64..100.0, th in -10.0f64..10.0,
                                        range in 0.0f64..50.0, bearing in -4.0f64..4.0) {
            let pose = Pose2D::new(x, y, th);
            let det = ReflectorDetection::new(range, bearing).unwrap();
            let p = transform_detection_to_world(&pose, &det);
            let r = pose.position().distance(&p);
            prop_assert!((r - range).abs() <= 1e-9 * range.max(1.0));
        }

        #[test]
        fn observe_inverts_projection(x in -100.0f64..100.0, y in -100.0f64..100.0, th in -4.0f64..4.0,
                                      range in 0.1f64..50.0, bearing in -3.1f64..3.1) {
            let pose = Pose2D::new(x, y, th);
            let det = ReflectorDetection::new(range, bearing).unwrap();
            let back = observe_point(&pose, &transform_detection_to_world(&pose, &det));
            prop_assert!((back.range - det.range).abs() < 1e-9);
            prop_assert!(wrap_angle(back.bearing - det.bearing).abs() < 1e-9);
        }
    }
}
