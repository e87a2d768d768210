//! Run configuration: one JSON document describing vehicle, map,
//! trajectory, sensor noise and estimator settings.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::experiment::{PfInit, Scenario};
use crate::kinematics::VehicleGeometry;
use crate::lasernav::LaserNavConfig;
use crate::pf::PfConfig;
use crate::sim::{NoiseModel, SensorTiming, TrajectorySpec};
use crate::world::{Pose2D, ReflectorMap};

/// The checked-in reference experiment.
pub const REFERENCE_JSON: &str = include_str!("../configs/reference.json");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("config is not valid JSON: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error("missing required field `{0}`")]
    Missing(String),
    #[error("invalid `{field}`: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl ToString) -> ConfigError {
    ConfigError::Invalid {
        field: field.into(),
        reason: reason.to_string(),
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: Scenario,
    /// Number of seeded repetitions in a full experiment.
    pub runs: usize,
    pub output_dir: PathBuf,
    /// The resolved document (map inlined); hashed for output headers.
    resolved: Value,
}

const VEHICLE_FIELDS: [&str; 5] = ["h", "l", "r_l", "r_r", "d"];

fn section<T: DeserializeOwned>(root: &Value, key: &str) -> Result<Option<T>, ConfigError> {
    match root.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| invalid(key, e)),
    }
}

fn require<'a>(obj: &'a Value, path: &str) -> Result<&'a Value, ConfigError> {
    let mut cur = obj;
    for part in path.split('.') {
        cur = cur.get(part).ok_or_else(|| ConfigError::Missing(path.to_string()))?;
    }
    Ok(cur)
}

impl RunConfig {
    pub fn reference() -> Self {
        Self::from_json_str(REFERENCE_JSON, None).expect("reference config is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text, path.parent())
    }

    /// Parses a config document. A `map` given as a string is a path,
    /// resolved against `base_dir` when relative.
    pub fn from_json_str(text: &str, base_dir: Option<&Path>) -> Result<Self, ConfigError> {
        let mut root: Value = serde_json::from_str(text)?;
        if !root.is_object() {
            return Err(invalid("(root)", "expected a JSON object"));
        }

        let seed = match root.get("seed") {
            None => 0,
            Some(v) => v
                .as_u64()
                .ok_or_else(|| invalid("seed", "expected a non-negative integer"))?,
        };

        for f in VEHICLE_FIELDS {
            let path = format!("vehicle.{f}");
            if !require(&root, &path)?.is_number() {
                return Err(invalid(path, "expected a number"));
            }
        }
        let geom: VehicleGeometry = section(&root, "vehicle")?.expect("checked above");
        geom.validate().map_err(|e| match e {
            crate::kinematics::KinematicsError::InvalidGeometry(f) => invalid(format!("vehicle.{f}"), "out of range"),
            other => invalid("vehicle", other),
        })?;

        let map_value = require(&root, "map")?.clone();
        let map = match &map_value {
            Value::String(p) => {
                let p = PathBuf::from(p);
                let p = match base_dir {
                    Some(base) if p.is_relative() => base.join(p),
                    _ => p,
                };
                ReflectorMap::from_path(&p).map_err(|e| invalid("map", e))?
            }
            v => ReflectorMap::from_json_value(v.clone()).map_err(|e| invalid("map", e))?,
        };
        root["map"] = map.to_json_value();

        let traj = require(&root, "trajectory")?;
        require(&root, "trajectory.initial_pose")?;
        require(&root, "trajectory.segments")?;
        let mut trajectory: TrajectorySpec =
            serde_json::from_value(traj.clone()).map_err(|e| invalid("trajectory", e))?;
        let p = trajectory.initial_pose;
        trajectory.initial_pose =
            Pose2D::try_new(p.x, p.y, p.theta).map_err(|e| invalid("trajectory.initial_pose", e))?;
        if trajectory.segments.is_empty() {
            return Err(invalid("trajectory.segments", "at least one segment is required"));
        }
        let tick = match traj.get("tick") {
            None => 0.01,
            Some(v) => v
                .as_f64()
                .ok_or_else(|| invalid("trajectory.tick", "expected a number"))?,
        };
        if !(tick.is_finite() && tick > 0.0) {
            return Err(invalid("trajectory.tick", "must be positive"));
        }

        let noise: NoiseModel = section(&root, "noise")?.unwrap_or_default();
        noise.validate().map_err(|e| invalid("noise", e))?;
        let timing: SensorTiming = section(&root, "sensors")?.unwrap_or_default();
        timing.validate().map_err(|e| invalid("sensors", e))?;
        let pf: PfConfig = section(&root, "pf")?.unwrap_or_default();
        pf.validate().map_err(|e| match e {
            crate::pf::PfError::InvalidConfig(f) => invalid(format!("pf.{f}"), "out of range"),
            other => invalid("pf", other),
        })?;
        let lasernav: LaserNavConfig = section(&root, "lasernav")?.unwrap_or_default();
        if !(lasernav.gate.is_finite() && lasernav.gate > 0.0) {
            return Err(invalid("lasernav.gate", "must be positive"));
        }
        if !(lasernav.reacquire_span.is_finite() && lasernav.reacquire_span >= 0.0) {
            return Err(invalid("lasernav.reacquire_span", "must be non-negative"));
        }
        let pf_init: PfInit = section(&root, "pf_init")?.unwrap_or_default();

        let eval = root.get("eval");
        let warmup = match eval.and_then(|e| e.get("warmup")) {
            None => 0.0,
            Some(v) => v.as_f64().ok_or_else(|| invalid("eval.warmup", "expected a number"))?,
        };
        if !(warmup.is_finite() && warmup >= 0.0) {
            return Err(invalid("eval.warmup", "must be non-negative"));
        }
        let runs = match eval.and_then(|e| e.get("runs")) {
            None => 1,
            Some(v) => v
                .as_u64()
                .filter(|&n| n > 0)
                .ok_or_else(|| invalid("eval.runs", "expected a positive integer"))? as usize,
        };
        let output_dir = match root.get("output_dir") {
            None => PathBuf::from("out"),
            Some(Value::String(s)) => PathBuf::from(s),
            Some(_) => return Err(invalid("output_dir", "expected a string")),
        };

        Ok(Self {
            seed,
            scenario: Scenario {
                geom,
                map,
                trajectory,
                tick,
                noise,
                timing,
                pf,
                lasernav,
                pf_init,
                warmup,
            },
            runs,
            output_dir,
            resolved: root,
        })
    }

    /// Short hex digest of the resolved document, seed excluded.
    pub fn hash(&self) -> String {
        let mut doc = self.resolved.clone();
        if let Some(obj) = doc.as_object_mut() {
            obj.remove("seed");
            obj.remove("output_dir");
        }
        let canonical = serde_json::to_string(&doc).expect("JSON value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        hex::encode(&digest[..8])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_parses() {
        let c = RunConfig::reference();
        assert_eq!(c.scenario.map.len(), 20);
        assert_eq!(c.scenario.pf.particles, 150);
        assert!((c.scenario.trajectory.segments[0].delta - std::f64::consts::FRAC_PI_3).abs() < 1e-12);
        assert_eq!(c.hash().len(), 16);
    }

    fn without(path: &[&str]) -> String {
        let mut v: Value = serde_json::from_str(REFERENCE_JSON).unwrap();
        let (last, parents) = path.split_last().unwrap();
        let mut cur = &mut v;
        for p in parents {
            cur = cur.get_mut(*p).unwrap();
        }
        cur.as_object_mut().unwrap().remove(*last);
        v.to_string()
    }

    #[test]
    fn missing_fields_are_named() {
        let err = RunConfig::from_json_str(&without(&["vehicle", "h"]), None).unwrap_err();
        assert!(err.to_string().contains("vehicle.h"), "{err}");
        let err = RunConfig::from_json_str(&without(&["trajectory", "segments"]), None).unwrap_err();
        assert!(err.to_string().contains("trajectory.segments"), "{err}");
        let err = RunConfig::from_json_str(&without(&["map"]), None).unwrap_err();
        assert!(err.to_string().contains("map"), "{err}");
    }

    #[test]
    fn invalid_values_are_named() {
        let mut v: Value = serde_json::from_str(REFERENCE_JSON).unwrap();
        v["vehicle"]["h"] = 0.0.into();
        let err = RunConfig::from_json_str(&v.to_string(), None).unwrap_err();
        assert!(err.to_string().contains("vehicle.h"), "{err}");

        let mut v: Value = serde_json::from_str(REFERENCE_JSON).unwrap();
        v["pf"]["M"] = 0.into();
        let err = RunConfig::from_json_str(&v.to_string(), None).unwrap_err();
        assert!(err.to_string().contains("pf.M"), "{err}");
    }

    #[test]
    fn hash_ignores_seed_but_not_settings() {
        let mut v: Value = serde_json::from_str(REFERENCE_JSON).unwrap();
        let base = RunConfig::from_json_str(&v.to_string(), None).unwrap().hash();
        v["seed"] = 99.into();
        assert_eq!(RunConfig::from_json_str(&v.to_string(), None).unwrap().hash(), base);
        v["noise"]["clutter_rate"] = 2.0.into();
        assert_ne!(RunConfig::from_json_str(&v.to_string(), None).unwrap().hash(), base);
    }

    #[test]
    fn map_path_resolves_relative_to_config() {
        let dir = tempfile::tempdir().unwrap();
        let mut v: Value = serde_json::from_str(REFERENCE_JSON).unwrap();
        std::fs::write(dir.path().join("map.json"), v["map"].to_string()).unwrap();
        v["map"] = "map.json".into();
        let cfg_path = dir.path().join("run.json");
        std::fs::write(&cfg_path, v.to_string()).unwrap();
        let c = RunConfig::from_path(&cfg_path).unwrap();
        assert_eq!(c.scenario.map.len(), 20);
        assert_eq!(c.hash(), RunConfig::reference().hash());
    }
}
