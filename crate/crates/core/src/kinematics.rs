//! Kinematic model of the steered-drive vehicle: drive-unit relations,
//! encoder-derived body velocities, first-order pose integration and the
//! offset between the laser mount and the target rotation center.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::world::{wrap_angle, Pose2D};

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("steering angle {0} rad is at or beyond the +-pi/2 singularity")]
    SteeringSingularity(f64),
    #[error("time step must be positive, got {0}")]
    NonPositiveDt(f64),
    #[error("invalid vehicle geometry: `{0}` out of range")]
    InvalidGeometry(&'static str),
    #[error("angular rate {0} rad/s cannot be produced by the arctangent wheel relation")]
    RateOutOfRange(f64),
}

/// Fixed vehicle dimensions, all in meters.
///
/// `h` is the lever arm from the instantaneous center of rotation to the
/// drive wheel, `l` the auxiliary-wheel track, `r_l`/`r_r` the encoder
/// wheel radii and `d` the forward offset of the laser from the rotation
/// center. The two flags switch the encoder relations to their literal
/// printed forms (wheel speed `2*r*w`, angular rate `atan(dv/l)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleGeometry {
    pub h: f64,
    pub l: f64,
    pub r_l: f64,
    pub r_r: f64,
    pub d: f64,
    #[serde(default)]
    pub eq2_literal: bool,
    #[serde(default)]
    pub eq3_literal: bool,
}

impl Default for VehicleGeometry {
    /// Synthetic forklift-sized values; no dimensions were published for
    /// the original vehicle.
    fn default() -> Self {
        Self {
            h: 1.3,
            l: 0.8,
            r_l: 0.125,
            r_r: 0.125,
            d: 1.2,
            eq2_literal: false,
            eq3_literal: false,
        }
    }
}

impl VehicleGeometry {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let positive = [("h", self.h), ("l", self.l), ("r_l", self.r_l), ("r_r", self.r_r)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(KinematicsError::InvalidGeometry(name));
            }
        }
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(KinematicsError::InvalidGeometry("d"));
        }
        Ok(())
    }

    fn rim_factor(&self) -> f64 {
        if self.eq2_literal {
            2.0
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyTwist {
    /// m/s at the target rotation center.
    pub v: f64,
    /// rad/s, positive counterclockwise.
    pub w: f64,
}

impl BodyTwist {
    pub const fn new(v: f64, w: f64) -> Self {
        Self { v, w }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveCommand {
    /// Drive-wheel speed, m/s.
    pub v_d: f64,
    /// Steering angle, rad, strictly inside (-pi/2, pi/2).
    pub delta: f64,
}

/// Drive-unit relation: `v = v_d cos(delta)`, `|w| = v_d / h` with the
/// sign of the steering angle (left steer turns counterclockwise).
pub fn drive_to_twist(cmd: DriveCommand, geom: &VehicleGeometry) -> Result<BodyTwist, KinematicsError> {
    if !(cmd.delta.abs() < std::f64::consts::FRAC_PI_2) {
        return Err(KinematicsError::SteeringSingularity(cmd.delta));
    }
    let v = cmd.v_d * cmd.delta.cos();
    let w = if cmd.delta == 0.0 {
        0.0
    } else {
        cmd.delta.signum() * cmd.v_d / geom.h
    };
    Ok(BodyTwist { v, w })
}

/// Body twist from the two auxiliary-wheel encoder rates (rad/s).
pub fn encoders_to_twist(w_l: f64, w_r: f64, geom: &VehicleGeometry) -> BodyTwist {
    let k = geom.rim_factor();
    let v_l = w_l * k * geom.r_l;
    let v_r = w_r * k * geom.r_r;
    let v = 0.5 * (v_r + v_l);
    let ratio = (v_r - v_l) / geom.l;
    let w = if geom.eq3_literal { ratio.atan() } else { ratio };
    BodyTwist { v, w }
}

/// Wheel rates `(w_l, w_r)` that [`encoders_to_twist`] maps back to `twist`.
pub fn twist_to_encoders(twist: BodyTwist, geom: &VehicleGeometry) -> Result<(f64, f64), KinematicsError> {
    let spread = if geom.eq3_literal {
        if twist.w.abs() >= std::f64::consts::FRAC_PI_2 {
            return Err(KinematicsError::RateOutOfRange(twist.w));
        }
        twist.w.tan() * geom.l
    } else {
        twist.w * geom.l
    };
    let k = geom.rim_factor();
    let v_r = twist.v + 0.5 * spread;
    let v_l = twist.v - 0.5 * spread;
    Ok((v_l / (k * geom.r_l), v_r / (k * geom.r_r)))
}

/// One first-order step: the heading increment is applied before the
/// translation direction is taken.
pub fn integrate_pose(p: &Pose2D, twist: BodyTwist, dt: f64) -> Result<Pose2D, KinematicsError> {
    if !(dt > 0.0) {
        return Err(KinematicsError::NonPositiveDt(dt));
    }
    Ok(step_pose(p, twist.v * dt, twist.w * dt))
}

/// Unchecked form of [`integrate_pose`] taking the per-step increments.
#[inline]
pub(crate) fn step_pose(p: &Pose2D, dist: f64, dtheta: f64) -> Pose2D {
    let heading = p.theta + dtheta;
    Pose2D {
        x: p.x + dist * heading.cos(),
        y: p.y + dist * heading.sin(),
        theta: wrap_angle(heading),
    }
}

/// Laser pose to rotation-center pose; the laser sits `d` meters ahead of
/// the rotation center along the heading.
pub fn sensor_to_rotation_center(sensor_pose: &Pose2D, d: f64) -> Pose2D {
    sensor_pose.advance(-d)
}

pub fn rotation_center_to_sensor(center: &Pose2D, d: f64) -> Pose2D {
    center.advance(d)
}
