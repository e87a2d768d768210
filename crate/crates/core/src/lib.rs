//! Reflector-based localization of a laser-guided forklift: a laser
//! triangulation baseline, a particle filter fusing odometry with reflector
//! detections, and the simulator and metrics used to compare them.

pub mod cli;
pub mod config;
pub mod eval;
pub mod experiment;
pub mod io;
pub mod kinematics;
pub mod lasernav;
pub mod pf;
pub mod sim;
pub mod world;
