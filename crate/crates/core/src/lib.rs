//! Deterministic 2D simulator for encountered-type haptic trajectory generation.
//!
//! A tracked user walks among virtual objects of interest. Each frame the
//! simulator estimates which object the user intends to touch, moves a
//! spring-damper proxy towards the weighted centroid while keeping it out of
//! the user's personal space, and drives a speed-capped Cartesian robot after
//! the proxy.

pub mod error;
pub mod geometry;
pub mod intention;
pub mod io;
pub mod proxy;
pub mod robot;
pub mod sim;
pub mod stats;
pub mod sweep;
pub mod trial;
pub mod walker;

pub use error::{Error, Result};
pub use geometry::{Arena, Pose, SimConfig, UserState, Vec2, Voi, VoiId};
pub use intention::{command_position, compute_weights, CommandPosition, WeightVector};
pub use proxy::{step_proxy, ObstacleState, ProxyState};
pub use robot::{speed_cap, step_robot, RobotState, RobotStatus};
pub use sim::{Frame, Simulation};
pub use sweep::{run_sweep, SweepOutcome, SweepPlan, SweepSummary};
pub use trial::{generate_trial, run_trial, RunOptions, TrialResult, TrialSpec, UserSource};
