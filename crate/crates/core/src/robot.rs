//! Kinematic stand-in for the Cartesian ceiling robot carrying the column.

use serde::{Deserialize, Serialize};

use crate::geometry::{clamp_to_arena, Arena, SimConfig, UserState, Vec2};
use crate::proxy::{ObstacleState, ProxyState};

/// Margin kept from an obstacle rim when planning a detour.
const DETOUR_CLEARANCE: f64 = 0.02;

/// Top speed reached on long moves.
pub const SPEED_LONG: f64 = 1.1;
/// Speed on short moves.
pub const SPEED_SHORT: f64 = 0.5;
/// Remaining distance up to which moves are "short".
pub const SHORT_MOVE: f64 = 0.8;
/// Remaining distance from which moves are "long".
pub const LONG_MOVE: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotStatus {
    Active,
    HaltedTrackingLoss,
    HaltedEstop,
    HaltedRailLimit,
}

impl RobotStatus {
    pub fn is_halted(self) -> bool {
        self != RobotStatus::Active
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RobotStatus::Active => "active",
            RobotStatus::HaltedTrackingLoss => "halted_tracking_loss",
            RobotStatus::HaltedEstop => "halted_estop",
            RobotStatus::HaltedRailLimit => "halted_rail_limit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub status: RobotStatus,
    pub estop_latched: bool,
    /// Time of the most recent frame with valid tracking.
    pub last_tracked: Option<f64>,
}

impl RobotState {
    pub fn at_rest(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
            status: RobotStatus::Active,
            estop_latched: false,
            last_tracked: None,
        }
    }
}

/// Speed limit as a function of the remaining distance to the proxy.
pub fn speed_cap(remaining: f64) -> f64 {
    if remaining <= SHORT_MOVE {
        SPEED_SHORT
    } else if remaining >= LONG_MOVE {
        SPEED_LONG
    } else {
        let s = (remaining - SHORT_MOVE) / (LONG_MOVE - SHORT_MOVE);
        SPEED_SHORT + s * (SPEED_LONG - SPEED_SHORT)
    }
}

pub fn latch_estop(robot: &RobotState) -> RobotState {
    RobotState {
        velocity: Vec2::ZERO,
        status: RobotStatus::HaltedEstop,
        estop_latched: true,
        ..*robot
    }
}

/// Releases a latched e-stop. Without valid tracking the robot stays halted,
/// now for tracking loss.
pub fn release_estop(robot: &RobotState, tracking_valid: bool) -> RobotState {
    RobotState {
        estop_latched: false,
        status: if tracking_valid {
            RobotStatus::Active
        } else {
            RobotStatus::HaltedTrackingLoss
        },
        ..*robot
    }
}

pub fn step_robot(
    robot: &RobotState,
    proxy: &ProxyState,
    user: &UserState,
    arena: &Arena,
    config: &SimConfig,
) -> RobotState {
    step_robot_clear_of(robot, proxy, user, &[], arena, config)
}

/// Keeps the step out of every obstacle: the inward velocity component is
/// dropped when the step would enter one, and a robot already inside backs out.
fn steer_clear(position: Vec2, velocity: Vec2, obstacles: &[ObstacleState], dt: f64, cap: f64) -> Vec2 {
    let mut v = velocity;
    for o in obstacles {
        let offset = position - o.center;
        let dist = offset.norm();
        let n = if dist > 1e-9 {
            offset / dist
        } else {
            Vec2::new(1.0, 0.0)
        };
        if dist < o.radius {
            return n * cap;
        }
        let inward = v.dot(n);
        if inward < 0.0 && (position + v * dt).distance(o.center) < o.radius {
            v = v - n * inward;
        }
    }
    v
}

/// Turns `desired` towards the tangent of the first obstacle blocking the
/// straight line to `goal`, keeping its magnitude.
fn detour(position: Vec2, goal: Vec2, desired: Vec2, obstacles: &[ObstacleState]) -> Vec2 {
    let speed = desired.norm();
    let seg = goal - position;
    let len = seg.norm();
    if speed == 0.0 || len < 1e-9 {
        return desired;
    }
    for o in obstacles {
        let to_c = o.center - position;
        let d = to_c.norm();
        let r = o.radius + DETOUR_CLEARANCE;
        if d <= 1e-9 || o.center.distance(goal) < r {
            continue;
        }
        let along = (to_c.dot(seg) / len).clamp(0.0, len);
        let closest = position + seg / len * along;
        if closest.distance(o.center) >= r {
            continue;
        }
        let alpha = if d > r {
            (r / d).asin()
        } else {
            std::f64::consts::FRAC_PI_2
        };
        let cross = to_c.x * seg.y - to_c.y * seg.x;
        let side = if cross >= 0.0 { 1.0 } else { -1.0 };
        let base = to_c.angle() + side * alpha;
        return Vec2::from_angle(base) * speed;
    }
    desired
}

/// Pursuit as in [`step_robot`], additionally steering around `obstacles`.
pub fn step_robot_clear_of(
    robot: &RobotState,
    proxy: &ProxyState,
    user: &UserState,
    obstacles: &[ObstacleState],
    arena: &Arena,
    config: &SimConfig,
) -> RobotState {
    let mut next = *robot;
    let last_tracked = if user.tracked {
        user.time
    } else {
        robot.last_tracked.unwrap_or(user.time)
    };
    next.last_tracked = Some(last_tracked);

    if robot.estop_latched {
        next.velocity = Vec2::ZERO;
        next.status = RobotStatus::HaltedEstop;
        return next;
    }
    if !user.tracked && user.time - last_tracked > config.tracking_loss_timeout {
        next.velocity = Vec2::ZERO;
        next.status = RobotStatus::HaltedTrackingLoss;
        return next;
    }
    if robot.status == RobotStatus::HaltedTrackingLoss && !user.tracked {
        // stay down until tracking comes back
        next.velocity = Vec2::ZERO;
        return next;
    }

    let dt = config.dt;
    let gap = proxy.position - robot.position;
    let dist = gap.norm();
    let cap = speed_cap(dist);
    // match the proxy's motion and close the gap no faster than we can brake
    let braking = (2.0 * config.accel_limit * dist).sqrt();
    let desired = (proxy.velocity + (gap / dt).clamp_norm(braking)).clamp_norm(cap);
    let desired = detour(robot.position, proxy.position, desired, obstacles);
    let dv = (desired - robot.velocity).clamp_norm(config.accel_limit * dt);
    let velocity = steer_clear(
        robot.position,
        (robot.velocity + dv).clamp_norm(cap),
        obstacles,
        dt,
        cap,
    );
    let target = robot.position + velocity * dt;
    let clamped = clamp_to_arena(target, arena);

    if clamped != target {
        let outward = (target - clamped).dot(velocity) > 0.0;
        next.position = clamped;
        next.velocity = Vec2::ZERO;
        next.status = if outward {
            RobotStatus::HaltedRailLimit
        } else {
            RobotStatus::Active
        };
    } else {
        next.position = target;
        next.velocity = velocity;
        next.status = RobotStatus::Active;
    }
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn user(t: f64, tracked: bool) -> UserState {
        UserState {
            pose: Pose::new(Vec2::new(0.5, 0.5), 0.0),
            tracked,
            time: t,
        }
    }

    #[test]
    fn speed_cap_examples() {
        assert_eq!(speed_cap(2.0), 1.1);
        assert_eq!(speed_cap(0.5), 0.5);
        assert!((speed_cap(0.9) - 0.8).abs() < 1e-12);
        assert_eq!(speed_cap(0.0), 0.5);
    }

    #[test]
    fn robot_at_proxy_stays_put() {
        let cfg = SimConfig::default();
        let r = RobotState::at_rest(Vec2::new(2.0, 2.0));
        let next = step_robot(
            &r,
            &ProxyState::at_rest(r.position),
            &user(0.0, true),
            &Arena::default(),
            &cfg,
        );
        assert_eq!(next.position, r.position);
        assert_eq!(next.velocity, Vec2::ZERO);
        assert_eq!(next.status, RobotStatus::Active);
    }

    #[test]
    fn tracking_loss_halts_after_timeout() {
        let cfg = SimConfig::default();
        let arena = Arena::default();
        let proxy = ProxyState::at_rest(Vec2::new(3.0, 3.0));
        let mut r = RobotState::at_rest(Vec2::new(1.0, 1.0));
        let mut halted_at = None;
        for k in 0..120 {
            let t = k as f64 * cfg.dt;
            let u = user(t, k < 10);
            r = step_robot(&r, &proxy, &u, &arena, &cfg);
            if r.status == RobotStatus::HaltedTrackingLoss && halted_at.is_none() {
                halted_at = Some(t);
                assert_eq!(r.velocity, Vec2::ZERO);
            }
        }
        let lost_after = 9.0 * cfg.dt;
        let halted_at = halted_at.expect("robot never halted");
        assert!(halted_at - lost_after > cfg.tracking_loss_timeout);
        assert!(halted_at - lost_after <= cfg.tracking_loss_timeout + cfg.dt + 1e-9);
    }

    #[test]
    fn estop_latch_and_release() {
        let r = RobotState::at_rest(Vec2::new(1.0, 1.0));
        let latched = latch_estop(&r);
        assert_eq!(latched.status, RobotStatus::HaltedEstop);
        assert_eq!(release_estop(&latched, true).status, RobotStatus::Active);
        assert_eq!(release_estop(&latched, false).status, RobotStatus::HaltedTrackingLoss);

        let cfg = SimConfig::default();
        let proxy = ProxyState::at_rest(Vec2::new(3.0, 3.0));
        let stepped = step_robot(&latched, &proxy, &user(0.0, true), &Arena::default(), &cfg);
        assert_eq!(stepped.position, latched.position);
        assert_eq!(stepped.status, RobotStatus::HaltedEstop);
    }

    #[test]
    fn tracking_halt_clears_when_tracking_returns() {
        let cfg = SimConfig::default();
        let arena = Arena::default();
        let proxy = ProxyState::at_rest(Vec2::new(3.0, 3.0));
        let mut r = RobotState::at_rest(Vec2::new(1.0, 1.0));
        r.last_tracked = Some(0.0);
        r = step_robot(&r, &proxy, &user(0.6, false), &arena, &cfg);
        assert_eq!(r.status, RobotStatus::HaltedTrackingLoss);
        let frozen = r.position;
        r = step_robot(&r, &proxy, &user(0.7, false), &arena, &cfg);
        assert_eq!(r.position, frozen);
        r = step_robot(&r, &proxy, &user(0.8, true), &arena, &cfg);
        assert_eq!(r.status, RobotStatus::Active);
    }

    #[test]
    fn rail_limit_stops_outward_motion() {
        let cfg = SimConfig::default();
        let arena = Arena::default();
        let mut r = RobotState::at_rest(Vec2::new(0.021, 2.0));
        r.velocity = Vec2::new(-0.5, 0.0);
        let next = step_robot(
            &r,
            &ProxyState::at_rest(Vec2::new(0.02, 2.0)),
            &user(0.0, true),
            &arena,
            &cfg,
        );
        assert_eq!(next.status, RobotStatus::HaltedRailLimit);
        assert_eq!(next.velocity, Vec2::ZERO);
        assert!(arena.within_margins(next.position, 0.0));
    }
}
