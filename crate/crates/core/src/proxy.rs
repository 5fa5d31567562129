//! The virtual proxy: a point mass pulled toward the command position by a
//! spring-damper, pushed away from the user by a repulsion ramp, and kept
//! outside the user's obstacle circle by hard projection.

use serde::{Deserialize, Serialize};

use crate::geometry::{clamp_to_arena, Arena, SimConfig, UserState, Vec2, Voi};
use crate::intention::CommandPosition;

/// Below this distance to the obstacle center the outward direction is undefined.
const DIRECTION_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxyState {
    pub position: Vec2,
    pub velocity: Vec2,
}

impl ProxyState {
    pub fn at_rest(position: Vec2) -> Self {
        Self {
            position,
            velocity: Vec2::ZERO,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstacleState {
    pub center: Vec2,
    pub radius: f64,
    pub influence_band: f64,
}

impl ObstacleState {
    /// The user's obstacle for this frame.
    ///
    /// The repulsion band shrinks together with the radius and vanishes at the
    /// near radius, so a user standing at an object leaves the proxy on it.
    pub fn around_user(user: &UserState, vois: &[Voi], config: &SimConfig) -> Self {
        let radius = obstacle_radius(user, vois, config);
        let nearest = nearest_surface(user, vois);
        let fade = ((nearest - config.near_voi_distance) / config.band_fade).clamp(0.0, 1.0);
        let band = config.influence_band * fade;
        Self {
            center: user.pose.position,
            radius,
            influence_band: band,
        }
    }

    pub fn penetration(&self, p: Vec2) -> f64 {
        self.radius - p.distance(self.center)
    }

    fn outward(&self, p: Vec2) -> (Vec2, f64) {
        let offset = p - self.center;
        let dist = offset.norm();
        if dist < DIRECTION_EPS {
            (Vec2::new(1.0, 0.0), dist)
        } else {
            (offset / dist, dist)
        }
    }
}

fn nearest_surface(user: &UserState, vois: &[Voi]) -> f64 {
    vois.iter()
        .map(|v| v.surface_distance(user.pose.position))
        .fold(f64::INFINITY, f64::min)
}

/// Obstacle radius for the user's current distance to the nearest object.
pub fn obstacle_radius(user: &UserState, vois: &[Voi], config: &SimConfig) -> f64 {
    let nearest = nearest_surface(user, vois);
    let (near, far) = (config.obstacle_radius_near, config.obstacle_radius_far);
    if nearest <= config.near_voi_distance {
        near
    } else if nearest >= config.near_voi_distance + config.near_ramp {
        far
    } else {
        let s = (nearest - config.near_voi_distance) / config.near_ramp;
        near + s * (far - near)
    }
}

pub fn spring_force(proxy: &ProxyState, command: &CommandPosition, config: &SimConfig) -> Vec2 {
    (command.target - proxy.position) * config.spring_stiffness - proxy.velocity * config.spring_damping
}

/// Radial push of magnitude `k_obs · s²`, where `s` ramps from 0 at the outer
/// edge of the influence band to 1 at the obstacle radius.
pub fn obstacle_force(proxy: &ProxyState, obstacle: &ObstacleState, k_obs: f64) -> Vec2 {
    let (dir, dist) = obstacle.outward(proxy.position);
    let outer = obstacle.radius + obstacle.influence_band;
    if dist >= outer {
        return Vec2::ZERO;
    }
    let s = if obstacle.influence_band > 0.0 {
        ((outer - dist) / obstacle.influence_band).clamp(0.0, 1.0)
    } else {
        1.0
    };
    dir * (k_obs * s * s)
}

/// One semi-implicit Euler step followed by obstacle projection and the arena clamp.
pub fn step_proxy(
    proxy: &ProxyState,
    command: &CommandPosition,
    obstacles: &[ObstacleState],
    config: &SimConfig,
    arena: &Arena,
) -> ProxyState {
    step_proxy_dt(proxy, command, obstacles, config, arena, config.dt)
}

pub(crate) fn step_proxy_dt(
    proxy: &ProxyState,
    command: &CommandPosition,
    obstacles: &[ObstacleState],
    config: &SimConfig,
    arena: &Arena,
    dt: f64,
) -> ProxyState {
    let mut force = spring_force(proxy, command, config);
    for obstacle in obstacles {
        force += obstacle_force(proxy, obstacle, config.obstacle_stiffness);
    }
    let mut velocity = proxy.velocity + force * (dt / config.proxy_mass);
    let mut position = proxy.position + velocity * dt;

    for obstacle in obstacles {
        let (n, dist) = obstacle.outward(position);
        if dist < obstacle.radius {
            position = obstacle.center + n * obstacle.radius;
            let vn = velocity.dot(n);
            if vn < 0.0 {
                velocity -= n * vn;
            }
        }
    }

    let clamped = clamp_to_arena(position, arena);
    if clamped.x != position.x {
        velocity.x = 0.0;
    }
    if clamped.y != position.y {
        velocity.y = 0.0;
    }
    position = clamped;

    // The clamp can push the proxy back under an obstacle pressed against a
    // wall; slide it along the margin line to the circle's edge instead.
    for obstacle in obstacles {
        if obstacle.penetration(position) > 0.0 {
            if let Some(p) = wall_exit(position, obstacle, arena) {
                position = p;
                velocity = Vec2::ZERO;
            }
        }
    }

    ProxyState { position, velocity }
}

/// Nearest point to `p` that lies on the obstacle circle and inside the arena margins.
fn wall_exit(p: Vec2, obstacle: &ObstacleState, arena: &Arena) -> Option<Vec2> {
    let m = arena.safety_margin;
    let (c, r) = (obstacle.center, obstacle.radius);
    let mut candidates = Vec::with_capacity(8);
    for x in [m, arena.width - m] {
        let h = r * r - (x - c.x).powi(2);
        if h >= 0.0 {
            let h = h.sqrt();
            candidates.push(Vec2::new(x, c.y + h));
            candidates.push(Vec2::new(x, c.y - h));
        }
    }
    for y in [m, arena.length - m] {
        let h = r * r - (y - c.y).powi(2);
        if h >= 0.0 {
            let h = h.sqrt();
            candidates.push(Vec2::new(c.x + h, y));
            candidates.push(Vec2::new(c.x - h, y));
        }
    }
    candidates
        .into_iter()
        .filter(|q| arena.within_margins(*q, 1e-12))
        .min_by(|a, b| a.distance(p).total_cmp(&b.distance(p)))
        .map(|q| {
            // round-off can leave the point a hair inside the circle
            let (n, dist) = obstacle.outward(q);
            if dist < r {
                clamp_to_arena(c + n * r, arena)
            } else {
                q
            }
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    fn user_at(x: f64, y: f64) -> UserState {
        UserState::tracked(Pose::new(Vec2::new(x, y), 0.0), 0.0)
    }

    #[test]
    fn obstacle_radius_examples() {
        let c = cfg();
        let vois = [Voi::new("a", Vec2::new(2.0, 2.0), 0.05)];
        assert_eq!(obstacle_radius(&user_at(2.0, 0.0), &vois, &c), 0.45);
        assert_eq!(obstacle_radius(&user_at(2.0, 1.95), &vois, &c), 0.20);
        let r = obstacle_radius(&user_at(2.0, 1.70), &vois, &c);
        assert!((r - 0.325).abs() < 1e-12, "{r}");
    }

    #[test]
    fn spring_force_examples() {
        let c = cfg();
        let cmd = CommandPosition::at(Vec2::new(1.0, 1.0));
        let f = spring_force(&ProxyState::at_rest(Vec2::new(1.0, 1.0)), &cmd, &c);
        assert_eq!(f, Vec2::ZERO);
        let f = spring_force(&ProxyState::at_rest(Vec2::new(0.0, 1.0)), &cmd, &c);
        assert_eq!(f, Vec2::new(40.0, 0.0));
        let c12 = SimConfig {
            spring_damping: 12.0,
            ..cfg()
        };
        let moving = ProxyState {
            position: Vec2::new(1.0, 1.0),
            velocity: Vec2::new(1.0, 0.0),
        };
        assert_eq!(spring_force(&moving, &cmd, &c12), Vec2::new(-12.0, 0.0));
    }

    #[test]
    fn obstacle_force_examples() {
        let obstacle = ObstacleState {
            center: Vec2::ZERO,
            radius: 0.45,
            influence_band: 0.30,
        };
        let far = ProxyState::at_rest(Vec2::new(2.0, 0.0));
        assert_eq!(obstacle_force(&far, &obstacle, 120.0), Vec2::ZERO);
        let edge = ProxyState::at_rest(Vec2::new(0.75, 0.0));
        assert_eq!(obstacle_force(&edge, &obstacle, 120.0), Vec2::ZERO);
        let touching = ProxyState::at_rest(Vec2::new(0.0, 0.45));
        let f = obstacle_force(&touching, &obstacle, 120.0);
        assert!((f - Vec2::new(0.0, 120.0)).norm() < 1e-9);
        let centered = ProxyState::at_rest(Vec2::ZERO);
        assert_eq!(obstacle_force(&centered, &obstacle, 120.0), Vec2::new(120.0, 0.0));
    }

    #[test]
    fn band_vanishes_at_near_radius() {
        let c = cfg();
        let vois = [Voi::new("a", Vec2::new(2.0, 2.0), 0.05)];
        let near = ObstacleState::around_user(&user_at(2.0, 1.8), &vois, &c);
        assert_eq!(near.radius, 0.20);
        assert_eq!(near.influence_band, 0.0);
        let far = ObstacleState::around_user(&user_at(0.5, 0.5), &vois, &c);
        assert_eq!(far.influence_band, 0.30);
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let c = cfg();
        let arena = Arena::default();
        let p = ProxyState::at_rest(Vec2::new(1.0, 1.0));
        let obstacle = ObstacleState {
            center: Vec2::new(3.0, 3.0),
            radius: 0.45,
            influence_band: 0.3,
        };
        let next = step_proxy(&p, &CommandPosition::at(p.position), &[obstacle], &c, &arena);
        assert_eq!(next, p);
    }

    #[test]
    fn projection_removes_inward_velocity() {
        let c = cfg();
        let arena = Arena::default();
        let obstacle = ObstacleState {
            center: Vec2::new(2.0, 2.0),
            radius: 0.45,
            influence_band: 0.0,
        };
        let p = ProxyState {
            position: Vec2::new(2.46, 2.0),
            velocity: Vec2::new(-3.0, 0.5),
        };
        let next = step_proxy(&p, &CommandPosition::at(Vec2::new(1.0, 2.0)), &[obstacle], &c, &arena);
        assert!(obstacle.penetration(next.position) <= 1e-12);
        let normal = (next.position - obstacle.center) / next.position.distance(obstacle.center);
        assert!(next.velocity.dot(normal) >= -1e-12);
    }

    #[test]
    fn wall_squeeze_keeps_proxy_outside() {
        let c = cfg();
        let arena = Arena::default();
        let obstacle = ObstacleState {
            center: Vec2::new(0.1, 2.0),
            radius: 0.45,
            influence_band: 0.0,
        };
        let p = ProxyState {
            position: Vec2::new(0.05, 2.3),
            velocity: Vec2::new(-1.0, 0.0),
        };
        let next = step_proxy(&p, &CommandPosition::at(Vec2::new(0.02, 2.0)), &[obstacle], &c, &arena);
        assert!(obstacle.penetration(next.position) <= 1e-9);
        assert!(arena.within_margins(next.position, 0.0));
    }
}
