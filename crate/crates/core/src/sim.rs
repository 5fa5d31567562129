//! The per-frame pipeline shared by batch trials and the live service:
//! intention weights, command position, proxy, robot.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, SimConfig, UserState, Vec2, Voi};
use crate::intention::{command_position, compute_weights, CommandPosition, WeightVector};
use crate::proxy::{step_proxy, ObstacleState, ProxyState};
use crate::robot::{latch_estop, release_estop, speed_cap, step_robot_clear_of, RobotState};

/// Everything observable about one physics step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub user: UserState,
    pub weights: WeightVector,
    pub command: CommandPosition,
    pub obstacle: ObstacleState,
    pub proxy: ProxyState,
    pub robot: RobotState,
    /// Speed limit the robot was subject to during this step.
    pub speed_cap: f64,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    arena: Arena,
    vois: Vec<Voi>,
    config: SimConfig,
    static_obstacles: Vec<ObstacleState>,
    proxy: ProxyState,
    robot: RobotState,
    command: CommandPosition,
    weights: WeightVector,
    /// Last tracked user state; the planner never sees untracked poses.
    planner_user: Option<UserState>,
}

impl Simulation {
    /// Starts with the proxy resting on the robot.
    pub fn new(arena: Arena, vois: Vec<Voi>, config: SimConfig, robot_start: Vec2) -> Result<Self> {
        arena.validate("arena")?;
        config.validate("config")?;
        if vois.is_empty() {
            return Err(Error::NoVois);
        }
        for (i, v) in vois.iter().enumerate() {
            v.validate(&format!("vois[{i}]"), &arena)?;
        }
        if !arena.within_margins(robot_start, 0.0) {
            return Err(Error::validation("robot_start", "must lie inside the arena margins"));
        }
        Ok(Self {
            arena,
            vois,
            config,
            static_obstacles: Vec::new(),
            proxy: ProxyState::at_rest(robot_start),
            robot: RobotState::at_rest(robot_start),
            command: CommandPosition::at(robot_start),
            weights: WeightVector::default(),
            planner_user: None,
        })
    }

    /// Adds fixed forbidden zones (furniture, bystanders) next to the user obstacle.
    pub fn with_static_obstacles(mut self, obstacles: Vec<ObstacleState>) -> Self {
        self.static_obstacles = obstacles;
        self
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn vois(&self) -> &[Voi] {
        &self.vois
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn proxy(&self) -> &ProxyState {
        &self.proxy
    }

    pub fn robot(&self) -> &RobotState {
        &self.robot
    }

    pub fn command(&self) -> &CommandPosition {
        &self.command
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn set_omega(&mut self, omega: f64) -> Result<()> {
        let config = SimConfig {
            omega,
            ..self.config.clone()
        };
        config.validate("config")?;
        self.config = config;
        Ok(())
    }

    /// Replaces the object set after validating every entry.
    pub fn set_vois(&mut self, vois: Vec<Voi>) -> Result<()> {
        if vois.is_empty() {
            return Err(Error::NoVois);
        }
        for (i, v) in vois.iter().enumerate() {
            v.validate(&format!("vois[{i}]"), &self.arena)?;
        }
        let mut ids: Vec<&str> = vois.iter().map(|v| v.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::validation("vois", "ids must be unique"));
        }
        self.vois = vois;
        self.weights = WeightVector::default();
        Ok(())
    }

    pub fn latch_estop(&mut self) {
        self.robot = latch_estop(&self.robot);
    }

    pub fn release_estop(&mut self, tracking_valid: bool) {
        self.robot = release_estop(&self.robot, tracking_valid);
    }

    /// Advances one physics step with the user state observed this frame.
    pub fn step(&mut self, user: &UserState) -> Result<Frame> {
        if user.tracked {
            self.planner_user = Some(*user);
            self.weights = compute_weights(user, &self.vois, &self.config)?;
            self.command = command_position(&self.weights, &self.vois, &self.command, &self.arena)?;
        }
        let planner_user = self.planner_user.unwrap_or(*user);
        let obstacle = ObstacleState::around_user(&planner_user, &self.vois, &self.config);

        let mut obstacles = Vec::with_capacity(1 + self.static_obstacles.len());
        obstacles.push(obstacle);
        obstacles.extend_from_slice(&self.static_obstacles);
        self.proxy = step_proxy(&self.proxy, &self.command, &obstacles, &self.config, &self.arena);

        let cap = speed_cap(self.proxy.position.distance(self.robot.position));
        self.robot = step_robot_clear_of(&self.robot, &self.proxy, user, &obstacles, &self.arena, &self.config);

        Ok(Frame {
            user: *user,
            weights: self.weights.clone(),
            command: self.command,
            obstacle,
            proxy: self.proxy,
            robot: self.robot,
            speed_cap: cap,
        })
    }
}
