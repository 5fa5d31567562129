//! Single-trial generation, execution and metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, Pose, SimConfig, UserState, Vec2, Voi};
use crate::io::TraceFrame;
use crate::robot::RobotStatus;
use crate::sim::{Frame, Simulation};
use crate::walker::{Walker, WalkerParams};

pub const BALL_RADIUS: f64 = 0.05;
/// Minimum center separation between two balls (one diameter).
pub const MIN_BALL_SPACING: f64 = 2.0 * BALL_RADIUS;
/// No ball may spawn this close to the user.
pub const USER_EXCLUSION: f64 = 0.30;
/// Balls spawn at least this far from the arena walls.
pub const SPAWN_INSET: f64 = 0.30;
/// Trials are chained: the robot is still parked by the previously touched
/// ball, just outside the user obstacle, at a distance in this range.
pub const ROBOT_START_RANGE: (f64, f64) = (0.50, 0.80);
pub const MAX_DISTRACTORS: usize = 4;
pub const MAX_REJECTIONS: usize = 10_000;

/// Tolerances used when auditing trial invariants.
pub const PENETRATION_TOL: f64 = 1e-9;
pub const SPEED_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub seed: u64,
    pub n_distractors: usize,
    /// The first entry is the designated target.
    pub vois: Vec<Voi>,
    pub user_start: Pose,
    pub robot_start: Vec2,
    pub arena: Arena,
}

impl TrialSpec {
    pub fn target(&self) -> &Voi {
        &self.vois[0]
    }

    /// Gives the target `target_prior` and splits the rest evenly over the distractors.
    pub fn with_target_prior(mut self, target_prior: f64) -> Self {
        let n = self.vois.len();
        for (i, voi) in self.vois.iter_mut().enumerate() {
            voi.prior = if i == 0 {
                target_prior
            } else {
                (1.0 - target_prior) / (n - 1) as f64
            };
        }
        self
    }
}

fn uniform_in(rng: &mut ChaCha8Rng, arena: &Arena, inset: f64) -> Vec2 {
    Vec2::new(
        rng.random_range(inset..arena.width - inset),
        rng.random_range(inset..arena.length - inset),
    )
}

/// Random user start used by sweeps: somewhere in the arena, facing anywhere.
pub fn random_user_start(seed: u64, arena: &Arena) -> Pose {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_05e7_u64);
    let p = uniform_in(&mut rng, arena, 0.5);
    Pose::new(p, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI))
}

/// Rejection-samples a target plus `n_distractors` balls around a given user start.
pub fn generate_trial(seed: u64, n_distractors: usize, arena: &Arena, user_start: Pose) -> Result<TrialSpec> {
    if n_distractors > MAX_DISTRACTORS {
        return Err(Error::OutOfRange {
            name: "n_distractors",
            value: n_distractors as f64,
            expected: "0..=4",
        });
    }
    arena.validate("arena")?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec2> = Vec::with_capacity(n_distractors + 1);
    let mut attempts = 0;
    while centers.len() <= n_distractors {
        attempts += 1;
        if attempts > MAX_REJECTIONS {
            return Err(Error::Generation {
                attempts: MAX_REJECTIONS,
            });
        }
        let c = uniform_in(&mut rng, arena, SPAWN_INSET);
        if c.distance(user_start.position) < USER_EXCLUSION + BALL_RADIUS {
            continue;
        }
        if centers.iter().any(|o| o.distance(c) < MIN_BALL_SPACING) {
            continue;
        }
        centers.push(c);
    }
    let robot_start = loop {
        attempts += 1;
        if attempts > MAX_REJECTIONS {
            return Err(Error::Generation {
                attempts: MAX_REJECTIONS,
            });
        }
        let r = rng.random_range(ROBOT_START_RANGE.0..ROBOT_START_RANGE.1);
        let a = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        let c = user_start.position + Vec2::from_angle(a) * r;
        if arena.within_margins(c, 0.0) && centers.iter().all(|v| v.distance(c) >= MIN_BALL_SPACING) {
            break c;
        }
    };
    let vois = centers
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let id = if i == 0 { "target".to_string() } else { format!("d{i}") };
            Voi::new(id, c, BALL_RADIUS)
        })
        .collect();
    Ok(TrialSpec {
        seed,
        n_distractors,
        vois,
        user_start,
        robot_start,
        arena: *arena,
    })
}

/// Where the user states of a trial come from.
#[derive(Debug, Clone)]
pub enum UserSource<'a> {
    Walker { params: WalkerParams, seed: u64 },
    Trace(&'a [TraceFrame]),
}

/// Per-trial audit of the safety invariants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetyReport {
    /// Largest depth of the proxy inside the user obstacle after projection.
    pub max_proxy_penetration: f64,
    /// Largest depth of the robot inside the user obstacle.
    pub max_robot_intrusion: f64,
    pub speed_cap_violations: usize,
    pub margin_violations: usize,
    /// Untracked stretches longer than the timeout.
    pub tracking_losses: usize,
    /// Frames past `timeout + dt` of tracking loss where the robot was still active.
    pub tracking_halt_violations: usize,
}

impl SafetyReport {
    pub fn merge(&mut self, other: &SafetyReport) {
        self.max_proxy_penetration = self.max_proxy_penetration.max(other.max_proxy_penetration);
        self.max_robot_intrusion = self.max_robot_intrusion.max(other.max_robot_intrusion);
        self.speed_cap_violations += other.speed_cap_violations;
        self.margin_violations += other.margin_violations;
        self.tracking_losses += other.tracking_losses;
        self.tracking_halt_violations += other.tracking_halt_violations;
    }

    pub fn is_clean(&self) -> bool {
        self.max_proxy_penetration <= PENETRATION_TOL
            && self.speed_cap_violations == 0
            && self.margin_violations == 0
            && self.tracking_halt_violations == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub success: bool,
    /// Robot-to-target distance when the user touched an object; absent on timeout.
    pub distance_at_contact: Option<f64>,
    /// Time from the target's weight first snapping to 1 until contact.
    pub detection_time: Option<f64>,
    /// Smallest user–proxy distance relative to the obstacle, i.e. at the frame minimizing `distance − radius`.
    pub min_user_proxy_clearance: f64,
    /// Obstacle radius at that frame.
    pub clearance_radius: f64,
    pub collision: bool,
    pub duration: f64,
    pub contacted: Option<String>,
    pub mean_proxy_robot_distance: f64,
    /// Mean robot–proxy distance over the last second before contact.
    pub final_second_tracking_error: Option<f64>,
    pub safety: SafetyReport,
    #[serde(skip)]
    pub frames: Vec<TraceFrame>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub record_frames: bool,
    /// Treat only the first object as contactable (walker trials). Otherwise any object ends the trial.
    pub designated_target: bool,
}

struct Auditor {
    safety: SafetyReport,
    min_margin: f64,
    clearance: (f64, f64),
    last_tracked: Option<f64>,
    counted_loss: bool,
    tracking_sum: f64,
    frames: usize,
}

impl Auditor {
    fn new() -> Self {
        Self {
            safety: SafetyReport::default(),
            min_margin: f64::INFINITY,
            clearance: (f64::INFINITY, 0.0),
            last_tracked: None,
            counted_loss: false,
            tracking_sum: 0.0,
            frames: 0,
        }
    }

    fn observe(&mut self, frame: &Frame, arena: &Arena, config: &SimConfig) {
        let obstacle = &frame.obstacle;
        let dist = frame.proxy.position.distance(obstacle.center);
        let margin = dist - obstacle.radius;
        if margin < self.min_margin {
            self.min_margin = margin;
            self.clearance = (dist, obstacle.radius);
        }
        let s = &mut self.safety;
        s.max_proxy_penetration = s.max_proxy_penetration.max(-margin);
        s.max_robot_intrusion = s.max_robot_intrusion.max(obstacle.penetration(frame.robot.position));

        let robot = &frame.robot;
        if robot.status == RobotStatus::Active && robot.velocity.norm() > frame.speed_cap + SPEED_TOL {
            s.speed_cap_violations += 1;
        }
        if !arena.within_margins(robot.position, 1e-12) || !arena.within_margins(frame.proxy.position, 1e-12) {
            s.margin_violations += 1;
        }

        let user = &frame.user;
        if user.tracked {
            self.last_tracked = Some(user.time);
            self.counted_loss = false;
        } else {
            let since = self.last_tracked.unwrap_or(user.time);
            let lost_for = user.time - since;
            if lost_for > config.tracking_loss_timeout && !self.counted_loss {
                s.tracking_losses += 1;
                self.counted_loss = true;
            }
            let halted = matches!(robot.status, RobotStatus::HaltedTrackingLoss | RobotStatus::HaltedEstop)
                && robot.velocity == Vec2::ZERO;
            if lost_for > config.tracking_loss_timeout + config.dt + 1e-9 && !halted {
                s.tracking_halt_violations += 1;
            }
        }

        self.tracking_sum += frame.proxy.position.distance(robot.position);
        self.frames += 1;
    }
}

/// Runs intention → proxy → robot each frame until contact, trace end or timeout.
pub fn run_trial(
    spec: &TrialSpec,
    source: UserSource<'_>,
    config: &SimConfig,
    options: RunOptions,
) -> Result<TrialResult> {
    let mut sim = Simulation::new(spec.arena, spec.vois.clone(), config.clone(), spec.robot_start)?;
    let mut walker = match &source {
        UserSource::Walker { params, seed } => {
            params.validate("walker")?;
            Some(Walker::new(
                spec,
                params.clone(),
                *seed,
                config.dt,
                config.contact_distance,
            ))
        }
        UserSource::Trace(_) => None,
    };
    let trace = match &source {
        UserSource::Trace(frames) => *frames,
        UserSource::Walker { .. } => &[],
    };
    let max_frames = match walker {
        Some(_) => (config.trial_timeout / config.dt).ceil() as usize,
        None => trace.len().min((config.trial_timeout / config.dt).ceil() as usize),
    };

    let mut audit = Auditor::new();
    let mut recorded = Vec::new();
    let mut history: Vec<(f64, f64)> = Vec::new();
    let mut first_sticky: Vec<Option<f64>> = vec![None; spec.vois.len()];
    let mut contact: Option<(usize, f64)> = None;
    let mut estop = false;
    let mut t = 0.0;

    for k in 0..max_frames {
        let user = match walker.as_mut() {
            Some(w) => w.step(spec, k as f64 * config.dt),
            None => {
                let f = &trace[k];
                let want = f.estop.unwrap_or(false);
                if want && !estop {
                    sim.latch_estop();
                } else if !want && estop {
                    sim.release_estop(f.user.tracked);
                }
                estop = want;
                f.user
            }
        };
        t = user.time;
        let frame = sim.step(&user)?;
        audit.observe(&frame, &spec.arena, config);
        history.push((t, frame.proxy.position.distance(frame.robot.position)));

        for (slot, e) in first_sticky.iter_mut().zip(&frame.weights.entries) {
            if slot.is_none() && e.sticky >= 1.0 {
                *slot = Some(t);
            }
        }
        if options.record_frames {
            recorded.push(TraceFrame::from_frame(&frame, estop));
        }

        let touched = if options.designated_target {
            (spec.target().surface_distance(user.pose.position) <= config.contact_distance).then_some(0)
        } else {
            spec.vois
                .iter()
                .position(|v| v.surface_distance(user.pose.position) <= config.contact_distance)
        };
        if let Some(i) = touched {
            let target = &sim.vois()[i];
            contact = Some((i, frame.robot.position.distance(target.physical_position())));
            break;
        }
    }

    let (success, distance_at_contact, contacted, detection_time, final_second) = match contact {
        Some((i, d)) => {
            let window: Vec<f64> = history
                .iter()
                .filter(|(ft, _)| *ft >= t - 1.0 - 1e-9)
                .map(|(_, d)| *d)
                .collect();
            let final_second = (!window.is_empty()).then(|| window.iter().sum::<f64>() / window.len() as f64);
            (
                d <= config.success_distance,
                Some(d),
                Some(spec.vois[i].id.clone()),
                first_sticky[i].map(|ts| t - ts),
                final_second,
            )
        }
        None => (false, None, None, None, None),
    };

    let (clearance, radius) = audit.clearance;
    Ok(TrialResult {
        success,
        distance_at_contact,
        detection_time,
        min_user_proxy_clearance: clearance,
        clearance_radius: radius,
        collision: audit.min_margin < -PENETRATION_TOL,
        duration: t,
        contacted,
        mean_proxy_robot_distance: if audit.frames > 0 {
            audit.tracking_sum / audit.frames as f64
        } else {
            0.0
        },
        final_second_tracking_error: final_second,
        safety: audit.safety,
        frames: recorded,
    })
}

/// Convenience for callers holding a plain user state sequence.
pub fn frames_from_users(users: &[UserState]) -> Vec<TraceFrame> {
    users.iter().map(|u| TraceFrame::from_user(*u)).collect()
}
