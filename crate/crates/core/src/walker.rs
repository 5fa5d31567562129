//! Synthetic participant used in place of recorded head-tracking traces.
//!
//! A walker first stands and looks around the scene, then turns toward its
//! target and walks there, slowing down on the final approach. Heading carries
//! smooth noise, and some personas glance at other objects on the way.

use std::f64::consts::{FRAC_PI_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose, UserState, Vec2};
use crate::trial::TrialSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WalkerParams {
    pub walk_speed: f64,
    pub decision_delay_min: f64,
    pub decision_delay_max: f64,
    /// Head turn rate, rad/s.
    pub turn_rate: f64,
    /// Stationary standard deviation of the heading noise, rad.
    pub gaze_noise: f64,
    /// Correlation time of the heading noise, s.
    pub gaze_noise_tau: f64,
    /// How long each object is looked at while scanning.
    pub look_dwell: f64,
    /// Time constant of the arrival slowdown.
    pub approach_tau: f64,
    /// Glances at other objects per second while walking.
    pub glance_rate: f64,
    pub glance_duration: f64,
    /// No glances once the target surface is closer than this.
    pub glance_cutoff: f64,
    /// Tracking dropout during the scan, as (start, duration) in seconds.
    pub dropout: Option<(f64, f64)>,
}

impl Default for WalkerParams {
    fn default() -> Self {
        Self {
            walk_speed: 0.7,
            decision_delay_min: 2.5,
            decision_delay_max: 5.0,
            turn_rate: PI,
            gaze_noise: 0.1,
            gaze_noise_tau: 0.3,
            look_dwell: 0.6,
            approach_tau: 0.5,
            glance_rate: 0.0,
            glance_duration: 0.5,
            glance_cutoff: 0.6,
            dropout: None,
        }
    }
}

impl WalkerParams {
    pub fn validate(&self, path: &str) -> Result<()> {
        let positive = [
            ("walk_speed", self.walk_speed),
            ("decision_delay_min", self.decision_delay_min),
            ("decision_delay_max", self.decision_delay_max),
            ("turn_rate", self.turn_rate),
            ("gaze_noise", self.gaze_noise),
            ("gaze_noise_tau", self.gaze_noise_tau),
            ("look_dwell", self.look_dwell),
            ("approach_tau", self.approach_tau),
            ("glance_duration", self.glance_duration),
            ("glance_cutoff", self.glance_cutoff),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("{path}.{name}"), format!("{v} must be > 0")));
            }
        }
        if !(self.glance_rate.is_finite() && self.glance_rate >= 0.0) {
            return Err(Error::validation(format!("{path}.glance_rate"), "must be >= 0"));
        }
        if self.decision_delay_max < self.decision_delay_min {
            return Err(Error::validation(
                format!("{path}.decision_delay_max"),
                "must be >= decision_delay_min",
            ));
        }
        if let Some((start, duration)) = self.dropout {
            if !(start >= 0.0 && duration > 0.0) {
                return Err(Error::validation(
                    format!("{path}.dropout"),
                    "start >= 0 and duration > 0",
                ));
            }
        }
        Ok(())
    }
}

/// A named behavior profile of the synthetic cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    pub params: WalkerParams,
}

impl Persona {
    fn new(name: &str, params: WalkerParams) -> Self {
        Self {
            name: name.to_string(),
            params,
        }
    }

    /// The six-member cohort used by the evaluation sweeps.
    pub fn cohort() -> Vec<Persona> {
        let base = WalkerParams::default();
        vec![
            Persona::new(
                "direct",
                WalkerParams {
                    walk_speed: 0.8,
                    decision_delay_min: 2.0,
                    decision_delay_max: 4.0,
                    ..base.clone()
                },
            ),
            Persona::new(
                "deliberate",
                WalkerParams {
                    walk_speed: 0.55,
                    decision_delay_min: 3.5,
                    decision_delay_max: 6.5,
                    look_dwell: 0.9,
                    approach_tau: 0.7,
                    ..base.clone()
                },
            ),
            Persona::new(
                "explorer",
                WalkerParams {
                    walk_speed: 0.65,
                    decision_delay_min: 3.0,
                    decision_delay_max: 7.0,
                    glance_rate: 0.5,
                    glance_duration: 0.6,
                    ..base.clone()
                },
            ),
            Persona::new(
                "checker",
                WalkerParams {
                    walk_speed: 0.75,
                    glance_rate: 0.8,
                    glance_duration: 0.4,
                    glance_cutoff: 0.4,
                    ..base.clone()
                },
            ),
            Persona::new(
                "jittery",
                WalkerParams {
                    walk_speed: 0.8,
                    gaze_noise: 0.2,
                    gaze_noise_tau: 0.2,
                    turn_rate: 1.5 * PI,
                    ..base.clone()
                },
            ),
            Persona::new(
                "occluded",
                WalkerParams {
                    walk_speed: 0.7,
                    decision_delay_min: 3.0,
                    decision_delay_max: 5.0,
                    dropout: Some((0.3, 0.7)),
                    ..base
                },
            ),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    Scan,
    Turn,
    Walk,
}

#[derive(Debug, Clone)]
pub struct Walker {
    params: WalkerParams,
    rng: ChaCha8Rng,
    dt: f64,
    contact_distance: f64,
    position: Vec2,
    /// Noise-free head direction.
    heading: f64,
    noise: f64,
    phase: Phase,
    decision_delay: f64,
    scan_order: Vec<usize>,
    glance: Option<(usize, f64)>,
    started: bool,
}

impl Walker {
    pub fn new(spec: &TrialSpec, params: WalkerParams, seed: u64, dt: f64, contact_distance: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let decision_delay = if params.decision_delay_max > params.decision_delay_min {
            rng.random_range(params.decision_delay_min..params.decision_delay_max)
        } else {
            params.decision_delay_min
        };
        let mut scan_order: Vec<usize> = (0..spec.vois.len()).collect();
        // Fisher-Yates keeps the draw sequence explicit and stable
        for i in (1..scan_order.len()).rev() {
            let j = rng.random_range(0..=i);
            scan_order.swap(i, j);
        }
        let noise = params.gaze_noise * rng.sample::<f64, _>(StandardNormal);
        Self {
            params,
            rng,
            dt,
            contact_distance,
            position: spec.user_start.position,
            heading: spec.user_start.heading,
            noise,
            phase: Phase::Scan,
            decision_delay,
            scan_order,
            glance: None,
            started: false,
        }
    }

    pub fn decision_delay(&self) -> f64 {
        self.decision_delay
    }

    pub fn position(&self) -> Vec2 {
        self.position
    }

    /// Advances to time `t` (one frame after the previous call) and reports the tracked state.
    pub fn step(&mut self, spec: &TrialSpec, t: f64) -> UserState {
        if self.started {
            self.advance(spec, t);
        }
        self.started = true;

        let target = spec.target();
        let surface = target.surface_distance(self.position);
        // people fixate what they are about to touch
        let taper = match self.phase {
            Phase::Walk => (surface / 0.5).min(1.0),
            _ => 1.0,
        };
        let tracked = match self.params.dropout {
            Some((start, duration)) => !(t >= start && t < start + duration),
            None => true,
        };
        UserState {
            pose: Pose::new(self.position, self.heading + taper * self.noise),
            tracked,
            time: t,
        }
    }

    fn advance(&mut self, spec: &TrialSpec, t: f64) {
        let dt = self.dt;
        let p = self.params.clone();

        let a = (-dt / p.gaze_noise_tau).exp();
        let kick: f64 = self.rng.sample(StandardNormal);
        self.noise = a * self.noise + (1.0 - a * a).sqrt() * p.gaze_noise * kick;

        let target = spec.target();
        let to_target = target.position - self.position;

        if self.phase == Phase::Scan && t >= self.decision_delay {
            self.phase = Phase::Turn;
        }

        let look_at = match self.phase {
            Phase::Scan => {
                let slot = (t / p.look_dwell) as usize % self.scan_order.len();
                let voi = &spec.vois[self.scan_order[slot]];
                (voi.position - self.position).angle()
            }
            Phase::Turn => to_target.angle(),
            Phase::Walk => {
                self.update_glance(spec, t);
                match self.glance {
                    Some((i, _)) => (spec.vois[i].position - self.position).angle(),
                    None => to_target.angle(),
                }
            }
        };
        let err = wrap_angle(look_at - self.heading);
        let max_turn = p.turn_rate * dt;
        self.heading = wrap_angle(self.heading + err.clamp(-max_turn, max_turn));

        if self.phase == Phase::Turn && wrap_angle(to_target.angle() - self.heading).abs() < 0.3 {
            self.phase = Phase::Walk;
        }

        if self.phase == Phase::Walk {
            let surface = (to_target.norm() - target.radius).max(0.0);
            let aim = (self.contact_distance - 0.03).max(0.0);
            let speed = p.walk_speed.min((surface - aim).max(0.0) / p.approach_tau);
            let dist = to_target.norm();
            if dist > 1e-9 {
                self.position += to_target / dist * (speed * dt).min(dist);
            }
        }
    }

    fn update_glance(&mut self, spec: &TrialSpec, t: f64) {
        if let Some((_, until)) = self.glance {
            if t >= until {
                self.glance = None;
            }
            return;
        }
        let p = &self.params;
        let surface = spec.target().surface_distance(self.position);
        if spec.vois.len() < 2 || p.glance_rate <= 0.0 || surface < p.glance_cutoff {
            return;
        }
        if self.rng.random::<f64>() < p.glance_rate * self.dt {
            let i = self.rng.random_range(1..spec.vois.len());
            // nobody looks backwards mid-stride
            let rel = wrap_angle((spec.vois[i].position - self.position).angle() - self.heading).abs();
            if rel <= FRAC_PI_2 + 0.5 {
                self.glance = Some((i, t + p.glance_duration));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Arena, Voi};
    use crate::intention::angular_offset;

    fn spec() -> TrialSpec {
        TrialSpec {
            seed: 1,
            n_distractors: 0,
            vois: vec![Voi::new("target", Vec2::new(3.0, 2.0), 0.05)],
            user_start: Pose::new(Vec2::new(1.0, 2.0), PI / 2.0),
            robot_start: Vec2::new(2.0, 3.5),
            arena: Arena::default(),
        }
    }

    #[test]
    fn scan_phase_holds_position() {
        let spec = spec();
        let mut w = Walker::new(&spec, WalkerParams::default(), 3, 1.0 / 75.0, 0.2);
        let delay = w.decision_delay();
        let mut k = 0;
        while (k as f64) / 75.0 < delay - 0.02 {
            let u = w.step(&spec, k as f64 / 75.0);
            assert_eq!(u.pose.position, spec.user_start.position);
            k += 1;
        }
    }

    #[test]
    fn arrival_time_matches_kinematics() {
        let spec = spec();
        let params = WalkerParams {
            gaze_noise: 1e-9,
            ..WalkerParams::default()
        };
        let mut w = Walker::new(&spec, params.clone(), 5, 1.0 / 75.0, 0.2);
        let delay = w.decision_delay();
        let mut k = 0;
        let arrival = loop {
            let t = k as f64 / 75.0;
            let u = w.step(&spec, t);
            if spec.target().surface_distance(u.pose.position) <= 0.2 {
                // facing rule: the heading ray hits the target disc at contact
                assert_eq!(angular_offset(&u.pose, spec.target()), 0.0);
                break t;
            }
            k += 1;
            assert!(k < 75 * 30);
        };
        // a lone object is already in view after scanning, so no turn; then cruise and an exponential settle
        let turn = 0.0;
        let cruise = (2.0 - 0.05 - 0.17 - params.walk_speed * params.approach_tau) / params.walk_speed;
        let settle = params.approach_tau * (params.walk_speed * params.approach_tau / 0.03).ln();
        let expected = delay + turn + cruise + settle;
        assert!(
            (arrival - expected).abs() < 0.1,
            "arrival {arrival} expected {expected}"
        );
    }

    #[test]
    fn dropout_clears_tracking() {
        let spec = spec();
        let params = WalkerParams {
            dropout: Some((0.2, 0.5)),
            ..WalkerParams::default()
        };
        let mut w = Walker::new(&spec, params, 1, 1.0 / 75.0, 0.2);
        let flags: Vec<bool> = (0..75).map(|k| w.step(&spec, k as f64 / 75.0).tracked).collect();
        assert!(flags[0]);
        assert!(!flags[20]);
        assert!(flags[60]);
    }

    #[test]
    fn cohort_is_valid() {
        let cohort = Persona::cohort();
        assert!(cohort.len() >= 6);
        for p in cohort {
            p.params.validate(&p.name).unwrap();
        }
    }
}
