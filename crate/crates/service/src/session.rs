//! The authoritative live simulation: one user steered by messages, stepped
//! at the physics rate by whoever owns the session.

use std::collections::HashMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use encounter_core::geometry::{normalize_angle, Pose, UserState, Vec2};
use encounter_core::io::{save_scenario, ScenarioFile, TraceFrame, TraceWriter};
use encounter_core::sim::{Frame, Simulation};
use encounter_core::trial::{generate_trial, MAX_DISTRACTORS};
use encounter_core::{Error, Result};

use crate::protocol::{ClientMessage, Contact, Metrics, ServerTick, MAX_STEER_SPEED, PROTOCOL_VERSION};

struct Recorder {
    path: PathBuf,
    out: TraceWriter<BufWriter<File>>,
    frames: u64,
}

pub struct Session {
    loaded: ScenarioFile,
    scenario: ScenarioFile,
    start: Pose,
    robot_start: Vec2,
    sim: Simulation,
    pose: Pose,
    velocity: Vec2,
    heading_rate: f64,
    tracking_lost: bool,
    paused: bool,
    /// Requested e-stop state; latching is immediate, release waits for the next step.
    estop_wanted: bool,
    estop_applied: bool,
    steps: u64,
    frame: Option<Frame>,
    metrics: Metrics,
    first_sticky: HashMap<String, f64>,
    in_contact: Vec<String>,
    record_dir: Option<PathBuf>,
    recorder: Option<Recorder>,
    warning: Option<String>,
}

impl Session {
    pub fn new(scenario: ScenarioFile) -> Result<Self> {
        scenario.validate()?;
        let spec = scenario.to_trial_spec(0);
        let current = ScenarioFile {
            vois: spec.vois.clone(),
            ..scenario.clone()
        };
        let sim = Simulation::new(spec.arena, spec.vois, scenario.config.clone(), spec.robot_start)?;
        Ok(Self {
            loaded: scenario,
            scenario: current,
            start: spec.user_start,
            robot_start: spec.robot_start,
            sim,
            pose: spec.user_start,
            velocity: Vec2::ZERO,
            heading_rate: 0.0,
            tracking_lost: false,
            paused: false,
            estop_wanted: false,
            estop_applied: false,
            steps: 0,
            frame: None,
            metrics: Metrics::default(),
            first_sticky: HashMap::new(),
            in_contact: Vec::new(),
            record_dir: None,
            recorder: None,
            warning: None,
        })
    }

    /// Enables `record` messages; traces land in `dir` as `session-NNN.jsonl`.
    pub fn with_record_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.record_dir = Some(dir.into());
        self
    }

    pub fn dt(&self) -> f64 {
        self.sim.config().dt
    }

    /// Time of the most recent step.
    pub fn time(&self) -> f64 {
        self.frame.as_ref().map_or(0.0, |f| f.user.time)
    }

    pub fn frame(&self) -> Option<&Frame> {
        self.frame.as_ref()
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn is_recording(&self) -> bool {
        self.recorder.is_some()
    }

    pub fn metrics(&self) -> &Metrics {
        &self.metrics
    }

    /// The current scene with the run's start poses, as a loadable scenario.
    pub fn scenario(&self) -> ScenarioFile {
        ScenarioFile {
            user_start: Some(self.start),
            robot_start: Some(self.robot_start),
            config: self.sim.config().clone(),
            ..self.scenario.clone()
        }
    }

    pub fn apply(&mut self, msg: ClientMessage) -> std::result::Result<(), String> {
        match msg {
            ClientMessage::Steer { vx, vy, heading_rate } => {
                let v = Vec2::new(vx, vy);
                if !v.is_finite() || !heading_rate.is_finite() {
                    return Err("steer: values must be finite".into());
                }
                self.velocity = v.clamp_norm(MAX_STEER_SPEED);
                self.heading_rate = heading_rate;
            }
            ClientMessage::SetOmega { omega } => {
                self.locked("set_omega")?;
                self.sim.set_omega(omega).map_err(|e| e.to_string())?;
                self.scenario.config.omega = omega;
            }
            ClientMessage::AddVoi { voi } => self.edit(|s| {
                s.vois.push(voi);
                Ok(())
            })?,
            ClientMessage::MoveVoi { id, x, y } => self.edit(|s| {
                find(s, &id)?.position = Vec2::new(x, y);
                Ok(())
            })?,
            ClientMessage::RemoveVoi { id } => self.edit(|s| {
                let i = s
                    .vois
                    .iter()
                    .position(|v| v.id == id)
                    .ok_or(format!("no object with id `{id}`"))?;
                s.vois.remove(i);
                if s.target.as_deref() == Some(id.as_str()) {
                    s.target = None;
                }
                Ok(())
            })?,
            ClientMessage::SetPrior { id, prior } => self.edit(|s| {
                find(s, &id)?.prior = prior;
                Ok(())
            })?,
            ClientMessage::Pause => self.paused = true,
            ClientMessage::Resume => self.paused = false,
            ClientMessage::Reset { seed } => self.reset(seed).map_err(|e| e.to_string())?,
            ClientMessage::Estop => {
                self.estop_wanted = true;
                if !self.estop_applied {
                    self.sim.latch_estop();
                    self.estop_applied = true;
                }
            }
            ClientMessage::ReleaseEstop => self.estop_wanted = false,
            ClientMessage::SetTrackingLost { lost } => self.tracking_lost = lost,
            ClientMessage::Record { on: true } => {
                let dir = self
                    .record_dir
                    .clone()
                    .ok_or("recording is disabled: no record directory configured")?;
                let path = next_free(&dir);
                self.start_recording(&path).map_err(|e| e.to_string())?;
            }
            ClientMessage::Record { on: false } => {
                self.stop_recording().map_err(|e| e.to_string())?;
            }
        }
        Ok(())
    }

    fn locked(&self, what: &str) -> std::result::Result<(), String> {
        if self.recorder.is_some() {
            Err(format!("{what}: the scene is locked while recording"))
        } else {
            Ok(())
        }
    }

    /// Applies a scene edit to a copy, validates it, then swaps it in.
    fn edit(
        &mut self,
        f: impl FnOnce(&mut ScenarioFile) -> std::result::Result<(), String>,
    ) -> std::result::Result<(), String> {
        self.locked("edit")?;
        let mut next = self.scenario.clone();
        f(&mut next)?;
        next.validate().map_err(|e| e.to_string())?;
        self.sim.set_vois(next.vois.clone()).map_err(|e| e.to_string())?;
        self.first_sticky.retain(|id, _| next.vois.iter().any(|v| &v.id == id));
        self.in_contact.retain(|id| next.vois.iter().any(|v| &v.id == id));
        self.scenario = next;
        Ok(())
    }

    /// Restarts the run from the start poses. With a seed, lays out a fresh
    /// random scene with as many objects as the loaded one.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<()> {
        if self.recorder.is_some() {
            self.stop_recording()?;
        }
        let config = self.sim.config().clone();
        let scenario = match seed {
            None => ScenarioFile {
                config,
                ..self.loaded.clone()
            },
            Some(seed) => {
                let n = (self.loaded.vois.len() - 1).min(MAX_DISTRACTORS);
                let start = self.loaded.to_trial_spec(0).user_start;
                let spec = generate_trial(seed, n, &self.loaded.arena, start)?;
                ScenarioFile::from_trial(&spec, &config)
            }
        };
        let spec = scenario.to_trial_spec(0);
        self.scenario = ScenarioFile {
            vois: spec.vois.clone(),
            ..scenario
        };
        self.start = spec.user_start;
        self.robot_start = spec.robot_start;
        self.restart()
    }

    fn restart(&mut self) -> Result<()> {
        self.sim = Simulation::new(
            self.scenario.arena,
            self.scenario.vois.clone(),
            self.scenario.config.clone(),
            self.robot_start,
        )?;
        self.estop_applied = false;
        if self.estop_wanted {
            self.sim.latch_estop();
            self.estop_applied = true;
        }
        self.pose = self.start;
        self.velocity = Vec2::ZERO;
        self.heading_rate = 0.0;
        self.steps = 0;
        self.frame = None;
        self.metrics = Metrics::default();
        self.first_sticky.clear();
        self.in_contact.clear();
        Ok(())
    }

    /// Restarts the run and records it: a trace at `path` and the scene next
    /// to it with a `.toml` extension, so the pair replays in batch.
    pub fn start_recording(&mut self, path: &Path) -> Result<()> {
        if self.recorder.is_some() {
            self.stop_recording()?;
        }
        self.restart()?;
        save_scenario(&path.with_extension("toml"), &self.scenario())?;
        let file = File::create(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        self.recorder = Some(Recorder {
            path: path.to_path_buf(),
            out: TraceWriter::new(BufWriter::new(file)),
            frames: 0,
        });
        self.warning = None;
        Ok(())
    }

    /// Returns the trace path and frame count of the finished recording.
    pub fn stop_recording(&mut self) -> Result<Option<(PathBuf, u64)>> {
        let Some(mut rec) = self.recorder.take() else {
            return Ok(None);
        };
        rec.out.flush().map_err(|e| Error::Io {
            path: rec.path.clone(),
            source: e,
        })?;
        Ok(Some((rec.path, rec.frames)))
    }

    /// One physics step. Does nothing while paused.
    pub fn step(&mut self) -> Option<&Frame> {
        if self.paused {
            return None;
        }
        let dt = self.dt();
        if self.steps > 0 {
            let arena = self.scenario.arena;
            let p = self.pose.position + self.velocity * dt;
            self.pose.position = Vec2::new(p.x.clamp(0.0, arena.width), p.y.clamp(0.0, arena.length));
            self.pose.heading = normalize_angle(self.pose.heading + self.heading_rate * dt).unwrap_or(0.0);
        }
        let t = self.steps as f64 * dt;
        let user = UserState {
            pose: self.pose,
            tracked: !self.tracking_lost,
            time: t,
        };
        if self.estop_wanted && !self.estop_applied {
            self.sim.latch_estop();
        } else if !self.estop_wanted && self.estop_applied {
            self.sim.release_estop(user.tracked);
        }
        self.estop_applied = self.estop_wanted;

        let frame = self.sim.step(&user).expect("session state is validated");
        self.steps += 1;
        self.observe(&frame);
        if let Some(rec) = &mut self.recorder {
            match rec.out.append(&TraceFrame::from_frame(&frame, self.estop_applied)) {
                Ok(()) => rec.frames += 1,
                Err(e) => {
                    self.warning = Some(format!("recording stopped: {}: {e}", rec.path.display()));
                    self.recorder = None;
                }
            }
        }
        self.frame = Some(frame);
        self.frame.as_ref()
    }

    fn observe(&mut self, frame: &Frame) {
        let t = frame.user.time;
        let clearance = frame.proxy.position.distance(frame.obstacle.center) - frame.obstacle.radius;
        self.metrics.clearance = Some(clearance);
        self.metrics.min_clearance = Some(self.metrics.min_clearance.map_or(clearance, |m| m.min(clearance)));

        for e in &frame.weights.entries {
            if e.sticky >= 1.0 {
                self.first_sticky.entry(e.id.clone()).or_insert(t);
            }
        }
        let config = self.sim.config();
        let user = frame.user.pose.position;
        let mut touching = Vec::new();
        for voi in self.sim.vois() {
            if voi.surface_distance(user) > config.contact_distance {
                continue;
            }
            touching.push(voi.id.clone());
            if self.in_contact.contains(&voi.id) {
                continue;
            }
            let distance = frame.robot.position.distance(voi.physical_position());
            let detection_time = self.first_sticky.get(&voi.id).map(|ts| t - ts);
            if detection_time.is_some() {
                self.metrics.last_detection_time = detection_time;
            }
            self.metrics.last_contact = Some(Contact {
                id: voi.id.clone(),
                t,
                distance,
                success: distance <= config.success_distance,
                detection_time,
            });
        }
        self.in_contact = touching;
    }

    pub fn tick(&self, seq: u64) -> ServerTick {
        let (obstacle, command) = match &self.frame {
            Some(f) => (f.obstacle, f.command),
            None => {
                let user = UserState::tracked(self.pose, 0.0);
                let obstacle =
                    encounter_core::proxy::ObstacleState::around_user(&user, self.sim.vois(), self.sim.config());
                (obstacle, *self.sim.command())
            }
        };
        ServerTick {
            v: PROTOCOL_VERSION,
            seq,
            t: self.time(),
            paused: self.paused,
            recording: self.recorder.is_some(),
            omega: self.sim.config().omega,
            arena: self.scenario.arena,
            vois: self.scenario.vois.clone(),
            user: UserState {
                pose: self.pose,
                tracked: !self.tracking_lost,
                time: self.time(),
            },
            proxy: *self.sim.proxy(),
            robot: *self.sim.robot(),
            weights: self.sim.weights().clone(),
            obstacle,
            command,
            metrics: self.metrics.clone(),
            warning: self.warning.clone(),
        }
    }
}

fn find<'a>(s: &'a mut ScenarioFile, id: &str) -> std::result::Result<&'a mut encounter_core::Voi, String> {
    s.vois
        .iter_mut()
        .find(|v| v.id == id)
        .ok_or_else(|| format!("no object with id `{id}`"))
}

fn next_free(dir: &Path) -> PathBuf {
    (1..)
        .map(|n| dir.join(format!("session-{n:03}.jsonl")))
        .find(|p| !p.exists())
        .expect("some name is free")
}
