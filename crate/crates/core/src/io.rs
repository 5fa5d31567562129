//! File formats: JSON-lines traces, TOML scenarios and CSV result tables.
//!
//! Every format carries a version tag. See `docs/formats.md` for the field
//! reference.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, Pose, SimConfig, UserState, Vec2, Voi};
use crate::robot::RobotStatus;
use crate::sim::Frame;
use crate::sweep::{SummaryRow, SweepOutcome, TrialRow};
use crate::trial::{TrialSpec, BALL_RADIUS};
use crate::walker::WalkerParams;

pub const TRACE_VERSION: u32 = 1;
pub const SCENARIO_FORMAT: &str = "encounter-scenario";
pub const SCENARIO_VERSION: u32 = 1;
pub const RESULTS_VERSION: u32 = 1;

/// One recorded frame of a session or trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub t: f64,
    pub user: UserState,
    pub estop: Option<bool>,
    pub proxy: Option<Vec2>,
    pub robot: Option<Vec2>,
    pub robot_status: Option<RobotStatus>,
    /// Effective per-object weights, in scenario order.
    pub weights: Option<Vec<f64>>,
}

impl TraceFrame {
    pub fn from_user(user: UserState) -> Self {
        Self {
            t: user.time,
            user,
            estop: None,
            proxy: None,
            robot: None,
            robot_status: None,
            weights: None,
        }
    }

    pub fn from_frame(frame: &Frame, estop: bool) -> Self {
        Self {
            t: frame.user.time,
            user: frame.user,
            estop: Some(estop),
            proxy: Some(frame.proxy.position),
            robot: Some(frame.robot.position),
            robot_status: Some(frame.robot.status),
            weights: Some(frame.weights.effective().collect()),
        }
    }
}

/// Wire layout of a trace line; field order is the documented column order.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TraceLine {
    v: u32,
    t: f64,
    x: f64,
    y: f64,
    heading: f64,
    tracked: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    estop: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    proxy: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robot: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    robot_status: Option<RobotStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl From<&TraceFrame> for TraceLine {
    fn from(f: &TraceFrame) -> Self {
        TraceLine {
            v: TRACE_VERSION,
            t: f.t,
            x: f.user.pose.position.x,
            y: f.user.pose.position.y,
            heading: f.user.pose.heading,
            tracked: f.user.tracked,
            estop: f.estop,
            proxy: f.proxy.map(|p| [p.x, p.y]),
            robot: f.robot.map(|p| [p.x, p.y]),
            robot_status: f.robot_status,
            weights: f.weights.clone(),
        }
    }
}

impl TraceLine {
    fn into_frame(self) -> std::result::Result<TraceFrame, String> {
        if self.v != TRACE_VERSION {
            return Err(format!("unsupported trace version {}", self.v));
        }
        let finite = [self.t, self.x, self.y, self.heading]
            .into_iter()
            .chain(self.proxy.into_iter().flatten())
            .chain(self.robot.into_iter().flatten())
            .chain(self.weights.iter().flatten().copied())
            .all(f64::is_finite);
        if !finite {
            return Err("non-finite number".into());
        }
        if !(self.heading > -std::f64::consts::PI && self.heading <= std::f64::consts::PI) {
            return Err(format!("heading {} outside (-pi, pi]", self.heading));
        }
        let user = UserState {
            pose: Pose {
                position: Vec2::new(self.x, self.y),
                heading: self.heading,
            },
            tracked: self.tracked,
            time: self.t,
        };
        Ok(TraceFrame {
            t: self.t,
            user,
            estop: self.estop,
            proxy: self.proxy.map(|[x, y]| Vec2::new(x, y)),
            robot: self.robot.map(|[x, y]| Vec2::new(x, y)),
            robot_status: self.robot_status,
            weights: self.weights,
        })
    }
}

pub fn trace_line(frame: &TraceFrame) -> String {
    serde_json::to_string(&TraceLine::from(frame)).expect("trace lines always serialize")
}

/// Incremental trace writer for live sessions.
pub struct TraceWriter<W: Write> {
    out: W,
    last_t: Option<f64>,
}

impl<W: Write> TraceWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, last_t: None }
    }

    pub fn append(&mut self, frame: &TraceFrame) -> std::io::Result<()> {
        if let Some(last) = self.last_t {
            if frame.t <= last {
                return Err(std::io::Error::new(
                    std::io::ErrorKind::InvalidInput,
                    format!("frame time {} does not advance past {last}", frame.t),
                ));
            }
        }
        self.last_t = Some(frame.t);
        writeln!(self.out, "{}", trace_line(frame))
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

pub fn save_trace(path: &Path, frames: &[TraceFrame]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = TraceWriter::new(BufWriter::new(file));
    for f in frames {
        writer.append(f).map_err(|e| Error::io(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceFrame>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut frames: Vec<TraceFrame> = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        if line.trim().is_empty() {
            continue;
        }
        let raw: TraceLine = serde_json::from_str(&line).map_err(|e| parse_err(e.to_string()))?;
        let frame = raw.into_frame().map_err(parse_err)?;
        if let Some(prev) = frames.last() {
            if frame.t <= prev.t {
                return Err(parse_err(format!("time {} does not increase past {}", frame.t, prev.t)));
            }
        }
        frames.push(frame);
    }
    Ok(frames)
}

/// A designer-authored scene: arena, objects, optional starts and overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub arena: Arena,
    /// Id of the object the walker heads for; replayed traces end at any contact when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user_start: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot_start: Option<Vec2>,
    #[serde(default)]
    pub config: SimConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walker: Option<WalkerParams>,
    pub vois: Vec<Voi>,
}

impl ScenarioFile {
    pub fn new(arena: Arena, vois: Vec<Voi>, config: SimConfig) -> Self {
        Self {
            format: SCENARIO_FORMAT.to_string(),
            version: SCENARIO_VERSION,
            arena,
            target: None,
            user_start: None,
            robot_start: None,
            config,
            walker: None,
            vois,
        }
    }

    pub fn from_trial(spec: &TrialSpec, config: &SimConfig) -> Self {
        Self {
            target: Some(spec.target().id.clone()),
            user_start: Some(spec.user_start),
            robot_start: Some(spec.robot_start),
            ..Self::new(spec.arena, spec.vois.clone(), config.clone())
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != SCENARIO_FORMAT {
            return Err(Error::validation("format", format!("expected `{SCENARIO_FORMAT}`")));
        }
        if self.version != SCENARIO_VERSION {
            return Err(Error::validation(
                "version",
                format!("unsupported version {}", self.version),
            ));
        }
        self.arena.validate("arena")?;
        self.config.validate("config")?;
        if let Some(w) = &self.walker {
            w.validate("walker")?;
        }
        if self.vois.is_empty() {
            return Err(Error::validation("vois", "at least one object is required"));
        }
        for (i, v) in self.vois.iter().enumerate() {
            v.validate(&format!("vois[{i}]"), &self.arena)?;
            if self.vois[..i].iter().any(|o| o.id == v.id) {
                return Err(Error::validation(
                    format!("vois[{i}].id"),
                    format!("duplicate id `{}`", v.id),
                ));
            }
        }
        if let Some(t) = &self.target {
            if !self.vois.iter().any(|v| &v.id == t) {
                return Err(Error::validation("target", format!("no object with id `{t}`")));
            }
        }
        if let Some(u) = &self.user_start {
            if !self.arena.contains(u.position) {
                return Err(Error::validation("user_start.position", "must be inside the arena"));
            }
            if !(u.heading > -std::f64::consts::PI && u.heading <= std::f64::consts::PI) {
                return Err(Error::validation("user_start.heading", "must lie in (-pi, pi]"));
            }
        }
        if let Some(r) = self.robot_start {
            if !r.is_finite() || !self.arena.within_margins(r, 0.0) {
                return Err(Error::validation("robot_start", "must lie inside the arena margins"));
            }
        }
        Ok(())
    }

    /// Builds a trial with the target moved to the front.
    pub fn to_trial_spec(&self, seed: u64) -> TrialSpec {
        let mut vois = self.vois.clone();
        if let Some(t) = &self.target {
            if let Some(i) = vois.iter().position(|v| &v.id == t) {
                let target = vois.remove(i);
                vois.insert(0, target);
            }
        }
        let user_start = self.user_start.unwrap_or_else(|| Pose::new(self.arena.center(), 0.0));
        let robot_start = self.robot_start.unwrap_or_else(|| default_robot_start(&self.arena));
        TrialSpec {
            seed,
            n_distractors: vois.len() - 1,
            vois,
            user_start,
            robot_start,
            arena: self.arena,
        }
    }
}

/// Parking spot used when a scenario does not place the robot.
pub fn default_robot_start(arena: &Arena) -> Vec2 {
    let inset = arena.safety_margin + 0.5 * BALL_RADIUS.max(arena.width.min(arena.length) / 8.0);
    Vec2::new(inset, inset)
}

pub fn parse_scenario(text: &str) -> Result<ScenarioFile> {
    let scenario: ScenarioFile =
        toml::from_str(text).map_err(|e| Error::Format(e.to_string().trim().replace('\n', " ")))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<ScenarioFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn scenario_to_string(scenario: &ScenarioFile) -> Result<String> {
    toml::to_string(scenario).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_scenario(path: &Path, scenario: &ScenarioFile) -> Result<()> {
    let text = scenario_to_string(scenario)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_record(row: &SummaryRow) -> Vec<String> {
    let ci = |m: &Option<crate::stats::MeanCi>| -> [String; 2] {
        match m {
            Some(m) => [m.mean.to_string(), m.half_width.to_string()],
            None => [String::new(), String::new()],
        }
    };
    let mut rec = vec![
        row.omega.to_string(),
        row.condition.to_string(),
        row.trials.to_string(),
        row.success_rate.to_string(),
        opt(row.success_ci.map(|c| c.half_width)),
    ];
    rec.extend(ci(&row.distance_at_contact));
    rec.extend(ci(&row.detection_time));
    rec.extend(ci(&row.proxy_robot_distance));
    rec.extend(ci(&row.final_second_tracking));
    rec.push(row.collisions.to_string());
    rec.push(row.safety_violations.to_string());
    rec
}

pub const SUMMARY_COLUMNS: [&str; 15] = [
    "omega",
    "condition",
    "trials",
    "success_rate",
    "success_ci95",
    "distance_at_contact_mean",
    "distance_at_contact_ci95",
    "detection_time_mean",
    "detection_time_ci95",
    "proxy_robot_distance_mean",
    "proxy_robot_distance_ci95",
    "final_second_tracking_mean",
    "final_second_tracking_ci95",
    "collisions",
    "safety_violations",
];

pub const TRIAL_COLUMNS: [&str; 20] = [
    "omega",
    "condition",
    "block",
    "persona",
    "seed",
    "success",
    "distance_at_contact",
    "detection_time",
    "duration",
    "final_second_tracking_error",
    "mean_proxy_robot_distance",
    "min_user_proxy_clearance",
    "clearance_radius",
    "collision",
    "max_proxy_penetration",
    "max_robot_intrusion",
    "speed_cap_violations",
    "margin_violations",
    "tracking_losses",
    "tracking_halt_violations",
];

fn trial_record(row: &TrialRow) -> Vec<String> {
    let r = &row.result;
    vec![
        row.omega.to_string(),
        row.condition.to_string(),
        row.block.to_string(),
        row.persona.clone(),
        row.seed.to_string(),
        r.success.to_string(),
        opt(r.distance_at_contact),
        opt(r.detection_time),
        r.duration.to_string(),
        opt(r.final_second_tracking_error),
        r.mean_proxy_robot_distance.to_string(),
        r.min_user_proxy_clearance.to_string(),
        r.clearance_radius.to_string(),
        r.collision.to_string(),
        r.safety.max_proxy_penetration.to_string(),
        r.safety.max_robot_intrusion.to_string(),
        r.safety.speed_cap_violations.to_string(),
        r.safety.margin_violations.to_string(),
        r.safety.tracking_losses.to_string(),
        r.safety.tracking_halt_violations.to_string(),
    ]
}

fn write_csv(path: &Path, tag: &str, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# {tag} v{RESULTS_VERSION}").map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(out);
    let to_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(to_err)?;
    for rec in rows {
        w.write_record(&rec).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes `summary.csv`, `trials.csv` and `detection.csv` into `dir`.
pub fn write_results(outcome: &SweepOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join("summary.csv"),
        "encounter-sweep-summary",
        &SUMMARY_COLUMNS,
        outcome.summary.rows.iter().map(summary_record),
    )?;
    write_csv(
        &dir.join("trials.csv"),
        "encounter-sweep-trials",
        &TRIAL_COLUMNS,
        outcome.trials.iter().map(trial_record),
    )?;
    write_csv(
        &dir.join("detection.csv"),
        "encounter-detection-curve",
        &["detection_time_lo", "detection_time_hi", "trials", "failure_rate"],
        outcome.detection_curve(1.0).into_iter().map(|b| {
            vec![
                b.lo.to_string(),
                b.hi.to_string(),
                b.trials.to_string(),
                b.failure_rate.to_string(),
            ]
        }),
    )
}
