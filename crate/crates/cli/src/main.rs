use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use encounter_core::geometry::{Arena, SimConfig};
use encounter_core::io::{load_scenario, load_trace, save_scenario, save_trace, write_results, ScenarioFile};
use encounter_core::sweep::{omega_grid, run_sweep, splitmix64, SweepPlan};
use encounter_core::trial::{generate_trial, random_user_start, run_trial, RunOptions, TrialResult, UserSource};
use encounter_core::walker::{Persona, WalkerParams};
use encounter_service::{serve, ServeOptions, Session};

#[derive(Parser)]
#[command(
    name = "encounter",
    version,
    about = "Encountered-type haptics planner: simulate, sweep and serve"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one trial with the synthetic walker, or replay a recorded trace.
    Run {
        scenario: PathBuf,
        /// Replay this trace instead of simulating a walker.
        #[arg(long, conflicts_with = "walker")]
        trace: Option<PathBuf>,
        /// Simulate the walker (the default); naming a persona overrides the scenario's walker.
        #[arg(long, value_name = "PERSONA", num_args = 0..=1)]
        walker: Option<Option<String>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the per-frame trace here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full factorial sweep over ω × distractor count × block × persona.
    Sweep {
        /// `start:end:step`, a comma list, or one value.
        #[arg(long, default_value = "0:1:0.25")]
        omegas: String,
        /// `lo:hi` or a comma list of distractor counts.
        #[arg(long, default_value = "0:4")]
        conditions: String,
        #[arg(long, default_value_t = 10)]
        blocks: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Give the target this prior and split the rest over the distractors.
        #[arg(long)]
        target_prior: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the live simulation over a websocket.
    Serve {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// UI assets to serve at `/`.
        #[arg(long = "static")]
        static_dir: Option<PathBuf>,
        /// Where `record` requests write traces.
        #[arg(long)]
        record_dir: Option<PathBuf>,
    },
    /// Write random trial layouts as scenario files.
    Gen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        distractors: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            trace,
            walker,
            seed,
            out,
        } => run(
            &scenario,
            trace.as_deref(),
            walker.flatten().as_deref(),
            seed,
            out.as_deref(),
        ),
        Command::Sweep {
            omegas,
            conditions,
            blocks,
            seed,
            target_prior,
            out,
        } => sweep(&omegas, &conditions, blocks, seed, target_prior, &out),
        Command::Serve {
            scenario,
            port,
            host,
            static_dir,
            record_dir,
        } => serve_cmd(scenario.as_deref(), &host, port, static_dir, record_dir),
        Command::Gen {
            n,
            distractors,
            seed,
            out,
        } => gen(n, distractors, seed, &out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}

/// Error chain on one line, skipping causes the outer message already quotes.
/// Writes to stdout; a reader that went away early is not an error.
fn emit(text: &str) -> Result<()> {
    let mut stdout = std::io::stdout().lock();
    match stdout.write_all(text.as_bytes()).and_then(|()| stdout.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn one_line(e: &anyhow::Error) -> String {
    let mut line = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if line.contains(&text) {
            continue;
        }
        if !line.is_empty() {
            line.push_str(": ");
        }
        line.push_str(&text);
    }
    line.replace('\n', " ")
}

fn walker_params(scenario: &ScenarioFile, name: Option<&str>) -> Result<WalkerParams> {
    match name {
        None => Ok(scenario.walker.clone().unwrap_or_default()),
        Some(name) => Persona::cohort()
            .into_iter()
            .find(|p| p.name == name)
            .map(|p| p.params)
            .with_context(|| {
                let names: Vec<String> = Persona::cohort().into_iter().map(|p| p.name).collect();
                format!("unknown persona `{name}` (known: {})", names.join(", "))
            }),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn report(r: &TrialResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "success={}", r.success);
    let _ = writeln!(out, "contacted={}", r.contacted.as_deref().unwrap_or("none"));
    let _ = writeln!(out, "distance_at_contact={}", opt(r.distance_at_contact));
    let _ = writeln!(out, "detection_time={}", opt(r.detection_time));
    let _ = writeln!(out, "duration={}", r.duration);
    let _ = writeln!(out, "collision={}", r.collision);
    let _ = writeln!(out, "mean_proxy_robot_distance={}", r.mean_proxy_robot_distance);
    let _ = writeln!(
        out,
        "final_second_tracking_error={}",
        opt(r.final_second_tracking_error)
    );
    let _ = writeln!(out, "min_user_proxy_clearance={}", r.min_user_proxy_clearance);
    let _ = writeln!(out, "max_proxy_penetration={}", r.safety.max_proxy_penetration);
    let _ = writeln!(out, "max_robot_intrusion={}", r.safety.max_robot_intrusion);
    let _ = writeln!(out, "speed_cap_violations={}", r.safety.speed_cap_violations);
    let _ = writeln!(out, "margin_violations={}", r.safety.margin_violations);
    let _ = writeln!(out, "tracking_halt_violations={}", r.safety.tracking_halt_violations);
    out
}

fn run(scenario_path: &Path, trace: Option<&Path>, walker: Option<&str>, seed: u64, out: Option<&Path>) -> Result<()> {
    let scenario = load_scenario(scenario_path)?;
    let spec = scenario.to_trial_spec(seed);
    let options = RunOptions {
        record_frames: out.is_some(),
        designated_target: true,
    };
    let result = match trace {
        Some(path) => {
            let frames = load_trace(path)?;
            let options = RunOptions {
                designated_target: scenario.target.is_some(),
                ..options
            };
            run_trial(&spec, UserSource::Trace(&frames), &scenario.config, options)?
        }
        None => {
            if scenario.target.is_none() && scenario.vois.len() > 1 {
                bail!(
                    "{}: a walker needs `target` when there are several objects",
                    scenario_path.display()
                );
            }
            let params = walker_params(&scenario, walker)?;
            run_trial(&spec, UserSource::Walker { params, seed }, &scenario.config, options)?
        }
    };
    if let Some(out) = out {
        save_trace(out, &result.frames)?;
    }
    emit(&report(&result))
}

/// `start:end:step`, `a,b,c` or a single number.
fn parse_omegas(text: &str) -> Result<Vec<f64>> {
    let num = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .with_context(|| format!("bad number `{s}` in `{text}`"))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let grid = match parts.as_slice() {
        [start, end, step] => {
            omega_grid(num(start)?, num(end)?, num(step)?).with_context(|| format!("bad grid `{text}`"))?
        }
        [_] => text.split(',').map(num).collect::<Result<_>>()?,
        _ => bail!("bad grid `{text}`: expected start:end:step"),
    };
    if grid.is_empty() {
        bail!("empty grid `{text}`");
    }
    Ok(grid)
}

/// `lo:hi` inclusive or `a,b,c`.
fn parse_conditions(text: &str) -> Result<Vec<usize>> {
    let num = |s: &str| -> Result<usize> {
        s.trim()
            .parse::<usize>()
            .with_context(|| format!("bad count `{s}` in `{text}`"))
    };
    let out: Vec<usize> = match text.split_once(':') {
        Some((lo, hi)) => (num(lo)?..=num(hi)?).collect(),
        None => text.split(',').map(num).collect::<Result<_>>()?,
    };
    if out.is_empty() {
        bail!("empty condition list `{text}`");
    }
    Ok(out)
}

fn sweep(
    omegas: &str,
    conditions: &str,
    blocks: usize,
    seed: u64,
    target_prior: Option<f64>,
    out: &Path,
) -> Result<()> {
    let plan = SweepPlan {
        target_prior,
        ..SweepPlan::new(parse_omegas(omegas)?, parse_conditions(conditions)?, blocks, seed)
    };
    let outcome = run_sweep(&plan)?;
    write_results(&outcome, out)?;
    let mut text = String::new();
    writeln!(
        text,
        "{} trials over {} omegas; results in {}",
        outcome.trials.len(),
        plan.omegas.len(),
        out.display()
    )?;
    for best in outcome.summary.best_per_condition() {
        let row = outcome.summary.row(best.omega, best.condition).expect("row exists");
        writeln!(
            text,
            "condition={} best_omega={} success_rate={} trials={}",
            best.condition, best.omega, best.success_rate, row.trials
        )?;
    }
    let s = &outcome.summary.safety;
    writeln!(
        text,
        "safety: clean={} max_proxy_penetration={} speed_cap_violations={} margin_violations={} tracking_halt_violations={}",
        s.is_clean(),
        s.max_proxy_penetration,
        s.speed_cap_violations,
        s.margin_violations,
        s.tracking_halt_violations
    )?;
    emit(&text)
}

fn demo_scenario() -> Result<ScenarioFile> {
    let arena = Arena::default();
    let spec = generate_trial(1, 2, &arena, random_user_start(1, &arena))?;
    Ok(ScenarioFile::from_trial(&spec, &SimConfig::default()))
}

fn serve_cmd(
    scenario: Option<&Path>,
    host: &str,
    port: u16,
    static_dir: Option<PathBuf>,
    record_dir: Option<PathBuf>,
) -> Result<()> {
    let scenario = match scenario {
        Some(p) => load_scenario(p)?,
        None => demo_scenario()?,
    };
    let mut session = Session::new(scenario)?;
    if let Some(dir) = record_dir {
        std::fs::create_dir_all(&dir).with_context(|| format!("{}", dir.display()))?;
        session = session.with_record_dir(dir);
    }
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port))
            .await
            .with_context(|| format!("cannot listen on {host}:{port}"))?;
        println!("listening on http://{}", listener.local_addr()?);
        serve(listener, session, ServeOptions { static_dir }).await?;
        Ok(())
    })
}

fn gen(n: usize, distractors: usize, seed: u64, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("{}", out.display()))?;
    let arena = Arena::default();
    let config = SimConfig::default();
    for i in 0..n {
        let s = splitmix64(seed.wrapping_add(i as u64));
        let spec = generate_trial(s, distractors, &arena, random_user_start(s, &arena))?;
        let path = out.join(format!("trial-{i:03}.toml"));
        save_scenario(&path, &ScenarioFile::from_trial(&spec, &config))?;
    }
    println!("wrote {n} scenarios to {}", out.display());
    Ok(())
}
