//! Parameter sweeps over ω and distractor count with paired seeds.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Arena, SimConfig};
use crate::stats::{summarize, MeanCi};
use crate::trial::{generate_trial, random_user_start, run_trial, RunOptions, SafetyReport, TrialResult, UserSource};
use crate::walker::Persona;

/// Target prior used by the prior-uplift arm.
pub const UPLIFT_PRIOR: f64 = 0.75;

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub omegas: Vec<f64>,
    pub conditions: Vec<usize>,
    pub blocks: usize,
    pub base_seed: u64,
    pub personas: Vec<Persona>,
    /// Prior given to the target (distractors keep 1).
    pub target_prior: Option<f64>,
    pub arena: Arena,
    pub config: SimConfig,
}

impl SweepPlan {
    pub fn new(omegas: Vec<f64>, conditions: Vec<usize>, blocks: usize, base_seed: u64) -> Self {
        Self {
            omegas,
            conditions,
            blocks,
            base_seed,
            personas: Persona::cohort(),
            target_prior: None,
            arena: Arena::default(),
            config: SimConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.omegas.is_empty() || self.conditions.is_empty() || self.blocks == 0 || self.personas.is_empty() {
            return Err(Error::validation(
                "sweep",
                "omegas, conditions, blocks and personas must be non-empty",
            ));
        }
        for &w in &self.omegas {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::OutOfRange {
                    name: "omega",
                    value: w,
                    expected: "[0, 1]",
                });
            }
        }
        if let Some(&c) = self.conditions.iter().find(|&&c| c > crate::trial::MAX_DISTRACTORS) {
            return Err(Error::OutOfRange {
                name: "distractors",
                value: c as f64,
                expected: "0..=4",
            });
        }
        if let Some(p) = self.target_prior {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::OutOfRange {
                    name: "target prior",
                    value: p,
                    expected: "(0, 1]",
                });
            }
        }
        for p in &self.personas {
            p.params.validate(&format!("persona `{}`", p.name))?;
        }
        self.config.validate("config")
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Layout seed shared by every ω for a (block, condition, persona) cell.
pub fn trial_seed(base: u64, block: usize, condition: usize, persona: usize) -> u64 {
    let mut h = splitmix64(base);
    for part in [block as u64, condition as u64, persona as u64] {
        h = splitmix64(h ^ part);
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub omega: f64,
    pub condition: usize,
    pub block: usize,
    pub persona: String,
    pub seed: u64,
    pub result: TrialResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub omega: f64,
    pub condition: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub success_ci: Option<MeanCi>,
    /// Over trials that reached contact.
    pub distance_at_contact: Option<MeanCi>,
    pub detection_time: Option<MeanCi>,
    pub proxy_robot_distance: Option<MeanCi>,
    /// Over successful trials.
    pub final_second_tracking: Option<MeanCi>,
    pub collisions: usize,
    pub safety_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub rows: Vec<SummaryRow>,
    pub safety: SafetyReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BestOmega {
    pub condition: usize,
    pub omega: f64,
    pub success_rate: f64,
}

impl SweepSummary {
    pub fn row(&self, omega: f64, condition: usize) -> Option<&SummaryRow> {
        self.rows
            .iter()
            .find(|r| r.condition == condition && (r.omega - omega).abs() < 1e-12)
    }

    pub fn conditions(&self) -> Vec<usize> {
        let mut c: Vec<usize> = self.rows.iter().map(|r| r.condition).collect();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// Highest success rate per condition; ties go to the smaller mean distance at contact, then smaller ω.
    pub fn best_per_condition(&self) -> Vec<BestOmega> {
        self.conditions()
            .into_iter()
            .map(|c| {
                let best = self
                    .rows
                    .iter()
                    .filter(|r| r.condition == c)
                    .min_by(|a, b| {
                        let dist = |r: &SummaryRow| r.distance_at_contact.map_or(f64::INFINITY, |m| m.mean);
                        b.success_rate
                            .total_cmp(&a.success_rate)
                            .then(dist(a).total_cmp(&dist(b)))
                            .then(a.omega.total_cmp(&b.omega))
                    })
                    .expect("condition has rows");
                BestOmega {
                    condition: c,
                    omega: best.omega,
                    success_rate: best.success_rate,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionBin {
    pub lo: f64,
    pub hi: f64,
    pub trials: usize,
    pub failure_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub summary: SweepSummary,
    pub trials: Vec<TrialRow>,
}

impl SweepOutcome {
    /// Failure rate binned by detection time, over trials that reached contact.
    pub fn detection_curve(&self, width: f64) -> Vec<DetectionBin> {
        let timed: Vec<(f64, bool)> = self
            .trials
            .iter()
            .filter_map(|r| r.result.detection_time.map(|d| (d, r.result.success)))
            .collect();
        let Some(max) = timed.iter().map(|(d, _)| *d).reduce(f64::max) else {
            return Vec::new();
        };
        let n = (max / width).floor() as usize + 1;
        (0..n)
            .filter_map(|i| {
                let lo = i as f64 * width;
                let hi = lo + width;
                let bin: Vec<bool> = timed
                    .iter()
                    .filter(|(d, _)| *d >= lo && *d < hi)
                    .map(|(_, s)| *s)
                    .collect();
                (!bin.is_empty()).then(|| DetectionBin {
                    lo,
                    hi,
                    trials: bin.len(),
                    failure_rate: bin.iter().filter(|s| !**s).count() as f64 / bin.len() as f64,
                })
            })
            .collect()
    }
}

fn ci(samples: &[f64]) -> Option<MeanCi> {
    summarize(samples).ok()
}

fn summarize_cell(omega: f64, condition: usize, rows: &[&TrialRow]) -> SummaryRow {
    let outcomes: Vec<f64> = rows.iter().map(|r| if r.result.success { 1.0 } else { 0.0 }).collect();
    let pick =
        |f: &dyn Fn(&TrialResult) -> Option<f64>| -> Vec<f64> { rows.iter().filter_map(|r| f(&r.result)).collect() };
    SummaryRow {
        omega,
        condition,
        trials: rows.len(),
        success_rate: outcomes.iter().sum::<f64>() / rows.len() as f64,
        success_ci: ci(&outcomes),
        distance_at_contact: ci(&pick(&|r| r.distance_at_contact)),
        detection_time: ci(&pick(&|r| r.detection_time)),
        proxy_robot_distance: ci(&pick(&|r| Some(r.mean_proxy_robot_distance))),
        final_second_tracking: ci(&pick(&|r| r.final_second_tracking_error.filter(|_| r.success))),
        collisions: rows.iter().filter(|r| r.result.collision).count(),
        safety_violations: rows.iter().filter(|r| !r.result.safety.is_clean()).count(),
    }
}

/// Runs every (ω, condition, block, persona) cell. Output order is fixed regardless of thread count.
pub fn run_sweep(plan: &SweepPlan) -> Result<SweepOutcome> {
    plan.validate()?;
    let mut jobs = Vec::new();
    for &omega in &plan.omegas {
        for &condition in &plan.conditions {
            for block in 0..plan.blocks {
                for p in 0..plan.personas.len() {
                    jobs.push((omega, condition, block, p));
                }
            }
        }
    }

    let trials: Vec<TrialRow> = jobs
        .par_iter()
        .map(|&(omega, condition, block, p)| -> Result<TrialRow> {
            let seed = trial_seed(plan.base_seed, block, condition, p);
            let user_start = random_user_start(seed, &plan.arena);
            let mut spec = generate_trial(seed, condition, &plan.arena, user_start)?;
            if let Some(prior) = plan.target_prior {
                spec = spec.with_target_prior(prior);
            }
            let config = plan.config.clone().with_omega(omega);
            let source = UserSource::Walker {
                params: plan.personas[p].params.clone(),
                seed: splitmix64(seed ^ 0x5eed),
            };
            let options = RunOptions {
                record_frames: false,
                designated_target: true,
            };
            let result = run_trial(&spec, source, &config, options)?;
            Ok(TrialRow {
                omega,
                condition,
                block,
                persona: plan.personas[p].name.clone(),
                seed,
                result,
            })
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut safety = SafetyReport::default();
    for &omega in &plan.omegas {
        for &condition in &plan.conditions {
            let cell: Vec<&TrialRow> = trials
                .iter()
                .filter(|r| r.condition == condition && r.omega == omega)
                .collect();
            for r in &cell {
                safety.merge(&r.result.safety);
            }
            rows.push(summarize_cell(omega, condition, &cell));
        }
    }
    Ok(SweepOutcome {
        summary: SweepSummary { rows, safety },
        trials,
    })
}

/// Grid from `start` to `end` inclusive in steps of `step`, snapped to avoid float drift.
pub fn omega_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(Error::validation("grid", "need start <= end and step > 0"));
    }
    let n = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=n)
        .map(|i| ((start + i as f64 * step) * 1e9).round() / 1e9)
        .collect())
}

/// Coarse sweep at 0.25, then a 0.05 grid around each condition's coarse winner.
pub fn two_phase_sweep(plan: &SweepPlan) -> Result<(SweepOutcome, SweepOutcome)> {
    let coarse_plan = SweepPlan {
        omegas: omega_grid(0.0, 1.0, 0.25)?,
        ..plan.clone()
    };
    let coarse = run_sweep(&coarse_plan)?;
    let mut fine_omegas: Vec<f64> = Vec::new();
    for best in coarse.summary.best_per_condition() {
        let lo = (best.omega - 0.25).max(0.0);
        let hi = (best.omega + 0.25).min(1.0);
        fine_omegas.extend(omega_grid(lo, hi, 0.05)?);
    }
    fine_omegas.sort_by(f64::total_cmp);
    fine_omegas.dedup();
    let fine = run_sweep(&SweepPlan {
        omegas: fine_omegas,
        ..plan.clone()
    })?;
    Ok((coarse, fine))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_is_inclusive() {
        assert_eq!(omega_grid(0.0, 1.0, 0.25).unwrap(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(omega_grid(0.1, 0.3, 0.05).unwrap().len(), 5);
        assert!(omega_grid(1.0, 0.0, 0.1).is_err());
    }

    #[test]
    fn seeds_are_paired_across_omega() {
        assert_eq!(trial_seed(7, 1, 2, 3), trial_seed(7, 1, 2, 3));
        assert_ne!(trial_seed(7, 1, 2, 3), trial_seed(7, 1, 3, 2));
    }

    #[test]
    fn small_sweep_is_ordered() {
        let mut plan = SweepPlan::new(vec![0.5, 0.0], vec![0, 1], 1, 3);
        plan.personas.truncate(2);
        let out = run_sweep(&plan).unwrap();
        assert_eq!(out.trials.len(), 8);
        assert_eq!(out.summary.rows.len(), 4);
        assert_eq!(out.trials[0].omega, 0.5);
        assert_eq!(out.summary.best_per_condition().len(), 2);
    }
}
