//! Intention weights and the weighted-centroid command position.
//!
//! Each object gets `W = ω·D(d) + (1−ω)·O(θ)` with `D(d) = 1/(1+d)` and
//! `O(θ) = exp(cos θ − 1)`. Weights above the stickiness threshold snap to 1,
//! then the scenario prior scales them. The column is commanded to the
//! weight-averaged object position.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{clamp_to_arena, wrap_angle, Arena, Pose, SimConfig, UserState, Vec2, Voi, VoiId};

/// Weights below this total are treated as "no object is wanted".
pub const DEGENERATE_TOTAL_WEIGHT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub id: VoiId,
    /// `W(d, θ)` before stickiness and prior.
    pub raw: f64,
    /// After stickiness, before the prior.
    pub sticky: f64,
    /// After stickiness and prior; the value used by the centroid.
    pub effective: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightVector {
    pub entries: Vec<WeightEntry>,
}

impl WeightVector {
    pub fn get(&self, id: &str) -> Option<&WeightEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn effective(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.effective)
    }

    pub fn total(&self) -> f64 {
        self.effective().sum()
    }

    /// Index of the highest effective weight; ties resolve to the lowest index.
    pub fn argmax(&self) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, w) in self.effective().enumerate() {
            if best.is_none_or(|(_, b)| w > b) {
                best = Some((i, w));
            }
        }
        best.map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandPosition {
    pub target: Vec2,
    /// Set when every weight vanished and the previous target was held.
    pub degenerate: bool,
}

impl CommandPosition {
    pub fn at(target: Vec2) -> Self {
        Self {
            target,
            degenerate: false,
        }
    }
}

/// `D(d) = 1 / (1 + d)`.
pub fn distance_score(d: f64) -> Result<f64> {
    if !d.is_finite() {
        return Err(Error::NonFinite("distance"));
    }
    if d < 0.0 {
        return Err(Error::OutOfRange {
            name: "distance",
            value: d,
            expected: ">= 0",
        });
    }
    Ok(1.0 / (1.0 + d))
}

/// Angle between the user's heading ray and the object's disc, in `[0, π]`.
///
/// Zero when the ray hits the disc or the user stands inside it.
pub fn angular_offset(user: &Pose, voi: &Voi) -> f64 {
    let to_voi = voi.position - user.position;
    let d = to_voi.norm();
    if d <= voi.radius {
        return 0.0;
    }
    let alpha = wrap_angle(to_voi.angle() - user.heading).abs();
    let half_width = (voi.radius / d).asin();
    (alpha - half_width).max(0.0)
}

/// `O(θ) = exp(cos θ − 1)`.
pub fn orientation_score(theta: f64) -> Result<f64> {
    if !theta.is_finite() {
        return Err(Error::NonFinite("theta"));
    }
    if !(0.0..=std::f64::consts::PI).contains(&theta) {
        return Err(Error::OutOfRange {
            name: "theta",
            value: theta,
            expected: "[0, pi]",
        });
    }
    Ok((theta.cos() - 1.0).exp())
}

/// Convex blend `ω·D(d) + (1−ω)·O(θ)`.
pub fn raw_weight(d: f64, theta: f64, omega: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&omega) {
        return Err(Error::OutOfRange {
            name: "omega",
            value: omega,
            expected: "[0, 1]",
        });
    }
    let dist = distance_score(d)?;
    let orient = orientation_score(theta)?;
    Ok(omega * dist + (1.0 - omega) * orient)
}

/// Snaps weights strictly above `threshold` to 1.
pub fn apply_stickiness(w: f64, threshold: f64) -> f64 {
    if w > threshold {
        1.0
    } else {
        w
    }
}

pub fn apply_prior(w: f64, prior: f64) -> f64 {
    prior * w
}

pub fn compute_weights(user: &UserState, vois: &[Voi], config: &SimConfig) -> Result<WeightVector> {
    if vois.is_empty() {
        return Err(Error::NoVois);
    }
    let entries = vois
        .iter()
        .map(|voi| {
            let d = voi.surface_distance(user.pose.position);
            let theta = angular_offset(&user.pose, voi);
            let raw = raw_weight(d, theta, config.omega)?;
            let sticky = apply_stickiness(raw, config.stickiness_threshold);
            Ok(WeightEntry {
                id: voi.id.clone(),
                raw,
                sticky,
                effective: apply_prior(sticky, voi.prior),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeightVector { entries })
}

/// Weighted centroid of the objects' physical positions, clamped to the arena.
pub fn command_position(
    weights: &WeightVector,
    vois: &[Voi],
    previous: &CommandPosition,
    arena: &Arena,
) -> Result<CommandPosition> {
    if weights.entries.len() != vois.len() {
        return Err(Error::WeightMismatch(format!(
            "{} weights for {} objects",
            weights.entries.len(),
            vois.len()
        )));
    }
    let mut total = 0.0;
    let mut sum = Vec2::ZERO;
    for (entry, voi) in weights.entries.iter().zip(vois) {
        if entry.id != voi.id {
            return Err(Error::WeightMismatch(format!(
                "weight for `{}` paired with object `{}`",
                entry.id, voi.id
            )));
        }
        total += entry.effective;
        sum += voi.physical_position() * entry.effective;
    }
    if total < DEGENERATE_TOTAL_WEIGHT {
        return Ok(CommandPosition {
            target: previous.target,
            degenerate: true,
        });
    }
    Ok(CommandPosition::at(clamp_to_arena(sum / total, arena)))
}
