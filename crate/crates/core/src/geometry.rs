//! Planar geometry, arena model and shared configuration.
//!
//! Frame convention: origin at one arena corner, +x along the width, +y along
//! the length, headings counter-clockwise from +x. Lengths are meters, angles
//! radians, times seconds.

use std::f64::consts::{PI, TAU};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(a: f64) -> Self {
        Self::new(a.cos(), a.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Direction angle in (−π, π]; `atan2` convention.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rescales the vector so its norm is at most `max`.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, rhs: Vec2) {
        self.x += rhs.x;
        self.y += rhs.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, rhs: Vec2) {
        self.x -= rhs.x;
        self.y -= rhs.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Wraps an angle into (−π, π].
pub fn normalize_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap_angle(a))
}

/// Infallible variant for internal callers that already hold finite values.
pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    // rem_euclid can land on exactly TAU for tiny negative inputs
    if r <= -PI {
        r += TAU;
    }
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: wrap_angle(heading),
        }
    }

    pub fn forward(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Arena {
    pub width: f64,
    pub length: f64,
    #[serde(default = "default_safety_margin")]
    pub safety_margin: f64,
}

fn default_safety_margin() -> f64 {
    0.02
}

impl Default for Arena {
    fn default() -> Self {
        Self {
            width: 4.0,
            length: 4.0,
            safety_margin: default_safety_margin(),
        }
    }
}

impl Arena {
    pub fn new(width: f64, length: f64, safety_margin: f64) -> Result<Self> {
        let arena = Self {
            width,
            length,
            safety_margin,
        };
        arena.validate("arena")?;
        Ok(arena)
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if !(self.width.is_finite() && self.width > 0.0) {
            return Err(Error::validation(format!("{path}.width"), "must be > 0"));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::validation(format!("{path}.length"), "must be > 0"));
        }
        let half = self.width.min(self.length) / 2.0;
        if !(self.safety_margin >= 0.0 && self.safety_margin < half) {
            return Err(Error::validation(
                format!("{path}.safety_margin"),
                format!("must lie in [0, {half})"),
            ));
        }
        Ok(())
    }

    /// Whether `p` lies inside the arena footprint (boundary included).
    pub fn contains(&self, p: Vec2) -> bool {
        p.is_finite() && (0.0..=self.width).contains(&p.x) && (0.0..=self.length).contains(&p.y)
    }

    /// Whether `p` respects the rail-end safety margin on both axes.
    pub fn within_margins(&self, p: Vec2, tol: f64) -> bool {
        let m = self.safety_margin;
        p.x >= m - tol && p.x <= self.width - m + tol && p.y >= m - tol && p.y <= self.length - m + tol
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.length / 2.0)
    }
}

/// Clamps each coordinate into `[safety_margin, extent − safety_margin]`.
pub fn clamp_to_arena(p: Vec2, arena: &Arena) -> Vec2 {
    let m = arena.safety_margin;
    Vec2::new(p.x.clamp(m, arena.width - m), p.y.clamp(m, arena.length - m))
}

pub type VoiId = String;

/// A virtual object of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Voi {
    pub id: VoiId,
    pub position: Vec2,
    pub radius: f64,
    /// Scenario prior probability of being interacted with; 1 is the pure intention model.
    #[serde(default = "default_prior")]
    pub prior: f64,
    /// Offset of the matching panel on the column, when several objects share one physical spot.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical_offset: Option<Vec2>,
}

fn default_prior() -> f64 {
    1.0
}

impl Voi {
    pub fn new(id: impl Into<VoiId>, position: Vec2, radius: f64) -> Self {
        Self {
            id: id.into(),
            position,
            radius,
            prior: 1.0,
            physical_offset: None,
        }
    }

    pub fn with_prior(mut self, prior: f64) -> Self {
        self.prior = prior;
        self
    }

    /// Where the column has to be for this object to be physically overlaid.
    pub fn physical_position(&self) -> Vec2 {
        self.position + self.physical_offset.unwrap_or(Vec2::ZERO)
    }

    /// Distance from `p` to the object's surface, floored at zero.
    pub fn surface_distance(&self, p: Vec2) -> f64 {
        (p.distance(self.position) - self.radius).max(0.0)
    }

    pub fn validate(&self, path: &str, arena: &Arena) -> Result<()> {
        if self.id.is_empty() {
            return Err(Error::validation(format!("{path}.id"), "must not be empty"));
        }
        if !self.position.is_finite() || !arena.contains(self.position) {
            return Err(Error::validation(
                format!("{path}.position"),
                "must be finite and inside the arena",
            ));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::validation(format!("{path}.radius"), "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.prior) {
            return Err(Error::validation(
                format!("{path}.prior"),
                format!("{} is outside [0, 1]", self.prior),
            ));
        }
        if let Some(off) = self.physical_offset {
            if !off.is_finite() {
                return Err(Error::validation(format!("{path}.physical_offset"), "must be finite"));
            }
        }
        Ok(())
    }
}

/// Tracked user pose at one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub pose: Pose,
    pub tracked: bool,
    pub time: f64,
}

impl UserState {
    pub fn tracked(pose: Pose, time: f64) -> Self {
        Self {
            pose,
            tracked: true,
            time,
        }
    }
}

/// Simulation constants. Field names double as the `[config]` keys of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// Blend of distance over orientation evidence.
    pub omega: f64,
    pub dt: f64,
    pub stickiness_threshold: f64,
    pub obstacle_radius_far: f64,
    pub obstacle_radius_near: f64,
    /// Surface distance at which the user counts as being at an object.
    pub near_voi_distance: f64,
    /// Width of the linear transition between the near and far obstacle radius.
    pub near_ramp: f64,
    /// Repulsion band outside the obstacle radius.
    pub influence_band: f64,
    /// Distance beyond `near_voi_distance` over which the band fades to zero.
    pub band_fade: f64,
    pub obstacle_stiffness: f64,
    pub success_distance: f64,
    /// User-to-surface distance at which the user's hand touches an object.
    pub contact_distance: f64,
    pub spring_stiffness: f64,
    pub spring_damping: f64,
    pub proxy_mass: f64,
    pub accel_limit: f64,
    pub tracking_loss_timeout: f64,
    pub trial_timeout: f64,
    pub rng_seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            omega: 0.175,
            dt: 1.0 / 75.0,
            stickiness_threshold: 0.8,
            obstacle_radius_far: 0.45,
            obstacle_radius_near: 0.20,
            near_voi_distance: 0.20,
            near_ramp: 0.10,
            influence_band: 0.30,
            band_fade: 0.60,
            obstacle_stiffness: 120.0,
            success_distance: 0.10,
            contact_distance: 0.20,
            spring_stiffness: 40.0,
            spring_damping: 12.6,
            proxy_mass: 1.0,
            accel_limit: 3.0,
            tracking_loss_timeout: 0.5,
            trial_timeout: 120.0,
            rng_seed: 0,
        }
    }
}

impl SimConfig {
    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = omega;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let unit = |name: &str, v: f64| -> Result<()> {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::validation(
                    format!("{path}.{name}"),
                    format!("{v} is outside [0, 1]"),
                ))
            }
        };
        unit("omega", self.omega)?;
        unit("stickiness_threshold", self.stickiness_threshold)?;

        let positive = [
            ("dt", self.dt),
            ("obstacle_radius_far", self.obstacle_radius_far),
            ("obstacle_radius_near", self.obstacle_radius_near),
            ("near_voi_distance", self.near_voi_distance),
            ("near_ramp", self.near_ramp),
            ("influence_band", self.influence_band),
            ("band_fade", self.band_fade),
            ("obstacle_stiffness", self.obstacle_stiffness),
            ("success_distance", self.success_distance),
            ("contact_distance", self.contact_distance),
            ("spring_stiffness", self.spring_stiffness),
            ("spring_damping", self.spring_damping),
            ("proxy_mass", self.proxy_mass),
            ("accel_limit", self.accel_limit),
            ("tracking_loss_timeout", self.tracking_loss_timeout),
            ("trial_timeout", self.trial_timeout),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(
                    format!("{path}.{name}"),
                    format!("{v} must be finite and > 0"),
                ));
            }
        }
        if self.obstacle_radius_near > self.obstacle_radius_far {
            return Err(Error::validation(
                format!("{path}.obstacle_radius_near"),
                "must not exceed obstacle_radius_far",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn normalize_angle_examples() {
        assert_eq!(normalize_angle(0.0).unwrap(), 0.0);
        assert!((normalize_angle(3.0 * PI).unwrap() - PI).abs() < EPS);
        assert!((normalize_angle(-1.5 * PI).unwrap() - PI / 2.0).abs() < EPS);
        assert!((normalize_angle(-PI).unwrap() - PI).abs() < EPS);
        assert!(normalize_angle(f64::NAN).is_err());
        assert!(normalize_angle(f64::INFINITY).is_err());
    }

    #[test]
    fn clamp_examples() {
        let arena = Arena::default();
        assert_eq!(clamp_to_arena(Vec2::new(2.0, 2.0), &arena), Vec2::new(2.0, 2.0));
        assert_eq!(clamp_to_arena(Vec2::new(-1.0, 2.0), &arena), Vec2::new(0.02, 2.0));
        assert_eq!(clamp_to_arena(Vec2::new(4.0, 4.0), &arena), Vec2::new(3.98, 3.98));
    }

    #[test]
    fn arena_validation() {
        assert!(Arena::new(4.0, 4.0, 0.02).is_ok());
        assert!(Arena::new(0.0, 4.0, 0.02).is_err());
        assert!(Arena::new(4.0, 4.0, 2.0).is_err());
        assert!(Arena::new(4.0, 4.0, -0.1).is_err());
    }

    #[test]
    fn voi_prior_error_names_field() {
        let arena = Arena::default();
        let voi = Voi::new("a", Vec2::new(1.0, 1.0), 0.05).with_prior(1.2);
        let err = voi.validate("vois[3]", &arena).unwrap_err().to_string();
        assert!(err.contains("vois[3].prior"), "{err}");
    }

    #[test]
    fn config_rejects_inverted_radii() {
        let cfg = SimConfig {
            obstacle_radius_near: 0.5,
            ..SimConfig::default()
        };
        assert!(cfg.validate("config").is_err());
        assert!(SimConfig::default().validate("config").is_ok());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_congruent(a in -1e4f64..1e4) {
            let n = normalize_angle(a).unwrap();
            prop_assert!(n > -PI && n <= PI);
            prop_assert_eq!(normalize_angle(n).unwrap(), n);
            let k = ((a - n) / TAU).round();
            prop_assert!((a - n - k * TAU).abs() < 1e-9);
        }

        #[test]
        fn clamp_is_idempotent_and_bounded(x in -10.0f64..10.0, y in -10.0f64..10.0) {
            let arena = Arena::default();
            let c = clamp_to_arena(Vec2::new(x, y), &arena);
            prop_assert!(arena.within_margins(c, 0.0));
            prop_assert_eq!(clamp_to_arena(c, &arena), c);
        }
    }
}
