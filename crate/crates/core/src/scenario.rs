//! Scenario files: TOML documents describing the robot, controller settings and a
//! time-ordered list of disturbance events.
//!
//! ```toml
//! name = "lateral push"
//! duration = 3.0
//! dt = 0.005
//!
//! [robot]
//! com_height = 0.834
//!
//! [[events]]
//! kind = "push"
//! t_start = 1.1
//! t_end = 1.105
//! direction = [0.0, -1.0]
//! acceleration = 12.0
//! ```
//!
//! Every section other than `name` and `duration` is optional and falls back to defaults.
//! Event kinds are `push` (`direction`, `acceleration` in m/s^2), `hand_pull` (`direction`,
//! `force` in N, `shape` = `ramp` | `constant`) and `needle` (`profile`, a CSV path relative to
//! the scenario file).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::balance::{ComRegGains, DEFAULT_SINGULARITY_GUARD};
use crate::collaboration::CollabConfig;
use crate::compliance::ComplianceConfig;
use crate::step_qp::StepWeights;
use crate::tactile::{DetectorConfig, FingertipModel};
use crate::{Error, Result, RobotParams, Vec2};

fn default_dt() -> f64 {
    0.005
}

fn default_fall_distance() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Horizontal CoM distance from the support foot that ends the run with a FALL verdict, m.
    #[serde(default = "default_fall_distance")]
    pub fall_distance: f64,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub balance: BalanceConfig,
    #[serde(default)]
    pub collaboration: CollabConfig,
    #[serde(default)]
    pub interaction: InteractionConfig,
    #[serde(default)]
    pub tactile: TactileConfig,
    #[serde(default)]
    pub compliance: ComplianceSettings,
    #[serde(default)]
    pub events: Vec<Event>,
}

/// In-place stepping schedule around the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanConfig {
    /// Lateral distance between left and right footholds, m.
    #[serde(default)]
    pub step_width: f64,
    /// Planned steps after the initial stance; by default enough to cover the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<usize>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self { step_width: 0.0, steps: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BalanceConfig {
    #[serde(default = "default_guard")]
    pub singularity_guard: f64,
    #[serde(default)]
    pub com_gains: ComRegGains,
    #[serde(default)]
    pub weights: StepWeights,
}

fn default_guard() -> f64 {
    DEFAULT_SINGULARITY_GUARD
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self { singularity_guard: default_guard(), com_gains: ComRegGains::default(), weights: StepWeights::default() }
    }
}

/// Hand-bar coupling used to turn a scripted pull into fingertip forces and a CoM disturbance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionConfig {
    /// Bar-to-hand stiffness, N/m.
    pub grip_stiffness: f64,
    /// CoM acceleration per N of interaction force, m/s^2/N.
    pub coupling: f64,
    /// Normal force on each fingertip while grasping, N.
    pub preload: f64,
    /// Hand position at rest in the shoulder frame, m.
    pub hand_start: [f64; 2],
}

impl Default for InteractionConfig {
    fn default() -> Self {
        Self { grip_stiffness: 500.0, coupling: 1.0 / 60.0, preload: 2.0, hand_start: [0.0, 0.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TactileConfig {
    #[serde(default)]
    pub model: FingertipModel,
    #[serde(default = "DetectorConfig::conservative")]
    pub needle_detector: DetectorConfig,
}

impl Default for TactileConfig {
    fn default() -> Self {
        Self { model: FingertipModel::default(), needle_detector: DetectorConfig::conservative() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplianceSettings {
    /// Half-width of the window around each touchdown, s.
    #[serde(default = "default_window")]
    pub window: f64,
    /// Vertical force reference during contact, N.
    #[serde(default = "default_f_z_ref")]
    pub f_z_ref: f64,
    #[serde(default)]
    pub controller: ComplianceConfig,
}

fn default_window() -> f64 {
    0.05
}

fn default_f_z_ref() -> f64 {
    350.0
}

impl Default for ComplianceSettings {
    fn default() -> Self {
        Self { window: default_window(), f_z_ref: default_f_z_ref(), controller: ComplianceConfig::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PullShape {
    /// Linear rise from zero at `t_start` to `force` at `t_end`, then held.
    #[default]
    Ramp,
    /// `force` between `t_start` and `t_end`, zero elsewhere.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    Push {
        t_start: f64,
        t_end: f64,
        direction: [f64; 2],
        acceleration: f64,
    },
    HandPull {
        t_start: f64,
        t_end: f64,
        direction: [f64; 2],
        force: f64,
        #[serde(default)]
        shape: PullShape,
    },
    Needle {
        t_start: f64,
        t_end: f64,
        profile: PathBuf,
    },
}

impl Event {
    pub fn window(&self) -> (f64, f64) {
        match *self {
            Event::Push { t_start, t_end, .. }
            | Event::HandPull { t_start, t_end, .. }
            | Event::Needle { t_start, t_end, .. } => (t_start, t_end),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Event::Push { .. } => "push",
            Event::HandPull { .. } => "hand_pull",
            Event::Needle { .. } => "needle",
        }
    }

    fn direction(&self) -> Option<[f64; 2]> {
        match *self {
            Event::Push { direction, .. } | Event::HandPull { direction, .. } => Some(direction),
            Event::Needle { .. } => None,
        }
    }

    /// Unit direction, if the event has one.
    pub fn unit_direction(&self) -> Option<Vec2> {
        self.direction().map(|d| Vec2::new(d[0], d[1]).normalize())
    }
}

impl Scenario {
    /// Minimal scenario: default robot, no events.
    pub fn new(name: impl Into<String>, duration: f64) -> Self {
        Self {
            name: name.into(),
            duration,
            dt: default_dt(),
            fall_distance: default_fall_distance(),
            robot: RobotParams::default(),
            plan: PlanConfig::default(),
            balance: BalanceConfig::default(),
            collaboration: CollabConfig::default(),
            interaction: InteractionConfig::default(),
            tactile: TactileConfig::default(),
            compliance: ComplianceSettings::default(),
            events: Vec::new(),
        }
    }

    /// Number of control ticks; the run logs `ticks() + 1` rows.
    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::Validation(format!("duration: must be > 0, got {}", self.duration)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Validation(format!("dt: must be > 0, got {}", self.dt)));
        }
        let n = (self.duration / self.dt).round();
        if n < 1.0 || (n * self.dt - self.duration).abs() > 1e-9 * self.duration.max(1.0) {
            return Err(Error::Validation(format!(
                "dt: {} does not divide duration {} into whole ticks",
                self.dt, self.duration
            )));
        }
        if !(self.fall_distance > 0.0) {
            return Err(Error::Validation("fall_distance: must be > 0".into()));
        }
        self.robot.validate().map_err(|e| Error::Validation(format!("robot: {e}")))?;
        if !(self.plan.step_width >= 0.0) {
            return Err(Error::Validation("plan.step_width: must be >= 0".into()));
        }
        let (_, w_max) = self.robot.kin_bounds.y_range();
        if self.plan.step_width > w_max {
            return Err(Error::Validation(format!(
                "plan.step_width: {} exceeds the lateral kinematic limit {w_max}",
                self.plan.step_width
            )));
        }
        if !(self.balance.singularity_guard > 0.0) {
            return Err(Error::Validation("balance.singularity_guard: must be > 0".into()));
        }
        if !self.balance.com_gains.is_valid() {
            return Err(Error::Validation("balance.com_gains: must be finite".into()));
        }
        self.collaboration.validate().map_err(|e| Error::Validation(format!("collaboration: {e}")))?;
        self.tactile.model.validate().map_err(|e| Error::Validation(format!("tactile.model: {e}")))?;
        let i = &self.interaction;
        if !(i.grip_stiffness > 0.0 && i.coupling >= 0.0 && i.preload >= 0.0) {
            return Err(Error::Validation(
                "interaction: grip_stiffness must be > 0, coupling and preload >= 0".into(),
            ));
        }
        if !(self.compliance.window >= 0.0) {
            return Err(Error::Validation("compliance.window: must be >= 0".into()));
        }

        let mut previous = f64::NEG_INFINITY;
        for (idx, event) in self.events.iter().enumerate() {
            let (t0, t1) = event.window();
            if !(t0.is_finite() && t1.is_finite()) || t0 < 0.0 {
                return Err(Error::Validation(format!("events[{idx}]: times must be finite and >= 0")));
            }
            if t1 < t0 {
                return Err(Error::Validation(format!("events[{idx}]: t_end {t1} precedes t_start {t0}")));
            }
            if t0 < previous {
                return Err(Error::Validation(format!(
                    "events[{idx}]: t_start {t0} is earlier than the previous event's {previous}"
                )));
            }
            previous = t0;
            if let Some(d) = event.direction() {
                if !(d[0].is_finite() && d[1].is_finite()) || d[0].hypot(d[1]) == 0.0 {
                    return Err(Error::Validation(format!("events[{idx}]: direction must be a non-zero vector")));
                }
            }
            match *event {
                Event::Push { acceleration, .. } if !acceleration.is_finite() => {
                    return Err(Error::Validation(format!("events[{idx}]: acceleration must be finite")));
                }
                Event::HandPull { force, .. } if !(force.is_finite() && force >= 0.0) => {
                    return Err(Error::Validation(format!("events[{idx}]: force must be >= 0")));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let mut s: Scenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.robot = s.robot.normalized().map_err(|e| Error::Validation(format!("robot: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(format!("cannot serialize scenario: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Read, parse and validate a scenario. Relative needle profile paths are resolved against the
/// scenario file's directory.
pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut s = Scenario::from_toml_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::Validation(m) => Error::Validation(format!("{}: {m}", path.display())),
        other => other,
    })?;
    let base = path.parent().unwrap_or(Path::new(""));
    for event in &mut s.events {
        if let Event::Needle { profile, .. } = event {
            if profile.is_relative() {
                *profile = base.join(&*profile);
            }
        }
    }
    Ok(s)
}
