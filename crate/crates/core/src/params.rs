//! Physical and controller constants shared by the whole stack.

use serde::{Deserialize, Serialize};

use crate::dynamics::natural_frequency;
use crate::{Error, Result};

/// Signed kinematic limits on the next-step displacement relative to the support foot.
///
/// The admissible box is `l_min/2 <= dx <= l_max/2`, `w_min/2 <= dy <= w_max/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicBounds {
    pub l_min: f64,
    pub l_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl KinematicBounds {
    pub fn x_range(&self) -> (f64, f64) {
        (self.l_min / 2.0, self.l_max / 2.0)
    }

    pub fn y_range(&self) -> (f64, f64) {
        (self.w_min / 2.0, self.w_max / 2.0)
    }

    pub fn contains(&self, dx: f64, dy: f64) -> bool {
        let (xl, xu) = self.x_range();
        let (yl, yu) = self.y_range();
        dx >= xl && dx <= xu && dy >= yl && dy <= yu
    }
}

impl Default for KinematicBounds {
    fn default() -> Self {
        Self {
            l_min: -0.6,
            l_max: 0.6,
            w_min: -0.4,
            w_max: 0.4,
        }
    }
}

/// Robot and loop constants.
///
/// `omega` is derived from `com_height` and `gravity`; it is stored so that a serialized
/// parameter block round-trips, and [`RobotParams::validate`] checks it stays consistent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    pub com_height: f64,
    pub gravity: f64,
    #[serde(default)]
    pub omega: f64,
    pub foot_length: f64,
    pub foot_width: f64,
    pub step_time_nominal: f64,
    #[serde(default)]
    pub kin_bounds: KinematicBounds,
    #[serde(default = "default_control_rate")]
    pub control_rate: f64,
}

fn default_control_rate() -> f64 {
    200.0
}

impl Default for RobotParams {
    fn default() -> Self {
        Self::new(0.834, 9.81, 0.24, 0.14, 0.5, KinematicBounds::default(), 200.0)
            .expect("default parameters are valid")
    }
}

impl RobotParams {
    pub fn new(
        com_height: f64,
        gravity: f64,
        foot_length: f64,
        foot_width: f64,
        step_time_nominal: f64,
        kin_bounds: KinematicBounds,
        control_rate: f64,
    ) -> Result<Self> {
        let omega = natural_frequency(com_height, gravity)?;
        let params = Self {
            com_height,
            gravity,
            omega,
            foot_length,
            foot_width,
            step_time_nominal,
            kin_bounds,
            control_rate,
        };
        params.validate()?;
        Ok(params)
    }

    /// Fill in `omega` when it was omitted (zero) and check every invariant.
    pub fn normalized(mut self) -> Result<Self> {
        if self.omega == 0.0 {
            self.omega = natural_frequency(self.com_height, self.gravity)?;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("com_height", self.com_height),
            ("gravity", self.gravity),
            ("foot_length", self.foot_length),
            ("foot_width", self.foot_width),
            ("step_time_nominal", self.step_time_nominal),
            ("control_rate", self.control_rate),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invalid(name, format!("must be finite and > 0, got {value}")));
            }
        }
        let expected = (self.gravity / self.com_height).sqrt();
        if !((self.omega - expected).abs() <= 1e-12 * expected) {
            return Err(Error::invalid(
                "omega",
                format!("must equal sqrt(gravity/com_height) = {expected}, got {}", self.omega),
            ));
        }
        let kb = &self.kin_bounds;
        if !(kb.l_min.is_finite() && kb.l_max.is_finite() && kb.l_min <= kb.l_max) {
            return Err(Error::invalid("kin_bounds", "requires l_min <= l_max"));
        }
        if !(kb.w_min.is_finite() && kb.w_max.is_finite() && kb.w_min <= kb.w_max) {
            return Err(Error::invalid("kin_bounds", "requires w_min <= w_max"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn half_foot(&self) -> (f64, f64) {
        (self.foot_length / 2.0, self.foot_width / 2.0)
    }
}

/// Joint range in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointRange {
    pub min_deg: f64,
    pub max_deg: f64,
}

impl JointRange {
    pub const fn new(min_deg: f64, max_deg: f64) -> Self {
        Self { min_deg, max_deg }
    }

    pub fn min_rad(&self) -> f64 {
        self.min_deg.to_radians()
    }

    pub fn max_rad(&self) -> f64 {
        self.max_deg.to_radians()
    }

    pub fn clamp_rad(&self, angle: f64) -> f64 {
        angle.clamp(self.min_rad(), self.max_rad())
    }
}

/// Joint ranges of the robot, used as workspace limits only.
pub mod joints {
    use super::JointRange;

    pub const HIP_PITCH: JointRange = JointRange::new(-50.0, 60.0);
    pub const HIP_ROLL: JointRange = JointRange::new(-30.0, 15.0);
    pub const HIP_YAW: JointRange = JointRange::new(-20.0, 10.0);
    pub const KNEE_PITCH: JointRange = JointRange::new(-5.0, 90.0);
    pub const ANKLE_PITCH: JointRange = JointRange::new(-50.0, 40.0);
    pub const ANKLE_ROLL: JointRange = JointRange::new(-20.0, 20.0);
    pub const SHOULDER_PITCH: JointRange = JointRange::new(-110.0, 80.0);
    pub const SHOULDER_ROLL: JointRange = JointRange::new(-90.0, -5.0);
    pub const SHOULDER_YAW: JointRange = JointRange::new(-60.0, 60.0);
    pub const ELBOW_PITCH: JointRange = JointRange::new(-90.0, 0.0);
    pub const WRIST_PITCH: JointRange = JointRange::new(-20.0, 20.0);
    pub const WRIST_ROLL: JointRange = JointRange::new(-20.0, 20.0);
    pub const WRIST_YAW: JointRange = JointRange::new(-90.0, 90.0);
    pub const FINGERS: JointRange = JointRange::new(0.0, 90.0);
}
