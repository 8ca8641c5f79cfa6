//! Whole-body collaboration escalation: tactile deviation drives arm admittance first, then a
//! CoM shift, then a step request once the DCM error outgrows what ZMP modification absorbs.

use serde::{Deserialize, Serialize};

use crate::balance::{recoverable_bound, ZmpModification, DEFAULT_SINGULARITY_GUARD};
use crate::tactile::{grasp_cue_above, HandLayout, TactileFrame};
use crate::{Error, Result, RobotParams, Vec2};

/// Axis components below this share of the cue direction do not count as "demanded".
const DEMANDED_AXIS_SHARE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollabPhase {
    Idle,
    ArmAdjust,
    ComShift,
    Stepping,
}

impl CollabPhase {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            CollabPhase::Idle => "idle",
            CollabPhase::ArmAdjust => "arm_adjust",
            CollabPhase::ComShift => "com_shift",
            CollabPhase::Stepping => "stepping",
        }
    }

    fn lower(self) -> Self {
        match self {
            CollabPhase::Idle | CollabPhase::ArmAdjust => CollabPhase::Idle,
            CollabPhase::ComShift => CollabPhase::ArmAdjust,
            CollabPhase::Stepping => CollabPhase::ComShift,
        }
    }
}

/// Axis-aligned hand workspace in the shoulder frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HandLimits {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Default for HandLimits {
    fn default() -> Self {
        Self { min: [-0.05, -0.1], max: [0.05, 0.1] }
    }
}

impl HandLimits {
    pub fn validate(&self) -> Result<()> {
        if (0..2).any(|i| !(self.min[i] <= self.max[i])) {
            return Err(Error::invalid("hand_limits", "min must not exceed max"));
        }
        Ok(())
    }

    pub fn clamp(&self, p: Vec2) -> Vec2 {
        Vec2::new(p.x.clamp(self.min[0], self.max[0]), p.y.clamp(self.min[1], self.max[1]))
    }

    pub fn contains(&self, p: Vec2) -> bool {
        (0..2).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollabThresholds {
    pub pressure_activate: f64,
    pub pressure_clear: f64,
    /// Hand speed per Pa of deviation, m/s/Pa.
    pub arm_gain: f64,
    pub dcm_step_trigger: f64,
}

impl CollabThresholds {
    /// Trigger at the largest DCM error ZMP modification can absorb at the start of a step.
    pub fn default_for(params: &RobotParams) -> Self {
        let bound = recoverable_bound(params, 0.0, params.step_time_nominal, DEFAULT_SINGULARITY_GUARD);
        Self {
            pressure_activate: 5.0,
            pressure_clear: 2.5,
            arm_gain: 0.002,
            dcm_step_trigger: bound.x.min(bound.y),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pressure_clear >= 0.0 && self.pressure_clear < self.pressure_activate) {
            return Err(Error::invalid("pressure_clear", "must satisfy 0 <= clear < activate"));
        }
        if !(self.arm_gain >= 0.0) {
            return Err(Error::invalid("arm_gain", "must be >= 0"));
        }
        if !(self.dcm_step_trigger > 0.0) {
            return Err(Error::invalid("dcm_step_trigger", "must be > 0"));
        }
        Ok(())
    }
}

impl Default for CollabThresholds {
    fn default() -> Self {
        Self::default_for(&RobotParams::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollabConfig {
    pub thresholds: CollabThresholds,
    #[serde(default)]
    pub layout: HandLayout,
    #[serde(default)]
    pub hand_limits: HandLimits,
    /// Time the deviation must stay below `pressure_clear` before each de-escalation, s.
    #[serde(default = "default_dwell")]
    pub dwell: f64,
    /// CoM reference offset per unit force direction, m.
    #[serde(default = "default_com_offset_gain")]
    pub com_offset_gain: f64,
    /// Half-widths of the CoM offset box, m.
    #[serde(default = "default_com_offset_limit")]
    pub com_offset_limit: [f64; 2],
}

fn default_dwell() -> f64 {
    0.2
}

fn default_com_offset_gain() -> f64 {
    0.03
}

fn default_com_offset_limit() -> [f64; 2] {
    [0.04, 0.04]
}

impl Default for CollabConfig {
    fn default() -> Self {
        Self {
            thresholds: CollabThresholds::default(),
            layout: HandLayout::default(),
            hand_limits: HandLimits::default(),
            dwell: default_dwell(),
            com_offset_gain: default_com_offset_gain(),
            com_offset_limit: default_com_offset_limit(),
        }
    }
}

impl CollabConfig {
    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        self.layout.validate()?;
        self.hand_limits.validate()?;
        if !(self.dwell >= 0.0) {
            return Err(Error::invalid("dwell", "must be >= 0"));
        }
        if !(self.com_offset_gain >= 0.0) || self.com_offset_limit.iter().any(|l| !(*l >= 0.0)) {
            return Err(Error::invalid("com_offset", "gain and limits must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollabState {
    pub phase: CollabPhase,
    pub hand_pos: Vec2,
    pub com_offset: Vec2,
    /// Total time spent in each phase, indexed by [`CollabPhase::index`].
    pub timers: [f64; 4],
    /// Time since the last phase change.
    pub time_in_phase: f64,
    /// Continuous time with the deviation below `pressure_clear`.
    pub clear_time: f64,
    /// Most recent cue direction, also used as the inferred force direction.
    pub force_direction: Option<Vec2>,
    support_phase: u64,
    requested_in: Option<u64>,
}

impl CollabState {
    pub fn new(hand_pos: Vec2) -> Self {
        Self {
            phase: CollabPhase::Idle,
            hand_pos,
            com_offset: Vec2::zeros(),
            timers: [0.0; 4],
            time_in_phase: 0.0,
            clear_time: 0.0,
            force_direction: None,
            support_phase: 0,
            requested_in: None,
        }
    }

    /// Call when the support foot changes; re-arms the step request.
    pub fn on_support_switch(&mut self) {
        self.support_phase += 1;
    }

    pub fn support_phase(&self) -> u64 {
        self.support_phase
    }

    fn enter(&mut self, phase: CollabPhase) {
        if phase != self.phase {
            self.phase = phase;
            self.time_in_phase = 0.0;
        }
    }
}

impl Default for CollabState {
    fn default() -> Self {
        Self::new(Vec2::zeros())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollabCommands {
    pub hand_vel: Vec2,
    pub com_reg_enable: bool,
    pub request_step: bool,
}

impl CollabCommands {
    pub fn none() -> Self {
        Self { hand_vel: Vec2::zeros(), com_reg_enable: false, request_step: false }
    }
}

/// CoM reference offset opposite the inferred force direction, saturated per axis.
pub fn com_reference_offset(
    state: &CollabState,
    force_direction: Vec2,
    magnitude_gain: f64,
    limit: [f64; 2],
) -> Result<Vec2> {
    if state.phase != CollabPhase::ComShift {
        return Err(Error::State(format!("CoM offset requested in phase {}", state.phase.name())));
    }
    let raw = -force_direction * magnitude_gain;
    Ok(Vec2::new(raw.x.clamp(-limit[0], limit[0]), raw.y.clamp(-limit[1], limit[1])))
}

fn demanded_axes(direction: Vec2) -> impl Iterator<Item = usize> {
    (0..2).filter(move |&i| direction[i].abs() >= DEMANDED_AXIS_SHARE)
}

fn at_limit_along(hand: Vec2, limits: &HandLimits, direction: Vec2) -> bool {
    demanded_axes(direction).any(|i| {
        if direction[i] > 0.0 {
            hand[i] >= limits.max[i]
        } else {
            hand[i] <= limits.min[i]
        }
    })
}

/// Advance the escalation state machine by one control tick.
pub fn update(
    state: &CollabState,
    frame: &TactileFrame,
    baseline: &TactileFrame,
    dcm_err: Vec2,
    zmp_mod: &ZmpModification,
    config: &CollabConfig,
    dt: f64,
) -> Result<(CollabState, CollabCommands)> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    let th = &config.thresholds;
    let mut next = state.clone();
    let mut cmd = CollabCommands::none();

    // Cues down to the clear level keep an engaged phase alive; activation needs the higher level.
    let cue = grasp_cue_above(frame, baseline, &config.layout, th.pressure_clear)?;
    let engaged = cue.is_some();
    next.clear_time = if engaged { 0.0 } else { state.clear_time + dt };
    if let Some(c) = cue {
        next.force_direction = Some(c.direction);
    }

    match state.phase {
        CollabPhase::Idle => {
            if let Some(c) = cue.filter(|c| c.magnitude >= th.pressure_activate) {
                next.enter(CollabPhase::ArmAdjust);
                next.force_direction = Some(c.direction);
            }
        }
        phase => {
            if !engaged && next.clear_time >= config.dwell {
                next.enter(phase.lower());
                next.clear_time = 0.0;
            }
        }
    }

    if next.phase != CollabPhase::Idle {
        if let Some(c) = cue {
            cmd.hand_vel = c.direction * (th.arm_gain * c.magnitude);
            next.hand_pos = config.hand_limits.clamp(state.hand_pos + cmd.hand_vel * dt);
        }
    }

    // Escalation is evaluated against the post-motion hand position.
    if next.phase == CollabPhase::ArmAdjust && state.phase == CollabPhase::ArmAdjust {
        if let Some(c) = cue {
            if at_limit_along(next.hand_pos, &config.hand_limits, c.direction) {
                next.enter(CollabPhase::ComShift);
            }
        }
    }

    if next.phase == CollabPhase::ComShift {
        if let Some(dir) = next.force_direction {
            next.com_offset = com_reference_offset(&next, dir, config.com_offset_gain, config.com_offset_limit)?;
        }
        let relevant_saturated = next
            .force_direction
            .map(|d| demanded_axes(d).any(|i| zmp_mod.saturated[i]))
            .unwrap_or_else(|| zmp_mod.any_saturated());
        if engaged && state.phase == CollabPhase::ComShift && (dcm_err.norm() > th.dcm_step_trigger || relevant_saturated)
        {
            next.enter(CollabPhase::Stepping);
        }
    }

    match next.phase {
        CollabPhase::Idle | CollabPhase::ArmAdjust => next.com_offset = Vec2::zeros(),
        CollabPhase::ComShift | CollabPhase::Stepping => cmd.com_reg_enable = true,
    }

    if next.phase == CollabPhase::Stepping && engaged && next.requested_in != Some(next.support_phase) {
        cmd.request_step = true;
        next.requested_in = Some(next.support_phase);
    }

    next.timers[next.phase.index()] += dt;
    next.time_in_phase += dt;
    Ok((next, cmd))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn frame(p: [f64; 4]) -> TactileFrame {
        TactileFrame { time: 0.0, pressures: p.to_vec() }
    }

    fn config() -> CollabConfig {
        CollabConfig {
            thresholds: CollabThresholds {
                pressure_activate: 4.0,
                pressure_clear: 2.0,
                arm_gain: 0.01,
                dcm_step_trigger: 0.05,
            },
            ..Default::default()
        }
    }

    // Index loaded at +y with little unloaded: cue direction is -y, so use the opposite pattern for +y.
    fn plus_y(dev: f64) -> TactileFrame {
        frame([-dev, 0.0, 0.0, dev])
    }

    #[test]
    fn idle_stays_idle_without_deviation() {
        let cfg = config();
        let base = frame([0.0; 4]);
        let (s, c) = update(&CollabState::default(), &base, &base, Vec2::zeros(), &ZmpModification::zero(), &cfg, 0.005)
            .unwrap();
        assert_eq!(s.phase, CollabPhase::Idle);
        assert_eq!(c, CollabCommands::none());
    }

    #[test]
    fn deviation_starts_arm_motion() {
        let cfg = config();
        let base = frame([0.0; 4]);
        let (s, c) =
            update(&CollabState::default(), &plus_y(5.0), &base, Vec2::zeros(), &ZmpModification::zero(), &cfg, 0.005)
                .unwrap();
        assert_eq!(s.phase, CollabPhase::ArmAdjust);
        assert_relative_eq!(c.hand_vel, Vec2::new(0.0, 0.01 * 5.0), epsilon = 1e-15);
        assert_relative_eq!(s.hand_pos, Vec2::new(0.0, 0.05 * 0.005), epsilon = 1e-15);
        assert!(!c.com_reg_enable && !c.request_step);
    }

    #[test]
    fn escalation_order_and_single_request() {
        let cfg = config();
        let base = frame([0.0; 4]);
        let mut s = CollabState::new(Vec2::new(0.0, cfg.hand_limits.max[1] - 1e-4));
        let mut phases = vec![s.phase];
        let mut requests = 0;
        for k in 0..200 {
            let err = Vec2::new(0.0, 0.001 * k as f64);
            let (n, c) = update(&s, &plus_y(6.0), &base, err, &ZmpModification::zero(), &cfg, 0.005).unwrap();
            assert!(cfg.hand_limits.contains(n.hand_pos));
            if n.phase != *phases.last().unwrap() {
                phases.push(n.phase);
            }
            requests += c.request_step as usize;
            s = n;
        }
        assert_eq!(
            phases,
            [CollabPhase::Idle, CollabPhase::ArmAdjust, CollabPhase::ComShift, CollabPhase::Stepping]
        );
        assert_eq!(requests, 1);
        assert_relative_eq!(s.com_offset, Vec2::new(0.0, -0.03), epsilon = 1e-15);

        s.on_support_switch();
        let (_, c) = update(&s, &plus_y(6.0), &base, Vec2::new(0.0, 0.3), &ZmpModification::zero(), &cfg, 0.005).unwrap();
        assert!(c.request_step);
    }

    #[test]
    fn saturation_on_demanded_axis_triggers_step() {
        let cfg = config();
        let base = frame([0.0; 4]);
        let mut s = CollabState::new(Vec2::zeros());
        s.phase = CollabPhase::ComShift;
        s.force_direction = Some(Vec2::new(0.0, 1.0));
        let mut zm = ZmpModification::zero();
        zm.saturated = [true, false];
        let (n, _) = update(&s, &plus_y(6.0), &base, Vec2::zeros(), &zm, &cfg, 0.005).unwrap();
        assert_eq!(n.phase, CollabPhase::ComShift);
        zm.saturated = [false, true];
        let (n, c) = update(&s, &plus_y(6.0), &base, Vec2::zeros(), &zm, &cfg, 0.005).unwrap();
        assert_eq!(n.phase, CollabPhase::Stepping);
        assert!(c.request_step && c.com_reg_enable);
    }

    #[test]
    fn hysteresis_band_does_not_chatter() {
        let cfg = config();
        let base = frame([0.0; 4]);
        for start in [CollabPhase::Idle, CollabPhase::ArmAdjust] {
            let mut s = CollabState::default();
            s.phase = start;
            let mut transitions = 0;
            for k in 0..400 {
                let dev = 3.0 + 0.9 * (k as f64 * 0.3).sin();
                let (n, _) = update(&s, &plus_y(dev), &base, Vec2::zeros(), &ZmpModification::zero(), &cfg, 0.005).unwrap();
                transitions += (n.phase != s.phase) as usize;
                s = n;
            }
            assert!(transitions <= 1, "{start:?}: {transitions}");
        }
    }

    #[test]
    fn clears_after_dwell() {
        let cfg = config();
        let base = frame([0.0; 4]);
        let mut s = CollabState::default();
        s.phase = CollabPhase::ComShift;
        let mut phases = vec![s.phase];
        let mut t_lower = None;
        for k in 1..=200 {
            let (n, _) = update(&s, &base, &base, Vec2::zeros(), &ZmpModification::zero(), &cfg, 0.005).unwrap();
            if n.phase != s.phase {
                phases.push(n.phase);
                t_lower.get_or_insert(k as f64 * 0.005);
            }
            s = n;
        }
        assert_eq!(phases, [CollabPhase::ComShift, CollabPhase::ArmAdjust, CollabPhase::Idle]);
        assert!(t_lower.unwrap() >= cfg.dwell - 1e-9);
        assert_eq!(s.com_offset, Vec2::zeros());
    }

    #[test]
    fn offset_examples() {
        let mut s = CollabState::default();
        assert!(matches!(com_reference_offset(&s, Vec2::new(0.0, 1.0), 0.03, [0.04; 2]), Err(Error::State(_))));
        s.phase = CollabPhase::ComShift;
        assert_eq!(com_reference_offset(&s, Vec2::new(0.0, 1.0), 0.03, [0.04; 2]).unwrap(), Vec2::new(0.0, -0.03));
        assert_eq!(com_reference_offset(&s, Vec2::new(1.0, 0.0), 0.06, [0.04; 2]).unwrap(), Vec2::new(-0.04, 0.0));
    }

    #[test]
    fn bad_dt_and_thresholds() {
        let base = frame([0.0; 4]);
        let r = update(&CollabState::default(), &base, &base, Vec2::zeros(), &ZmpModification::zero(), &config(), 0.0);
        assert!(matches!(r, Err(Error::Domain(_))));
        let mut th = config().thresholds;
        th.pressure_clear = th.pressure_activate;
        assert!(th.validate().is_err());
    }

    #[test]
    fn default_trigger_is_recoverable_bound() {
        let p = RobotParams::default();
        let th = CollabThresholds::default_for(&p);
        let expected = 0.07 * (1.0 - (-p.omega * 0.5).exp());
        assert_relative_eq!(th.dcm_step_trigger, expected, epsilon = 1e-15);
    }
}
