//! Nominal footstep plan and the piecewise DCM reference it induces.
//!
//! The ZMP reference during step `i` sits at the footstep position `p_i`; the end-of-step DCM
//! targets come from the backward recursion
//! `xi_eos[i-1] = p_i + e^{-omega T_i} (xi_eos[i] - p_i)` started at a terminal DCM.

use serde::{Deserialize, Serialize};

use crate::params::KinematicBounds;
use crate::{Error, RobotParams, Result, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footstep {
    pub position: Vec2,
    pub nominal_duration: f64,
    pub support_side: Side,
}

/// Ordered footsteps; step `i` is the support phase on `steps[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FootstepPlan {
    steps: Vec<Footstep>,
    current_index: usize,
    bounds: KinematicBounds,
}

impl FootstepPlan {
    pub fn new(steps: Vec<Footstep>, current_index: usize, bounds: KinematicBounds) -> Result<Self> {
        let plan = Self { steps, current_index, bounds };
        plan.validate()?;
        Ok(plan)
    }

    fn validate(&self) -> Result<()> {
        if self.steps.is_empty() {
            return Err(Error::PlanRejected("plan has no steps".into()));
        }
        if self.current_index >= self.steps.len() {
            return Err(Error::PlanRejected(format!(
                "current index {} out of range for {} steps",
                self.current_index,
                self.steps.len()
            )));
        }
        for (i, step) in self.steps.iter().enumerate() {
            if !(step.nominal_duration > 0.0 && step.nominal_duration.is_finite()) {
                return Err(Error::PlanRejected(format!("step {i} has non-positive duration")));
            }
            if !step.position.iter().all(|v| v.is_finite()) {
                return Err(Error::PlanRejected(format!("step {i} position is not finite")));
            }
        }
        for (i, pair) in self.steps.windows(2).enumerate() {
            if pair[0].support_side == pair[1].support_side {
                return Err(Error::PlanRejected(format!("steps {i} and {} share a support side", i + 1)));
            }
            let d = pair[1].position - pair[0].position;
            // Tolerance absorbs rounding when a displacement was built at the box edge.
            let (xl, xu) = self.bounds.x_range();
            let (yl, yu) = self.bounds.y_range();
            let tol = 1e-12;
            if d.x < xl - tol || d.x > xu + tol || d.y < yl - tol || d.y > yu + tol {
                return Err(Error::PlanRejected(format!(
                    "displacement ({:.4}, {:.4}) between steps {i} and {} outside kinematic box [{xl}, {xu}] x [{yl}, {yu}]",
                    d.x,
                    d.y,
                    i + 1
                )));
            }
        }
        Ok(())
    }

    pub fn steps(&self) -> &[Footstep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn current_index(&self) -> usize {
        self.current_index
    }

    pub fn current(&self) -> &Footstep {
        &self.steps[self.current_index]
    }

    pub fn next(&self) -> Option<&Footstep> {
        self.steps.get(self.current_index + 1)
    }

    pub fn bounds(&self) -> &KinematicBounds {
        &self.bounds
    }

    /// Move support to the next step. Returns `false` on the last step.
    pub fn advance(&mut self) -> bool {
        if self.current_index + 1 < self.steps.len() {
            self.current_index += 1;
            true
        } else {
            false
        }
    }

    /// Replace step data from `index` on. Used by step adjustment; re-validates the plan.
    pub(crate) fn with_steps(&self, steps: Vec<Footstep>) -> Result<Self> {
        Self::new(steps, self.current_index, self.bounds)
    }
}

/// `n_steps` footsteps at `(i + 1) * stride` from an implicit stance at the origin.
pub fn plan_footsteps(params: &RobotParams, n_steps: usize, stride: Vec2) -> Result<FootstepPlan> {
    let steps = stepping_sequence(params, Vec2::zeros(), Side::Right, n_steps, stride)?;
    FootstepPlan::new(steps, 0, params.kin_bounds)
}

/// Plan whose step 0 is the stance at `start`, followed by `n_steps` planned steps.
pub fn plan_from_stance(
    params: &RobotParams,
    start: Vec2,
    stance_side: Side,
    n_steps: usize,
    stride: Vec2,
) -> Result<FootstepPlan> {
    let mut steps = vec![Footstep {
        position: start,
        nominal_duration: params.step_time_nominal,
        support_side: stance_side,
    }];
    if n_steps > 0 {
        steps.extend(stepping_sequence(params, start, stance_side, n_steps, stride)?);
    }
    FootstepPlan::new(steps, 0, params.kin_bounds)
}

fn stepping_sequence(
    params: &RobotParams,
    start: Vec2,
    previous_side: Side,
    n_steps: usize,
    stride: Vec2,
) -> Result<Vec<Footstep>> {
    if n_steps == 0 {
        return Err(Error::PlanRejected("n_steps must be >= 1".into()));
    }
    if !params.kin_bounds.contains(stride.x, stride.y) {
        let (xl, xu) = params.kin_bounds.x_range();
        let (yl, yu) = params.kin_bounds.y_range();
        return Err(Error::PlanRejected(format!(
            "stride ({}, {}) outside kinematic box [{xl}, {xu}] x [{yl}, {yu}]",
            stride.x, stride.y
        )));
    }
    let mut side = previous_side;
    Ok((0..n_steps)
        .map(|i| {
            side = side.other();
            Footstep {
                position: start + stride * (i as f64 + 1.0),
                nominal_duration: params.step_time_nominal,
                support_side: side,
            }
        })
        .collect())
}

/// Piecewise DCM / ZMP reference for a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct DcmReference {
    omega: f64,
    positions: Vec<Vec2>,
    durations: Vec<f64>,
    end_of_step: Vec<Vec2>,
}

impl DcmReference {
    pub fn end_of_step(&self, step: usize) -> Vec2 {
        self.end_of_step[step]
    }

    pub fn end_of_step_all(&self) -> &[Vec2] {
        &self.end_of_step
    }

    pub fn duration(&self, step: usize) -> f64 {
        self.durations[step]
    }

    /// `xi_ref(t) = p_i + e^{omega (t - T_i)} (xi_eos[i] - p_i)` for `t` measured from step start.
    pub fn dcm(&self, step: usize, t_in_step: f64) -> Vec2 {
        let p = self.positions[step];
        p + (self.end_of_step[step] - p) * (self.omega * (t_in_step - self.durations[step])).exp()
    }

    pub fn zmp(&self, step: usize) -> Vec2 {
        self.positions[step]
    }

    pub fn initial_dcm(&self) -> Vec2 {
        self.dcm(0, 0.0)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

pub fn dcm_reference(plan: &FootstepPlan, omega: f64, terminal_dcm: Vec2) -> DcmReference {
    let positions: Vec<Vec2> = plan.steps.iter().map(|s| s.position).collect();
    let durations: Vec<f64> = plan.steps.iter().map(|s| s.nominal_duration).collect();
    let n = positions.len();
    let mut end_of_step = vec![Vec2::zeros(); n];
    end_of_step[n - 1] = terminal_dcm;
    for i in (1..n).rev() {
        let p = positions[i];
        end_of_step[i - 1] = p + (end_of_step[i] - p) * (-omega * durations[i]).exp();
    }
    DcmReference { omega, positions, durations, end_of_step }
}
