//! Step position / step timing / DCM offset adjustment.
//!
//! All quantities are expressed in the current support-foot frame, where the nominal ZMP sits at
//! the origin. With `tau = e^{omega T}` the end-of-step DCM balance is linear in `tau_new`:
//!
//! ```text
//! p_err + b_err + xi_ref(t) e^{-omega t} (tau_ref - tau_new)
//!     = p_mod + e^{-omega t} tau_new (xi_err - p_mod)
//! ```
//!
//! `b_err` is eliminated through this equality, leaving a 3-variable box-constrained QP over
//! `(p_err_x, p_err_y, tau_new)` that is solved with [`crate::qp::BoxQp`].

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::balance::ZmpModification;
use crate::params::KinematicBounds;
use crate::planner::{Footstep, FootstepPlan};
use crate::qp::{ActiveBound, BoxQp};
use crate::{Error, Result, RobotParams, Vec2};

const MAX_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepWeights {
    pub w_px: f64,
    pub w_py: f64,
    pub w_bx: f64,
    pub w_by: f64,
    /// Regularizer on `tau_new - tau_ref`; keeps the QP strictly convex.
    #[serde(default = "default_w_tau")]
    pub w_tau: f64,
}

fn default_w_tau() -> f64 {
    1e-6
}

impl Default for StepWeights {
    fn default() -> Self {
        Self { w_px: 1.0, w_py: 1.0, w_bx: 100.0, w_by: 100.0, w_tau: default_w_tau() }
    }
}

impl StepWeights {
    fn validate(&self) -> Result<()> {
        let all = [self.w_px, self.w_py, self.w_bx, self.w_by, self.w_tau];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "must be finite and >= 0"));
        }
        if self.w_px + self.w_bx <= 0.0 || self.w_py + self.w_by <= 0.0 {
            return Err(Error::invalid("weights", "w_p + w_b must be > 0 on each axis"));
        }
        Ok(())
    }
}

/// Admissible range of `tau_new`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauBounds {
    pub min: f64,
    pub max: f64,
}

impl TauBounds {
    /// `[e^{omega max(t + 0.1, 0.3 T)}, e^{omega 1.5 T}]`.
    pub fn default_for(omega: f64, t: f64, step_time_ref: f64) -> Self {
        Self {
            min: (omega * (t + 0.1).max(0.3 * step_time_ref)).exp(),
            max: (omega * 1.5 * step_time_ref).exp(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAdjustProblem {
    pub dcm_err: Vec2,
    /// Reference DCM at `t`, support-foot frame.
    pub dcm_ref_now: Vec2,
    /// Clamped ZMP modification, support-foot frame.
    pub p_mod: Vec2,
    pub omega: f64,
    pub t: f64,
    pub tau_ref: f64,
    pub tau_bounds: TauBounds,
    /// Nominal next footstep relative to the support foot.
    pub next_step_ref: Vec2,
    pub weights: StepWeights,
    pub kin_bounds: KinematicBounds,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepAdjustSolution {
    pub p_step_err: Vec2,
    pub b_err: Vec2,
    pub tau_new: f64,
    pub new_step_time: f64,
    /// Time in step at which the problem was posed.
    pub t: f64,
    pub objective_value: f64,
    pub kkt_residual: f64,
    pub active_constraints: BTreeSet<ActiveBound>,
}

impl StepAdjustSolution {
    pub fn is_zero_adjustment(&self, tau_ref: f64, tol: f64) -> bool {
        self.p_step_err.amax() <= tol && self.b_err.amax() <= tol && (self.tau_new - tau_ref).abs() <= tol
    }
}

/// Assemble the adjustment problem at time `t_in_step` of the plan's current step.
///
/// `dcm_err` is the DCM error, `dcm_ref_now` the world-frame DCM reference at `t_in_step`.
pub fn build_problem(
    dcm_err: Vec2,
    dcm_ref_now: Vec2,
    zmp_mod: &ZmpModification,
    plan: &FootstepPlan,
    params: &RobotParams,
    weights: StepWeights,
    t_in_step: f64,
) -> Result<StepAdjustProblem> {
    let current = plan.current();
    let next = plan.next().ok_or(Error::NoNextStep { current: plan.current_index() })?;
    let step_time = current.nominal_duration;
    if !(t_in_step >= 0.0 && t_in_step <= step_time + 1e-9) {
        return Err(Error::Domain(format!("time in step {t_in_step} outside [0, {step_time}]")));
    }
    let omega = params.omega;
    let problem = StepAdjustProblem {
        dcm_err,
        dcm_ref_now: dcm_ref_now - current.position,
        p_mod: zmp_mod.p_mod,
        omega,
        t: t_in_step,
        tau_ref: (omega * step_time).exp(),
        tau_bounds: TauBounds::default_for(omega, t_in_step, step_time),
        next_step_ref: next.position - current.position,
        weights,
        kin_bounds: params.kin_bounds,
    };
    problem.validate()?;
    Ok(problem)
}

impl StepAdjustProblem {
    /// Checks well-formedness. `tau_ref` may fall below `tau_min` late in a step; the QP then
    /// simply cannot keep the nominal timing.
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !(self.omega > 0.0) {
            return Err(Error::invalid("omega", "must be > 0"));
        }
        if !(self.t >= 0.0) {
            return Err(Error::invalid("t", "must be >= 0"));
        }
        if !(self.tau_ref > 0.0) {
            return Err(Error::invalid("tau_ref", "must be > 0"));
        }
        let earliest = (self.omega * self.t).exp();
        if self.tau_bounds.min < earliest * (1.0 - 1e-12) {
            return Err(Error::invalid("tau_bounds", "tau_min must not end the step in the past"));
        }
        if self.tau_bounds.min > self.tau_bounds.max {
            return Err(Error::Infeasible(format!(
                "step time window empty: tau in [{}, {}] (t = {})",
                self.tau_bounds.min, self.tau_bounds.max, self.t
            )));
        }
        Ok(())
    }

    fn decay(&self) -> f64 {
        (-self.omega * self.t).exp()
    }

    /// Right-hand side of the equality for a given `tau_new`.
    pub fn rhs(&self, tau_new: f64) -> Vec2 {
        self.p_mod + (self.dcm_err - self.p_mod) * (self.decay() * tau_new)
    }

    /// Per-axis residual of the equality constraint.
    pub fn equality_residual(&self, p_err: Vec2, b_err: Vec2, tau_new: f64) -> Vec2 {
        let lhs = p_err + b_err + self.dcm_ref_now * (self.decay() * (self.tau_ref - tau_new));
        lhs - self.rhs(tau_new)
    }

    /// Box on `p_err` implied by the kinematic limits on `p_err + next_step_ref`.
    pub fn step_error_box(&self) -> [(f64, f64); 2] {
        let (xl, xu) = self.kin_bounds.x_range();
        let (yl, yu) = self.kin_bounds.y_range();
        [
            (xl - self.next_step_ref.x, xu - self.next_step_ref.x),
            (yl - self.next_step_ref.y, yu - self.next_step_ref.y),
        ]
    }

    /// `b_err(p, tau) = alpha + beta tau - p`, per axis.
    fn offset_coefficients(&self) -> (Vec2, Vec2) {
        let decay = self.decay();
        let alpha = self.p_mod - self.dcm_ref_now * (decay * self.tau_ref);
        let beta = (self.dcm_err - self.p_mod + self.dcm_ref_now) * decay;
        (alpha, beta)
    }

    fn dcm_offset(&self, p_err: Vec2, tau_new: f64) -> Vec2 {
        let (alpha, beta) = self.offset_coefficients();
        alpha + beta * tau_new - p_err
    }

    /// Weighted cost including the timing regularizer.
    pub fn objective(&self, p_err: Vec2, b_err: Vec2, tau_new: f64) -> f64 {
        let w = &self.weights;
        w.w_px * p_err.x * p_err.x
            + w.w_py * p_err.y * p_err.y
            + w.w_bx * b_err.x * b_err.x
            + w.w_by * b_err.y * b_err.y
            + w.w_tau * (tau_new - self.tau_ref).powi(2)
    }

    fn as_box_qp(&self) -> BoxQp {
        let w = &self.weights;
        let (alpha, beta) = self.offset_coefficients();
        let wp = [w.w_px, w.w_py];
        let wb = [w.w_bx, w.w_by];
        let mut h = DMatrix::zeros(3, 3);
        let mut g = DVector::zeros(3);
        for axis in 0..2 {
            h[(axis, axis)] = 2.0 * (wp[axis] + wb[axis]);
            h[(axis, 2)] = -2.0 * wb[axis] * beta[axis];
            h[(2, axis)] = h[(axis, 2)];
            h[(2, 2)] += 2.0 * wb[axis] * beta[axis] * beta[axis];
            g[axis] = -2.0 * wb[axis] * alpha[axis];
            g[2] += 2.0 * wb[axis] * alpha[axis] * beta[axis];
        }
        h[(2, 2)] += 2.0 * w.w_tau;
        g[2] -= 2.0 * w.w_tau * self.tau_ref;
        let [bx, by] = self.step_error_box();
        BoxQp {
            hessian: h,
            linear: g,
            lower: DVector::from_row_slice(&[bx.0, by.0, self.tau_bounds.min]),
            upper: DVector::from_row_slice(&[bx.1, by.1, self.tau_bounds.max]),
        }
    }
}

/// Smallest shift of `p_err` so that `p_err + reference` lies in `[lo, hi]` in floating point.
fn project_step(p_err: f64, reference: f64, lo: f64, hi: f64) -> f64 {
    let mut p = p_err;
    let mut guard = 0;
    while p + reference < lo && guard < 8 {
        p = p.next_up();
        guard += 1;
    }
    while p + reference > hi && guard < 16 {
        p = p.next_down();
        guard += 1;
    }
    p
}

pub fn solve(problem: &StepAdjustProblem) -> Result<StepAdjustSolution> {
    problem.validate()?;
    let [bx, by] = problem.step_error_box();
    let (xl, xu) = problem.kin_bounds.x_range();
    let (yl, yu) = problem.kin_bounds.y_range();
    if bx.0 > bx.1 || by.0 > by.1 {
        return Err(Error::Infeasible(format!(
            "kinematic box empty: x in [{xl}, {xu}], y in [{yl}, {yu}]"
        )));
    }
    let qp = problem.as_box_qp();
    let start = DVector::from_row_slice(&[0.0, 0.0, problem.tau_ref]);
    let raw = qp.solve(Some(&start), MAX_ITERATIONS)?;

    let r = problem.next_step_ref;
    let p_step_err = Vec2::new(project_step(raw.x[0], r.x, xl, xu), project_step(raw.x[1], r.y, yl, yu));
    let tau_new = raw.x[2].clamp(problem.tau_bounds.min, problem.tau_bounds.max);
    let b_err = problem.dcm_offset(p_step_err, tau_new);
    let x = DVector::from_row_slice(&[p_step_err.x, p_step_err.y, tau_new]);
    Ok(StepAdjustSolution {
        p_step_err,
        b_err,
        tau_new,
        new_step_time: tau_new.ln() / problem.omega,
        t: problem.t,
        objective_value: problem.objective(p_step_err, b_err, tau_new),
        kkt_residual: qp.kkt_residual(&x),
        active_constraints: raw.active.into_iter().collect(),
    })
}

/// Shift the next footstep (and every later one, keeping their relative layout) by the step
/// error, and retime the current step to end at the new step time.
pub fn apply_solution(plan: &FootstepPlan, sol: &StepAdjustSolution) -> Result<FootstepPlan> {
    let remaining = sol.new_step_time - sol.t;
    if !(remaining > 0.0) {
        return Err(Error::SolutionRejected(format!(
            "new step time {} is not after the current time in step {}",
            sol.new_step_time, sol.t
        )));
    }
    let current = plan.current_index();
    if plan.next().is_none() {
        return Err(Error::NoNextStep { current });
    }
    let steps: Vec<Footstep> = plan
        .steps()
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = *s;
            if i == current {
                s.nominal_duration = sol.new_step_time;
            } else if i > current {
                s.position += sol.p_step_err;
            }
            s
        })
        .collect();
    plan.with_steps(steps)
}
