//! Instantaneous balance laws: DCM-error driven ZMP modification with foot-bound clamping,
//! and the measured-ZMP / CoM regulation law.

use serde::{Deserialize, Serialize};

use crate::{RobotParams, Vec2};

/// Default width of the window before step end in which the modification denominator is frozen.
pub const DEFAULT_SINGULARITY_GUARD: f64 = 0.05;

/// ZMP offset in the support-foot frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZmpModification {
    pub p_mod_raw: Vec2,
    pub p_mod: Vec2,
    pub saturated: [bool; 2],
}

impl ZmpModification {
    pub fn zero() -> Self {
        Self { p_mod_raw: Vec2::zeros(), p_mod: Vec2::zeros(), saturated: [false; 2] }
    }

    pub fn any_saturated(&self) -> bool {
        self.saturated[0] || self.saturated[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComRegGains {
    pub k_p: [f64; 2],
    pub k_c: [f64; 2],
}

impl Default for ComRegGains {
    fn default() -> Self {
        Self { k_p: [0.5, 0.5], k_c: [1.0, 1.0] }
    }
}

impl ComRegGains {
    pub fn is_valid(&self) -> bool {
        self.k_p.iter().chain(self.k_c.iter()).all(|g| g.is_finite()) && self.k_c.iter().all(|&g| g >= 0.0)
    }
}

/// `1 - e^{omega (t - T)}`, frozen at `t = T - guard` once inside the guard window.
pub fn modification_denominator(omega: f64, t: f64, step_time: f64, guard: f64) -> f64 {
    let remaining = (step_time - t).max(guard);
    1.0 - (-omega * remaining).exp()
}

/// ZMP offset that cancels the end-of-step DCM error when held for the rest of the step.
pub fn zmp_modification(dcm_err: Vec2, omega: f64, t: f64, step_time: f64, guard: f64) -> Vec2 {
    debug_assert!(t >= 0.0 && t <= step_time + 1e-9);
    dcm_err / modification_denominator(omega, t, step_time, guard)
}

/// Per-axis clamp to the foot rectangle `[-L/2, L/2] x [-W/2, W/2]`.
pub fn clamp_zmp(p_mod_raw: Vec2, params: &RobotParams) -> ZmpModification {
    let (hx, hy) = params.half_foot();
    let p_mod = Vec2::new(p_mod_raw.x.clamp(-hx, hx), p_mod_raw.y.clamp(-hy, hy));
    ZmpModification {
        p_mod_raw,
        p_mod,
        saturated: [p_mod_raw.x.abs() > hx, p_mod_raw.y.abs() > hy],
    }
}

/// Largest per-axis DCM error that the ZMP modification can absorb at `t` without saturating.
pub fn recoverable_bound(params: &RobotParams, t: f64, step_time: f64, guard: f64) -> Vec2 {
    let (hx, hy) = params.half_foot();
    Vec2::new(hx, hy) * modification_denominator(params.omega, t, step_time, guard)
}

/// `u = -k_p (p_zmp_ref - p_zmp_m) + k_c (x_com_ref - x_com_m)`, componentwise.
pub fn com_regulator(p_zmp_ref: Vec2, p_zmp_m: Vec2, x_com_ref: Vec2, x_com_m: Vec2, gains: &ComRegGains) -> Vec2 {
    let kp = Vec2::new(gains.k_p[0], gains.k_p[1]);
    let kc = Vec2::new(gains.k_c[0], gains.k_c[1]);
    -kp.component_mul(&(p_zmp_ref - p_zmp_m)) + kc.component_mul(&(x_com_ref - x_com_m))
}
