//! Linear inverted pendulum (LIPM) and divergent component of motion (DCM) kinematics.
//!
//! Planar model `x'' = omega^2 (x - p) + a_push` with constant CoM height, DCM `xi = x + x'/omega`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result, Vec2};

/// CoM position and velocity at an instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipmState {
    pub time: f64,
    pub com_pos: Vec2,
    pub com_vel: Vec2,
}

impl LipmState {
    pub fn at_rest(time: f64, com_pos: Vec2) -> Self {
        Self { time, com_pos, com_vel: Vec2::zeros() }
    }

    pub fn is_finite(&self) -> bool {
        self.time.is_finite()
            && self.com_pos.iter().all(|v| v.is_finite())
            && self.com_vel.iter().all(|v| v.is_finite())
    }
}

/// DCM derived from a [`LipmState`]. Only constructible through [`dcm_of_state`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DcmSample {
    time: f64,
    dcm: Vec2,
}

impl DcmSample {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn dcm(&self) -> Vec2 {
        self.dcm
    }
}

/// `sqrt(gravity / com_height)`.
pub fn natural_frequency(com_height: f64, gravity: f64) -> Result<f64> {
    if !(com_height > 0.0 && com_height.is_finite()) {
        return Err(Error::Domain(format!("com_height must be > 0, got {com_height}")));
    }
    if !(gravity > 0.0 && gravity.is_finite()) {
        return Err(Error::Domain(format!("gravity must be > 0, got {gravity}")));
    }
    Ok((gravity / com_height).sqrt())
}

pub fn dcm_of_state(state: &LipmState, omega: f64) -> DcmSample {
    debug_assert!(omega > 0.0);
    DcmSample {
        time: state.time,
        dcm: state.com_pos + state.com_vel / omega,
    }
}

/// One semi-implicit Euler step: velocity first, then position with the new velocity.
pub fn step_lipm(state: &LipmState, zmp: Vec2, push_accel: Vec2, dt: f64, omega: f64) -> LipmState {
    debug_assert!(dt > 0.0);
    let accel = (state.com_pos - zmp) * (omega * omega) + push_accel;
    let com_vel = state.com_vel + accel * dt;
    let com_pos = state.com_pos + com_vel * dt;
    LipmState { time: state.time + dt, com_pos, com_vel }
}

/// Exact zero-order-hold step: ZMP and push held constant over `dt`.
///
/// A constant push is equivalent to shifting the ZMP by `-a/omega^2`, so the DCM obeys the
/// same closed form as [`dcm_closed_form`] about the shifted point.
pub fn step_lipm_exact(state: &LipmState, zmp: Vec2, push_accel: Vec2, dt: f64, omega: f64) -> LipmState {
    debug_assert!(dt > 0.0);
    let pivot = zmp - push_accel / (omega * omega);
    let (s, c) = ((omega * dt).sinh(), (omega * dt).cosh());
    let offset = state.com_pos - pivot;
    let com_pos = pivot + offset * c + state.com_vel * (s / omega);
    let com_vel = offset * (omega * s) + state.com_vel * c;
    LipmState { time: state.time + dt, com_pos, com_vel }
}

/// `p + e^{omega t} (xi0 - p)`.
pub fn dcm_closed_form(dcm0: Vec2, zmp: Vec2, omega: f64, t: f64) -> Vec2 {
    debug_assert!(t >= 0.0);
    if t == 0.0 {
        return dcm0;
    }
    zmp + (dcm0 - zmp) * (omega * t).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn natural_frequency_examples() {
        // Reference values from an independent sqrt evaluation.
        assert_relative_eq!(natural_frequency(0.98, 9.81).unwrap(), 3.163_890_655_764_300_5, epsilon = 1e-12);
        assert_eq!(natural_frequency(9.81, 9.81).unwrap(), 1.0);
        assert_relative_eq!(natural_frequency(0.834, 9.81).unwrap(), 3.429_663_238_287_041, epsilon = 1e-12);
    }

    #[test]
    fn natural_frequency_domain() {
        assert!(matches!(natural_frequency(0.0, 9.81), Err(Error::Domain(_))));
        assert!(matches!(natural_frequency(1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dcm_examples() {
        let s = LipmState::at_rest(0.0, Vec2::zeros());
        assert_eq!(dcm_of_state(&s, 3.0).dcm(), Vec2::zeros());
        let s = LipmState { time: 0.0, com_pos: Vec2::new(0.1, 0.0), com_vel: Vec2::new(0.3, 0.0) };
        assert_relative_eq!(dcm_of_state(&s, 3.0).dcm(), Vec2::new(0.2, 0.0), epsilon = 1e-15);
        let s = LipmState { time: 0.0, com_pos: Vec2::new(0.0, -0.05), com_vel: Vec2::new(0.0, 0.15) };
        assert_relative_eq!(dcm_of_state(&s, 3.0).dcm(), Vec2::zeros(), epsilon = 1e-15);
    }

    #[test]
    fn step_at_equilibrium_only_advances_time() {
        let s = LipmState::at_rest(1.0, Vec2::new(0.3, -0.1));
        let n = step_lipm(&s, s.com_pos, Vec2::zeros(), 0.005, 3.0);
        assert_eq!(n.com_pos, s.com_pos);
        assert_eq!(n.com_vel, s.com_vel);
        assert_relative_eq!(n.time, 1.005);
    }

    #[test]
    fn single_euler_step_by_hand() {
        let s = LipmState::at_rest(0.0, Vec2::new(0.01, 0.0));
        let n = step_lipm(&s, Vec2::zeros(), Vec2::zeros(), 0.005, 3.0);
        assert_relative_eq!(n.com_vel.x, 0.000_45, epsilon = 1e-15);
        assert_relative_eq!(n.com_pos.x, 0.010_002_25, epsilon = 1e-15);
    }

    #[test]
    fn push_response_matches_closed_form() {
        // Constant push from rest: xi(t) = a/omega^2 (e^{omega t} - 1) = 0.045673266688 at t = 0.2.
        let omega = 3.0;
        let mut s = LipmState::at_rest(0.0, Vec2::zeros());
        for _ in 0..40 {
            s = step_lipm(&s, Vec2::zeros(), Vec2::new(0.5, 0.0), 0.005, omega);
        }
        let xi = dcm_of_state(&s, omega).dcm();
        assert!((xi.x - 0.045_673_266_688_361_6).abs() < 1e-3);
        assert_eq!(xi.y, 0.0);
    }

    #[test]
    fn exact_step_tracks_closed_form_dcm() {
        let omega = 3.4;
        let zmp = Vec2::new(0.02, -0.01);
        let push = Vec2::new(0.7, -0.3);
        let mut s = LipmState { time: 0.0, com_pos: Vec2::new(0.01, 0.02), com_vel: Vec2::new(0.05, -0.02) };
        let xi0 = dcm_of_state(&s, omega).dcm();
        for _ in 0..200 {
            s = step_lipm_exact(&s, zmp, push, 0.005, omega);
        }
        let pivot = zmp - push / (omega * omega);
        let expected = dcm_closed_form(xi0, pivot, omega, 1.0);
        assert_relative_eq!(dcm_of_state(&s, omega).dcm(), expected, epsilon = 1e-10);
    }

    #[test]
    fn closed_form_examples() {
        let p = Vec2::new(0.1, 0.2);
        assert_eq!(dcm_closed_form(p, p, 3.0, 0.7), p);
        let xi = dcm_closed_form(Vec2::new(0.05, 0.0), Vec2::zeros(), 3.0, 0.5);
        assert_relative_eq!(xi.x, 0.224_084_453_516_903_23, epsilon = 1e-14);
        assert_eq!(xi.y, 0.0);
        let xi0 = Vec2::new(-0.3, 0.4);
        assert_eq!(dcm_closed_form(xi0, p, 3.0, 0.0), xi0);
    }

    fn euler_gap(dt: f64) -> f64 {
        let omega = 3.0;
        let zmp = Vec2::zeros();
        let mut s = LipmState { time: 0.0, com_pos: Vec2::new(0.02, 0.0), com_vel: Vec2::new(-0.04, 0.0) };
        let xi0 = dcm_of_state(&s, omega).dcm();
        let n = (1.0 / dt).round() as usize;
        for _ in 0..n {
            s = step_lipm(&s, zmp, Vec2::zeros(), dt, omega);
        }
        (dcm_of_state(&s, omega).dcm() - dcm_closed_form(xi0, zmp, omega, 1.0)).norm()
    }

    #[test]
    fn euler_is_first_order() {
        let coarse = euler_gap(0.01);
        let fine = euler_gap(0.005);
        assert!(coarse / fine >= 1.8, "ratio {}", coarse / fine);
        let finer = euler_gap(0.0025);
        assert!(fine / finer >= 1.8, "ratio {}", fine / finer);
    }

    proptest! {
        #[test]
        fn dcm_diverges_monotonically(x in -1.0..1.0f64, y in -1.0..1.0f64, t1 in 0.0..2.0f64, dt in 1e-3..1.0f64) {
            let xi0 = Vec2::new(x, y);
            let p = Vec2::new(0.05, -0.02);
            prop_assume!((xi0 - p).norm() > 1e-6);
            let a = (dcm_closed_form(xi0, p, 3.0, t1) - p).norm();
            let b = (dcm_closed_form(xi0, p, 3.0, t1 + dt) - p).norm();
            prop_assert!(b > a);
        }

        #[test]
        fn dcm_of_state_is_linear(
            a in proptest::array::uniform4(-1.0..1.0f64),
            b in proptest::array::uniform4(-1.0..1.0f64),
            k in -3.0..3.0f64,
        ) {
            let omega = 3.3;
            let sa = LipmState { time: 0.0, com_pos: Vec2::new(a[0], a[1]), com_vel: Vec2::new(a[2], a[3]) };
            let sb = LipmState { time: 0.0, com_pos: Vec2::new(b[0], b[1]), com_vel: Vec2::new(b[2], b[3]) };
            let sum = LipmState { time: 0.0, com_pos: sa.com_pos * k + sb.com_pos, com_vel: sa.com_vel * k + sb.com_vel };
            let lhs = dcm_of_state(&sum, omega).dcm();
            let rhs = dcm_of_state(&sa, omega).dcm() * k + dcm_of_state(&sb, omega).dcm();
            prop_assert!((lhs - rhs).norm() < 1e-12);
        }
    }
}
