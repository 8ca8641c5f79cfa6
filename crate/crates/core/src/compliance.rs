//! Touchdown compliance: leg-length admittance on vertical force, pre-touchdown clearance
//! regulation from the bump sensors, and ankle roll/pitch from the bump-reading plane.
//!
//! These are minimal proportional/admittance forms and make no claim to reproduce any specific
//! compliance controller.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::params::joints;
use crate::{Error, Result};

/// Bump sensor range, m.
pub const BUMP_RANGE: f64 = 0.02;

/// Four vertical clearance readings in `[0, BUMP_RANGE]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpArray {
    readings: [f64; 4],
}

impl BumpArray {
    pub fn new(readings: [f64; 4]) -> Result<Self> {
        if readings.iter().any(|r| !(0.0..=BUMP_RANGE).contains(r)) {
            return Err(Error::Domain(format!("bump readings must lie in [0, {BUMP_RANGE}], got {readings:?}")));
        }
        Ok(Self { readings })
    }

    /// Sensor model: clearances beyond the range read as the range, penetration reads zero.
    pub fn saturating(clearances: [f64; 4]) -> Self {
        Self { readings: clearances.map(|c| if c.is_nan() { BUMP_RANGE } else { c.clamp(0.0, BUMP_RANGE) }) }
    }

    pub fn readings(&self) -> [f64; 4] {
        self.readings
    }

    pub fn mean(&self) -> f64 {
        self.readings.iter().sum::<f64>() / 4.0
    }
}

/// Sensor positions in the sole frame (x forward, y left), m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpGeometry {
    pub positions: [[f64; 2]; 4],
}

impl Default for BumpGeometry {
    /// Front-left, front-right, rear-left, rear-right.
    fn default() -> Self {
        Self { positions: [[0.1, 0.05], [0.1, -0.05], [-0.1, 0.05], [-0.1, -0.05]] }
    }
}

/// `gain (f_ref - f_meas) dt`, clamped to `±max_increment`.
pub fn leg_length_admittance(f_z_meas: f64, f_z_ref: f64, gain: f64, dt: f64, max_increment: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("dt must be > 0, got {dt}")));
    }
    Ok((gain * (f_z_ref - f_z_meas) * dt).clamp(-max_increment, max_increment))
}

/// `gain (mean(readings) - target)`; positive lowers the foot.
pub fn clearance_regulator(bumps: &BumpArray, target: f64, gain: f64) -> Result<f64> {
    if !(target > 0.0 && target < BUMP_RANGE) {
        return Err(Error::Domain(format!("clearance target must lie in (0, {BUMP_RANGE}), got {target}")));
    }
    Ok(gain * (bumps.mean() - target))
}

/// `(delta_roll, delta_pitch)` matching the sole to the least-squares ground plane under the
/// bump sensors, scaled by `gain` and clamped to the ankle joint ranges.
///
/// Clearance rising toward the toe means the ground falls away in front, so the toe pitches
/// down (positive pitch); clearance rising to the left rolls the left edge down (negative roll).
pub fn ankle_orientation_from_bumps(bumps: &BumpArray, geometry: &BumpGeometry, gain: f64) -> Result<(f64, f64)> {
    let (slope_x, slope_y) = plane_slopes(bumps, geometry)?;
    let roll = joints::ANKLE_ROLL.clamp_rad(-gain * slope_y.atan());
    let pitch = joints::ANKLE_PITCH.clamp_rad(gain * slope_x.atan());
    Ok((roll, pitch))
}

/// Fit `h = c + a x + b y`; returns `(a, b)`.
fn plane_slopes(bumps: &BumpArray, geometry: &BumpGeometry) -> Result<(f64, f64)> {
    let n = 4.0;
    let pts = geometry.positions;
    let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let scale = pts.iter().map(|p| (p[0] - mx).hypot(p[1] - my)).fold(0.0f64, f64::max);
    if !(scale > 0.0) {
        return Err(Error::Geometry("bump sensors coincide".into()));
    }
    let mut m = Matrix3::zeros();
    let mut rhs = Vector3::zeros();
    let h = bumps.readings();
    for (p, hi) in pts.iter().zip(h) {
        let row = Vector3::new(1.0, (p[0] - mx) / scale, (p[1] - my) / scale);
        m += row * row.transpose();
        rhs += row * hi;
    }
    if m.determinant().abs() < 1e-9 {
        return Err(Error::Geometry("bump sensors are collinear; plane tilt undetermined".into()));
    }
    let coef = m.cholesky().ok_or_else(|| Error::Geometry("plane fit is singular".into()))?.solve(&rhs);
    Ok((coef[1] / scale, coef[2] / scale))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplianceConfig {
    pub admittance_gain: f64,
    pub max_increment: f64,
    pub clearance_target: f64,
    pub clearance_gain: f64,
    pub ankle_gain: f64,
    #[serde(default)]
    pub geometry: BumpGeometry,
}

impl Default for ComplianceConfig {
    fn default() -> Self {
        Self {
            admittance_gain: 2e-5,
            max_increment: 5e-5,
            clearance_target: 0.005,
            clearance_gain: 1.0,
            ankle_gain: 1.0,
            geometry: BumpGeometry::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComplianceOutput {
    /// Leg-length increment from force feedback (contact only), m.
    pub leg_increment: f64,
    /// Pre-touchdown lowering command (swing only), m.
    pub clearance_command: f64,
    pub delta_roll: f64,
    pub delta_pitch: f64,
}

/// Two-layer touchdown compliance with an accumulated leg-length offset.
#[derive(Debug, Clone, Default)]
pub struct TouchdownCompliance {
    pub config: ComplianceConfig,
    pub leg_offset: f64,
}

impl TouchdownCompliance {
    pub fn new(config: ComplianceConfig) -> Self {
        Self { config, leg_offset: 0.0 }
    }

    pub fn update(&mut self, in_contact: bool, f_z_meas: f64, f_z_ref: f64, bumps: &BumpArray, dt: f64) -> Result<ComplianceOutput> {
        let c = &self.config;
        let mut out = ComplianceOutput::default();
        if in_contact {
            out.leg_increment = leg_length_admittance(f_z_meas, f_z_ref, c.admittance_gain, dt, c.max_increment)?;
            self.leg_offset += out.leg_increment;
        } else {
            out.clearance_command = clearance_regulator(bumps, c.clearance_target, c.clearance_gain)?;
            let (roll, pitch) = ankle_orientation_from_bumps(bumps, &c.geometry, c.ankle_gain)?;
            out.delta_roll = roll;
            out.delta_pitch = pitch;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn admittance_examples() {
        assert_eq!(leg_length_admittance(350.0, 350.0, 2e-5, 0.005, 5e-5).unwrap(), 0.0);
        assert_relative_eq!(leg_length_admittance(450.0, 350.0, 2e-5, 0.005, 5e-5).unwrap(), -1e-5, epsilon = 1e-18);
        assert_eq!(leg_length_admittance(0.0, 600.0, 2e-5, 0.005, 5e-5).unwrap(), 5e-5);
        assert_relative_eq!(leg_length_admittance(0.0, 499.0, 2e-5, 0.005, 5e-5).unwrap(), 4.99e-5, epsilon = 1e-18);
        assert!(leg_length_admittance(1.0, 0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn clearance_examples() {
        let flat = BumpArray::new([0.005; 4]).unwrap();
        assert_eq!(clearance_regulator(&flat, 0.005, 1.0).unwrap(), 0.0);
        let high = BumpArray::new([0.015; 4]).unwrap();
        assert_relative_eq!(clearance_regulator(&high, 0.005, 1.0).unwrap(), 0.010, epsilon = 1e-15);
        let sat = BumpArray::saturating([0.5; 4]);
        assert_relative_eq!(clearance_regulator(&sat, 0.005, 2.0).unwrap(), 2.0 * 0.015, epsilon = 1e-15);
        assert!(clearance_regulator(&flat, 0.02, 1.0).is_err());
        assert!(BumpArray::new([0.0, 0.0, 0.0, 0.021]).is_err());
    }

    #[test]
    fn ankle_examples() {
        let g = BumpGeometry::default();
        let flat = BumpArray::new([0.01; 4]).unwrap();
        assert_eq!(ankle_orientation_from_bumps(&flat, &g, 1.0).unwrap(), (0.0, 0.0));
        let sloped = BumpArray::new([0.012, 0.012, 0.008, 0.008]).unwrap();
        let (roll, pitch) = ankle_orientation_from_bumps(&sloped, &g, 1.0).unwrap();
        assert_relative_eq!(pitch, (0.004f64 / 0.2).atan(), epsilon = 1e-12);
        assert_relative_eq!(pitch, 0.019_997_333_6, epsilon = 1e-9);
        assert!(roll.abs() < 1e-12);
        let left_high = BumpArray::new([0.02, 0.0, 0.02, 0.0]).unwrap();
        let narrow = BumpGeometry { positions: [[0.1, 0.001], [0.1, -0.001], [-0.1, 0.001], [-0.1, -0.001]] };
        let (roll, _) = ankle_orientation_from_bumps(&left_high, &narrow, 1.0).unwrap();
        assert_relative_eq!(roll, -20f64.to_radians(), epsilon = 1e-15);
    }

    #[test]
    fn degenerate_geometry_rejected() {
        let b = BumpArray::new([0.01; 4]).unwrap();
        let line = BumpGeometry { positions: [[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0]] };
        assert!(matches!(ankle_orientation_from_bumps(&b, &line, 1.0), Err(Error::Geometry(_))));
        let point = BumpGeometry { positions: [[0.1, 0.1]; 4] };
        assert!(matches!(ankle_orientation_from_bumps(&b, &point, 1.0), Err(Error::Geometry(_))));
    }

    #[test]
    fn controller_switches_layers() {
        let mut c = TouchdownCompliance::default();
        let b = BumpArray::new([0.015; 4]).unwrap();
        let swing = c.update(false, 0.0, 350.0, &b, 0.005).unwrap();
        assert_eq!(swing.leg_increment, 0.0);
        assert!(swing.clearance_command > 0.0);
        let stance = c.update(true, 450.0, 350.0, &b, 0.005).unwrap();
        assert_eq!(stance.clearance_command, 0.0);
        assert_relative_eq!(c.leg_offset, -1e-5, epsilon = 1e-18);
    }

    fn reading() -> impl Strategy<Value = f64> {
        0.0..=BUMP_RANGE
    }

    proptest! {
        #[test]
        fn tilt_ignores_common_offset(r in prop::array::uniform4(0.0..0.01f64), c in 0.0..0.01f64) {
            let g = BumpGeometry::default();
            let a = ankle_orientation_from_bumps(&BumpArray::new(r).unwrap(), &g, 1.0).unwrap();
            let b = ankle_orientation_from_bumps(&BumpArray::new(r.map(|x| x + c)).unwrap(), &g, 1.0).unwrap();
            prop_assert!((a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12);
        }

        #[test]
        fn outputs_respect_clamps(
            r in prop::array::uniform4(reading()),
            gain in 0.0..1000.0f64,
            f in -5000.0..5000.0f64,
        ) {
            let (roll, pitch) = ankle_orientation_from_bumps(&BumpArray::new(r).unwrap(), &BumpGeometry::default(), gain).unwrap();
            prop_assert!(roll.abs() <= 20f64.to_radians());
            prop_assert!(pitch >= (-50f64).to_radians() && pitch <= 40f64.to_radians());
            let dz = leg_length_admittance(f, 350.0, 2e-5, 0.005, 5e-5).unwrap();
            prop_assert!(dz.abs() <= 5e-5);
        }
    }
}
