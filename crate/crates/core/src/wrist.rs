//! 2RSS-1U parallel wrist: loop closure, Jacobian, general condition number (GCN) and a
//! bound-constrained design search over horn and limb lengths.
//!
//! The plate pivots on a universal joint at the origin with orientation `Ry(pitch) Rx(roll)`.
//! Chain `i` runs from a motor at `a_i = (0, s_i p_y, -z_i)` (`s_1 = +1`, `s_2 = -1`) through a horn
//! of length `h_i` turning about an axis parallel to `y`, then a limb of length `l_i` to the plate
//! point `b_i = R (p_x, s_i p_y, 0)`.

use std::fmt;
use std::path::Path;

use nalgebra::{Matrix2, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::params::joints;
use crate::{Error, Result};

/// Central-difference step for the Jacobian, rad.
pub const FD_STEP: f64 = 1e-6;

const SIGN: [f64; 2] = [1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WristGeometry {
    pub horn: [f64; 2],
    pub limb: [f64; 2],
    /// Plate attachment offset along x, m.
    pub plate_x: f64,
    /// Lateral half-spacing of the chains, m.
    pub half_spacing: f64,
    /// Depth of each motor axis below the universal joint, m.
    pub motor_depth: [f64; 2],
}

impl Default for WristGeometry {
    fn default() -> Self {
        Self::with_lengths([0.015, 0.015], [0.0618, 0.0786])
    }
}

impl WristGeometry {
    /// Default frame with the given horn and limb lengths.
    pub fn with_lengths(horn: [f64; 2], limb: [f64; 2]) -> Self {
        Self { horn, limb, plate_x: 0.012, half_spacing: 0.012, motor_depth: [0.0587, 0.0762] }
    }

    pub fn validate(&self) -> Result<()> {
        let lengths = [self.horn[0], self.horn[1], self.limb[0], self.limb[1], self.half_spacing];
        if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::Geometry(format!("lengths must be > 0: {self:?}")));
        }
        if !self.plate_x.is_finite() || self.motor_depth.iter().any(|z| !z.is_finite()) {
            return Err(Error::Geometry("frame parameters must be finite".into()));
        }
        Ok(())
    }

    /// Every length scaled by `s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            horn: self.horn.map(|h| h * s),
            limb: self.limb.map(|l| l * s),
            plate_x: self.plate_x * s,
            half_spacing: self.half_spacing * s,
            motor_depth: self.motor_depth.map(|z| z * s),
        }
    }

    /// Chains 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            horn: [self.horn[1], self.horn[0]],
            limb: [self.limb[1], self.limb[0]],
            motor_depth: [self.motor_depth[1], self.motor_depth[0]],
            ..*self
        }
    }

    fn motor(&self, i: usize) -> Vector3<f64> {
        Vector3::new(0.0, SIGN[i] * self.half_spacing, -self.motor_depth[i])
    }

    fn plate_point(&self, i: usize) -> Vector3<f64> {
        Vector3::new(self.plate_x, SIGN[i] * self.half_spacing, 0.0)
    }

    fn horn_tip(&self, i: usize, theta: f64) -> Vector3<f64> {
        self.motor(i) + Vector3::new(theta.cos(), 0.0, theta.sin()) * self.horn[i]
    }
}

/// `(pitch, roll)` in rad.
pub type Pose = (f64, f64);

fn rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn d_rot_x(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn d_rot_y(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

pub fn plate_rotation(pose: Pose) -> Matrix3<f64> {
    rot_y(pose.0) * rot_x(pose.1)
}

/// Motor angles closing both loops at `pose`.
///
/// Each loop reduces to `A cos(theta) + B sin(theta) = C`; the branch `atan2(B, A) - acos(C / R)` is
/// used throughout so the solution is continuous over the workspace.
pub fn motor_angles(geom: &WristGeometry, pose: Pose) -> Result<[f64; 2]> {
    let r = plate_rotation(pose);
    let mut out = [0.0; 2];
    for (i, theta) in out.iter_mut().enumerate() {
        let d = r * geom.plate_point(i) - geom.motor(i);
        let h = geom.horn[i];
        let l = geom.limb[i];
        let c = (h * h + d.norm_squared() - l * l) / (2.0 * h);
        let amp = d.x.hypot(d.z);
        if !(amp > 0.0) || c.abs() > amp {
            return Err(Error::SingularConfiguration(format!(
                "chain {} cannot close at pitch {:.4}, roll {:.4} rad (limb {l} m)",
                i + 1,
                pose.0,
                pose.1
            )));
        }
        *theta = d.z.atan2(d.x) - (c / amp).acos();
    }
    Ok(out)
}

/// Inverse of `d theta / d pose`, so rows are (pitch, roll) rates and columns motor rates.
fn invert(m: Matrix2<f64>, pose: Pose) -> Result<Matrix2<f64>> {
    let scale = m.abs().max();
    if !(scale.is_finite()) || m.determinant().abs() <= 1e-12 * scale * scale {
        return Err(Error::SingularConfiguration(format!("singular Jacobian at pitch {:.4}, roll {:.4}", pose.0, pose.1)));
    }
    m.try_inverse()
        .ok_or_else(|| Error::SingularConfiguration(format!("singular Jacobian at pitch {:.4}, roll {:.4}", pose.0, pose.1)))
}

/// Jacobian from motor-angle rates to `(pitch, roll)` rates by central differences of the closure.
pub fn wrist_jacobian(geom: &WristGeometry, pose: Pose) -> Result<Matrix2<f64>> {
    geom.validate()?;
    let mut m = Matrix2::zeros();
    for j in 0..2 {
        let mut plus = pose;
        let mut minus = pose;
        if j == 0 {
            plus.0 += FD_STEP;
            minus.0 -= FD_STEP;
        } else {
            plus.1 += FD_STEP;
            minus.1 -= FD_STEP;
        }
        let tp = motor_angles(geom, plus)?;
        let tm = motor_angles(geom, minus)?;
        for i in 0..2 {
            m[(i, j)] = (tp[i] - tm[i]) / (2.0 * FD_STEP);
        }
    }
    invert(m, pose)
}

/// Jacobian from the implicit-function theorem on `|c_i(theta_i) - b_i(pose)|^2 = l_i^2`.
pub fn wrist_jacobian_implicit(geom: &WristGeometry, pose: Pose) -> Result<Matrix2<f64>> {
    geom.validate()?;
    let theta = motor_angles(geom, pose)?;
    let r = plate_rotation(pose);
    let dr = [d_rot_y(pose.0) * rot_x(pose.1), rot_y(pose.0) * d_rot_x(pose.1)];
    let mut m = Matrix2::zeros();
    for i in 0..2 {
        let b0 = geom.plate_point(i);
        let gap = geom.horn_tip(i, theta[i]) - r * b0;
        let dc = Vector3::new(-theta[i].sin(), 0.0, theta[i].cos()) * geom.horn[i];
        let f_theta = gap.dot(&dc);
        if f_theta.abs() <= f64::EPSILON * gap.norm() * dc.norm() {
            return Err(Error::SingularConfiguration(format!("chain {} at a closure turning point", i + 1)));
        }
        for j in 0..2 {
            let f_q = -gap.dot(&(dr[j] * b0));
            m[(i, j)] = -f_q / f_theta;
        }
    }
    invert(m, pose)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    #[default]
    Spectral,
    Frobenius,
}

/// `||J|| ||J^-1||`; infinite for singular matrices.
pub fn condition_number(j: &Matrix2<f64>, norm: NormKind) -> f64 {
    match norm {
        NormKind::Spectral => {
            let s = j.singular_values();
            let (hi, lo) = (s.max(), s.min());
            if lo > 0.0 {
                hi / lo
            } else {
                f64::INFINITY
            }
        }
        NormKind::Frobenius => match j.try_inverse() {
            Some(inv) => j.norm() * inv.norm(),
            None => f64::INFINITY,
        },
    }
}

/// Sample poses over the wrist pitch/roll ranges.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkspaceGrid {
    poses: Vec<Pose>,
}

impl WorkspaceGrid {
    pub fn new(poses: Vec<Pose>) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::invalid("grid", "needs at least one pose"));
        }
        let (p, r) = (joints::WRIST_PITCH, joints::WRIST_ROLL);
        let tol = 1e-12;
        for &(pitch, roll) in &poses {
            let inside = pitch >= p.min_rad() - tol && pitch <= p.max_rad() + tol && roll >= r.min_rad() - tol && roll <= r.max_rad() + tol;
            if !inside {
                return Err(Error::invalid("grid", format!("pose ({pitch}, {roll}) outside the wrist range")));
            }
        }
        Ok(Self { poses })
    }

    /// `n x n` lattice over the full pitch and roll ranges; `n = 1` gives the neutral pose.
    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("grid", "needs at least one pose"));
        }
        let axis = |range: crate::params::JointRange| -> Vec<f64> {
            if n == 1 {
                return vec![0.0];
            }
            (0..n).map(|k| range.min_rad() + (range.max_rad() - range.min_rad()) * k as f64 / (n - 1) as f64).collect()
        };
        let pitches = axis(joints::WRIST_PITCH);
        let rolls = axis(joints::WRIST_ROLL);
        Self::new(pitches.iter().flat_map(|&p| rolls.iter().map(move |&r| (p, r))).collect())
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Mean condition number of an arbitrary Jacobian field over the grid; infinite if any pose fails.
pub fn gcn_with<F>(jacobian: F, grid: &WorkspaceGrid, norm: NormKind) -> f64
where
    F: Fn(Pose) -> Result<Matrix2<f64>>,
{
    let mut total = 0.0;
    for &pose in grid.poses() {
        let Ok(j) = jacobian(pose) else {
            return f64::INFINITY;
        };
        let c = condition_number(&j, norm);
        if !c.is_finite() {
            return f64::INFINITY;
        }
        total += c;
    }
    total / grid.len() as f64
}

pub fn gcn(geom: &WristGeometry, grid: &WorkspaceGrid) -> f64 {
    gcn_norm(geom, grid, NormKind::Spectral)
}

pub fn gcn_norm(geom: &WristGeometry, grid: &WorkspaceGrid, norm: NormKind) -> f64 {
    gcn_with(|pose| wrist_jacobian(geom, pose), grid, norm)
}

/// Search box over `[horn_1, horn_2, limb_1, limb_2]`, m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WristBounds {
    pub lower: [f64; 4],
    pub upper: [f64; 4],
}

impl WristBounds {
    /// Horns up to 15 mm, limbs 40 to 80 mm.
    pub fn rescaled() -> Self {
        Self { lower: [0.0, 0.0, 0.04, 0.04], upper: [0.015, 0.015, 0.08, 0.08] }
    }

    /// Horns up to 0.15 m, limbs 0.4 to 0.8 m, taken literally.
    pub fn literal() -> Self {
        Self { lower: [0.0, 0.0, 0.4, 0.4], upper: [0.15, 0.15, 0.8, 0.8] }
    }

    pub fn singleton(x: [f64; 4]) -> Self {
        Self { lower: x, upper: x }
    }

    pub fn validate(&self) -> Result<()> {
        for i in 0..4 {
            if !(self.lower[i] <= self.upper[i]) || !self.lower[i].is_finite() || !self.upper[i].is_finite() {
                return Err(Error::invalid("bounds", format!("empty interval for variable {i}")));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, x: [f64; 4]) -> [f64; 4] {
        std::array::from_fn(|i| x[i].clamp(self.lower[i], self.upper[i]))
    }

    pub fn contains(&self, x: &[f64; 4]) -> bool {
        (0..4).all(|i| x[i] >= self.lower[i] && x[i] <= self.upper[i])
    }

    fn center(&self) -> [f64; 4] {
        std::array::from_fn(|i| 0.5 * (self.lower[i] + self.upper[i]))
    }
}

impl Default for WristBounds {
    fn default() -> Self {
        Self::rescaled()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    GridSearch { points_per_axis: usize },
    NelderMead,
    /// Lattice search followed by Nelder-Mead from the best lattice point.
    Hybrid { points_per_axis: usize },
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMethod::GridSearch { points_per_axis } => write!(f, "grid_search({points_per_axis})"),
            SearchMethod::NelderMead => f.write_str("nelder_mead"),
            SearchMethod::Hybrid { points_per_axis } => write!(f, "hybrid({points_per_axis})"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    pub x: [f64; 4],
    pub gcn: f64,
}

#[derive(Debug, Clone)]
pub struct WristOptResult {
    pub geometry: WristGeometry,
    pub gcn: f64,
    pub trace: Vec<TraceRow>,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimizeOptions {
    /// Frame parameters; horn and limb lengths are overwritten by the search.
    pub frame: WristGeometry,
    pub norm: NormKind,
    pub max_iterations: usize,
    /// Feasible seeded samples used to pick the Nelder-Mead start when no lattice is run.
    pub random_starts: usize,
    pub tolerance: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { frame: WristGeometry::default(), norm: NormKind::Spectral, max_iterations: 400, random_starts: 64, tolerance: 1e-10 }
    }
}

struct Objective<'a> {
    frame: WristGeometry,
    grid: &'a WorkspaceGrid,
    norm: NormKind,
    evaluations: usize,
}

impl Objective<'_> {
    fn geometry(&self, x: &[f64; 4]) -> WristGeometry {
        WristGeometry { horn: [x[0], x[1]], limb: [x[2], x[3]], ..self.frame }
    }

    fn eval(&mut self, x: &[f64; 4]) -> f64 {
        self.evaluations += 1;
        let g = self.geometry(x);
        if g.validate().is_err() {
            return f64::INFINITY;
        }
        gcn_norm(&g, self.grid, self.norm)
    }
}

fn lattice_axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n <= 1 || lo == hi {
        return vec![0.5 * (lo + hi)];
    }
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn grid_search(obj: &mut Objective<'_>, bounds: &WristBounds, n: usize, trace: &mut Vec<TraceRow>) -> ([f64; 4], f64) {
    let axes: Vec<Vec<f64>> = (0..4).map(|i| lattice_axis(bounds.lower[i], bounds.upper[i], n)).collect();
    let mut best = (bounds.center(), f64::INFINITY);
    let mut iteration = trace.len();
    for &a in &axes[0] {
        for &b in &axes[1] {
            for &c in &axes[2] {
                for &d in &axes[3] {
                    let x = [a, b, c, d];
                    let f = obj.eval(&x);
                    if f < best.1 {
                        best = (x, f);
                    }
                    trace.push(TraceRow { iteration, x: best.0, gcn: best.1 });
                    iteration += 1;
                }
            }
        }
    }
    best
}

/// Nelder-Mead with vertices clamped to the bounds; trace rows carry the best vertex so far.
fn nelder_mead(
    obj: &mut Objective<'_>,
    bounds: &WristBounds,
    start: [f64; 4],
    opts: &OptimizeOptions,
    trace: &mut Vec<TraceRow>,
) -> ([f64; 4], f64) {
    const ALPHA: f64 = 1.0;
    const GAMMA: f64 = 2.0;
    const RHO: f64 = 0.5;
    const SIGMA: f64 = 0.5;

    let mut simplex: Vec<([f64; 4], f64)> = Vec::with_capacity(5);
    let x0 = bounds.clamp(start);
    simplex.push((x0, obj.eval(&x0)));
    for i in 0..4 {
        let width = bounds.upper[i] - bounds.lower[i];
        let mut x = x0;
        let step = 0.1 * width;
        x[i] = if x[i] + step <= bounds.upper[i] { x[i] + step } else { x[i] - step };
        let x = bounds.clamp(x);
        simplex.push((x, obj.eval(&x)));
    }
    let mut iteration = trace.len();
    let mut best = simplex.iter().copied().fold((x0, f64::INFINITY), |b, v| if v.1 < b.1 { v } else { b });
    for _ in 0..opts.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if simplex[0].1 < best.1 {
            best = simplex[0];
        }
        trace.push(TraceRow { iteration, x: best.0, gcn: best.1 });
        iteration += 1;

        let f_spread = simplex[4].1 - simplex[0].1;
        let x_spread = simplex
            .iter()
            .map(|v| (0..4).map(|i| (v.0[i] - simplex[0].0[i]).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if (f_spread.is_finite() && f_spread <= opts.tolerance) || x_spread <= 1e-12 {
            break;
        }

        let centroid: [f64; 4] = std::array::from_fn(|i| simplex[..4].iter().map(|v| v.0[i]).sum::<f64>() / 4.0);
        let worst = simplex[4];
        let along = |t: f64| bounds.clamp(std::array::from_fn(|i| centroid[i] + t * (worst.0[i] - centroid[i])));

        let xr = along(-ALPHA);
        let fr = obj.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-GAMMA);
            let fe = obj.eval(&xe);
            simplex[4] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[3].1 {
            simplex[4] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(-RHO);
                (x, obj.eval(&x))
            } else {
                let x = along(RHO);
                (x, obj.eval(&x))
            };
            if fc < worst.1.min(fr) {
                simplex[4] = (xc, fc);
            } else {
                let x_best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    let x = bounds.clamp(std::array::from_fn(|i| x_best[i] + SIGMA * (v.0[i] - x_best[i])));
                    *v = (x, obj.eval(&x));
                }
            }
        }
    }
    for v in &simplex {
        if v.1 < best.1 {
            best = *v;
        }
    }
    trace.push(TraceRow { iteration, x: best.0, gcn: best.1 });
    best
}

/// Minimize the GCN over horn and limb lengths inside `bounds`.
pub fn optimize_wrist(
    bounds: &WristBounds,
    grid: &WorkspaceGrid,
    method: SearchMethod,
    seed: u64,
    opts: &OptimizeOptions,
) -> Result<WristOptResult> {
    bounds.validate()?;
    let mut obj = Objective { frame: opts.frame, grid, norm: opts.norm, evaluations: 0 };
    let mut trace = Vec::new();

    let (x, f) = if bounds.lower == bounds.upper {
        let f = obj.eval(&bounds.lower);
        trace.push(TraceRow { iteration: 0, x: bounds.lower, gcn: f });
        (bounds.lower, f)
    } else {
        match method {
            SearchMethod::GridSearch { points_per_axis } => grid_search(&mut obj, bounds, points_per_axis, &mut trace),
            SearchMethod::Hybrid { points_per_axis } => {
                let (x0, f0) = grid_search(&mut obj, bounds, points_per_axis, &mut trace);
                let (x1, f1) = nelder_mead(&mut obj, bounds, x0, opts, &mut trace);
                if f1 <= f0 {
                    (x1, f1)
                } else {
                    (x0, f0)
                }
            }
            SearchMethod::NelderMead => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut start = (bounds.center(), obj.eval(&bounds.center()));
                // Feasible designs can be a thin sliver of the box, so keep drawing until enough land in it.
                let mut feasible = 0;
                let max_draws = opts.random_starts.saturating_mul(256);
                for _ in 0..max_draws {
                    if feasible >= opts.random_starts {
                        break;
                    }
                    let x: [f64; 4] = std::array::from_fn(|i| {
                        let (lo, hi) = (bounds.lower[i], bounds.upper[i]);
                        if lo == hi {
                            lo
                        } else {
                            rng.random_range(lo..=hi)
                        }
                    });
                    let f = obj.eval(&x);
                    if f.is_finite() {
                        feasible += 1;
                    }
                    if f < start.1 {
                        start = (x, f);
                    }
                }
                nelder_mead(&mut obj, bounds, start.0, opts, &mut trace)
            }
        }
    };

    if !f.is_finite() {
        return Err(Error::SearchFailed(format!(
            "no feasible geometry in bounds {:?}..{:?} after {} evaluations over {} poses",
            bounds.lower,
            bounds.upper,
            obj.evaluations,
            grid.len()
        )));
    }
    Ok(WristOptResult { geometry: obj.geometry(&x), gcn: f, trace, evaluations: obj.evaluations })
}

/// Trace as CSV: `iteration,horn1,horn2,limb1,limb2,gcn`.
pub fn write_trace(path: &Path, trace: &[TraceRow]) -> Result<()> {
    let io = |e: csv::Error| Error::Io { path: path.display().to_string(), message: e.to_string() };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record(["iteration", "horn1", "horn2", "limb1", "limb2", "gcn"]).map_err(io)?;
    for row in trace {
        let mut rec = vec![row.iteration.to_string()];
        rec.extend(row.x.iter().map(|v| crate::sim::format_sig(*v)));
        rec.push(crate::sim::format_sig(row.gcn));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn asymmetric() -> WristGeometry {
        WristGeometry { horn: [0.012, 0.015], limb: [0.060, 0.080], ..WristGeometry::default() }
    }

    #[test]
    fn default_geometry_is_feasible_over_workspace() {
        let grid = WorkspaceGrid::uniform(7).unwrap();
        let g = gcn(&WristGeometry::default(), &grid);
        assert!(g.is_finite() && g >= 1.0, "{g}");
    }

    #[test]
    fn closure_holds() {
        let g = asymmetric();
        let pose = (0.2, -0.15);
        let th = motor_angles(&g, pose).unwrap();
        let r = plate_rotation(pose);
        for i in 0..2 {
            let len = (g.horn_tip(i, th[i]) - r * g.plate_point(i)).norm();
            assert_relative_eq!(len, g.limb[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn finite_difference_matches_implicit_function() {
        let g = asymmetric();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lim = 20f64.to_radians();
        for _ in 0..20 {
            let pose = (rng.random_range(-lim..lim), rng.random_range(-lim..lim));
            let fd = wrist_jacobian(&g, pose).unwrap();
            let ift = wrist_jacobian_implicit(&g, pose).unwrap();
            let rel = (fd - ift).norm() / ift.norm();
            assert!(rel < 1e-5, "pose {pose:?} rel {rel}");
        }
    }

    #[test]
    fn mirror_swaps_chains() {
        let g = asymmetric();
        let d = Matrix2::new(1.0, 0.0, 0.0, -1.0);
        let p = Matrix2::new(0.0, 1.0, 1.0, 0.0);
        for pose in [(0.0, 0.0), (0.1, 0.2), (-0.3, 0.05)] {
            let j = wrist_jacobian_implicit(&g, pose).unwrap();
            let js = wrist_jacobian_implicit(&g.swapped(), (pose.0, -pose.1)).unwrap();
            assert_relative_eq!(js, d * j * p, epsilon = 1e-12);
        }
        let sym = WristGeometry { motor_depth: [0.0587; 2], ..WristGeometry::with_lengths([0.015; 2], [0.0618; 2]) };
        let j = wrist_jacobian(&sym, (0.0, 0.0)).unwrap();
        assert_relative_eq!(j, d * j * p, epsilon = 1e-7);
    }

    #[test]
    fn unreachable_limb_is_singular() {
        let g = WristGeometry::with_lengths([0.015; 2], [0.4; 2]);
        assert!(matches!(wrist_jacobian(&g, (0.0, 0.0)), Err(Error::SingularConfiguration(_))));
        assert_eq!(gcn(&g, &WorkspaceGrid::uniform(3).unwrap()), f64::INFINITY);
    }

    #[test]
    fn synthetic_gcn_values() {
        let grid = WorkspaceGrid::uniform(4).unwrap();
        assert_relative_eq!(gcn_with(|_| Ok(Matrix2::identity()), &grid, NormKind::Spectral), 1.0, epsilon = 1e-15);
        assert_relative_eq!(gcn_with(|_| Ok(Matrix2::new(2.0, 0.0, 0.0, 1.0)), &grid, NormKind::Spectral), 2.0, epsilon = 1e-14);
        assert_relative_eq!(gcn_with(|_| Ok(Matrix2::identity()), &grid, NormKind::Frobenius), 2.0, epsilon = 1e-14);
        assert_eq!(gcn_with(|_| Ok(Matrix2::new(1.0, 1.0, 1.0, 1.0)), &grid, NormKind::Spectral), f64::INFINITY);
    }

    #[test]
    fn grid_validation() {
        assert!(WorkspaceGrid::new(vec![]).is_err());
        assert!(WorkspaceGrid::new(vec![(0.5, 0.0)]).is_err());
        assert_eq!(WorkspaceGrid::uniform(1).unwrap().poses(), &[(0.0, 0.0)]);
    }

    #[test]
    fn gcn_ignores_pose_order() {
        let g = asymmetric();
        let grid = WorkspaceGrid::uniform(5).unwrap();
        let mut rev = grid.poses().to_vec();
        rev.reverse();
        let rev = WorkspaceGrid::new(rev).unwrap();
        assert_relative_eq!(gcn(&g, &grid), gcn(&g, &rev), epsilon = 1e-12);
    }

    #[test]
    fn scaling_leaves_gcn_unchanged() {
        let grid = WorkspaceGrid::uniform(4).unwrap();
        let g = asymmetric();
        for s in [0.5, 3.0, 10.0] {
            assert_relative_eq!(gcn(&g.scaled(s), &grid), gcn(&g, &grid), max_relative = 1e-7);
        }
    }

    #[test]
    fn lattice_then_simplex_refines() {
        let grid = WorkspaceGrid::uniform(3).unwrap();
        let bounds = WristBounds::rescaled();
        let opts = OptimizeOptions::default();
        let lattice = optimize_wrist(&bounds, &grid, SearchMethod::GridSearch { points_per_axis: 5 }, 0, &opts).unwrap();
        let hybrid = optimize_wrist(&bounds, &grid, SearchMethod::Hybrid { points_per_axis: 5 }, 0, &opts).unwrap();
        assert!(hybrid.gcn <= lattice.gcn);
        assert!(bounds.contains(&[hybrid.geometry.horn[0], hybrid.geometry.horn[1], hybrid.geometry.limb[0], hybrid.geometry.limb[1]]));
        for pair in hybrid.trace.windows(2) {
            assert!(pair[1].gcn <= pair[0].gcn);
        }
        // Independent lattice check.
        let axis = |lo: f64, hi: f64| (0..5).map(move |k| lo + (hi - lo) * k as f64 / 4.0);
        let mut best = f64::INFINITY;
        for a in axis(0.0, 0.015) {
            for b in axis(0.0, 0.015) {
                for c in axis(0.04, 0.08) {
                    for d in axis(0.04, 0.08) {
                        if a > 0.0 && b > 0.0 {
                            best = best.min(gcn(&WristGeometry::with_lengths([a, b], [c, d]), &grid));
                        }
                    }
                }
            }
        }
        assert_eq!(lattice.gcn, best);
    }

    #[test]
    fn nelder_mead_is_seeded() {
        let grid = WorkspaceGrid::uniform(3).unwrap();
        let opts = OptimizeOptions { max_iterations: 60, ..Default::default() };
        let a = optimize_wrist(&WristBounds::rescaled(), &grid, SearchMethod::NelderMead, 9, &opts).unwrap();
        let b = optimize_wrist(&WristBounds::rescaled(), &grid, SearchMethod::NelderMead, 9, &opts).unwrap();
        assert_eq!(a.gcn.to_bits(), b.gcn.to_bits());
        assert!(a.gcn >= 1.0);
    }

    #[test]
    fn singleton_bounds_return_that_geometry() {
        let grid = WorkspaceGrid::uniform(3).unwrap();
        let x = [0.015, 0.015, 0.0618, 0.0786];
        let r = optimize_wrist(&WristBounds::singleton(x), &grid, SearchMethod::NelderMead, 0, &OptimizeOptions::default()).unwrap();
        assert_eq!(r.geometry, WristGeometry::default());
        assert_eq!(r.gcn, gcn(&WristGeometry::default(), &grid));
    }

    #[test]
    fn infeasible_bounds_fail_search() {
        let grid = WorkspaceGrid::uniform(3).unwrap();
        let r = optimize_wrist(&WristBounds::literal(), &grid, SearchMethod::GridSearch { points_per_axis: 3 }, 0, &OptimizeOptions::default());
        assert!(matches!(r, Err(Error::SearchFailed(_))));
        let bad = WristBounds { lower: [0.02, 0.0, 0.0, 0.0], upper: [0.01, 1.0, 1.0, 1.0] };
        assert!(optimize_wrist(&bad, &grid, SearchMethod::NelderMead, 0, &OptimizeOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn condition_number_at_least_one(p in -0.34..0.34f64, r in -0.34..0.34f64) {
            let j = wrist_jacobian(&WristGeometry::default(), (p, r)).unwrap();
            prop_assert!(condition_number(&j, NormKind::Spectral) >= 1.0);
            prop_assert!(condition_number(&j, NormKind::Frobenius) >= 2.0 - 1e-12);
        }
    }
}
