//! Primal active-set solver for small dense box-constrained strictly convex QPs:
//!
//! ```text
//!     minimize    1/2 x' H x + g' x
//!     subject to  lower <= x <= upper
//! ```
//!
//! Bounds are visited in the fixed order x0-lower, x0-upper, x1-lower, x1-upper, ...;
//! ties when adding or dropping a bound resolve to the earliest in that order.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActiveBound {
    Lower(usize),
    Upper(usize),
}

impl ActiveBound {
    fn order_key(self) -> usize {
        match self {
            ActiveBound::Lower(i) => 2 * i,
            ActiveBound::Upper(i) => 2 * i + 1,
        }
    }

    pub fn index(self) -> usize {
        match self {
            ActiveBound::Lower(i) | ActiveBound::Upper(i) => i,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoxQp {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub active: Vec<ActiveBound>,
    pub iterations: usize,
    pub kkt_residual: f64,
}

impl BoxQp {
    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.hessian * x + &self.linear
    }

    /// First-order optimality residual: projected gradient plus bound violation.
    pub fn kkt_residual(&self, x: &DVector<f64>) -> f64 {
        let g = self.gradient(x);
        let mut r: f64 = 0.0;
        for i in 0..self.dim() {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            r = r.max((lo - x[i]).max(0.0)).max((x[i] - hi).max(0.0));
            let gi = g[i];
            let term = if x[i] <= lo && x[i] >= hi {
                0.0
            } else if x[i] <= lo {
                (-gi).max(0.0)
            } else if x[i] >= hi {
                gi.max(0.0)
            } else {
                gi.abs()
            };
            r = r.max(term);
        }
        r
    }

    fn validate(&self) -> Result<()> {
        let n = self.dim();
        if self.hessian.nrows() != n || self.hessian.ncols() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Domain("QP dimensions are inconsistent".into()));
        }
        for i in 0..n {
            if !(self.lower[i] <= self.upper[i]) {
                return Err(Error::Infeasible(format!(
                    "empty bound on variable {i}: [{}, {}]",
                    self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    pub fn solve(&self, start: Option<&DVector<f64>>, max_iterations: usize) -> Result<BoxQpSolution> {
        self.validate()?;
        let n = self.dim();
        let mut x = match start {
            Some(s) => s.clone(),
            None => DVector::zeros(n),
        };
        for i in 0..n {
            x[i] = x[i].clamp(self.lower[i], self.upper[i]);
        }
        let mut working: Vec<Option<ActiveBound>> = vec![None; n];
        // Variables with a degenerate interval are fixed from the start.
        for i in 0..n {
            if self.lower[i] == self.upper[i] {
                working[i] = Some(ActiveBound::Lower(i));
            }
        }

        for iteration in 1..=max_iterations {
            let free: Vec<usize> = (0..n).filter(|&i| working[i].is_none()).collect();
            let grad = self.gradient(&x);
            let step = self.newton_step(&free, &grad)?;

            let scale = 1.0 + x.amax();
            if step.iter().all(|d| d.abs() <= 1e-13 * scale) {
                // Stationary on the working face: check multiplier signs.
                let mut worst: Option<(f64, ActiveBound)> = None;
                for bound in working.iter().flatten().copied() {
                    let i = bound.index();
                    if self.lower[i] == self.upper[i] {
                        continue;
                    }
                    let multiplier = match bound {
                        ActiveBound::Lower(_) => grad[i],
                        ActiveBound::Upper(_) => -grad[i],
                    };
                    if multiplier < -1e-12 * (1.0 + grad.amax()) {
                        let better = match worst {
                            None => true,
                            Some((m, b)) => multiplier < m || (multiplier == m && bound.order_key() < b.order_key()),
                        };
                        if better {
                            worst = Some((multiplier, bound));
                        }
                    }
                }
                match worst {
                    None => {
                        let mut active: Vec<ActiveBound> = working.iter().flatten().copied().collect();
                        active.sort_by_key(|b| b.order_key());
                        let kkt_residual = self.kkt_residual(&x);
                        return Ok(BoxQpSolution { x, active, iterations: iteration, kkt_residual });
                    }
                    Some((_, bound)) => working[bound.index()] = None,
                }
                continue;
            }

            let mut alpha = 1.0;
            let mut blocking: Option<ActiveBound> = None;
            for &i in &free {
                let d = step[i];
                let candidate = if d < 0.0 {
                    Some(((self.lower[i] - x[i]) / d, ActiveBound::Lower(i)))
                } else if d > 0.0 {
                    Some(((self.upper[i] - x[i]) / d, ActiveBound::Upper(i)))
                } else {
                    None
                };
                if let Some((a, bound)) = candidate {
                    let a = a.max(0.0);
                    let better =
                        a < alpha || (a == alpha && blocking.is_none_or(|b| bound.order_key() < b.order_key()));
                    if better {
                        alpha = a;
                        blocking = Some(bound);
                    }
                }
            }
            x += &step * alpha;
            if let Some(bound) = blocking {
                let i = bound.index();
                x[i] = match bound {
                    ActiveBound::Lower(_) => self.lower[i],
                    ActiveBound::Upper(_) => self.upper[i],
                };
                working[i] = Some(bound);
            }
            for i in 0..n {
                x[i] = x[i].clamp(self.lower[i], self.upper[i]);
            }
        }
        Err(Error::SolverDiverged { iterations: max_iterations })
    }

    /// Newton direction on the free variables with the working bounds held fixed.
    fn newton_step(&self, free: &[usize], grad: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dim();
        let mut step = DVector::zeros(n);
        if free.is_empty() {
            return Ok(step);
        }
        let m = free.len();
        let h = DMatrix::from_fn(m, m, |r, c| self.hessian[(free[r], free[c])]);
        let rhs = DVector::from_fn(m, |r, _| -grad[free[r]]);
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Domain("QP Hessian is not positive definite on the free set".into()))?;
        let d = chol.solve(&rhs);
        for (r, &i) in free.iter().enumerate() {
            step[i] = d[r];
        }
        Ok(step)
    }
}
