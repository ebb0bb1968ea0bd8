//! Minimum-norm perturbation under second-order cone constraints.
//!
//! Solves
//!
//! ```text
//! min ||y||  s.t.  <c_a, x + y> + o_a + k_a ||x + y||_{A_a} + margin <= 0   for all a
//! ```
//!
//! Each constraint is the support function of the ellipsoid with center
//! `c_a`, dual shape `A_a` and radius `k_a`, so with `m_a = o_a + margin > 0`
//! the system is feasible exactly when the origin lies outside the convex
//! hull of those ellipsoids. The hull test both decides feasibility and
//! hands back a separating direction, which scaled up is a strictly
//! feasible point. From there a log-barrier interior-point method with
//! damped Newton steps converges to the projection of `x` onto the feasible
//! set. Iterates stay strictly feasible, so returned residuals are never
//! positive.

use nalgebra::{DMatrix, DVector};

use super::ellipsoid::{Ellipsoid, EllipsoidSet};
use super::hull::{hull_membership_distance, HullOptions};
use super::linalg::spd_factor;
use crate::error::{Error, Result};

/// `<linear, z> + offset + cone_weight * ||z||_shape`, evaluated at `z = x + y`.
#[derive(Clone, Debug, PartialEq)]
pub struct SocConstraint {
    pub linear: DVector<f64>,
    pub offset: f64,
    pub cone_weight: f64,
    pub shape: DMatrix<f64>,
}

impl SocConstraint {
    pub fn new(
        linear: DVector<f64>,
        offset: f64,
        cone_weight: f64,
        shape: DMatrix<f64>,
    ) -> Result<Self> {
        let d = linear.len();
        if shape.nrows() != d || shape.ncols() != d {
            return Err(Error::Dimension {
                expected: d,
                found: shape.nrows(),
            });
        }
        if !(cone_weight >= 0.0 && cone_weight.is_finite()) {
            return Err(Error::InvalidInput(format!("cone weight {cone_weight}")));
        }
        if !offset.is_finite() || linear.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite constraint data".into()));
        }
        Ok(Self {
            linear,
            offset,
            cone_weight,
            shape,
        })
    }

    /// A purely linear constraint `<linear, z> + offset <= -margin`.
    pub fn linear(linear: DVector<f64>, offset: f64) -> Result<Self> {
        let d = linear.len();
        Self::new(linear, offset, 0.0, DMatrix::zeros(d, d))
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn eval(&self, z: &DVector<f64>) -> f64 {
        let mut v = self.linear.dot(z) + self.offset;
        if self.cone_weight > 0.0 {
            v += self.cone_weight * z.dot(&(&self.shape * z)).max(0.0).sqrt();
        }
        v
    }

    fn ellipsoid(&self) -> Result<Ellipsoid> {
        Ellipsoid::from_inverse_shape(self.linear.clone(), self.shape.clone(), self.cone_weight)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SocOptions {
    /// Largest constraint violation accepted in a returned point.
    pub feasibility_tol: f64,
    /// Barrier duality gap target, relative to the objective `1/2 ||y||^2`.
    pub relative_gap: f64,
    pub max_outer: usize,
    pub max_newton: usize,
    pub hull: HullOptions,
}

impl Default for SocOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-6,
            relative_gap: 1e-9,
            max_outer: 60,
            max_newton: 400,
            hull: HullOptions {
                max_iter: 5_000,
                tol: 1e-9,
                stop_on_verdict: true,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SocSolution {
    pub y: DVector<f64>,
    pub norm: f64,
    /// `max(0, max_a g_a(x + y))`.
    pub max_residual: f64,
    pub newton_steps: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SocOutcome {
    Solved(SocSolution),
    /// The constraint system has no solution; `hull_distance` is the
    /// (conservative) distance of the origin to the constraint hull.
    Infeasible { hull_distance: f64 },
    /// The solver gave up; feasibility was not refuted.
    Failed { reason: String },
}

impl SocOutcome {
    pub fn solution(&self) -> Option<&SocSolution> {
        match self {
            SocOutcome::Solved(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, SocOutcome::Infeasible { .. })
    }
}

pub fn min_norm_soc(
    constraints: &[SocConstraint],
    base: &DVector<f64>,
    margin: f64,
    opts: SocOptions,
) -> Result<SocOutcome> {
    let d = base.len();
    for c in constraints {
        if c.dim() != d {
            return Err(Error::Dimension {
                expected: d,
                found: c.dim(),
            });
        }
        if c.offset + margin <= 0.0 {
            return Err(Error::InvalidInput(
                "offset + margin must be positive for every constraint".into(),
            ));
        }
    }

    let residual = |z: &DVector<f64>| {
        constraints
            .iter()
            .map(|c| c.eval(z) + margin)
            .fold(f64::NEG_INFINITY, f64::max)
    };

    if constraints.is_empty() || residual(base) <= 0.0 {
        return Ok(SocOutcome::Solved(SocSolution {
            y: DVector::zeros(d),
            norm: 0.0,
            max_residual: 0.0,
            newton_steps: 0,
        }));
    }

    let set = EllipsoidSet::new(
        constraints
            .iter()
            .map(SocConstraint::ellipsoid)
            .collect::<Result<Vec<_>>>()?,
    )?;
    let hull = hull_membership_distance(&DVector::zeros(d), &set, opts.hull)?;
    let Some(dir) = hull.separating_direction.clone().filter(|_| hull.is_outside()) else {
        return Ok(SocOutcome::Infeasible {
            hull_distance: hull.distance,
        });
    };

    // h_a(dir) < 0 for every constraint; scale until each has slack m_a.
    let mut scale: f64 = 0.0;
    for c in constraints {
        let h = c.eval(&dir) - c.offset;
        if h >= 0.0 {
            return Ok(SocOutcome::Failed {
                reason: "separating direction is not strictly feasible".into(),
            });
        }
        scale = scale.max((c.offset + margin) / -h);
    }
    let start = dir * (2.0 * scale);

    barrier_solve(constraints, base, margin, start, opts)
}

struct Terms {
    value: f64,
    grad: DVector<f64>,
    hess: Option<DMatrix<f64>>,
}

fn constraint_terms(c: &SocConstraint, z: &DVector<f64>, margin: f64) -> Terms {
    let mut value = c.linear.dot(z) + c.offset + margin;
    let mut grad = c.linear.clone();
    let mut hess = None;
    if c.cone_weight > 0.0 {
        let az = &c.shape * z;
        let n = az.dot(z).max(0.0).sqrt();
        value += c.cone_weight * n;
        if n > 0.0 {
            grad += &az * (c.cone_weight / n);
            let h = (&c.shape - &az * az.transpose() / (n * n)) * (c.cone_weight / n);
            hess = Some(h);
        }
    }
    Terms { value, grad, hess }
}

fn barrier_solve(
    constraints: &[SocConstraint],
    base: &DVector<f64>,
    margin: f64,
    start: DVector<f64>,
    opts: SocOptions,
) -> Result<SocOutcome> {
    let d = base.len();
    let m = constraints.len() as f64;
    let objective = |z: &DVector<f64>| 0.5 * (z - base).norm_squared();
    let strictly_feasible = |z: &DVector<f64>| {
        constraints
            .iter()
            .all(|c| c.eval(z) + margin < 0.0)
    };
    let barrier = |z: &DVector<f64>, t: f64| -> f64 {
        let mut v = t * objective(z);
        for c in constraints {
            let g = c.eval(z) + margin;
            if g >= 0.0 {
                return f64::INFINITY;
            }
            v -= (-g).ln();
        }
        v
    };

    let mut z = start;
    let mut t = m / objective(&z).max(f64::MIN_POSITIVE);
    let mut newton_steps = 0;

    for _ in 0..opts.max_outer {
        for _ in 0..opts.max_newton {
            let mut grad = (&z - base) * t;
            let mut hess = DMatrix::identity(d, d) * t;
            for c in constraints {
                let terms = constraint_terms(c, &z, margin);
                let slack = -terms.value;
                grad += &terms.grad / slack;
                hess += &terms.grad * terms.grad.transpose() / (slack * slack);
                if let Some(h) = terms.hess {
                    hess += h / slack;
                }
            }
            let step = match spd_factor(&hess) {
                Ok(f) => -f.solve(&grad),
                Err(_) => {
                    return Ok(SocOutcome::Failed {
                        reason: "barrier Hessian lost definiteness".into(),
                    })
                }
            };
            let slope = grad.dot(&step);
            // Half the squared Newton decrement bounds the barrier
            // suboptimality; below this it is lost in rounding.
            if -slope / 2.0 <= 1e-10 {
                break;
            }
            newton_steps += 1;

            let current = barrier(&z, t);
            let mut s = 1.0;
            let mut accepted = false;
            while s > 1e-20 {
                let trial = &z + &step * s;
                if strictly_feasible(&trial) {
                    let value = barrier(&trial, t);
                    if value <= current + 0.25 * s * slope && value < current {
                        z = trial;
                        accepted = true;
                        break;
                    }
                }
                s *= 0.5;
            }
            if !accepted {
                // No further progress at this precision.
                break;
            }
        }

        if m / t <= opts.relative_gap * objective(&z).max(f64::MIN_POSITIVE) {
            let y = &z - base;
            let max_residual = constraints
                .iter()
                .map(|c| c.eval(&z) + margin)
                .fold(0.0, f64::max);
            if max_residual > opts.feasibility_tol {
                return Ok(SocOutcome::Failed {
                    reason: format!("residual {max_residual} above tolerance"),
                });
            }
            return Ok(SocOutcome::Solved(SocSolution {
                norm: y.norm(),
                y,
                max_residual,
                newton_steps,
            }));
        }
        t *= 50.0;
    }

    Ok(SocOutcome::Failed {
        reason: format!("barrier did not converge in {} outer iterations", opts.max_outer),
    })
}
