//! Per-arm ridge regression with an incrementally maintained inverse.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::convex::{spd_factor, Ellipsoid};
use crate::error::{Error, Result};

/// Rank-one inverse updates between full refactorizations.
pub const REFACTOR_EVERY: u64 = 10_000;

#[derive(Clone, Debug)]
pub struct RidgeArmState {
    lambda: f64,
    design: DMatrix<f64>,
    design_inv: DMatrix<f64>,
    response: DVector<f64>,
    estimate: DVector<f64>,
    pulls: u64,
    since_refactor: u64,
}

/// Serializable form of a [`RidgeArmState`]: the inverse and estimate are
/// rebuilt on load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmSnapshot {
    pub lambda: f64,
    pub design: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub pulls: u64,
}

impl RidgeArmState {
    pub fn new(dim: usize, lambda: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda {lambda} must be positive")));
        }
        Ok(Self {
            lambda,
            design: DMatrix::identity(dim, dim) * lambda,
            design_inv: DMatrix::identity(dim, dim) / lambda,
            response: DVector::zeros(dim),
            estimate: DVector::zeros(dim),
            pulls: 0,
            since_refactor: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.response.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn design_inv(&self) -> &DMatrix<f64> {
        &self.design_inv
    }

    pub fn response(&self) -> &DVector<f64> {
        &self.response
    }

    pub fn estimate(&self) -> &DVector<f64> {
        &self.estimate
    }

    pub fn pulls(&self) -> u64 {
        self.pulls
    }

    /// `||x||_{V^-1}`.
    pub fn inv_norm(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.design_inv * x)).max(0.0).sqrt()
    }

    pub fn update(&mut self, context: &DVector<f64>, reward: f64) -> Result<()> {
        if context.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: context.len(),
            });
        }
        if !reward.is_finite() || context.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        self.design.ger(1.0, context, context, 1.0);
        self.response.axpy(reward, context, 1.0);
        self.pulls += 1;
        self.since_refactor += 1;

        if self.since_refactor >= REFACTOR_EVERY {
            self.refactorize()?;
        } else {
            // Sherman–Morrison: (V + xx')^-1 = V^-1 - (V^-1 x)(V^-1 x)' / (1 + x'V^-1 x).
            let u = &self.design_inv * context;
            let denom = 1.0 + context.dot(&u);
            self.design_inv.ger(-1.0 / denom, &u, &u, 1.0);
            self.estimate = &self.design_inv * &self.response;
        }
        Ok(())
    }

    /// Recomputes the inverse and estimate from the design matrix.
    pub fn refactorize(&mut self) -> Result<()> {
        let factor = spd_factor(&self.design)?;
        self.design_inv = factor.inverse();
        self.estimate = factor.solve(&self.response);
        self.since_refactor = 0;
        Ok(())
    }

    /// The confidence set `{theta : ||theta - estimate||_V <= radius}`.
    pub fn ellipsoid(&self, radius: f64) -> Result<Ellipsoid> {
        Ellipsoid::from_shape_and_inverse(
            self.estimate.clone(),
            self.design.clone(),
            self.design_inv.clone(),
            radius,
        )
    }

    pub fn snapshot(&self) -> ArmSnapshot {
        ArmSnapshot {
            lambda: self.lambda,
            design: self
                .design
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            response: self.response.iter().copied().collect(),
            pulls: self.pulls,
        }
    }

    pub fn from_snapshot(snap: &ArmSnapshot) -> Result<Self> {
        let d = snap.response.len();
        if snap.design.len() != d || snap.design.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: snap.design.len(),
            });
        }
        let mut state = Self::new(d, snap.lambda)?;
        state.design = DMatrix::from_fn(d, d, |i, j| snap.design[i][j]);
        state.response = DVector::from_vec(snap.response.clone());
        state.pulls = snap.pulls;
        state.refactorize()?;
        Ok(state)
    }
}
