use nalgebra::{DMatrix, DVector};

use super::linalg::{quadratic_norm, spd_factor};
use crate::error::{Error, Result};

/// The set `{theta : ||theta - center||_V <= radius}`.
///
/// The ellipsoid is stored through its dual shape `A = V^{-1}`, which is
/// all that support-function queries need. Building from `A` directly also
/// admits the degenerate (rank-deficient or zero) shapes that appear for
/// linear constraints.
#[derive(Clone, Debug, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    inv_shape: DMatrix<f64>,
    shape: Option<DMatrix<f64>>,
    radius: f64,
}

/// Value and maximizer of a linear form over an ellipsoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Support {
    pub value: f64,
    pub point: DVector<f64>,
}

impl Ellipsoid {
    /// Builds the ellipsoid from its shape matrix `V` (SPD).
    pub fn from_shape(center: DVector<f64>, shape: DMatrix<f64>, radius: f64) -> Result<Self> {
        check_dims(&center, &shape)?;
        check_radius(radius)?;
        let inv_shape = spd_factor(&shape)?.inverse();
        Ok(Self {
            center,
            inv_shape,
            shape: Some(shape),
            radius,
        })
    }

    /// Builds the ellipsoid from a precomputed `V` and `V^{-1}`.
    pub fn from_shape_and_inverse(
        center: DVector<f64>,
        shape: DMatrix<f64>,
        inv_shape: DMatrix<f64>,
        radius: f64,
    ) -> Result<Self> {
        check_dims(&center, &shape)?;
        check_dims(&center, &inv_shape)?;
        check_radius(radius)?;
        Ok(Self {
            center,
            inv_shape,
            shape: Some(shape),
            radius,
        })
    }

    /// Builds the ellipsoid from its dual shape `A` (positive semidefinite).
    pub fn from_inverse_shape(
        center: DVector<f64>,
        inv_shape: DMatrix<f64>,
        radius: f64,
    ) -> Result<Self> {
        check_dims(&center, &inv_shape)?;
        check_radius(radius)?;
        Ok(Self {
            center,
            inv_shape,
            shape: None,
            radius,
        })
    }

    pub fn point(center: DVector<f64>) -> Self {
        let d = center.len();
        Self {
            center,
            inv_shape: DMatrix::zeros(d, d),
            shape: None,
            radius: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn inv_shape(&self) -> &DMatrix<f64> {
        &self.inv_shape
    }

    pub fn shape(&self) -> Option<&DMatrix<f64>> {
        self.shape.as_ref()
    }

    /// `||g||_{V^{-1}}`.
    pub fn dual_norm(&self, g: &DVector<f64>) -> f64 {
        quadratic_norm(&self.inv_shape, g)
    }

    /// `max_{theta in E} <theta, g> = <c, g> + radius * ||g||_{V^{-1}}`.
    pub fn support_value(&self, g: &DVector<f64>) -> f64 {
        self.center.dot(g) + self.radius * self.dual_norm(g)
    }

    /// Support value together with the boundary point attaining it.
    pub fn support(&self, g: &DVector<f64>) -> Support {
        self.extreme(g, 1.0)
    }

    /// Minimizer of `<theta, g>` over the ellipsoid.
    pub fn min_linear(&self, g: &DVector<f64>) -> Support {
        self.extreme(g, -1.0)
    }

    fn extreme(&self, g: &DVector<f64>, sign: f64) -> Support {
        let ag = &self.inv_shape * g;
        let norm = ag.dot(g).max(0.0).sqrt();
        if self.radius == 0.0 || norm == 0.0 {
            return Support {
                value: self.center.dot(g),
                point: self.center.clone(),
            };
        }
        let point = &self.center + ag * (sign * self.radius / norm);
        Support {
            value: self.center.dot(g) + sign * self.radius * norm,
            point,
        }
    }

    /// `||theta - c||_V`; requires the primal shape.
    pub fn shape_distance(&self, theta: &DVector<f64>) -> Result<f64> {
        let diff = theta - &self.center;
        match &self.shape {
            Some(v) => Ok(quadratic_norm(v, &diff)),
            None => {
                if diff.norm() == 0.0 {
                    Ok(0.0)
                } else {
                    let f = spd_factor(&self.inv_shape)?;
                    Ok(diff.dot(&f.solve(&diff)).max(0.0).sqrt())
                }
            }
        }
    }

    pub fn contains(&self, theta: &DVector<f64>, tol: f64) -> Result<bool> {
        Ok(self.shape_distance(theta)? <= self.radius + tol)
    }
}

fn check_dims(center: &DVector<f64>, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != center.len() || m.ncols() != center.len() {
        return Err(Error::Dimension {
            expected: center.len(),
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

fn check_radius(radius: f64) -> Result<()> {
    if !(radius >= 0.0 && radius.is_finite()) {
        return Err(Error::InvalidInput(format!("ellipsoid radius {radius}")));
    }
    Ok(())
}

/// Free-function form of [`Ellipsoid::support`].
pub fn ellipsoid_support(ellipsoid: &Ellipsoid, direction: &DVector<f64>) -> Result<Support> {
    if direction.len() != ellipsoid.dim() {
        return Err(Error::Dimension {
            expected: ellipsoid.dim(),
            found: direction.len(),
        });
    }
    if direction.iter().all(|v| *v == 0.0) {
        return Err(Error::InvalidInput("zero support direction".into()));
    }
    Ok(ellipsoid.support(direction))
}

/// A nonempty collection of ellipsoids of equal dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EllipsoidSet {
    items: Vec<Ellipsoid>,
}

impl EllipsoidSet {
    pub fn new(items: Vec<Ellipsoid>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidInput("empty ellipsoid set".into()))?;
        let d = first.dim();
        if let Some(bad) = items.iter().find(|e| e.dim() != d) {
            return Err(Error::Dimension {
                expected: d,
                found: bad.dim(),
            });
        }
        Ok(Self { items })
    }

    pub fn dim(&self) -> usize {
        self.items[0].dim()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Ellipsoid> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Ellipsoid> {
        self.items.get(i)
    }

    pub fn as_slice(&self) -> &[Ellipsoid] {
        &self.items
    }

    /// All members except `skip`, or `None` if nothing would remain.
    pub fn without(&self, skip: usize) -> Option<EllipsoidSet> {
        let items: Vec<_> = self
            .items
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != skip)
            .map(|(_, e)| e.clone())
            .collect();
        if items.is_empty() {
            None
        } else {
            Some(Self { items })
        }
    }

    /// Support function of the convex hull of the union.
    pub fn support_value(&self, g: &DVector<f64>) -> f64 {
        self.items
            .iter()
            .map(|e| e.support_value(g))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
        &g * g.transpose() + DMatrix::identity(d, d) * 0.2
    }

    #[test]
    fn zero_radius_support_is_center() {
        let e = Ellipsoid::from_shape(v(&[1.0, 2.0]), DMatrix::identity(2, 2), 0.0).unwrap();
        let s = ellipsoid_support(&e, &v(&[3.0, -1.0])).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.point, v(&[1.0, 2.0]));
    }

    #[test]
    fn unit_ball_support() {
        let e = Ellipsoid::from_shape(v(&[0.0, 0.0]), DMatrix::identity(2, 2), 1.0).unwrap();
        let s = ellipsoid_support(&e, &v(&[3.0, 4.0])).unwrap();
        assert!((s.value - 5.0).abs() < 1e-15);
        assert!((s.point - v(&[0.6, 0.8])).norm() < 1e-15);
    }

    #[test]
    fn maximizer_on_boundary_and_dominates_interior_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let d = 5;
        let shape = random_spd(d, &mut rng);
        let center = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let e = Ellipsoid::from_shape(center.clone(), shape.clone(), 1.7).unwrap();
        let g = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
        let s = e.support(&g);
        assert!((e.shape_distance(&s.point).unwrap() - 1.7).abs() < 1e-10);
        assert!((s.point.dot(&g) - s.value).abs() < 1e-10);

        // Interior samples: theta = c + r * L^{-T} u with ||u|| <= 1.
        let f = spd_factor(&shape).unwrap();
        for _ in 0..10_000 {
            let u = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let radius = 1.7 * rng.random::<f64>().powf(1.0 / d as f64) / u.norm();
            let theta = &center + f.solve_upper(&u) * radius;
            assert!(e.contains(&theta, 1e-9).unwrap());
            assert!(s.value >= theta.dot(&g) - 1e-12);
        }
    }

    #[test]
    fn rejects_zero_direction() {
        let e = Ellipsoid::point(v(&[1.0, 1.0]));
        assert!(ellipsoid_support(&e, &v(&[0.0, 0.0])).is_err());
    }

    #[test]
    fn singular_shape_is_a_factorization_error() {
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            Ellipsoid::from_shape(v(&[0.0, 0.0]), singular, 1.0),
            Err(Error::NotPositiveDefinite)
        ));
    }

    proptest::proptest! {
        #[test]
        fn support_is_subadditive(
            seed in 0u64..10_000,
            g1 in proptest::collection::vec(-5.0f64..5.0, 4),
            g2 in proptest::collection::vec(-5.0f64..5.0, 4),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let shape = random_spd(4, &mut rng);
            let center = DVector::from_fn(4, |_, _| rng.random_range(-2.0..2.0));
            let e = Ellipsoid::from_shape(center, shape, rng.random_range(0.0..3.0)).unwrap();
            let (g1, g2) = (DVector::from_vec(g1), DVector::from_vec(g2));
            let lhs = e.support_value(&(&g1 + &g2));
            let rhs = e.support_value(&g1) + e.support_value(&g2);
            proptest::prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
        }
    }
}
