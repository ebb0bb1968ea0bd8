//! Numerical kernels shared by the learners and the attacks.

mod ellipsoid;
mod hull;
mod linalg;
mod quantile;
mod soc;

pub use ellipsoid::{ellipsoid_support, Ellipsoid, EllipsoidSet, Support};
pub use hull::{hull_membership_distance, HullDistance, HullOptions, HullVerdict};
pub use linalg::{inf_norm, quadratic_norm, spd_factor, spd_solve, SpdFactor};
pub use quantile::normal_quantile;
pub use soc::{min_norm_soc, SocConstraint, SocOptions, SocOutcome, SocSolution};
