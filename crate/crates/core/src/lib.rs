//! Linear contextual bandit learners, the attacks that steer them toward a
//! chosen arm, and a seeded harness for running attack experiments.

pub mod convex;
pub mod model;
pub mod attacks;
pub mod error;
pub mod harness;
pub mod learners;

pub use error::{Error, Result};
