//! Fixtures shared by the benchmarks.

use banditlab_core::convex::{Ellipsoid, SocConstraint};
use banditlab_core::learners::RidgeArmState;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vector(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0))
}

pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(d, d) * 0.1
}

/// `k` ridge states of dimension `d`, each fed `n` random observations.
pub fn trained_states(k: usize, d: usize, n: usize, seed: u64) -> Vec<RidgeArmState> {
    let mut rng = rng(seed);
    (0..k)
        .map(|_| {
            let mut s = RidgeArmState::new(d, 0.1).expect("valid ridge state");
            for _ in 0..n {
                let x = random_vector(d, &mut rng);
                s.update(&x, rng.random_range(0.0..1.0)).expect("update");
            }
            s
        })
        .collect()
}

pub fn random_ellipsoids(k: usize, d: usize, seed: u64) -> Vec<Ellipsoid> {
    let mut rng = rng(seed);
    (0..k)
        .map(|_| {
            let center = random_vector(d, &mut rng);
            let shape = random_spd(d, &mut rng);
            Ellipsoid::from_shape(center, shape, rng.random_range(0.1..0.5)).expect("ellipsoid")
        })
        .collect()
}

/// `m` random cone constraints in dimension `d` and a starting point.
pub fn feasible_soc(m: usize, d: usize, seed: u64) -> (Vec<SocConstraint>, DVector<f64>) {
    let mut rng = rng(seed);
    let x = random_vector(d, &mut rng) * 2.0;
    let constraints = (0..m)
        .map(|_| {
            SocConstraint::new(
                random_vector(d, &mut rng),
                rng.random_range(0.05..0.5),
                rng.random_range(0.0..0.5),
                random_spd(d, &mut rng) * 0.5,
            )
            .expect("constraint")
        })
        .collect();
    (constraints, x)
}
