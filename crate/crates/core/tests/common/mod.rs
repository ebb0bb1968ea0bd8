//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use banditlab_core::convex::{Ellipsoid, SocConstraint};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_spd(d: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(d, d, |_, _| rng.random_range(-1.0..1.0));
    &g * g.transpose() + DMatrix::identity(d, d) * 0.1
}

fn feasible(constraints: &[SocConstraint], z: &DVector<f64>, margin: f64) -> bool {
    constraints.iter().all(|c| c.eval(z) + margin <= 0.0)
}

/// Smallest `||y||` over a grid on `[-5, 5]^2` with `x + y` feasible: a
/// 1e-2 pass locates the optimum, then 1e-3 windows refine around it.
pub fn grid_min_norm_2d(
    constraints: &[SocConstraint],
    x: &DVector<f64>,
    margin: f64,
) -> Option<(f64, DVector<f64>)> {
    let search = |lo: [f64; 2], hi: [f64; 2], h: f64| {
        let nx = ((hi[0] - lo[0]) / h).round() as i64;
        let ny = ((hi[1] - lo[1]) / h).round() as i64;
        let mut best: Option<(f64, DVector<f64>)> = None;
        for i in 0..=nx {
            for j in 0..=ny {
                let y = DVector::from_vec(vec![lo[0] + i as f64 * h, lo[1] + j as f64 * h]);
                let n = y.norm();
                if best.as_ref().is_some_and(|(b, _)| n >= *b) {
                    continue;
                }
                if feasible(constraints, &(x + &y), margin) {
                    best = Some((n, y));
                }
            }
        }
        best
    };
    let (_, coarse) = search([-5.0, -5.0], [5.0, 5.0], 1e-2)?;
    // The feasible set is convex, so re-centering the fine window on the
    // current best walks to the fine-grid minimizer.
    let w = 0.3;
    let mut best = (f64::INFINITY, coarse);
    loop {
        let c = best.1.clone();
        let (n, y) = search([c[0] - w, c[1] - w], [c[0] + w, c[1] + w], 1e-3)?;
        if n >= best.0 {
            return Some(best);
        }
        best = (n, y);
    }
}

/// `max_u [h_target(u) - max_{a != target} h_a(u)]` over `n` unit
/// directions in the plane.
pub fn direction_grid_advantage(ellipsoids: &[Ellipsoid], target: usize, n: usize) -> f64 {
    (0..n)
        .map(|k| {
            let phi = std::f64::consts::TAU * k as f64 / n as f64;
            let u = DVector::from_vec(vec![phi.cos(), phi.sin()]);
            let mine = ellipsoids[target].support_value(&u);
            let theirs = ellipsoids
                .iter()
                .enumerate()
                .filter(|(a, _)| *a != target)
                .map(|(_, e)| e.support_value(&u))
                .fold(f64::NEG_INFINITY, f64::max);
            mine - theirs
        })
        .fold(f64::NEG_INFINITY, f64::max)
}
