//! Single-context attacks: the smallest perturbation `y` of a chosen
//! context `x` such that the learner prefers the target arm at `x + y`.
//!
//! Upper confidence values over an ellipsoid are linear terms plus a
//! weighted norm, so the relaxed LinUCB, LinTS and epsilon-greedy attacks
//! are minimum-norm problems under second-order cone constraints. The exact
//! LinUCB problem subtracts the target arm's own bonus, which makes it a
//! difference of convex functions; it is handled by convex-concave
//! iterations from several starts.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::convex::{
    hull_membership_distance, min_norm_soc, normal_quantile, Ellipsoid, EllipsoidSet,
    HullOptions, SocConstraint, SocOptions, SocOutcome,
};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeasibilityMode {
    /// The target arm's center lies outside the hull of the other arms'
    /// confidence sets. Exact for the relaxed attack.
    Relaxed,
    /// Some point of the target arm's confidence set lies outside that
    /// hull. Searched over finitely many candidates, so a negative answer
    /// is not a proof.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FullSearchOptions {
    /// Random anchors for the convex-concave search, besides the relaxed
    /// solution and the feasibility witness.
    pub starts: usize,
    pub max_rounds: usize,
    /// Stop a start once an iteration shrinks `||y||` by less than this
    /// fraction.
    pub rel_tol: f64,
    /// Random boundary points of the target set tried by the full
    /// feasibility check.
    pub boundary_samples: usize,
    pub seed: u64,
}

impl Default for FullSearchOptions {
    fn default() -> Self {
        Self {
            starts: 8,
            max_rounds: 30,
            rel_tol: 1e-7,
            boundary_samples: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleContextAttackConfig {
    pub target_context: DVector<f64>,
    pub target_arm: usize,
    /// Required advantage `xi > 0` of the target arm.
    pub margin: f64,
    /// Confidence `delta` of the Thompson-sampling attack.
    pub ts_confidence: f64,
    pub soc: SocOptions,
    pub full: FullSearchOptions,
}

impl SingleContextAttackConfig {
    pub fn new(target_context: DVector<f64>, target_arm: usize, margin: f64) -> Self {
        Self {
            target_context,
            target_arm,
            margin,
            ts_confidence: 0.05,
            soc: SocOptions::default(),
            full: FullSearchOptions::default(),
        }
    }

    fn validate(&self, n_arms: usize, dim: usize) -> Result<()> {
        if n_arms == 0 {
            return Err(Error::InvalidInput("no arms given".into()));
        }
        if self.target_arm >= n_arms {
            return Err(Error::ArmIndex {
                arm: self.target_arm,
                n_arms,
            });
        }
        if self.target_context.len() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: self.target_context.len(),
            });
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!(
                "margin must be positive, got {}",
                self.margin
            )));
        }
        if !(self.ts_confidence > 0.0 && self.ts_confidence < 1.0) {
            return Err(Error::Config(format!(
                "ts confidence must lie in (0, 1), got {}",
                self.ts_confidence
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Feasibility {
    pub feasible: bool,
    /// A point of the target set outside the hull, when one was found.
    pub witness: Option<DVector<f64>>,
    /// Distance from the target center to the hull of the other sets.
    pub hull_distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SingleContextSolution {
    pub y: DVector<f64>,
    pub norm: f64,
    /// Largest constraint value at `x + y` (including the margin); at most
    /// the solver tolerance.
    pub max_residual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SingleContextOutcome {
    Perturbation(SingleContextSolution),
    Infeasible,
    SolverFailure(String),
}

impl SingleContextOutcome {
    pub fn solution(&self) -> Option<&SingleContextSolution> {
        match self {
            SingleContextOutcome::Perturbation(s) => Some(s),
            _ => None,
        }
    }
}

fn others(ellipsoids: &[Ellipsoid], target: usize) -> Option<EllipsoidSet> {
    let rest: Vec<Ellipsoid> = ellipsoids
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != target)
        .map(|(_, e)| e.clone())
        .collect();
    EllipsoidSet::new(rest).ok()
}

fn check_ellipsoids(ellipsoids: &[Ellipsoid], target: usize) -> Result<usize> {
    let Some(first) = ellipsoids.first() else {
        return Err(Error::InvalidInput("no arms given".into()));
    };
    if target >= ellipsoids.len() {
        return Err(Error::ArmIndex {
            arm: target,
            n_arms: ellipsoids.len(),
        });
    }
    let d = first.dim();
    if let Some(e) = ellipsoids.iter().find(|e| e.dim() != d) {
        return Err(Error::Dimension {
            expected: d,
            found: e.dim(),
        });
    }
    Ok(d)
}

/// `h_target(u) - max_{a != target} h_a(u)` and the target's support point.
fn advantage(target: &Ellipsoid, rest: &EllipsoidSet, u: &DVector<f64>) -> (f64, DVector<f64>, DVector<f64>) {
    let mine = target.support(u);
    let (best, theirs) = rest
        .iter()
        .map(|e| e.support(u))
        .map(|s| (s.value, s.point))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("ellipsoid sets are nonempty");
    (mine.value - best, mine.point, theirs)
}

/// Whether a single-context attack can exist given the arms' confidence
/// sets, with a witness parameter of the target set.
pub fn feasibility_check(
    ellipsoids: &[Ellipsoid],
    target_arm: usize,
    mode: FeasibilityMode,
    hull: HullOptions,
    search: &FullSearchOptions,
) -> Result<Feasibility> {
    let d = check_ellipsoids(ellipsoids, target_arm)?;
    let target = &ellipsoids[target_arm];
    let Some(rest) = others(ellipsoids, target_arm) else {
        return Ok(Feasibility {
            feasible: true,
            witness: Some(target.center().clone()),
            hull_distance: f64::INFINITY,
        });
    };

    let center = hull_membership_distance(target.center(), &rest, hull)?;
    let mut result = Feasibility {
        feasible: center.is_outside(),
        witness: center.is_outside().then(|| target.center().clone()),
        hull_distance: center.distance,
    };
    if result.feasible || mode == FeasibilityMode::Relaxed || target.radius() == 0.0 {
        return Ok(result);
    }

    // Candidate directions: principal axes of the target set both ways,
    // then random ones. Each yields the target's support point.
    let mut directions: Vec<DVector<f64>> = Vec::new();
    let eig = target.inv_shape().clone().symmetric_eigen();
    for i in 0..d {
        let e = eig.eigenvectors.column(i).into_owned();
        directions.push(-&e);
        directions.push(e);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    for _ in 0..search.boundary_samples {
        directions.push(DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng)));
    }

    let mut best: Option<(f64, DVector<f64>)> = None;
    for u in directions {
        let n = u.norm();
        if n == 0.0 {
            continue;
        }
        let u = u / n;
        let (gain, point, _) = advantage(target, &rest, &u);
        if gain > hull.tol {
            result.feasible = true;
            result.witness = Some(point);
            return Ok(result);
        }
        if hull_membership_distance(&point, &rest, hull)?.is_outside() {
            result.feasible = true;
            result.witness = Some(point);
            return Ok(result);
        }
        if best.as_ref().is_none_or(|(g, _)| gain > *g) {
            best = Some((gain, u));
        }
    }

    // Local ascent of the support-function gap on the sphere from the best
    // candidate direction.
    if let Some((_, mut u)) = best {
        let mut step = 0.5;
        for _ in 0..200 {
            let (_, mine, theirs) = advantage(target, &rest, &u);
            let g = mine - theirs;
            let tangent = &g - &u * g.dot(&u);
            let tn = tangent.norm();
            if tn < 1e-14 {
                break;
            }
            let cand = (&u + tangent * (step / tn)).normalize();
            let (gain_new, point, _) = advantage(target, &rest, &cand);
            let (gain_old, _, _) = advantage(target, &rest, &u);
            if gain_new > gain_old {
                u = cand;
                if gain_new > hull.tol {
                    result.feasible = true;
                    result.witness = Some(point);
                    return Ok(result);
                }
            } else {
                step *= 0.5;
                if step < 1e-10 {
                    break;
                }
            }
        }
    }
    Ok(result)
}

/// `<c_a, z> + k_a ||z||_{A_a}` constraints, one per non-target arm, with
/// `c_a = center_a - anchor`.
fn anchored_constraints(
    ellipsoids: &[Ellipsoid],
    target: usize,
    anchor: &DVector<f64>,
    cone_weight: impl Fn(&Ellipsoid) -> f64,
    shape: impl Fn(&Ellipsoid) -> DMatrix<f64>,
) -> Result<Vec<SocConstraint>> {
    ellipsoids
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != target)
        .map(|(_, e)| SocConstraint::new(e.center() - anchor, 0.0, cone_weight(e), shape(e)))
        .collect()
}

fn to_outcome(outcome: SocOutcome) -> SingleContextOutcome {
    match outcome {
        SocOutcome::Solved(s) => SingleContextOutcome::Perturbation(SingleContextSolution {
            y: s.y,
            norm: s.norm,
            max_residual: s.max_residual,
        }),
        SocOutcome::Infeasible { .. } => SingleContextOutcome::Infeasible,
        SocOutcome::Failed { reason } => SingleContextOutcome::SolverFailure(reason),
    }
}

/// Minimum-norm `y` with `<x + y, c_a - c_t> + beta_a ||x + y||_{V_a^-1} <= -xi`
/// for every arm `a` other than the target `t`.
pub fn relaxed_linucb_attack(
    config: &SingleContextAttackConfig,
    ellipsoids: &[Ellipsoid],
) -> Result<SingleContextOutcome> {
    let d = check_ellipsoids(ellipsoids, config.target_arm)?;
    config.validate(ellipsoids.len(), d)?;
    let feasibility = feasibility_check(
        ellipsoids,
        config.target_arm,
        FeasibilityMode::Relaxed,
        config.soc.hull,
        &config.full,
    )?;
    if !feasibility.feasible {
        return Ok(SingleContextOutcome::Infeasible);
    }
    let target = &ellipsoids[config.target_arm];
    let constraints = anchored_constraints(
        ellipsoids,
        config.target_arm,
        target.center(),
        |e| e.radius(),
        |e| e.inv_shape().clone(),
    )?;
    let outcome = min_norm_soc(&constraints, &config.target_context, config.margin, config.soc)?;
    Ok(match to_outcome(outcome) {
        // The hull test inside the solver disagreed with the one above,
        // which only happens at the tolerance boundary.
        SingleContextOutcome::Infeasible => {
            SingleContextOutcome::SolverFailure("borderline feasibility".into())
        }
        other => other,
    })
}

/// The exact LinUCB condition at `z`: for every other arm `a`,
/// `UCB_a(z) + xi - UCB_t(z)`.
fn full_residual(
    ellipsoids: &[Ellipsoid],
    target: usize,
    z: &DVector<f64>,
    margin: f64,
) -> f64 {
    let t = &ellipsoids[target];
    let ucb_t = t.support_value(z);
    ellipsoids
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != target)
        .map(|(_, e)| e.support_value(z) + margin - ucb_t)
        .fold(f64::NEG_INFINITY, f64::max)
}

enum StartResult {
    Solved(DVector<f64>),
    Infeasible,
    Failed(String),
}

/// Convex-concave iterations: the target's bonus is replaced by its
/// linearization, which turns the target set into the single point
/// `anchor`, and the anchor moves to the target's support point in the
/// direction of the latest solution. Every iterate stays feasible for the
/// exact problem and `||y||` never increases.
fn ccp_from(
    config: &SingleContextAttackConfig,
    ellipsoids: &[Ellipsoid],
    mut anchor: DVector<f64>,
) -> Result<StartResult> {
    let target = &ellipsoids[config.target_arm];
    let x = &config.target_context;
    let mut best: Option<DVector<f64>> = None;
    for _ in 0..config.full.max_rounds {
        let constraints = anchored_constraints(
            ellipsoids,
            config.target_arm,
            &anchor,
            |e| e.radius(),
            |e| e.inv_shape().clone(),
        )?;
        let y = match min_norm_soc(&constraints, x, config.margin, config.soc)? {
            SocOutcome::Solved(s) => s.y,
            SocOutcome::Infeasible { .. } => {
                return Ok(best.map_or(StartResult::Infeasible, StartResult::Solved))
            }
            SocOutcome::Failed { reason } => {
                return Ok(best.map_or(StartResult::Failed(reason), StartResult::Solved))
            }
        };
        let prev = best.as_ref().map(|b| b.norm());
        let norm = y.norm();
        let z = x + &y;
        best = Some(y);
        if prev.is_some_and(|p| p - norm <= config.full.rel_tol * p.max(1e-300)) {
            break;
        }
        if z.norm() == 0.0 {
            break;
        }
        anchor = target.support(&z).point;
    }
    Ok(best.map_or(StartResult::Failed("no rounds run".into()), StartResult::Solved))
}

/// Minimum-norm `y` such that the target arm's upper confidence value at
/// `x + y` beats every other arm's by `xi`. Non-convex; the best of several
/// local solutions is returned, seeded by the relaxed solution.
pub fn full_linucb_attack(
    config: &SingleContextAttackConfig,
    ellipsoids: &[Ellipsoid],
) -> Result<SingleContextOutcome> {
    let d = check_ellipsoids(ellipsoids, config.target_arm)?;
    config.validate(ellipsoids.len(), d)?;
    let x = &config.target_context;
    let target = &ellipsoids[config.target_arm];
    if full_residual(ellipsoids, config.target_arm, x, config.margin) <= 0.0 {
        return Ok(SingleContextOutcome::Perturbation(SingleContextSolution {
            y: DVector::zeros(d),
            norm: 0.0,
            max_residual: 0.0,
        }));
    }

    let mut anchors = vec![target.center().clone()];
    let feasibility = feasibility_check(
        ellipsoids,
        config.target_arm,
        FeasibilityMode::Full,
        config.soc.hull,
        &config.full,
    )?;
    if let Some(w) = feasibility.witness {
        if &w != target.center() {
            anchors.push(w);
        }
    }
    if target.radius() > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.full.seed.wrapping_add(1));
        for _ in 0..config.full.starts {
            let u = DVector::from_fn(d, |_, _| StandardNormal.sample(&mut rng));
            if u.norm() > 0.0 {
                anchors.push(target.support(&u).point);
            }
        }
    }

    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    let mut failure: Option<String> = None;
    for anchor in anchors {
        match ccp_from(config, ellipsoids, anchor)? {
            StartResult::Solved(y) => {
                let residual = full_residual(ellipsoids, config.target_arm, &(x + &y), config.margin);
                if residual > config.soc.feasibility_tol {
                    continue;
                }
                let norm = y.norm();
                if best.as_ref().is_none_or(|(n, _, _)| norm < *n) {
                    best = Some((norm, y, residual.max(0.0)));
                }
            }
            StartResult::Infeasible => {}
            StartResult::Failed(reason) => failure = Some(reason),
        }
    }
    Ok(match (best, failure) {
        (Some((norm, y, max_residual)), _) => {
            SingleContextOutcome::Perturbation(SingleContextSolution {
                y,
                norm,
                max_residual,
            })
        }
        (None, Some(reason)) => SingleContextOutcome::SolverFailure(reason),
        (None, None) if feasibility.feasible => {
            SingleContextOutcome::SolverFailure("no start reached a feasible point".into())
        }
        (None, None) => SingleContextOutcome::Infeasible,
    })
}

/// `v * Phi^-1(1 - delta / (K - 1))`, floored at zero.
pub fn lints_cone_weight(ts_scale: f64, delta: f64, n_arms: usize) -> Result<f64> {
    if n_arms < 2 {
        return Ok(0.0);
    }
    let q = normal_quantile(1.0 - delta / (n_arms - 1) as f64)?;
    Ok((ts_scale * q).max(0.0))
}

/// Minimum-norm `y` with
/// `<x + y, c_t - c_a> - xi >= k ||x + y||_{V_a^-1 + V_t^-1}` for every other
/// arm, `k` from [`lints_cone_weight`]. Only the centers and dual shapes of
/// `ellipsoids` are used.
pub fn lints_attack(
    config: &SingleContextAttackConfig,
    ellipsoids: &[Ellipsoid],
    ts_scale: f64,
) -> Result<SingleContextOutcome> {
    let d = check_ellipsoids(ellipsoids, config.target_arm)?;
    config.validate(ellipsoids.len(), d)?;
    let kappa = lints_cone_weight(ts_scale, config.ts_confidence, ellipsoids.len())?;
    let target = &ellipsoids[config.target_arm];
    let constraints = anchored_constraints(
        ellipsoids,
        config.target_arm,
        target.center(),
        |_| kappa,
        |e| e.inv_shape() + target.inv_shape(),
    )?;
    Ok(to_outcome(min_norm_soc(
        &constraints,
        &config.target_context,
        config.margin,
        config.soc,
    )?))
}

/// Minimum-norm `y` with `<x + y, c_t - c_a> >= xi` for every other arm.
pub fn eps_greedy_attack(
    config: &SingleContextAttackConfig,
    estimates: &[DVector<f64>],
) -> Result<SingleContextOutcome> {
    let points: Vec<Ellipsoid> = estimates.iter().cloned().map(Ellipsoid::point).collect();
    let d = check_ellipsoids(&points, config.target_arm)?;
    config.validate(points.len(), d)?;
    let target = &estimates[config.target_arm];
    let constraints: Vec<SocConstraint> = estimates
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != config.target_arm)
        .map(|(_, c)| SocConstraint::linear(c - target, 0.0))
        .collect::<Result<_>>()?;
    Ok(to_outcome(min_norm_soc(
        &constraints,
        &config.target_context,
        config.margin,
        config.soc,
    )?))
}
