//! Ground-truth bandit environments.
//!
//! A [`BanditInstance`] holds one parameter vector per arm and a finite pool
//! of contexts. Expected rewards `<theta_a, x>` always lie in `(0, 1]`;
//! observed rewards add Gaussian noise.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed above 1 on expected rewards to absorb rounding from the
/// rescaling step.
const REWARD_CEILING_TOL: f64 = 1e-12;

/// Zero-mean Gaussian reward noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardNoise {
    pub sigma: f64,
}

impl RewardNoise {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.sigma * z
    }
}

/// One learner interaction as seen by the environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub time: u64,
    pub context: usize,
    pub arm: usize,
    pub reward: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetArm {
    pub arm: usize,
    /// `min_x <theta_arm, x>` over the context pool.
    pub nu: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BanditInstance {
    arm_params: Vec<DVector<f64>>,
    contexts: Vec<DVector<f64>>,
    noise: RewardNoise,
    /// `means[context][arm]`.
    means: Vec<Vec<f64>>,
    target: Option<TargetArm>,
}

impl BanditInstance {
    pub fn new(
        arm_params: Vec<DVector<f64>>,
        contexts: Vec<DVector<f64>>,
        sigma: f64,
    ) -> Result<Self> {
        if arm_params.is_empty() {
            return Err(Error::Config("instance needs at least one arm".into()));
        }
        if contexts.is_empty() {
            return Err(Error::Config("context pool is empty".into()));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("noise sigma {sigma} must be >= 0")));
        }
        let d = arm_params[0].len();
        if d == 0 {
            return Err(Error::Config("dimension must be positive".into()));
        }
        for v in arm_params.iter().chain(contexts.iter()) {
            if v.len() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Config("non-finite parameter or context".into()));
            }
        }
        let means: Vec<Vec<f64>> = contexts
            .iter()
            .map(|x| arm_params.iter().map(|th| th.dot(x)).collect())
            .collect();
        for (i, row) in means.iter().enumerate() {
            for (a, &m) in row.iter().enumerate() {
                if !(m > 0.0 && m <= 1.0 + REWARD_CEILING_TOL) {
                    return Err(Error::Config(format!(
                        "expected reward {m} of arm {a} at context {i} is outside (0, 1]"
                    )));
                }
            }
        }
        Ok(Self {
            arm_params,
            contexts,
            noise: RewardNoise { sigma },
            means,
            target: None,
        })
    }

    /// Designates the target arm and records `nu = min_x <theta_arm, x>`.
    pub fn with_target(mut self, arm: usize) -> Result<Self> {
        self.check_arm(arm)?;
        let nu = self
            .means
            .iter()
            .map(|row| row[arm])
            .fold(f64::INFINITY, f64::min);
        self.target = Some(TargetArm { arm, nu });
        Ok(self)
    }

    pub fn target(&self) -> Option<TargetArm> {
        self.target
    }

    pub fn n_arms(&self) -> usize {
        self.arm_params.len()
    }

    pub fn dim(&self) -> usize {
        self.arm_params[0].len()
    }

    pub fn n_contexts(&self) -> usize {
        self.contexts.len()
    }

    pub fn sigma(&self) -> f64 {
        self.noise.sigma
    }

    pub fn noise(&self) -> RewardNoise {
        self.noise
    }

    pub fn arm_params(&self) -> &[DVector<f64>] {
        &self.arm_params
    }

    pub fn contexts(&self) -> &[DVector<f64>] {
        &self.contexts
    }

    pub fn context(&self, index: usize) -> &DVector<f64> {
        &self.contexts[index]
    }

    /// `L`: largest context norm in the pool.
    pub fn context_norm_bound(&self) -> f64 {
        self.contexts.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// `S`: largest parameter norm.
    pub fn param_norm_bound(&self) -> f64 {
        self.arm_params.iter().map(|t| t.norm()).fold(0.0, f64::max)
    }

    pub fn expected_reward(&self, context: usize, arm: usize) -> f64 {
        self.means[context][arm]
    }

    pub fn means(&self) -> &[Vec<f64>] {
        &self.means
    }

    /// Best arm for a pool context (lowest index on ties).
    pub fn best_arm(&self, context: usize) -> usize {
        argmax(&self.means[context])
    }

    /// Arm with the lowest expected reward averaged over the pool.
    pub fn worst_arm(&self) -> usize {
        let k = self.n_arms();
        let avg: Vec<f64> = (0..k)
            .map(|a| self.means.iter().map(|row| row[a]).sum::<f64>())
            .collect();
        let mut best = 0;
        for a in 1..k {
            if avg[a] < avg[best] {
                best = a;
            }
        }
        best
    }

    /// Arm with the lowest expected reward at one context.
    pub fn worst_arm_at(&self, context: usize) -> usize {
        let row = &self.means[context];
        let mut best = 0;
        for a in 1..row.len() {
            if row[a] < row[best] {
                best = a;
            }
        }
        best
    }

    /// Uniform draw from the context pool; returns the pool index.
    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.contexts.len())
    }

    /// `<theta_arm, x> + eta` for an arbitrary context vector.
    pub fn reward<R: Rng + ?Sized>(
        &self,
        context: &DVector<f64>,
        arm: usize,
        rng: &mut R,
    ) -> Result<f64> {
        self.check_arm(arm)?;
        if context.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: context.len(),
            });
        }
        Ok(self.arm_params[arm].dot(context) + self.noise.sample(rng))
    }

    /// Noisy reward at a pool context, using the cached means.
    pub fn reward_at<R: Rng + ?Sized>(&self, context: usize, arm: usize, rng: &mut R) -> Result<f64> {
        self.check_arm(arm)?;
        Ok(self.means[context][arm] + self.noise.sample(rng))
    }

    pub fn check_arm(&self, arm: usize) -> Result<()> {
        if arm >= self.n_arms() {
            return Err(Error::ArmIndex {
                arm,
                n_arms: self.n_arms(),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let file = InstanceFile {
            arm_params: self.arm_params.iter().map(|v| v.iter().copied().collect()).collect(),
            contexts: self.contexts.iter().map(|v| v.iter().copied().collect()).collect(),
            sigma: self.noise.sigma,
            target_arm: self.target.map(|t| t.arm),
        };
        serde_json::to_string_pretty(&file).map_err(|e| Error::InvalidInput(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("instance JSON: {e}")))?;
        let inst = Self::new(
            file.arm_params.into_iter().map(DVector::from_vec).collect(),
            file.contexts.into_iter().map(DVector::from_vec).collect(),
            file.sigma,
        )?;
        match file.target_arm {
            Some(a) => inst.with_target(a),
            None => Ok(inst),
        }
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Format {
                path: path.to_path_buf(),
                message: m,
            },
            e => e,
        })
    }

    /// Writes the feature-file format read by [`load_dataset_instance`].
    pub fn write_features_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let header: Vec<String> = (0..self.dim()).map(|i| format!("f{i}")).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        let push_rows = |out: &mut String, rows: &[DVector<f64>]| {
            for row in rows {
                let fields: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                out.push_str(&fields.join(","));
                out.push('\n');
            }
        };
        push_rows(&mut out, &self.arm_params);
        out.push('\n');
        push_rows(&mut out, &self.contexts);
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    arm_params: Vec<Vec<f64>>,
    contexts: Vec<Vec<f64>>,
    sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target_arm: Option<usize>,
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Random instance with folded-normal arm parameters and contexts.
///
/// Contexts are folded-normal directions on the unit sphere scaled by an
/// i.i.d. uniform radius in `(0, 1]`. All parameters are then divided by the
/// largest expected reward, so rewards lie in `(0, 1]` with the maximum at
/// exactly 1. Draws with a non-positive reward are rejected and redrawn.
pub fn generate_synthetic_instance<R: Rng + ?Sized>(
    dim: usize,
    n_arms: usize,
    n_contexts: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<BanditInstance> {
    if dim == 0 || n_arms == 0 || n_contexts == 0 {
        return Err(Error::Config(format!(
            "synthetic instance needs positive sizes (d={dim}, K={n_arms}, contexts={n_contexts})"
        )));
    }
    let folded = |rng: &mut R| {
        let z: f64 = StandardNormal.sample(rng);
        z.abs()
    };
    for _ in 0..1000 {
        let mut arms: Vec<DVector<f64>> = (0..n_arms)
            .map(|_| DVector::from_fn(dim, |_, _| folded(rng)))
            .collect();
        let contexts: Vec<DVector<f64>> = (0..n_contexts)
            .map(|_| {
                let dir = DVector::from_fn(dim, |_, _| folded(rng));
                let radius = 1.0 - rng.random::<f64>(); // (0, 1]
                let norm = dir.norm();
                if norm > 0.0 {
                    dir * (radius / norm)
                } else {
                    dir
                }
            })
            .collect();
        let max = arms
            .iter()
            .flat_map(|th| contexts.iter().map(move |x| th.dot(x)))
            .fold(f64::NEG_INFINITY, f64::max);
        if !(max > 0.0 && max.is_finite()) {
            continue;
        }
        // A few ulps of headroom so rounding cannot push a mean past 1.
        let scale = max * (1.0 + 4.0 * f64::EPSILON);
        for th in arms.iter_mut() {
            *th /= scale;
        }
        let positive = arms
            .iter()
            .all(|th| contexts.iter().all(|x| th.dot(x) > 0.0));
        if positive {
            return BanditInstance::new(arms, contexts, sigma);
        }
    }
    Err(Error::Numerical(
        "could not draw an instance with positive rewards".into(),
    ))
}

/// Loads arm and context features from a CSV feature file.
///
/// Format: a header row naming the `d` feature columns, one row per arm,
/// a blank line, then one row per context. The first `n_arms` arm rows are
/// used. Expected rewards are rescaled into `(0, 1]`: by a single positive
/// factor when all raw inner products are positive, otherwise by a min-max
/// map carried by an extra constant feature (the dimension grows by one).
/// Contexts are normalized so that the largest has unit norm.
pub fn load_dataset_instance(path: &Path, n_arms: usize, noise_sigma: f64) -> Result<BanditInstance> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let load_err = |line: usize, column: usize, message: String| Error::Load {
        path: path.to_path_buf(),
        line,
        column,
        message,
    };

    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .by_ref()
        .find(|(_, l)| !l.trim().is_empty())
        .ok_or_else(|| load_err(1, 0, "empty feature file".into()))?;
    let dim = header.split(',').count();

    let mut arms = Vec::new();
    let mut contexts = Vec::new();
    let mut in_contexts = false;
    for (idx, raw) in lines {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            if !arms.is_empty() {
                in_contexts = true;
            }
            continue;
        }
        let mut row = Vec::with_capacity(dim);
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| load_err(line_no, col + 1, format!("cannot parse {field:?}")))?;
            if !v.is_finite() {
                return Err(load_err(line_no, col + 1, format!("non-finite value {field}")));
            }
            row.push(v);
        }
        if row.len() != dim {
            return Err(load_err(
                line_no,
                row.len().min(dim) + 1,
                format!("expected {dim} columns, found {}", row.len()),
            ));
        }
        if in_contexts {
            contexts.push(DVector::from_vec(row));
        } else {
            arms.push(DVector::from_vec(row));
        }
    }

    if arms.len() < n_arms || n_arms == 0 {
        return Err(load_err(
            0,
            0,
            format!("requested {n_arms} arms, file has {}", arms.len()),
        ));
    }
    arms.truncate(n_arms);
    if contexts.is_empty() {
        return Err(load_err(0, 0, "no context rows after the blank line".into()));
    }

    let (arms, contexts) = rescale_features(arms, contexts);
    BanditInstance::new(arms, contexts, noise_sigma)
}

fn rescale_features(
    mut arms: Vec<DVector<f64>>,
    mut contexts: Vec<DVector<f64>>,
) -> (Vec<DVector<f64>>, Vec<DVector<f64>>) {
    let products: Vec<f64> = arms
        .iter()
        .flat_map(|th| contexts.iter().map(move |x| th.dot(x)))
        .collect();
    let lo = products.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = products.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if lo > 0.0 {
        let max_norm = contexts.iter().map(|x| x.norm()).fold(0.0, f64::max);
        let shrink = max_norm.max(1.0);
        for x in contexts.iter_mut() {
            *x /= shrink;
        }
        for th in arms.iter_mut() {
            *th *= shrink / hi;
        }
        return (arms, contexts);
    }

    // Affine map r -> (r - lo + eps) / (hi - lo + eps) through a bias feature.
    let span = (hi - lo).max(f64::MIN_POSITIVE);
    let eps = 0.01 * span;
    let d = arms[0].len();
    let augment = |v: &DVector<f64>, last: f64| {
        DVector::from_fn(d + 1, |i, _| if i < d { v[i] } else { last })
    };
    let mut aug_contexts: Vec<DVector<f64>> = contexts.iter().map(|x| augment(x, 1.0)).collect();
    let shrink = aug_contexts.iter().map(|x| x.norm()).fold(0.0, f64::max);
    for x in aug_contexts.iter_mut() {
        *x /= shrink;
    }
    let aug_arms = arms
        .iter()
        .map(|th| augment(th, eps - lo) * (shrink / (span + eps)))
        .collect();
    contexts.clear();
    (aug_arms, aug_contexts)
}
