//! Bandit environments: a linear reward model over unit-sphere or file-backed
//! contexts, with Gaussian, bounded heteroscedastic, or no noise, and an
//! optional budget-limited corruption adversary.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::NORM_SLACK;

/// RNG stream families; each family is offset so streams never collide.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum StreamPurpose {
    Theta = 1,
    Contexts = 2,
    Noise = 3,
    Arrivals = 4,
}

/// Deterministic generator for one purpose (and one client, where relevant).
pub fn stream_rng(seed: u64, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & 0xFFFF_FFFF_FFFF));
    rng
}

/// Uniform sample from the unit sphere in `dim` dimensions.
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Index and value of `argmax_a θᵀx_a`, lowest index on ties.
pub fn best_arm(theta: &[f64], contexts: &[Vec<f64>]) -> Result<(usize, f64)> {
    if contexts.is_empty() {
        return Err(Error::InvalidArgument("empty context list".into()));
    }
    let mut best = (0, dot(theta, &contexts[0]));
    for (a, x) in contexts.iter().enumerate().skip(1) {
        let v = dot(theta, x);
        if v > best.1 {
            best = (a, v);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ThetaSpec {
    /// Uniform on the unit sphere, scaled by `scale ≤ 1`.
    Random {
        scale: f64,
    },
    Fixed {
        values: Vec<f64>,
    },
}

/// Per-round noise levels `σ_t` for the heteroscedastic model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SigmaSchedule {
    Constant {
        sigma: f64,
    },
    /// Each round draws one of `levels` uniformly.
    Choice {
        levels: Vec<f64>,
    },
    /// `levels[t mod len]`.
    Cycle {
        levels: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum NoiseModel {
    None,
    /// Zero-mean Gaussian with standard deviation `sigma`.
    Gaussian {
        sigma: f64,
    },
    /// `±σ_t` with equal probability, `σ_t ≤ bound`.
    BoundedHetero {
        bound: f64,
        schedule: SigmaSchedule,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AdversaryStrategy {
    /// Flips the sign of the observed reward on the first `⌊C_p⌋` pulls.
    SignFlipPrefix,
    /// Lowers the reward of the optimal arm by `magnitude`.
    TargetedBestArm { magnitude: f64 },
    /// Adds `corruptions[t]` at pull `t` (zero past the end).
    Custom { corruptions: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub strategy: AdversaryStrategy,
    pub budget: f64,
}

/// Budget-limited reward corruption. The adversary sees the pull index, the
/// context, its true mean and the observed reward, never the learner's state.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionAdversary {
    strategy: AdversaryStrategy,
    budget: f64,
    spent: f64,
}

impl CorruptionAdversary {
    pub fn new(spec: &AdversarySpec) -> Result<Self> {
        if !(spec.budget.is_finite() && spec.budget >= 0.0) {
            return Err(Error::config("Cp", "budget must be nonnegative and finite"));
        }
        if let AdversaryStrategy::Custom { corruptions } = &spec.strategy {
            let total: f64 = corruptions.iter().map(|c| c.abs()).sum();
            if !total.is_finite() || total > spec.budget {
                return Err(Error::BudgetExceeded {
                    spent: 0.0,
                    requested: total,
                    budget: spec.budget,
                });
            }
        }
        if let AdversaryStrategy::TargetedBestArm { magnitude } = spec.strategy {
            if !(magnitude.is_finite() && magnitude >= 0.0) {
                return Err(Error::config("adversary.magnitude", "must be nonnegative"));
            }
        }
        Ok(Self {
            strategy: spec.strategy.clone(),
            budget: spec.budget,
            spent: 0.0,
        })
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn spent(&self) -> f64 {
        self.spent
    }

    fn clip(&self, c: f64) -> f64 {
        let remaining = (self.budget - self.spent).max(0.0);
        if c.abs() > remaining {
            remaining.copysign(c)
        } else {
            c
        }
    }

    /// Corruption `c_t` to add to the observed reward at pull `t`.
    pub fn corrupt(&mut self, t: u64, observed: f64, is_best: bool) -> Result<f64> {
        let c = match &self.strategy {
            AdversaryStrategy::SignFlipPrefix => {
                if (t as f64) < self.budget.floor() {
                    self.clip(-2.0 * observed)
                } else {
                    0.0
                }
            }
            AdversaryStrategy::TargetedBestArm { magnitude } => {
                if is_best {
                    self.clip(-magnitude)
                } else {
                    0.0
                }
            }
            AdversaryStrategy::Custom { corruptions } => {
                corruptions.get(t as usize).copied().unwrap_or(0.0)
            }
        };
        if self.spent + c.abs() > self.budget {
            return Err(Error::BudgetExceeded {
                spent: self.spent,
                requested: c.abs(),
                budget: self.budget,
            });
        }
        self.spent += c.abs();
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ContextSourceSpec {
    SphereIid,
    FileStream { path: PathBuf },
}

/// Everything needed to rebuild an environment deterministically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub dim: usize,
    pub theta: ThetaSpec,
    pub noise: NoiseModel,
    pub contexts: ContextSourceSpec,
    #[serde(default)]
    pub adversary: Option<AdversarySpec>,
    /// Learn from the per-arm rewards stored in the context file.
    #[serde(default)]
    pub file_rewards: bool,
    /// Added to client indices when picking per-client streams.
    #[serde(default)]
    pub stream_offset: u64,
}

impl EnvSpec {
    pub fn synthetic(dim: usize, sigma: f64) -> Self {
        Self {
            dim,
            theta: ThetaSpec::Random { scale: 0.9 },
            noise: if sigma > 0.0 {
                NoiseModel::Gaussian { sigma }
            } else {
                NoiseModel::None
            },
            contexts: ContextSourceSpec::SphereIid,
            adversary: None,
            file_rewards: false,
            stream_offset: 0,
        }
    }
}

/// One round of a context file.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamRound {
    pub round: u64,
    pub contexts: Vec<Vec<f64>>,
    pub rewards: Option<Vec<f64>>,
}

/// Parsed context file.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextStream {
    pub dim: usize,
    pub arms: usize,
    pub rounds: Vec<StreamRound>,
    /// Rows whose norm exceeded 1 and were rescaled.
    pub renormalized: usize,
}

impl ContextStream {
    pub fn has_rewards(&self) -> bool {
        self.rounds.first().is_some_and(|r| r.rewards.is_some())
    }
}

/// Loads a comma-delimited context file with header
/// `round,arm,x_1,…,x_d[,reward]`, one row per (round, arm).
pub fn load_context_stream(path: &Path, expected_dim: Option<usize>) -> Result<ContextStream> {
    let parse_err = |row: usize, reason: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        reason,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(0, format!("{other:?}")),
        })?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = header.iter().collect();
    if cols.len() < 3 || cols[0] != "round" || cols[1] != "arm" {
        return Err(parse_err(
            1,
            "header must start with `round,arm,x_1`".into(),
        ));
    }
    let has_reward = cols.last() == Some(&"reward");
    let dim = cols.len() - 2 - usize::from(has_reward);
    for (i, c) in cols[2..2 + dim].iter().enumerate() {
        if *c != format!("x_{}", i + 1) {
            return Err(parse_err(
                1,
                format!("expected column x_{}, found `{c}`", i + 1),
            ));
        }
    }
    if dim == 0 {
        return Err(parse_err(1, "no feature columns".into()));
    }
    if let Some(d) = expected_dim {
        if d != dim {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: dim,
            });
        }
    }

    let mut rounds: Vec<StreamRound> = Vec::new();
    let mut renormalized = 0;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 2;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        if rec.len() != cols.len() {
            return Err(parse_err(
                row,
                format!("expected {} fields, got {}", cols.len(), rec.len()),
            ));
        }
        let round: u64 = rec[0]
            .parse()
            .map_err(|_| parse_err(row, format!("bad round `{}`", &rec[0])))?;
        let arm: usize = rec[1]
            .parse()
            .map_err(|_| parse_err(row, format!("bad arm `{}`", &rec[1])))?;
        let mut x = Vec::with_capacity(dim);
        for j in 0..dim {
            let v: f64 = rec[2 + j]
                .parse()
                .map_err(|_| parse_err(row, format!("bad value `{}`", &rec[2 + j])))?;
            if !v.is_finite() {
                return Err(parse_err(row, "non-finite feature".into()));
            }
            x.push(v);
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + NORM_SLACK {
            x.iter_mut().for_each(|v| *v /= norm);
            renormalized += 1;
        }
        let reward = if has_reward {
            let r: f64 = rec[2 + dim]
                .parse()
                .map_err(|_| parse_err(row, format!("bad reward `{}`", &rec[2 + dim])))?;
            if !r.is_finite() {
                return Err(parse_err(row, "non-finite reward".into()));
            }
            Some(r)
        } else {
            None
        };
        match rounds.last_mut() {
            Some(last) if last.round == round => {
                if arm != last.contexts.len() {
                    return Err(parse_err(
                        row,
                        format!("expected arm {}, got {arm}", last.contexts.len()),
                    ));
                }
                last.contexts.push(x);
                if let (Some(rs), Some(r)) = (last.rewards.as_mut(), reward) {
                    rs.push(r);
                }
            }
            last => {
                if let Some(prev) = last {
                    if round <= prev.round {
                        return Err(parse_err(row, format!("round {round} out of order")));
                    }
                }
                if arm != 0 {
                    return Err(parse_err(row, format!("round {round} must start at arm 0")));
                }
                rounds.push(StreamRound {
                    round,
                    contexts: vec![x],
                    rewards: reward.map(|r| vec![r]),
                });
            }
        }
    }
    let arms = rounds.first().map_or(0, |r| r.contexts.len());
    if arms == 0 {
        return Err(parse_err(2, "file holds no rows".into()));
    }
    if let Some(r) = rounds.iter().find(|r| r.contexts.len() != arms) {
        return Err(parse_err(
            0,
            format!(
                "round {} has {} arms, expected {arms}",
                r.round,
                r.contexts.len()
            ),
        ));
    }
    Ok(ContextStream {
        dim,
        arms,
        rounds,
        renormalized,
    })
}

#[derive(Debug, Clone)]
enum ContextSource {
    Sphere,
    File {
        stream: ContextStream,
        cursor: usize,
    },
}

/// Result of pulling one arm.
#[derive(Debug, Clone, PartialEq)]
pub struct PullOutcome {
    /// Reward revealed to the client (after noise and corruption).
    pub observed: f64,
    /// `θᵀx` of the pulled arm, or its recorded reward for file rewards.
    pub mean: f64,
    pub best_arm: usize,
    pub best_value: f64,
    pub corruption: f64,
    pub sigma: Option<f64>,
    /// Mean value of a uniformly random arm this round.
    pub random_value: f64,
}

impl PullOutcome {
    pub fn regret(&self) -> f64 {
        (self.best_value - self.mean).max(0.0)
    }
}

/// Observed reward, true mean and (for the heteroscedastic model) `σ_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSample {
    pub observed: f64,
    pub mean: f64,
    pub sigma: Option<f64>,
}

/// Linear reward environment `r = θᵀx + ε`.
#[derive(Debug, Clone)]
pub struct LinearEnv {
    dim: usize,
    theta: Vec<f64>,
    noise: NoiseModel,
    adversary: Option<CorruptionAdversary>,
    source: ContextSource,
    file_rewards: bool,
    seed: u64,
    stream_offset: u64,
    context_rngs: HashMap<usize, ChaCha8Rng>,
    noise_rngs: HashMap<usize, ChaCha8Rng>,
    // file rewards of the round most recently handed out
    current_rewards: Option<Vec<f64>>,
}

impl LinearEnv {
    pub fn build(spec: &EnvSpec, seed: u64) -> Result<Self> {
        if spec.dim == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        let theta = match &spec.theta {
            ThetaSpec::Random { scale } => {
                if !(*scale >= 0.0 && *scale <= 1.0) {
                    return Err(Error::config("env.theta_scale", "must lie in [0, 1]"));
                }
                let mut rng = stream_rng(seed, StreamPurpose::Theta, 0);
                sample_sphere(spec.dim, &mut rng)
                    .into_iter()
                    .map(|v| v * scale)
                    .collect()
            }
            ThetaSpec::Fixed { values } => {
                if values.len() != spec.dim {
                    return Err(Error::DimensionMismatch {
                        expected: spec.dim,
                        got: values.len(),
                    });
                }
                let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm.is_nan() || norm > 1.0 + NORM_SLACK {
                    return Err(Error::config("env.theta", format!("norm {norm} exceeds 1")));
                }
                values.clone()
            }
        };
        match &spec.noise {
            NoiseModel::None => {}
            NoiseModel::Gaussian { sigma } => {
                if !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::config("sigma", "must be nonnegative"));
                }
            }
            NoiseModel::BoundedHetero { bound, schedule } => {
                if !(bound.is_finite() && *bound > 0.0) {
                    return Err(Error::config("R", "must be positive"));
                }
                let levels: &[f64] = match schedule {
                    SigmaSchedule::Constant { sigma } => std::slice::from_ref(sigma),
                    SigmaSchedule::Choice { levels } | SigmaSchedule::Cycle { levels } => levels,
                };
                if levels.is_empty() || levels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
                    return Err(Error::config(
                        "sigma",
                        "noise levels must be nonnegative and nonempty",
                    ));
                }
            }
        }
        let source = match &spec.contexts {
            ContextSourceSpec::SphereIid => {
                if spec.file_rewards {
                    return Err(Error::config("env.file_rewards", "requires a context file"));
                }
                ContextSource::Sphere
            }
            ContextSourceSpec::FileStream { path } => {
                let stream = load_context_stream(path, Some(spec.dim))?;
                if spec.file_rewards && !stream.has_rewards() {
                    return Err(Error::Schema {
                        path: path.clone(),
                        reason: "file has no reward column but file rewards were requested".into(),
                    });
                }
                ContextSource::File { stream, cursor: 0 }
            }
        };
        let adversary = spec
            .adversary
            .as_ref()
            .map(CorruptionAdversary::new)
            .transpose()?;
        Ok(Self {
            dim: spec.dim,
            theta,
            noise: spec.noise.clone(),
            adversary,
            source,
            file_rewards: spec.file_rewards,
            seed,
            stream_offset: spec.stream_offset,
            context_rngs: HashMap::new(),
            noise_rngs: HashMap::new(),
            current_rewards: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn adversary(&self) -> Option<&CorruptionAdversary> {
        self.adversary.as_ref()
    }

    /// Whether the noise model reports `σ_t` to the client.
    pub fn reports_sigma(&self) -> bool {
        matches!(self.noise, NoiseModel::BoundedHetero { .. })
    }

    pub fn file_arms(&self) -> Option<usize> {
        match &self.source {
            ContextSource::File { stream, .. } => Some(stream.arms),
            ContextSource::Sphere => None,
        }
    }

    /// `K` contexts for `client`'s next activation.
    pub fn gen_contexts(&mut self, client: usize, k: usize) -> Result<Vec<Vec<f64>>> {
        if k == 0 {
            return Err(Error::InvalidArgument("K must be at least 1".into()));
        }
        match &mut self.source {
            ContextSource::Sphere => {
                let (seed, offset, dim) = (self.seed, self.stream_offset, self.dim);
                let rng = self.context_rngs.entry(client).or_insert_with(|| {
                    stream_rng(seed, StreamPurpose::Contexts, offset + client as u64)
                });
                Ok((0..k).map(|_| sample_sphere(dim, rng)).collect())
            }
            ContextSource::File { stream, cursor } => {
                let round = stream.rounds.get(*cursor).ok_or_else(|| {
                    Error::Environment(format!("context stream exhausted after {} rounds", *cursor))
                })?;
                if round.contexts.len() != k {
                    return Err(Error::Environment(format!(
                        "context file has {} arms, run expects {k}",
                        round.contexts.len()
                    )));
                }
                *cursor += 1;
                self.current_rewards = round.rewards.clone();
                Ok(round.contexts.clone())
            }
        }
    }

    fn noise_rng(&mut self, client: usize) -> &mut ChaCha8Rng {
        let (seed, offset) = (self.seed, self.stream_offset);
        self.noise_rngs
            .entry(client)
            .or_insert_with(|| stream_rng(seed, StreamPurpose::Noise, offset + client as u64))
    }

    /// Noisy reward for context `x` (no corruption).
    pub fn reward(&mut self, client: usize, x: &[f64], t: u64) -> Result<RewardSample> {
        crate::linalg::check_vector(x, self.dim)?;
        let mean = dot(&self.theta, x);
        let noise = self.noise.clone();
        let (eps, sigma) = match noise {
            NoiseModel::None => (0.0, None),
            NoiseModel::Gaussian { sigma } => {
                let n =
                    Normal::new(0.0, sigma).map_err(|e| Error::config("sigma", e.to_string()))?;
                (n.sample(self.noise_rng(client)), None)
            }
            NoiseModel::BoundedHetero { bound, schedule } => {
                let rng = self.noise_rng(client);
                let level = match &schedule {
                    SigmaSchedule::Constant { sigma } => *sigma,
                    SigmaSchedule::Choice { levels } => levels[rng.random_range(0..levels.len())],
                    SigmaSchedule::Cycle { levels } => levels[(t as usize) % levels.len()],
                };
                let s = level.min(bound);
                let eps = if rng.random_bool(0.5) { s } else { -s };
                (eps, Some(s))
            }
        };
        Ok(RewardSample {
            observed: mean + eps,
            mean,
            sigma,
        })
    }

    /// Pulls `arm` among `contexts` at pull index `t`.
    pub fn pull(
        &mut self,
        client: usize,
        contexts: &[Vec<f64>],
        arm: usize,
        t: u64,
    ) -> Result<PullOutcome> {
        if arm >= contexts.len() {
            return Err(Error::InvalidArgument(format!("arm {arm} out of range")));
        }
        let (best_arm, best_value, mean, random_value, base) = if self.file_rewards {
            let rewards = self
                .current_rewards
                .clone()
                .ok_or_else(|| Error::Environment("no file rewards for this round".into()))?;
            let (best, best_v) =
                rewards
                    .iter()
                    .enumerate()
                    .fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc },
                    );
            let avg = rewards.iter().sum::<f64>() / rewards.len() as f64;
            let r = rewards[arm];
            (
                best,
                best_v,
                r,
                avg,
                RewardSample {
                    observed: r,
                    mean: r,
                    sigma: None,
                },
            )
        } else {
            let (best, best_v) = best_arm(&self.theta, contexts)?;
            let avg =
                contexts.iter().map(|x| dot(&self.theta, x)).sum::<f64>() / contexts.len() as f64;
            let sample = self.reward(client, &contexts[arm], t)?;
            (best, best_v, sample.mean, avg, sample)
        };
        let corruption = match self.adversary.as_mut() {
            Some(adv) => adv.corrupt(t, base.observed, arm == best_arm)?,
            None => 0.0,
        };
        Ok(PullOutcome {
            observed: base.observed + corruption,
            mean,
            best_arm,
            best_value,
            corruption,
            sigma: base.sigma,
            random_value,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn env(noise: NoiseModel, dim: usize) -> LinearEnv {
        LinearEnv::build(
            &EnvSpec {
                noise,
                ..EnvSpec::synthetic(dim, 0.0)
            },
            7,
        )
        .unwrap()
    }

    #[test]
    fn sphere_contexts_have_unit_norm() {
        let mut e = env(NoiseModel::None, 2);
        for _ in 0..100 {
            for x in e.gen_contexts(0, 5).unwrap() {
                let n = (x[0] * x[0] + x[1] * x[1]).sqrt();
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
        let mut e = env(NoiseModel::None, 1);
        for x in e.gen_contexts(3, 50).unwrap() {
            assert!(x[0] == 1.0 || x[0] == -1.0);
        }
    }

    #[test]
    fn sphere_is_centered() {
        let d = 3;
        let n = 100_000;
        let mut rng = stream_rng(11, StreamPurpose::Contexts, 0);
        let mut mean = vec![0.0; d];
        for _ in 0..n {
            for (m, v) in mean.iter_mut().zip(sample_sphere(d, &mut rng)) {
                *m += v / n as f64;
            }
        }
        let tol = 3.0 * (1.0 / (d as f64 * n as f64)).sqrt();
        assert!(mean.iter().all(|m| m.abs() < tol), "{mean:?}");
    }

    #[test]
    fn noiseless_reward_is_mean() {
        let mut e = LinearEnv::build(
            &EnvSpec {
                theta: ThetaSpec::Fixed {
                    values: vec![1.0, 0.0],
                },
                ..EnvSpec::synthetic(2, 0.0)
            },
            0,
        )
        .unwrap();
        let r = e.reward(0, &[1.0, 0.0], 0).unwrap();
        assert_eq!(r.observed, 1.0);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn gaussian_noise_variance() {
        let mut e = env(NoiseModel::Gaussian { sigma: 0.01 }, 2);
        let x = [0.0, 0.0];
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|t| e.reward(0, &x, t).unwrap().observed)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1e-4).abs() < 0.05 * 1e-4, "{var}");
    }

    #[test]
    fn bounded_noise_respects_bound() {
        let mut e = env(
            NoiseModel::BoundedHetero {
                bound: 0.5,
                schedule: SigmaSchedule::Choice {
                    levels: vec![0.01, 0.3, 2.0],
                },
            },
            2,
        );
        let mut sq: HashMap<u64, (f64, usize)> = HashMap::new();
        for t in 0..100_000 {
            let r = e.reward(0, &[0.0, 0.0], t).unwrap();
            let s = r.sigma.unwrap();
            assert!(r.observed.abs() <= 0.5 && s <= 0.5);
            let entry = sq.entry(s.to_bits()).or_default();
            entry.0 += r.observed * r.observed;
            entry.1 += 1;
        }
        for (bits, (sum, n)) in sq {
            let s = f64::from_bits(bits);
            assert!(sum / n as f64 <= s * s * 1.05);
        }
    }

    #[test]
    fn best_arm_examples() {
        let th = [1.0, 0.0];
        assert_eq!(
            best_arm(&th, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            (0, 1.0)
        );
        assert_eq!(
            best_arm(&th, &[vec![-1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            (1, 0.0)
        );
        assert_eq!(
            best_arm(&th, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap(),
            (0, 0.5)
        );
        assert!(best_arm(&th, &[]).is_err());
    }

    #[test]
    fn per_client_streams_are_independent_of_call_order() {
        let mut a = env(NoiseModel::None, 4);
        let mut b = env(NoiseModel::None, 4);
        let a1 = a.gen_contexts(1, 3).unwrap();
        let _ = a.gen_contexts(0, 3).unwrap();
        let _ = b.gen_contexts(0, 3).unwrap();
        let _ = b.gen_contexts(0, 3).unwrap();
        assert_eq!(b.gen_contexts(1, 3).unwrap(), a1);

        let shifted = LinearEnv::build(
            &EnvSpec {
                stream_offset: 1,
                ..EnvSpec::synthetic(4, 0.0)
            },
            7,
        );
        let mut shifted = shifted.unwrap();
        assert_eq!(shifted.gen_contexts(0, 3).unwrap(), a1);
        assert_eq!(shifted.theta(), a.theta());
    }

    #[test]
    fn sign_flip_adversary_budget() {
        let mut adv = CorruptionAdversary::new(&AdversarySpec {
            strategy: AdversaryStrategy::SignFlipPrefix,
            budget: 3.0,
        })
        .unwrap();
        assert_eq!(adv.corrupt(0, 1.0, true).unwrap(), -2.0);
        assert_eq!(adv.corrupt(1, -0.8, false).unwrap(), 1.0);
        assert_eq!(adv.corrupt(2, 0.5, false).unwrap(), 0.0);
        assert_eq!(adv.corrupt(3, 0.5, false).unwrap(), 0.0);
        assert_eq!(adv.spent(), 3.0);

        let err = CorruptionAdversary::new(&AdversarySpec {
            strategy: AdversaryStrategy::Custom {
                corruptions: vec![1.0, -2.5],
            },
            budget: 3.0,
        });
        assert!(matches!(err, Err(Error::BudgetExceeded { .. })));
    }

    fn write_file(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    #[test]
    fn context_file_loading() {
        let f = write_file("round,arm,x_1,x_2\n0,0,1,0\n0,1,0,1\n1,0,0.6,0.8\n1,1,-1,0\n");
        let s = load_context_stream(f.path(), Some(2)).unwrap();
        assert_eq!(s.rounds.len(), 2);
        assert_eq!(s.arms, 2);
        assert_eq!(s.renormalized, 0);
        assert!(!s.has_rewards());

        let f = write_file("round,arm,x_1,x_2,reward\n0,0,0.9,1.2,1\n0,1,0,1,0\n");
        let s = load_context_stream(f.path(), None).unwrap();
        assert_eq!(s.renormalized, 1);
        let x = &s.rounds[0].contexts[0];
        assert!(((x[0] * x[0] + x[1] * x[1]).sqrt() - 1.0).abs() < 1e-12);
        assert_eq!(s.rounds[0].rewards, Some(vec![1.0, 0.0]));

        let f = write_file("round,arm,x_1,x_2\n0,0,1,0\n0,1,zz,1\n");
        match load_context_stream(f.path(), None) {
            Err(Error::Parse { row, .. }) => assert_eq!(row, 3),
            other => panic!("{other:?}"),
        }
        let f = write_file("round,arm,x_1,x_2\n0,0,1,0\n");
        assert!(matches!(
            load_context_stream(f.path(), Some(3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn file_rewards_require_column() {
        let f = write_file("round,arm,x_1,x_2\n0,0,1,0\n0,1,0,1\n");
        let spec = EnvSpec {
            contexts: ContextSourceSpec::FileStream {
                path: f.path().to_path_buf(),
            },
            file_rewards: true,
            ..EnvSpec::synthetic(2, 0.0)
        };
        assert!(matches!(
            LinearEnv::build(&spec, 0),
            Err(Error::Schema { .. })
        ));

        let spec = EnvSpec {
            file_rewards: false,
            ..spec
        };
        let mut e = LinearEnv::build(&spec, 0).unwrap();
        assert_eq!(e.gen_contexts(0, 2).unwrap().len(), 2);
        assert!(matches!(e.gen_contexts(0, 2), Err(Error::Environment(_))));
    }
}
