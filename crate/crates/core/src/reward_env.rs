//! Synthetic ground-truth rewards, greedy policies and regret evaluation.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Anything that assigns a reward to every action of a state.
pub trait RewardModel {
    fn action_count(&self) -> usize;

    fn rewards(&self, s: &[f64]) -> Vec<f64>;

    fn rewards_batch(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        states.iter().map(|s| self.rewards(s)).collect()
    }
}

impl<T: RewardModel + ?Sized> RewardModel for &T {
    fn action_count(&self) -> usize {
        (**self).action_count()
    }

    fn rewards(&self, s: &[f64]) -> Vec<f64> {
        (**self).rewards(s)
    }

    fn rewards_batch(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        (**self).rewards_batch(states)
    }
}

/// Adapts a closure `s -> rewards` into a [`RewardModel`].
pub struct FnReward<F> {
    actions: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> Vec<f64>> FnReward<F> {
    pub fn new(actions: usize, f: F) -> Self {
        Self { actions, f }
    }
}

impl<F: Fn(&[f64]) -> Vec<f64>> RewardModel for FnReward<F> {
    fn action_count(&self) -> usize {
        self.actions
    }

    fn rewards(&self, s: &[f64]) -> Vec<f64> {
        (self.f)(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    Sinusoidal,
    HermiteGaussian,
    CompositeSinusoid,
}

impl RewardFamily {
    pub fn name(self) -> &'static str {
        match self {
            RewardFamily::Sinusoidal => "sinusoidal",
            RewardFamily::HermiteGaussian => "hermite_gaussian",
            RewardFamily::CompositeSinusoid => "composite_sinusoid",
        }
    }

    /// The scalar link `psi` applied to the inner argument.
    pub fn psi(self, x: f64) -> f64 {
        match self {
            RewardFamily::Sinusoidal => x.sin(),
            RewardFamily::HermiteGaussian => {
                let norm = 15f64.sqrt() * std::f64::consts::PI.powf(0.25);
                let x2 = x * x;
                (4.0 * x2 * x2 * x - 20.0 * x2 * x + 15.0 * x) * (-0.5 * x2).exp() / norm
            }
            RewardFamily::CompositeSinusoid => x.sin() + (x * x).sin(),
        }
    }

    /// `sup_x |psi(x)|`.
    pub fn psi_sup(self) -> f64 {
        match self {
            RewardFamily::Sinusoidal => 1.0,
            RewardFamily::CompositeSinusoid => 2.0,
            RewardFamily::HermiteGaussian => {
                // psi decays like x^5 e^{-x^2/2}; |x| <= 12 holds the maximum
                let step = 1e-4;
                (0..=240_000)
                    .map(|i| self.psi(-12.0 + i as f64 * step).abs())
                    .fold(0.0, f64::max)
            }
        }
    }
}

impl fmt::Display for RewardFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RewardFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "sinusoidal" | "sin" => Ok(RewardFamily::Sinusoidal),
            "hermite_gaussian" | "hermite" => Ok(RewardFamily::HermiteGaussian),
            "composite_sinusoid" | "composite" => Ok(RewardFamily::CompositeSinusoid),
            other => Err(Error::Config(format!("unknown reward family '{other}'"))),
        }
    }
}

/// Componentwise sine feature map.
pub fn feature_map(s: &[f64]) -> Vec<f64> {
    s.iter().map(|x| x.sin()).collect()
}

/// `r*(s, a1) = scale_outer * psi(scale_inner * phi(s)^T w*)`, `r*(s, a0) = -r*(s, a1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthReward {
    pub family: RewardFamily,
    pub w_star: Vec<f64>,
    pub scale_inner: f64,
    pub scale_outer: f64,
    pub action_count: usize,
}

impl GroundTruthReward {
    pub fn new(family: RewardFamily, w_star: Vec<f64>) -> Self {
        Self { family, w_star, scale_inner: 4.0, scale_outer: 2.0, action_count: 2 }
    }

    /// Draws `w* ~ N(0, I_d)`.
    pub fn sample<R: Rng + ?Sized>(family: RewardFamily, d: usize, rng: &mut R) -> Self {
        let w_star = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        Self::new(family, w_star)
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    /// The argument handed to `psi`.
    pub fn inner_argument(&self, s: &[f64]) -> f64 {
        let dot: f64 = s.iter().zip(&self.w_star).map(|(x, w)| x.sin() * w).sum();
        self.scale_inner * dot
    }

    fn positive_action_reward(&self, s: &[f64]) -> f64 {
        self.scale_outer * self.family.psi(self.inner_argument(s))
    }

    pub fn true_reward(&self, s: &[f64], action: usize) -> Result<f64> {
        if s.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: s.len() });
        }
        match action {
            1 => Ok(self.positive_action_reward(s)),
            0 => Ok(-self.positive_action_reward(s)),
            a => domain(format!("action {a} outside the binary action set")),
        }
    }

    /// Reward difference `r*(s, 1) - r*(s, 0)`.
    pub fn reward_gap(&self, s: &[f64]) -> f64 {
        2.0 * self.positive_action_reward(s)
    }

    /// Upper bound `scale_outer * sup|psi|` on `c_{r*}`.
    pub fn c_rstar_bound(&self) -> f64 {
        self.scale_outer * self.family.psi_sup()
    }

    /// Largest `|r*(s, a)|` seen over `n` uniform states.
    pub fn c_rstar_empirical<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> f64 {
        let mut s = vec![0.0; self.dim()];
        let mut best: f64 = 0.0;
        for _ in 0..n {
            s.iter_mut().for_each(|x| *x = rng.random());
            best = best.max(self.positive_action_reward(&s).abs());
        }
        best
    }
}

impl RewardModel for GroundTruthReward {
    fn action_count(&self) -> usize {
        self.action_count
    }

    fn rewards(&self, s: &[f64]) -> Vec<f64> {
        let r = self.positive_action_reward(s);
        vec![-r, r]
    }
}

/// Uniform states on `[0, 1]^d`.
pub fn sample_states<R: Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    pub action: usize,
    pub value: f64,
    pub runner_up_gap: f64,
}

/// Argmax over a reward vector, ties to the lowest index.
pub fn greedy_decision(rewards: &[f64]) -> PolicyDecision {
    assert!(!rewards.is_empty(), "greedy decision needs at least one action");
    let mut best = 0;
    for (a, &r) in rewards.iter().enumerate().skip(1) {
        if r > rewards[best] {
            best = a;
        }
    }
    let runner_up = rewards
        .iter()
        .enumerate()
        .filter(|&(a, _)| a != best)
        .map(|(_, &r)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    let runner_up_gap = if runner_up.is_finite() { rewards[best] - runner_up } else { 0.0 };
    PolicyDecision { action: best, value: rewards[best], runner_up_gap }
}

pub fn greedy_policy(reward: &impl RewardModel, s: &[f64]) -> PolicyDecision {
    greedy_decision(&reward.rewards(s))
}

/// Regret, selection disagreement and squared `L2(S, l2)` error on one state sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    pub regret: f64,
    pub disagreement_rate: f64,
    pub l2_error_sq: f64,
}

pub fn evaluate_policy(estimate: &impl RewardModel, truth: &impl RewardModel, states: &[Vec<f64>]) -> Result<PolicyEvaluation> {
    if states.is_empty() {
        return domain("state sample is empty");
    }
    if estimate.action_count() != truth.action_count() {
        return Err(Error::DimensionMismatch { expected: truth.action_count(), got: estimate.action_count() });
    }
    let est = estimate.rewards_batch(states);
    let tru = truth.rewards_batch(states);
    let mut regret = 0.0;
    let mut disagree = 0usize;
    let mut l2 = 0.0;
    for (r_hat, r_star) in est.iter().zip(&tru) {
        let opt = greedy_decision(r_star);
        let chosen = greedy_decision(r_hat).action;
        if chosen != opt.action {
            disagree += 1;
            regret += opt.value - r_star[chosen];
        }
        l2 += r_hat.iter().zip(r_star).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    let n = states.len() as f64;
    Ok(PolicyEvaluation { regret: regret / n, disagreement_rate: disagree as f64 / n, l2_error_sq: l2 / n })
}

/// Monte Carlo regret of the greedy policy induced by `estimate`.
pub fn regret_mc(estimate: &impl RewardModel, truth: &impl RewardModel, states: &[Vec<f64>]) -> Result<f64> {
    evaluate_policy(estimate, truth, states).map(|e| e.regret)
}

/// Fraction of states where the induced greedy action differs from the optimal one.
pub fn disagreement_rate(estimate: &impl RewardModel, truth: &impl RewardModel, states: &[Vec<f64>]) -> Result<f64> {
    evaluate_policy(estimate, truth, states).map(|e| e.disagreement_rate)
}

/// Expected regret of the policy that picks actions uniformly at random.
pub fn random_policy_regret(truth: &impl RewardModel, states: &[Vec<f64>]) -> Result<f64> {
    if states.is_empty() {
        return domain("state sample is empty");
    }
    let total: f64 = truth
        .rewards_batch(states)
        .iter()
        .map(|r| {
            let best = greedy_decision(r).value;
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            best - mean
        })
        .sum();
    Ok(total / states.len() as f64)
}
