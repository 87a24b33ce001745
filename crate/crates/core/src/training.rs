//! Maximum-likelihood training of the reward network with mini-batch Adam and
//! early stopping on a held-out split.

use std::time::Instant;

use ndarray::Zip;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonModel;
use crate::dataset::ComparisonDataset;
use crate::error::{domain, Error, Result};
use crate::network::{init_params, nll, nll_and_gradient, reward_differences, MlpArchitecture, MlpParameters};
use crate::reward_env::RewardModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub learning_rate: f64,
    pub adaptive_moment_betas: (f64, f64),
    pub epsilon: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 256,
            max_epochs: 200,
            learning_rate: 1e-3,
            adaptive_moment_betas: (0.9, 0.999),
            epsilon: 1e-8,
            early_stop_patience: 10,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self, train_len: usize) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config("batch size, epochs and patience must be positive".into()));
        }
        if self.batch_size > train_len {
            return Err(Error::Config(format!(
                "batch size {} exceeds the {train_len} training samples",
                self.batch_size
            )));
        }
        if self.early_stop_patience > self.max_epochs {
            return Err(Error::Config("patience exceeds the epoch budget".into()));
        }
        let (b1, b2) = self.adaptive_moment_betas;
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("invalid optimiser settings: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub train_nll: Vec<f64>,
    pub eval_nll: Vec<f64>,
    /// Eval loss of the initialisation, before any update.
    pub initial_eval_nll: f64,
    /// Zero-based index into the per-epoch series.
    pub best_epoch: usize,
    pub wall_time_seconds: f64,
}

impl TrainingHistory {
    pub fn epochs_run(&self) -> usize {
        self.eval_nll.len()
    }

    pub fn best_eval_nll(&self) -> f64 {
        self.eval_nll[self.best_epoch]
    }

    /// `epoch,train_nll,eval_nll` rows, epochs counted from 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_nll,eval_nll\n");
        for (i, (t, e)) in self.train_nll.iter().zip(&self.eval_nll).enumerate() {
            out.push_str(&format!("{},{t:.17e},{e:.17e}\n", i + 1));
        }
        out
    }
}

/// Adam with bias correction.
struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: i32,
    m: MlpParameters,
    v: MlpParameters,
}

impl Adam {
    fn new(arch: &MlpArchitecture, cfg: &TrainingConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            beta1: cfg.adaptive_moment_betas.0,
            beta2: cfg.adaptive_moment_betas.1,
            eps: cfg.epsilon,
            step: 0,
            m: MlpParameters::zeros(arch),
            v: MlpParameters::zeros(arch),
        }
    }

    fn update(&mut self, params: &mut MlpParameters, grad: &MlpParameters) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let step_size = self.lr / c1;
        let apply = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step_size * *m / ((*v / c2).sqrt() + eps);
        };
        for l in 0..params.weights.len() {
            Zip::from(&mut params.weights[l])
                .and(&mut self.m.weights[l])
                .and(&mut self.v.weights[l])
                .and(&grad.weights[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
            Zip::from(&mut params.biases[l])
                .and(&mut self.m.biases[l])
                .and(&mut self.v.biases[l])
                .and(&grad.biases[l])
                .for_each(|p, m, v, &g| apply(p, m, v, g));
        }
    }
}

fn check_compatible(train: &ComparisonDataset, eval: &ComparisonDataset, arch: &MlpArchitecture, model: &ComparisonModel) -> Result<()> {
    if train.is_empty() || eval.is_empty() {
        return domain("training and evaluation sets must be nonempty");
    }
    if train.d != eval.d || train.d != arch.input_dim {
        return Err(Error::DimensionMismatch { expected: arch.input_dim, got: if train.d != arch.input_dim { train.d } else { eval.d } });
    }
    if train.model_kind != model.kind() || eval.model_kind != model.kind() {
        return Err(Error::Config(format!(
            "datasets were generated under {} / {} but training uses {}",
            train.model_kind,
            eval.model_kind,
            model.kind()
        )));
    }
    if train.action_count != eval.action_count || train.action_count > arch.output_dim {
        return Err(Error::Config("action spaces of the datasets and network disagree".into()));
    }
    Ok(())
}

/// Maximises the empirical log-likelihood over the network class; returns the
/// parameters with the lowest eval negative log-likelihood seen.
pub fn train_mle(
    train: &ComparisonDataset,
    eval: &ComparisonDataset,
    arch: &MlpArchitecture,
    model: &ComparisonModel,
    cfg: &TrainingConfig,
) -> Result<(MlpParameters, TrainingHistory)> {
    check_compatible(train, eval, arch, model)?;
    cfg.validate(train.len())?;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = init_params(arch, &mut rng)?;
    let mut optimiser = Adam::new(arch, cfg);

    let initial_eval_nll = nll(&params, &eval.samples, model)?;
    let mut best = params.clone();
    let mut best_loss = initial_eval_nll;
    let mut best_epoch = 0;
    let mut since_best = 0;
    let mut train_hist = Vec::new();
    let mut eval_hist = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size);

    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut weighted = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| train.samples[i].clone()));
            let (loss, grad) = nll_and_gradient(&params, &batch, model)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch: epoch + 1, loss });
            }
            weighted += loss * chunk.len() as f64;
            optimiser.update(&mut params, &grad);
        }
        let train_loss = weighted / train.len() as f64;
        let eval_loss = nll(&params, &eval.samples, model)?;
        if !eval_loss.is_finite() || !params.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch + 1, loss: eval_loss });
        }
        train_hist.push(train_loss);
        eval_hist.push(eval_loss);
        if epoch == 0 || eval_loss < best_loss {
            best_loss = eval_loss;
            best = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                break;
            }
        }
    }

    Ok((
        best,
        TrainingHistory {
            train_nll: train_hist,
            eval_nll: eval_hist,
            initial_eval_nll,
            best_epoch,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Mean log-likelihood `(1/N) sum log g(y_i, r(s_i,a1_i) - r(s_i,a0_i))`; higher is better.
pub fn empirical_loglik(params: &MlpParameters, ds: &ComparisonDataset, model: &ComparisonModel) -> Result<f64> {
    if ds.is_empty() {
        return domain("dataset is empty");
    }
    nll(params, &ds.samples, model).map(|l| -l)
}

fn pair_differences(reward: &impl RewardModel, states: &[Vec<f64>]) -> Vec<f64> {
    reward.rewards_batch(states).iter().map(|r| r[1] - r[0]).collect()
}

/// Monte Carlo estimate of `l(r*) - l(r_hat)`: outcomes are drawn from the
/// true law at each state and scored under both reward differences.
pub fn excess_risk_estimate<R: Rng + ?Sized>(
    estimate: &impl RewardModel,
    truth: &impl RewardModel,
    model: &ComparisonModel,
    states: &[Vec<f64>],
    rng: &mut R,
) -> Result<f64> {
    if states.is_empty() {
        return domain("state sample is empty");
    }
    if estimate.action_count() < 2 || truth.action_count() < 2 {
        return domain("excess risk needs at least two actions");
    }
    let u_star = pair_differences(truth, states);
    let u_hat = pair_differences(estimate, states);
    let mut total = 0.0;
    for (&us, &uh) in u_star.iter().zip(&u_hat) {
        let y = model.sample_outcome(us, rng);
        total += model.log_density_unchecked(y, us) - model.log_density_unchecked(y, uh);
    }
    Ok(total / states.len() as f64)
}

/// Per-sample reward differences under the network; exposed for diagnostics.
pub fn dataset_reward_differences(params: &MlpParameters, ds: &ComparisonDataset) -> Result<Vec<f64>> {
    reward_differences(params, &ds.samples)
}
