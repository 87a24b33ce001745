//! Feed-forward ReLU reward network.
//!
//! The network maps a state `s` to one raw score per action through `D`
//! affine+ReLU hidden layers and an affine head. Scores are mean-centred
//! across actions, so every estimate satisfies `sum_a r(s, a) = 0` exactly up
//! to rounding. Gradients of the pairwise negative log-likelihood are
//! back-propagated by hand through the centring, the pair difference and the
//! comparison log-density.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::comparison::ComparisonModel;
use crate::dataset::ComparisonSample;
use crate::error::{domain, Error, Result};
use crate::reward_env::RewardModel;

/// First eight bytes of a checkpoint file.
pub const CHECKPOINT_MAGIC: [u8; 8] = *b"RGMLP\x00\x00\x01";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArchitecture {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub output_dim: usize,
}

impl MlpArchitecture {
    /// `depth` hidden layers of `width` units each.
    pub fn rectangular(input_dim: usize, width: usize, depth: usize, output_dim: usize) -> Self {
        Self { input_dim, hidden_widths: vec![width; depth], output_dim }
    }

    pub fn depth(&self) -> usize {
        self.hidden_widths.len()
    }

    pub fn max_width(&self) -> usize {
        self.hidden_widths.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::Config("network needs at least one hidden layer".into()));
        }
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_widths.contains(&0) {
            return Err(Error::Config(format!("all layer sizes must be positive: {self:?}")));
        }
        Ok(())
    }

    /// `(fan_out, fan_in)` of every affine layer, head last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut sizes = vec![self.input_dim];
        sizes.extend(&self.hidden_widths);
        sizes.push(self.output_dim);
        sizes.windows(2).map(|w| (w[1], w[0])).collect()
    }
}

/// Exact number of weights and biases.
pub fn param_count(arch: &MlpArchitecture) -> usize {
    arch.layer_shapes().iter().map(|(o, i)| o * i + o).sum()
}

/// `W(d+1) + (W^2 + W)(D-1) + W + 1`: the size of a rectangular net with a scalar head.
pub fn param_count_bound(width: usize, depth: usize, d: usize) -> usize {
    width * (d + 1) + (width * width + width) * depth.saturating_sub(1) + width + 1
}

/// Width and depth from the Hoelder-rate sizing rule:
/// `W = 114 (floor(b)+1)^2 d^(floor(b)+1)` and
/// `D = 21 (floor(b)+1)^2 ceil(N^e log2(8 N^e))` with `e = d / (2d + 4b)`.
pub fn theorem_architecture(d: usize, beta: f64, n: u64) -> Result<(u128, u128)> {
    if !(beta > 0.0 && beta.is_finite()) {
        return domain(format!("smoothness must be positive, got {beta}"));
    }
    if n == 0 || d == 0 {
        return domain("sample size and dimension must be positive");
    }
    let fb = beta.floor() as u32;
    let k = u128::from(fb + 1);
    let overflow = || Error::Domain("architecture size overflows u128".into());
    let width = (d as u128)
        .checked_pow(fb + 1)
        .and_then(|p| p.checked_mul(114 * k * k))
        .ok_or_else(overflow)?;
    let e = d as f64 / (2.0 * d as f64 + 4.0 * beta);
    let ne = (n as f64).powf(e);
    let factor = (ne * (8.0 * ne).log2()).ceil();
    if !factor.is_finite() || factor > 1e30 {
        return Err(overflow());
    }
    let depth = (factor as u128).checked_mul(21 * k * k).ok_or_else(overflow)?;
    Ok((width, depth))
}

/// Weights `H^(i)` (fan_out x fan_in) and biases `b^(i)` layer by layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParameters {
    pub arch: MlpArchitecture,
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpParameters {
    pub fn zeros(arch: &MlpArchitecture) -> Self {
        let shapes = arch.layer_shapes();
        Self {
            arch: arch.clone(),
            weights: shapes.iter().map(|&(o, i)| Array2::zeros((o, i))).collect(),
            biases: shapes.iter().map(|&(o, _)| Array1::zeros(o)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        param_count(&self.arch)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters flattened layer by layer: weights row-major, then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter());
            out.extend(b.iter());
        }
        out
    }

    pub fn from_flat(arch: &MlpArchitecture, flat: &[f64]) -> Result<Self> {
        if flat.len() != param_count(arch) {
            return Err(Error::DimensionMismatch { expected: param_count(arch), got: flat.len() });
        }
        let mut p = Self::zeros(arch);
        let mut pos = 0;
        for (w, b) in p.weights.iter_mut().zip(p.biases.iter_mut()) {
            for x in w.iter_mut() {
                *x = flat[pos];
                pos += 1;
            }
            for x in b.iter_mut() {
                *x = flat[pos];
                pos += 1;
            }
        }
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    fn check_input(&self, got: usize) -> Result<()> {
        if got != self.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: self.arch.input_dim, got });
        }
        Ok(())
    }

    /// Post-ReLU activations of every hidden layer for one state.
    pub fn hidden_activations(&self, s: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.check_input(s.len())?;
        let x = ArrayView2::from_shape((1, s.len()), s).expect("row view");
        let (acts, _) = self.forward_pass(x);
        Ok(acts[1..].iter().map(|a| a.row(0).to_vec()).collect())
    }

    /// Activations per layer (input first) and the raw head output.
    fn forward_pass(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Array2<f64>) {
        let hidden = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(hidden + 1);
        acts.push(x.to_owned());
        for l in 0..hidden {
            let mut z = acts[l].dot(&self.weights[l].t());
            z += &self.biases[l];
            z.mapv_inplace(|v| v.max(0.0));
            acts.push(z);
        }
        let mut out = acts[hidden].dot(&self.weights[hidden].t());
        out += &self.biases[hidden];
        (acts, out)
    }

    /// Uncentred head output for a batch of states (rows).
    pub fn forward_raw_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x.ncols())?;
        Ok(self.forward_pass(x).1)
    }

    /// Centred rewards for a batch of states (rows).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let raw = self.forward_raw_batch(x)?;
        Ok(center_rows(raw))
    }

    /// Centred rewards `r(s, .)` for one state.
    pub fn forward(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.check_input(s.len())?;
        let x = ArrayView2::from_shape((1, s.len()), s).expect("row view");
        Ok(self.forward_batch(x)?.row(0).to_vec())
    }

    /// Writes the binary checkpoint: magic, architecture as `u32` LE
    /// (`d`, `D`, widths, `|A|`), then `f64` LE parameters layer by layer.
    pub fn write_checkpoint<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&CHECKPOINT_MAGIC)?;
        let as_u32 = |v: usize| u32::try_from(v).map_err(|_| Error::Domain(format!("{v} does not fit in u32")));
        out.write_all(&as_u32(self.arch.input_dim)?.to_le_bytes())?;
        out.write_all(&as_u32(self.arch.depth())?.to_le_bytes())?;
        for &w in &self.arch.hidden_widths {
            out.write_all(&as_u32(w)?.to_le_bytes())?;
        }
        out.write_all(&as_u32(self.arch.output_dim)?.to_le_bytes())?;
        for v in self.to_flat() {
            out.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse("not a reward-network checkpoint".into()));
        }
        let mut read_u32 = || -> Result<usize> {
            let mut b = [0u8; 4];
            input.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b) as usize)
        };
        let input_dim = read_u32()?;
        let depth = read_u32()?;
        if depth > 1 << 16 {
            return Err(Error::Parse(format!("implausible depth {depth}")));
        }
        let hidden_widths = (0..depth).map(|_| read_u32()).collect::<Result<Vec<_>>>()?;
        let output_dim = read_u32()?;
        let arch = MlpArchitecture { input_dim, hidden_widths, output_dim };
        arch.validate()?;
        let mut flat = Vec::with_capacity(param_count(&arch));
        let mut b = [0u8; 8];
        for _ in 0..param_count(&arch) {
            input.read_exact(&mut b)?;
            flat.push(f64::from_le_bytes(b));
        }
        let mut rest = Vec::new();
        input.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Parse(format!("{} trailing bytes after parameters", rest.len())));
        }
        Self::from_flat(&arch, &flat)
    }
}

fn center_rows(mut m: Array2<f64>) -> Array2<f64> {
    let k = m.ncols() as f64;
    for mut row in m.rows_mut() {
        let mean = row.sum() / k;
        row.mapv_inplace(|v| v - mean);
    }
    m
}

/// He initialisation: weights `N(0, 2 / fan_in)`, zero biases.
pub fn init_params<R: Rng + ?Sized>(arch: &MlpArchitecture, rng: &mut R) -> Result<MlpParameters> {
    arch.validate()?;
    let mut p = MlpParameters::zeros(arch);
    for w in p.weights.iter_mut() {
        let fan_in = w.ncols() as f64;
        let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
        w.mapv_inplace(|_| normal.sample(rng));
    }
    Ok(p)
}

impl RewardModel for MlpParameters {
    fn action_count(&self) -> usize {
        self.arch.output_dim
    }

    fn rewards(&self, s: &[f64]) -> Vec<f64> {
        self.forward(s).expect("state dimension matches the network input")
    }

    fn rewards_batch(&self, states: &[Vec<f64>]) -> Vec<Vec<f64>> {
        const CHUNK: usize = 1024;
        let mut out = Vec::with_capacity(states.len());
        for chunk in states.chunks(CHUNK) {
            let x = stack_states(chunk, self.arch.input_dim);
            let r = self.forward_batch(x.view()).expect("state dimension matches the network input");
            out.extend(r.rows().into_iter().map(|row| row.to_vec()));
        }
        out
    }
}

fn stack_states<'a>(states: impl IntoIterator<Item = &'a Vec<f64>>, d: usize) -> Array2<f64> {
    let flat: Vec<f64> = states.into_iter().flat_map(|s| s.iter().copied()).collect();
    let n = flat.len() / d;
    Array2::from_shape_vec((n, d), flat).expect("states share dimension")
}

/// Reward differences `u_i = r(s_i, a1_i) - r(s_i, a0_i)` under the network.
pub fn reward_differences(params: &MlpParameters, batch: &[ComparisonSample]) -> Result<Vec<f64>> {
    if let Some(x) = batch.iter().find(|x| x.s.len() != params.arch.input_dim) {
        return Err(Error::DimensionMismatch { expected: params.arch.input_dim, got: x.s.len() });
    }
    let mut u = Vec::with_capacity(batch.len());
    for chunk in batch.chunks(1024) {
        let x = stack_states(chunk.iter().map(|c| &c.s), params.arch.input_dim);
        let r = params.forward_batch(x.view())?;
        for (row, c) in r.rows().into_iter().zip(chunk) {
            u.push(row[c.a1] - row[c.a0]);
        }
    }
    Ok(u)
}

fn check_batch(params: &MlpParameters, batch: &[ComparisonSample], model: &ComparisonModel) -> Result<()> {
    if batch.is_empty() {
        return domain("batch is empty");
    }
    let k = params.arch.output_dim;
    for x in batch {
        if x.s.len() != params.arch.input_dim {
            return Err(Error::DimensionMismatch { expected: params.arch.input_dim, got: x.s.len() });
        }
        if x.a1 >= k || x.a0 >= k {
            return domain(format!("action pair ({}, {}) outside {k} outputs", x.a1, x.a0));
        }
        if !model.outcome_space().contains(x.y) {
            return domain(format!("outcome {} not in the outcome space of {}", x.y.value(), model.kind()));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood of the batch and its exact gradient.
pub fn nll_and_gradient(params: &MlpParameters, batch: &[ComparisonSample], model: &ComparisonModel) -> Result<(f64, MlpParameters)> {
    check_batch(params, batch, model)?;
    let b = batch.len();
    let x = stack_states(batch.iter().map(|c| &c.s), params.arch.input_dim);
    let (acts, raw) = params.forward_pass(x.view());
    let centered = center_rows(raw);

    let inv_b = 1.0 / b as f64;
    let k = params.arch.output_dim;
    let mut loss = 0.0;
    let mut d_out = Array2::<f64>::zeros((b, k));
    for (i, c) in batch.iter().enumerate() {
        let u = centered[[i, c.a1]] - centered[[i, c.a0]];
        loss -= model.log_density_unchecked(c.y, u);
        let delta = -model.dlog_unchecked(c.y, u) * inv_b;
        d_out[[i, c.a1]] += delta;
        d_out[[i, c.a0]] -= delta;
    }
    loss *= inv_b;
    // back through the centring: subtract the row mean of the upstream gradient
    let d_out = center_rows(d_out);

    let mut grad = MlpParameters::zeros(&params.arch);
    let layers = params.weights.len();
    let mut upstream = d_out;
    for l in (0..layers).rev() {
        grad.weights[l] = upstream.t().dot(&acts[l]);
        grad.biases[l] = upstream.sum_axis(Axis(0));
        if l > 0 {
            let mut d_act = upstream.dot(&params.weights[l]);
            Zip::from(&mut d_act).and(&acts[l]).for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
            upstream = d_act;
        }
    }
    Ok((loss, grad))
}

/// Mean negative log-likelihood only.
pub fn nll(params: &MlpParameters, batch: &[ComparisonSample], model: &ComparisonModel) -> Result<f64> {
    check_batch(params, batch, model)?;
    let u = reward_differences(params, batch)?;
    let total: f64 = batch.iter().zip(&u).map(|(c, &u)| model.log_density_unchecked(c.y, u)).sum();
    Ok(-total / batch.len() as f64)
}
