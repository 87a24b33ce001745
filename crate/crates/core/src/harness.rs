//! Architecture and noise sweeps, comparison-graph spectra and win-probability
//! histograms, with CSV output.
//!
//! Every sweep cell is a `(width, depth, noise_level, replication)` tuple. Its
//! seed is
//!
//! ```text
//! hash64(base_seed, width, depth, noise_level.to_bits(), replication)
//! ```
//!
//! where `hash64` folds each word into a splitmix64 state
//! (`h = splitmix64(h ^ word)`, starting from `h = splitmix64(base_seed)`).
//! The replication seed `hash64(base_seed, replication)` drives the hidden
//! weights `w*` and the clean train/eval/test splits, so all cells of one
//! replication see the same data. The cell seed drives corruption and the
//! network initialisation and batch order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Mutex;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonModel, ModelKind};
use crate::dataset::{corrupt_dataset, dataset_win_probabilities, generate_dataset, ComparisonDataset};
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, design_lambda2, total_comparisons, Design};
use crate::network::MlpArchitecture;
use crate::reward_env::{evaluate_policy, GroundTruthReward, RewardFamily};
use crate::training::{empirical_loglik, train_mle, TrainingConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const RESULT_COLUMNS: [&str; 17] = [
    "experiment_id",
    "reward_family",
    "model_kind",
    "width",
    "depth",
    "noise_level",
    "replication",
    "seed",
    "regret",
    "disagreement_rate",
    "test_loglik",
    "train_nll_final",
    "eval_nll_best",
    "l2_error_sq",
    "lambda2",
    "wall_time_seconds",
    "error",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub reward_family: RewardFamily,
    pub model_kind: ModelKind,
    /// Tie parameter for Rao-Kupper (theta) or Davidson (nu); model default when absent.
    pub tie_param: Option<f64>,
    pub d: usize,
    pub widths: Vec<usize>,
    pub depths: Vec<usize>,
    pub noise_levels: Vec<f64>,
    pub noise_width: usize,
    pub noise_depth: usize,
    pub replications: usize,
    /// `(N_train, N_eval, N_test)`.
    pub split_sizes: (usize, usize, usize),
    pub base_seed: u64,
    /// Draw `w*` once per replication rather than once per cell.
    pub share_truth_across_cells: bool,
    /// `training.seed` is ignored in sweeps; each cell trains from its own seed.
    pub training: TrainingConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SweepConfig {
    pub fn desk() -> Self {
        Self {
            reward_family: RewardFamily::Sinusoidal,
            model_kind: ModelKind::BradleyTerry,
            tie_param: None,
            d: 10,
            widths: vec![4, 16, 64, 256],
            depths: vec![3, 5, 7, 9],
            noise_levels: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8],
            noise_width: 64,
            noise_depth: 4,
            replications: 10,
            split_sizes: (1 << 12, 1 << 11, 1 << 12),
            base_seed: 0,
            share_truth_across_cells: true,
            training: TrainingConfig::default(),
        }
    }

    pub fn full_scale() -> Self {
        Self {
            widths: (2..=12).map(|k| 1usize << k).collect(),
            depths: (3..=13).collect(),
            replications: 50,
            split_sizes: (1 << 14, 1 << 13, 1 << 14),
            ..Self::desk()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse(format!("sweep config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep config serialises")
    }

    pub fn comparison_model(&self) -> Result<ComparisonModel> {
        match self.tie_param {
            Some(t) => ComparisonModel::new(self.model_kind, t),
            None => Ok(ComparisonModel::with_default_ties(self.model_kind)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.widths.is_empty() || self.depths.is_empty() || self.noise_levels.is_empty() {
            return bad("widths, depths and noise_levels must be nonempty");
        }
        if self.widths.contains(&0) || self.noise_width == 0 {
            return bad("widths must be positive");
        }
        if self.depths.contains(&0) || self.noise_depth == 0 {
            return bad("depths must be positive");
        }
        if self.noise_levels.iter().any(|m| !(0.0..=1.0).contains(m)) {
            return bad("noise levels must lie in [0, 1]");
        }
        let (n_train, n_eval, n_test) = self.split_sizes;
        if self.d == 0 || self.replications == 0 || n_train == 0 || n_eval == 0 || n_test == 0 {
            return bad("d, replications and split sizes must be positive");
        }
        self.comparison_model()?;
        self.training.validate(n_train)
    }

    pub fn arch_cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &width in &self.widths {
            for &depth in &self.depths {
                for replication in 0..self.replications {
                    cells.push(SweepCell { width, depth, noise_level: 0.0, replication });
                }
            }
        }
        cells
    }

    pub fn noise_cells(&self) -> Vec<SweepCell> {
        let mut cells = Vec::new();
        for &noise_level in &self.noise_levels {
            for replication in 0..self.replications {
                cells.push(SweepCell { width: self.noise_width, depth: self.noise_depth, noise_level, replication });
            }
        }
        cells
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Order-sensitive 64-bit mix of a seed and a list of words.
pub fn hash64(base: u64, words: &[u64]) -> u64 {
    words.iter().fold(splitmix64(base), |h, &w| splitmix64(h ^ w))
}

pub fn replication_seed(base_seed: u64, replication: usize) -> u64 {
    hash64(base_seed, &[replication as u64])
}

pub fn cell_seed(base_seed: u64, width: usize, depth: usize, noise_level: f64, replication: usize) -> u64 {
    hash64(base_seed, &[width as u64, depth as u64, noise_level.to_bits(), replication as u64])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub width: usize,
    pub depth: usize,
    pub noise_level: f64,
    pub replication: usize,
}

impl SweepCell {
    pub fn seed(&self, base_seed: u64) -> u64 {
        cell_seed(base_seed, self.width, self.depth, self.noise_level, self.replication)
    }

    /// Seed behind this cell's `w*` and clean splits.
    pub fn data_seed(&self, cfg: &SweepConfig) -> u64 {
        if cfg.share_truth_across_cells {
            replication_seed(cfg.base_seed, self.replication)
        } else {
            self.seed(cfg.base_seed)
        }
    }
}

/// Hidden reward and clean splits of one replication.
#[derive(Debug, Clone)]
pub struct ReplicationData {
    pub truth: GroundTruthReward,
    pub train: ComparisonDataset,
    pub eval: ComparisonDataset,
    pub test: ComparisonDataset,
}

pub fn replication_data(cfg: &SweepConfig, data_seed: u64) -> Result<ReplicationData> {
    let model = cfg.comparison_model()?;
    let mut rng = ChaCha8Rng::seed_from_u64(hash64(data_seed, &[0]));
    let truth = GroundTruthReward::sample(cfg.reward_family, cfg.d, &mut rng);
    let (n_train, n_eval, n_test) = cfg.split_sizes;
    Ok(ReplicationData {
        train: generate_dataset(&truth, &model, n_train, hash64(data_seed, &[1]))?,
        eval: generate_dataset(&truth, &model, n_eval, hash64(data_seed, &[2]))?,
        test: generate_dataset(&truth, &model, n_test, hash64(data_seed, &[3]))?,
        truth,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment_id: String,
    pub reward_family: RewardFamily,
    pub model_kind: ModelKind,
    pub width: usize,
    pub depth: usize,
    pub noise_level: f64,
    pub replication: usize,
    pub seed: u64,
    pub regret: f64,
    pub disagreement_rate: f64,
    pub test_loglik: f64,
    pub train_nll_final: f64,
    pub eval_nll_best: f64,
    pub l2_error_sq: f64,
    pub lambda2: f64,
    pub wall_time_seconds: f64,
    /// Empty for successful cells.
    pub error: String,
}

impl ResultRow {
    fn sentinel(experiment_id: &str, cfg: &SweepConfig, cell: &SweepCell, error: String, wall: f64) -> Self {
        Self {
            experiment_id: experiment_id.to_string(),
            reward_family: cfg.reward_family,
            model_kind: cfg.model_kind,
            width: cell.width,
            depth: cell.depth,
            noise_level: cell.noise_level,
            replication: cell.replication,
            seed: cell.seed(cfg.base_seed),
            regret: f64::NAN,
            disagreement_rate: f64::NAN,
            test_loglik: f64::NAN,
            train_nll_final: f64::NAN,
            eval_nll_best: f64::NAN,
            l2_error_sq: f64::NAN,
            lambda2: f64::NAN,
            wall_time_seconds: wall,
            error,
        }
    }

    pub fn is_failure(&self) -> bool {
        !self.error.is_empty()
    }

    pub fn to_csv_line(&self) -> String {
        let mut line = String::new();
        write!(
            line,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment_id,
            self.reward_family,
            self.model_kind,
            self.width,
            self.depth,
            self.noise_level,
            self.replication,
            self.seed,
            self.regret,
            self.disagreement_rate,
            self.test_loglik,
            self.train_nll_final,
            self.eval_nll_best,
            self.l2_error_sq,
            self.lambda2,
            self.wall_time_seconds,
            csv_field(&self.error),
        )
        .unwrap();
        line
    }
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n']) {
        format!("\"{}\"", text.replace('"', "\"\"").replace('\n', " "))
    } else {
        text.to_string()
    }
}

/// Schema-version line followed by the column header.
pub fn write_results_header<W: Write + ?Sized>(out: &mut W) -> Result<()> {
    writeln!(out, "# schema_version={SCHEMA_VERSION}")?;
    writeln!(out, "{}", RESULT_COLUMNS.join(","))?;
    Ok(())
}

/// Trains and evaluates one cell on the clean test split.
pub fn run_cell(experiment_id: &str, cfg: &SweepConfig, cell: &SweepCell) -> Result<ResultRow> {
    let start = Instant::now();
    let model = cfg.comparison_model()?;
    let seed = cell.seed(cfg.base_seed);
    let data = replication_data(cfg, cell.data_seed(cfg))?;
    let train = corrupt_dataset(&data.train, cell.noise_level, hash64(seed, &[1]))?;
    let eval = corrupt_dataset(&data.eval, cell.noise_level, hash64(seed, &[2]))?;

    let arch = MlpArchitecture::rectangular(cfg.d, cell.width, cell.depth, 2);
    let training = TrainingConfig { seed, ..cfg.training.clone() };
    let (params, history) = train_mle(&train, &eval, &arch, &model, &training)?;

    let states = data.test.states();
    let evaluation = evaluate_policy(&params, &data.truth, &states)?;
    let test_loglik = empirical_loglik(&params, &data.test, &model)?;
    let counts = pair_counts(&train);
    let lambda2 = build_laplacian(&counts, total_comparisons(&counts))?.lambda2;

    Ok(ResultRow {
        experiment_id: experiment_id.to_string(),
        reward_family: cfg.reward_family,
        model_kind: cfg.model_kind,
        width: cell.width,
        depth: cell.depth,
        noise_level: cell.noise_level,
        replication: cell.replication,
        seed,
        regret: evaluation.regret,
        disagreement_rate: evaluation.disagreement_rate,
        test_loglik,
        train_nll_final: *history.train_nll.last().unwrap_or(&f64::NAN),
        eval_nll_best: history.best_eval_nll(),
        l2_error_sq: evaluation.l2_error_sq,
        lambda2,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        error: String::new(),
    })
}

fn pair_counts(ds: &ComparisonDataset) -> Vec<Vec<u64>> {
    let mut counts = vec![vec![0u64; ds.action_count]; ds.action_count];
    for x in &ds.samples {
        counts[x.a1][x.a0] += 1;
        counts[x.a0][x.a1] += 1;
    }
    counts
}

/// Writes rows in cell order as soon as every earlier cell has finished.
struct OrderedAppender<'a> {
    out: Option<&'a mut (dyn Write + Send)>,
    pending: BTreeMap<usize, String>,
    next: usize,
    error: Option<std::io::Error>,
}

impl OrderedAppender<'_> {
    fn push(&mut self, index: usize, line: String) {
        self.pending.insert(index, line);
        while let Some(line) = self.pending.remove(&self.next) {
            self.next += 1;
            if let (Some(out), None) = (self.out.as_mut(), self.error.as_ref()) {
                if let Err(e) = writeln!(out, "{line}").and_then(|_| out.flush()) {
                    self.error = Some(e);
                }
            }
        }
    }
}

fn run_cells(
    experiment_id: &str,
    cfg: &SweepConfig,
    cells: &[SweepCell],
    jobs: usize,
    out: Option<&mut (dyn Write + Send)>,
) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    if jobs == 0 {
        return Err(Error::Config("jobs must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let appender = Mutex::new(OrderedAppender { out, pending: BTreeMap::new(), next: 0, error: None });

    let rows: Vec<ResultRow> = pool.install(|| {
        cells
            .par_iter()
            .enumerate()
            .map(|(i, cell)| {
                let start = Instant::now();
                let outcome = panic::catch_unwind(AssertUnwindSafe(|| run_cell(experiment_id, cfg, cell)));
                let row = match outcome {
                    Ok(Ok(row)) => row,
                    Ok(Err(e)) => ResultRow::sentinel(experiment_id, cfg, cell, e.to_string(), start.elapsed().as_secs_f64()),
                    Err(p) => {
                        let msg = p
                            .downcast_ref::<String>()
                            .cloned()
                            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                            .unwrap_or_else(|| "panic".to_string());
                        ResultRow::sentinel(experiment_id, cfg, cell, msg, start.elapsed().as_secs_f64())
                    }
                };
                appender.lock().unwrap().push(i, row.to_csv_line());
                row
            })
            .collect()
    });

    match appender.into_inner().unwrap().error {
        Some(e) => Err(e.into()),
        None => Ok(rows),
    }
}

/// One row per `(width, depth, replication)`; writes CSV rows (no header) to `out`.
pub fn run_arch_sweep(cfg: &SweepConfig, jobs: usize, out: Option<&mut (dyn Write + Send)>) -> Result<Vec<ResultRow>> {
    run_cells("arch", cfg, &cfg.arch_cells(), jobs, out)
}

/// One row per `(noise_level, replication)` at `(noise_width, noise_depth)`.
pub fn run_noise_sweep(cfg: &SweepConfig, jobs: usize, out: Option<&mut (dyn Write + Send)>) -> Result<Vec<ResultRow>> {
    run_cells("noise", cfg, &cfg.noise_cells(), jobs, out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub design: Design,
    pub actions: usize,
    pub lambda2: f64,
}

pub fn run_graph_spectrum(designs: &[Design], action_counts: &[usize], total: u64) -> Result<Vec<SpectrumRow>> {
    let mut rows = Vec::with_capacity(designs.len() * action_counts.len());
    for &design in designs {
        for &actions in action_counts {
            rows.push(SpectrumRow { design, actions, lambda2: design_lambda2(design, actions, total)? });
        }
    }
    Ok(rows)
}

/// `design,m,lambda2` rows.
pub fn write_spectrum_csv<W: Write>(rows: &[SpectrumRow], mut out: W) -> Result<()> {
    writeln!(out, "design,m,lambda2")?;
    for r in rows {
        writeln!(out, "{},{},{:.16e}", r.design, r.actions, r.lambda2)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: u64,
}

/// Equal-width histogram of the recorded win probabilities on `[0, 1]`.
/// Bins are half-open on the right except the last.
pub fn probability_histogram(ds: &ComparisonDataset, bins: usize) -> Result<Vec<HistogramBin>> {
    if bins < 2 {
        return Err(Error::Domain(format!("histogram needs at least 2 bins, got {bins}")));
    }
    let mut counts = vec![0u64; bins];
    for p in dataset_win_probabilities(ds) {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("win probability {p} outside [0, 1]")));
        }
        counts[((p * bins as f64) as usize).min(bins - 1)] += 1;
    }
    Ok(counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin { left: i as f64 / bins as f64, right: (i + 1) as f64 / bins as f64, count })
        .collect())
}

/// `bin_left,bin_right,count` rows.
pub fn write_histogram_csv<W: Write>(hist: &[HistogramBin], mut out: W) -> Result<()> {
    writeln!(out, "bin_left,bin_right,count")?;
    for b in hist {
        writeln!(out, "{},{},{}", b.left, b.right, b.count)?;
    }
    Ok(())
}
