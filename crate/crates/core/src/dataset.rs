//! Pairwise comparison datasets: synthetic generation, label corruption and
//! CSV persistence.

use std::io::{BufRead, Write};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonModel, ModelKind, Outcome};
use crate::error::{domain, Error, Result};
use crate::graph::CountMatrix;
use crate::reward_env::{sample_states, GroundTruthReward, RewardModel};

/// Range of the replacement win probabilities used by [`corrupt_dataset`].
pub const CORRUPTION_RANGE: (f64, f64) = (0.4, 0.6);

/// One observation `(s, a1, a0, y)` plus the win probability it was drawn from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub s: Vec<f64>,
    pub a1: usize,
    pub a0: usize,
    pub y: Outcome,
    pub p_win: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonDataset {
    pub samples: Vec<ComparisonSample>,
    pub d: usize,
    pub action_count: usize,
    pub seed: u64,
    /// Fraction `m` of corrupted samples; 0 for clean data.
    pub corruption_level: f64,
    pub corruption_seed: Option<u64>,
    pub model_kind: ModelKind,
}

impl ComparisonDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn is_clean(&self) -> bool {
        self.corruption_level == 0.0
    }

    pub fn states(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|x| x.s.clone()).collect()
    }

    /// Every sample duplicated in place (used to check mean-invariance).
    pub fn duplicated(&self) -> Self {
        let mut out = self.clone();
        out.samples = self.samples.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        out
    }
}

/// Draws `n` comparisons with `s ~ U[0,1]^d`, pair `(a1, a0) = (1, 0)` and
/// `y ~ g(., r*(s,1) - r*(s,0))`.
pub fn generate_dataset(gt: &GroundTruthReward, model: &ComparisonModel, n: usize, seed: u64) -> Result<ComparisonDataset> {
    if n == 0 {
        return domain("dataset size must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = sample_states(n, gt.dim(), &mut rng);
    let samples = states
        .into_iter()
        .map(|s| {
            let u = gt.reward_gap(&s);
            let y = model.sample_outcome(u, &mut rng);
            ComparisonSample { s, a1: 1, a0: 0, y, p_win: model.win_probability(u) }
        })
        .collect();
    Ok(ComparisonDataset {
        samples,
        d: gt.dim(),
        action_count: 2,
        seed,
        corruption_level: 0.0,
        corruption_seed: None,
        model_kind: model.kind(),
    })
}

/// Expands a count matrix into an oriented, shuffled list of action pairs.
pub fn pairs_from_counts<R: Rng + ?Sized>(counts: &CountMatrix, rng: &mut R) -> Vec<(usize, usize)> {
    let m = counts.len();
    let mut pairs = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            for k in 0..counts[i][j] {
                pairs.push(if k % 2 == 0 { (i, j) } else { (j, i) });
            }
        }
    }
    pairs.shuffle(rng);
    pairs
}

/// Comparison data over an arbitrary action set, one sample per supplied pair.
pub fn generate_with_pairs(
    truth: &impl RewardModel,
    model: &ComparisonModel,
    d: usize,
    pairs: &[(usize, usize)],
    seed: u64,
) -> Result<ComparisonDataset> {
    if pairs.is_empty() {
        return domain("dataset size must be at least 1");
    }
    let actions = truth.action_count();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(pairs.len());
    for &(a1, a0) in pairs {
        if a1 == a0 || a1 >= actions || a0 >= actions {
            return domain(format!("invalid action pair ({a1}, {a0}) for {actions} actions"));
        }
        let s: Vec<f64> = (0..d).map(|_| rng.random()).collect();
        let r = truth.rewards(&s);
        let u = r[a1] - r[a0];
        let y = model.sample_outcome(u, &mut rng);
        samples.push(ComparisonSample { s, a1, a0, y, p_win: model.win_probability(u) });
    }
    Ok(ComparisonDataset {
        samples,
        d,
        action_count: actions,
        seed,
        corruption_level: 0.0,
        corruption_seed: None,
        model_kind: model.kind(),
    })
}

/// Number of samples touched by corruption level `m` on `n` samples.
pub fn corrupted_count(m: f64, n: usize) -> usize {
    // guard against 0.3 * 10 = 2.9999999999999996
    ((m * n as f64) + 1e-9).floor() as usize
}

/// Replaces the win probability of `floor(m N)` uniformly chosen samples by a
/// fresh `U[0.4, 0.6]` draw and re-samples their labels from it.
pub fn corrupt_dataset(ds: &ComparisonDataset, m: f64, seed: u64) -> Result<ComparisonDataset> {
    if !(0.0..=1.0).contains(&m) {
        return domain(format!("corruption level must lie in [0, 1], got {m}"));
    }
    if !ds.is_clean() {
        return Err(Error::State(format!("dataset is already corrupted at level {}", ds.corruption_level)));
    }
    let mut out = ds.clone();
    if m == 0.0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = corrupted_count(m, ds.len());
    let mut chosen = index::sample(&mut rng, ds.len(), k).into_vec();
    chosen.sort_unstable();
    let (lo, hi) = CORRUPTION_RANGE;
    for i in chosen {
        let p = rng.random_range(lo..hi);
        let sample = &mut out.samples[i];
        sample.p_win = p;
        sample.y = if rng.random::<f64>() < p { Outcome::Win } else { Outcome::Lose };
    }
    out.corruption_level = m;
    out.corruption_seed = Some(seed);
    Ok(out)
}

/// Recorded `P(y > 0 | s, a1, a0)` per sample.
pub fn dataset_win_probabilities(ds: &ComparisonDataset) -> Vec<f64> {
    ds.samples.iter().map(|x| x.p_win).collect()
}

/// Writes the dataset as CSV: `s1..sd,a1,a0,y,p_win`, floats with 17 significant digits.
pub fn write_csv<W: Write>(ds: &ComparisonDataset, mut out: W) -> Result<()> {
    let mut header: Vec<String> = (1..=ds.d).map(|i| format!("s{i}")).collect();
    header.extend(["a1", "a0", "y", "p_win"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for x in &ds.samples {
        let mut fields: Vec<String> = x.s.iter().map(|v| format!("{v:.16e}")).collect();
        fields.push(x.a1.to_string());
        fields.push(x.a0.to_string());
        fields.push(x.y.value().to_string());
        fields.push(format!("{:.16e}", x.p_win));
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Reads a dataset written by [`write_csv`]. The model kind is not stored in
/// the file and must be supplied.
pub fn read_csv<R: BufRead>(input: R, model_kind: ModelKind) -> Result<ComparisonDataset> {
    let mut lines = input.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty dataset file".into()))??;
    let cols: Vec<&str> = header.trim().split(',').collect();
    let d = cols.len().checked_sub(4).ok_or_else(|| Error::Parse("header too short".into()))?;
    let expected_tail = ["a1", "a0", "y", "p_win"];
    if cols[d..] != expected_tail || (0..d).any(|i| cols[i] != format!("s{}", i + 1)) {
        return Err(Error::Parse(format!("unexpected header '{header}'")));
    }
    let mut samples = Vec::new();
    let mut max_action = 1;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != d + 4 {
            return Err(Error::Parse(format!("line {}: expected {} fields, got {}", lineno + 2, d + 4, f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)));
        let int = |s: &str| s.parse::<i64>().map_err(|e| Error::Parse(format!("line {}: {e}", lineno + 2)));
        let s = f[..d].iter().map(|v| num(v)).collect::<Result<Vec<_>>>()?;
        let a1 = int(f[d])?;
        let a0 = int(f[d + 1])?;
        if a1 < 0 || a0 < 0 || a1 == a0 {
            return Err(Error::Parse(format!("line {}: invalid action pair ({a1}, {a0})", lineno + 2)));
        }
        max_action = max_action.max(a1).max(a0);
        samples.push(ComparisonSample {
            s,
            a1: a1 as usize,
            a0: a0 as usize,
            y: Outcome::from_value(int(f[d + 2])?)?,
            p_win: num(f[d + 3])?,
        });
    }
    Ok(ComparisonDataset {
        samples,
        d,
        action_count: max_action as usize + 1,
        seed: 0,
        corruption_level: 0.0,
        corruption_seed: None,
        model_kind,
    })
}
