//! Comparison designs over an action set and the normalised comparison-count
//! Laplacian `Lambda` with its spectral gap `lambda2`.
//!
//! `Lambda_ij = -n_ij / N` off the diagonal and `Lambda_ii = sum_j n_ij / N`,
//! where `N = sum_{i<j} n_ij`. The trace is therefore always 2.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::eigen;
use crate::error::{domain, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    Complete,
    Star,
    Path,
    Cycle,
}

impl Design {
    pub const ALL: [Design; 4] = [Design::Complete, Design::Star, Design::Path, Design::Cycle];

    pub fn name(self) -> &'static str {
        match self {
            Design::Complete => "complete",
            Design::Star => "star",
            Design::Path => "path",
            Design::Cycle => "cycle",
        }
    }

    /// Edge set in lexicographic order; the star is centred on action 0.
    pub fn edges(self, actions: usize) -> Vec<(usize, usize)> {
        let mut edges: Vec<(usize, usize)> = match self {
            Design::Complete => (0..actions).flat_map(|i| ((i + 1)..actions).map(move |j| (i, j))).collect(),
            Design::Star => (1..actions).map(|j| (0, j)).collect(),
            Design::Path => (1..actions).map(|j| (j - 1, j)).collect(),
            Design::Cycle => {
                let mut e: Vec<_> = (1..actions).map(|j| (j - 1, j)).collect();
                if actions > 2 {
                    e.push((0, actions - 1));
                }
                e
            }
        };
        edges.sort_unstable();
        edges
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "complete" => Ok(Design::Complete),
            "star" => Ok(Design::Star),
            "path" => Ok(Design::Path),
            "cycle" => Ok(Design::Cycle),
            other => Err(Error::Config(format!("unknown comparison design '{other}'"))),
        }
    }
}

/// Symmetric matrix of pair comparison counts `n_ij`.
pub type CountMatrix = Vec<Vec<u64>>;

/// Spreads `total` comparisons over the design's edges as evenly as integer
/// division allows; the remainder goes to the lowest-indexed edges.
pub fn design_counts(design: Design, actions: usize, total: u64) -> Result<CountMatrix> {
    if actions < 2 {
        return domain(format!("a comparison design needs at least 2 actions, got {actions}"));
    }
    let edges = design.edges(actions);
    let e = edges.len() as u64;
    if total < e {
        return domain(format!("{total} comparisons cannot cover the {e} edges of a {design} design"));
    }
    let base = total / e;
    let extra = (total % e) as usize;
    let mut counts = vec![vec![0u64; actions]; actions];
    for (k, &(i, j)) in edges.iter().enumerate() {
        let n = base + u64::from(k < extra);
        counts[i][j] = n;
        counts[j][i] = n;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaplacianSummary {
    pub lambda_matrix: Vec<Vec<f64>>,
    pub lambda2: f64,
    pub counts: CountMatrix,
}

impl LaplacianSummary {
    pub fn trace(&self) -> f64 {
        (0..self.lambda_matrix.len()).map(|i| self.lambda_matrix[i][i]).sum()
    }
}

/// Total comparisons `sum_{i<j} n_ij`.
pub fn total_comparisons(counts: &CountMatrix) -> u64 {
    let m = counts.len();
    (0..m).flat_map(|i| ((i + 1)..m).map(move |j| (i, j))).map(|(i, j)| counts[i][j]).sum()
}

fn validate_counts(counts: &CountMatrix) -> Result<usize> {
    let m = counts.len();
    if m < 2 {
        return domain("count matrix needs at least 2 actions");
    }
    for (i, row) in counts.iter().enumerate() {
        if row.len() != m {
            return domain(format!("count row {i} has {} entries, expected {m}", row.len()));
        }
        if row[i] != 0 {
            return domain(format!("count diagonal entry {i} is nonzero"));
        }
    }
    for i in 0..m {
        for j in (i + 1)..m {
            if counts[i][j] != counts[j][i] {
                return domain(format!("counts are asymmetric at ({i}, {j})"));
            }
        }
    }
    Ok(m)
}

/// Unnormalised Laplacian of the count graph (`N * Lambda`).
pub fn count_laplacian(counts: &CountMatrix) -> Result<Vec<Vec<f64>>> {
    let m = validate_counts(counts)?;
    let mut l = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            if i != j {
                l[i][j] = -(counts[i][j] as f64);
                l[i][i] += counts[i][j] as f64;
            }
        }
    }
    Ok(l)
}

/// Builds `Lambda` from pair counts and computes its spectral gap.
pub fn build_laplacian(counts: &CountMatrix, total: u64) -> Result<LaplacianSummary> {
    let m = validate_counts(counts)?;
    let observed = total_comparisons(counts);
    if total == 0 || observed != total {
        return domain(format!("counts sum to {observed} comparisons but N = {total}"));
    }
    let n = total as f64;
    let mut lambda_matrix = vec![vec![0.0; m]; m];
    for i in 0..m {
        let mut diag = 0.0;
        for j in 0..m {
            if i != j {
                lambda_matrix[i][j] = -(counts[i][j] as f64) / n;
                diag += counts[i][j] as f64;
            }
        }
        lambda_matrix[i][i] = diag / n;
    }
    let lambda2 = eigen::lambda2(&lambda_matrix)?.max(0.0);
    Ok(LaplacianSummary { lambda_matrix, lambda2, counts: counts.clone() })
}

/// `lambda2` of the normalised Laplacian of a standard design.
pub fn design_lambda2(design: Design, actions: usize, total: u64) -> Result<f64> {
    let counts = design_counts(design, actions, total)?;
    build_laplacian(&counts, total).map(|s| s.lambda2)
}
