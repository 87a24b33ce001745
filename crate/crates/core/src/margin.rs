//! Margin-condition diagnostics: empirical CDFs of the optimal action's
//! winning-probability margin and reward gap, power-law exponent fits, the
//! probability-to-reward-gap inequalities, and the theoretical rate
//! expressions (reported up to their universal constants).

use serde::{Deserialize, Serialize};

use crate::comparison::{ComparisonModel, KappaConstants, ModelKind};
use crate::error::{domain, Error, Result};
use crate::reward_env::{greedy_decision, RewardModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MarginKind {
    /// `P(y > 0 | s, pi*(s), a') - 1/2`
    ProbabilityGap,
    /// `r*(s, pi*(s)) - max_{a != pi*(s)} r*(s, a)`
    RewardGap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginCurve {
    pub t_grid: Vec<f64>,
    pub cdf_values: Vec<f64>,
    pub kind: MarginKind,
    pub n_states: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginFit {
    pub alpha_hat: f64,
    pub c_hat: f64,
    /// Log-log slope, the exponent `alpha / (1 - alpha)`.
    pub slope: f64,
    pub fit_range: (f64, f64),
    pub r_squared: f64,
    pub points_used: usize,
}

/// Minimum number of interior points a fit needs.
pub const MIN_FIT_POINTS: usize = 5;

/// `points` values spaced geometrically over `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Result<Vec<f64>> {
    if !(t_min > 0.0 && t_max > t_min && points >= 2) {
        return domain(format!("bad grid: [{t_min}, {t_max}] with {points} points"));
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                t_max
            } else {
                (a + (b - a) * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

/// Reward gap between the optimal action and its best competitor.
pub fn optimal_reward_gap(rewards: &[f64]) -> f64 {
    greedy_decision(rewards).runner_up_gap
}

/// Per-state margins of the requested kind.
pub fn state_margins(truth: &impl RewardModel, model: &ComparisonModel, states: &[Vec<f64>], kind: MarginKind) -> Vec<f64> {
    truth
        .rewards_batch(states)
        .iter()
        .map(|r| {
            let gap = optimal_reward_gap(r);
            match kind {
                MarginKind::RewardGap => gap,
                MarginKind::ProbabilityGap => model.win_probability(gap) - 0.5,
            }
        })
        .collect()
}

/// Empirical CDF of the margins, evaluated on `t_grid`.
pub fn margin_cdf(
    truth: &impl RewardModel,
    model: &ComparisonModel,
    states: &[Vec<f64>],
    t_grid: &[f64],
    kind: MarginKind,
) -> Result<MarginCurve> {
    if states.is_empty() || t_grid.is_empty() {
        return domain("margin CDF needs states and thresholds");
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("threshold grid must be strictly increasing");
    }
    let mut margins = state_margins(truth, model, states, kind);
    margins.sort_by(|a, b| a.total_cmp(b));
    let n = margins.len() as f64;
    let cdf_values = t_grid
        .iter()
        .map(|&t| margins.partition_point(|&m| m <= t) as f64 / n)
        .collect();
    Ok(MarginCurve { t_grid: t_grid.to_vec(), cdf_values, kind, n_states: states.len() })
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// Fits `cdf = c t^s` by least squares on `(log t, log cdf)` over grid points
/// with `0 < cdf < 1`, and maps the slope to `alpha = s / (1 + s)`.
pub fn fit_margin_exponent(curve: &MarginCurve) -> Result<MarginFit> {
    let usable: Vec<(f64, f64)> = curve
        .t_grid
        .iter()
        .zip(&curve.cdf_values)
        .filter(|&(&t, &c)| t > 0.0 && c > 0.0 && c < 1.0)
        .map(|(&t, &c)| (t, c))
        .collect();
    if usable.len() < MIN_FIT_POINTS {
        let listing = curve
            .t_grid
            .iter()
            .zip(&curve.cdf_values)
            .map(|(t, c)| format!("({t:.4}, {c:.4})"))
            .collect::<Vec<_>>()
            .join(" ");
        return Err(Error::InsufficientPoints { needed: MIN_FIT_POINTS, found: usable.len(), curve: listing });
    }
    let lx: Vec<f64> = usable.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = usable.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept, r_squared) = least_squares(&lx, &ly);
    Ok(MarginFit {
        alpha_hat: slope / (1.0 + slope),
        c_hat: intercept.exp(),
        slope,
        fit_range: (usable[0].0, usable[usable.len() - 1].0),
        r_squared,
        points_used: usable.len(),
    })
}

/// Threshold on the reward gap matching probability margin `t`, i.e. the
/// `u >= 0` with `win_probability(u) - 1/2 = t`.
pub fn probability_to_reward_threshold(model: &ComparisonModel, t: f64) -> Result<f64> {
    if !(0.0..0.5).contains(&t) {
        return domain(format!("probability margin must lie in [0, 1/2), got {t}"));
    }
    let target = 0.5 + t;
    // P(y > 0 | u) sits below 1/2 at u = 0 for ternary models
    let mut lo = -60.0;
    let mut hi = 60.0;
    if model.win_probability(hi) < target {
        return domain(format!("margin {t} is not reachable by {}", model.kind()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if model.win_probability(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapInequalityReport {
    pub points: usize,
    pub violations: usize,
    /// Largest `rhs - lhs` over the grid, clipped at 0.
    pub max_violation: f64,
}

impl GapInequalityReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

/// Checks the pointwise inequality linking the probability margin to the
/// reward gap: `t/4 >= tanh(t/2)/2` for BT and
/// `t/sqrt(2 pi) >= exp(-t^2/2)/sqrt(2 pi) - 1/2` for the probit model.
pub fn verify_gap_inequalities(model: &ComparisonModel, t_grid: &[f64]) -> Result<GapInequalityReport> {
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    let sides: fn(f64, f64) -> (f64, f64) = match model.kind() {
        ModelKind::BradleyTerry => |t, _| (t / 4.0, 0.5 * (t.exp() - 1.0) / (t.exp() + 1.0)),
        ModelKind::Thurstonian => |t, s| (t / s, (-0.5 * t * t).exp() / s - 0.5),
        other => return Err(Error::Unsupported(format!("no gap inequality is stated for the {other} model"))),
    };
    let mut report = GapInequalityReport { points: t_grid.len(), violations: 0, max_violation: 0.0 };
    for &t in t_grid {
        if !(t > 0.0 && t < 1.0) {
            return domain(format!("inequality grid point {t} outside (0, 1)"));
        }
        let (lhs, rhs) = sides(t, sqrt_2pi);
        if lhs < rhs {
            report.violations += 1;
            report.max_violation = report.max_violation.max(rhs - lhs);
        }
    }
    Ok(report)
}

fn check_rate_params(alpha: f64, beta: f64, d: usize) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return domain(format!("margin exponent must lie in [0, 1), got {alpha}"));
    }
    if !(beta > 0.0 && beta.is_finite()) || d == 0 {
        return domain(format!("need beta > 0 and d >= 1, got beta = {beta}, d = {d}"));
    }
    Ok(())
}

/// Regret rate exponent `beta / ((d + 2 beta)(3 - 2 alpha))`; `alpha = 0` is
/// the no-margin regime.
pub fn theoretical_rate(alpha: f64, beta: f64, d: usize) -> Result<f64> {
    check_rate_params(alpha, beta, d)?;
    Ok(beta / ((d as f64 + 2.0 * beta) * (3.0 - 2.0 * alpha)))
}

/// `N^{-exponent}`.
pub fn theoretical_rate_value(alpha: f64, beta: f64, d: usize, n: u64) -> Result<f64> {
    if n == 0 {
        return domain("sample size must be positive");
    }
    Ok((n as f64).powf(-theoretical_rate(alpha, beta, d)?))
}

/// The two terms of the deep-estimator regret bound with the universal
/// constant set to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegretBoundTerms {
    pub approximation_term: f64,
    pub confidence_term: f64,
    pub total: f64,
    pub exponent: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn theoretical_regret_bound_terms(
    kappas: &KappaConstants,
    lambda2: f64,
    alpha: f64,
    beta: f64,
    d: usize,
    n: u64,
    action_count: usize,
    delta: f64,
) -> Result<RegretBoundTerms> {
    let exponent = theoretical_rate(alpha, beta, d)?;
    if n < 2 {
        return domain("the bound needs N >= 2 (log N appears squared)");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return domain(format!("delta must lie in (0, 1), got {delta}"));
    }
    if !(lambda2 > 0.0) || !(kappas.kappa2 > 0.0) || action_count < 2 {
        return domain("need lambda2 > 0, kappa2 > 0 and at least two actions");
    }
    let nf = n as f64;
    let fb = beta.floor() + 1.0;
    let power = 1.0 / (3.0 - 2.0 * alpha);
    let base = kappas.kappa0 * (action_count as f64).sqrt() * fb.powi(4) * (d as f64).powf(fb) * nf.ln().powi(2)
        / (kappas.kappa2 * lambda2);
    let approximation_term = base.powf(power) * nf.powf(-exponent);
    let conf = kappas.kappa0.powi(2) * (1.0 / delta).ln() / (kappas.kappa2.powi(2) * lambda2.powi(2) * nf);
    let confidence_term = conf.powf(0.5 * power);
    Ok(RegretBoundTerms { approximation_term, confidence_term, total: approximation_term + confidence_term, exponent })
}

/// Log-log slope of regret against squared `L2` error across estimators.
pub fn regret_vs_error_exponent(pairs: &[(f64, f64)]) -> Result<f64> {
    if pairs.len() < MIN_FIT_POINTS {
        return domain(format!("need at least {MIN_FIT_POINTS} (error, regret) pairs, got {}", pairs.len()));
    }
    if pairs.iter().any(|&(e, r)| !(e > 0.0 && r > 0.0)) {
        return domain("errors and regrets must be positive");
    }
    let lx: Vec<f64> = pairs.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = pairs.iter().map(|p| p.1.ln()).collect();
    Ok(least_squares(&lx, &ly).0)
}
