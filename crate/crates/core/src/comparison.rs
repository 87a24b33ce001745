//! Comparison functions `g(y, u)`: the probability law of a pairwise outcome
//! `y` given the reward difference `u = r(s, a1) - r(s, a0)`.
//!
//! Four models are provided. Bradley-Terry (logistic) and Thurstonian (probit)
//! have binary outcomes `{-1, +1}`; Rao-Kupper and Davidson add a tie outcome
//! `0`. Every model satisfies the comparison-function axioms: normalisation
//! over outcomes, `g(y, u) = g(-y, -u)`, `g(-1, u)` decreasing in `u`, and
//! strict log-concavity in `u` for every outcome.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// Beyond this magnitude the logistic function equals 0 or 1 in double precision.
pub const LOGISTIC_SATURATION: f64 = 36.0;

/// Outcome of a single pairwise comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Outcome {
    /// `a0` preferred (`y = -1`).
    Lose,
    /// Tie or abstention (`y = 0`).
    Tie,
    /// `a1` preferred (`y = +1`).
    Win,
}

impl Outcome {
    pub fn value(self) -> i8 {
        match self {
            Outcome::Lose => -1,
            Outcome::Tie => 0,
            Outcome::Win => 1,
        }
    }

    pub fn from_value(v: i64) -> Result<Self> {
        match v {
            -1 => Ok(Outcome::Lose),
            0 => Ok(Outcome::Tie),
            1 => Ok(Outcome::Win),
            other => Err(Error::Domain(format!("outcome must be -1, 0 or 1, got {other}"))),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Outcome::Lose => Outcome::Win,
            Outcome::Tie => Outcome::Tie,
            Outcome::Win => Outcome::Lose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OutcomeSpace {
    Binary,
    Ternary,
}

impl OutcomeSpace {
    pub fn outcomes(self) -> &'static [Outcome] {
        match self {
            OutcomeSpace::Binary => &[Outcome::Lose, Outcome::Win],
            OutcomeSpace::Ternary => &[Outcome::Lose, Outcome::Tie, Outcome::Win],
        }
    }

    pub fn contains(self, y: Outcome) -> bool {
        !(self == OutcomeSpace::Binary && y == Outcome::Tie)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[serde(rename = "bt")]
    BradleyTerry,
    Thurstonian,
    RaoKupper,
    Davidson,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::BradleyTerry,
        ModelKind::Thurstonian,
        ModelKind::RaoKupper,
        ModelKind::Davidson,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BradleyTerry => "bt",
            ModelKind::Thurstonian => "thurstonian",
            ModelKind::RaoKupper => "rao-kupper",
            ModelKind::Davidson => "davidson",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bt" | "bradley-terry" => Ok(ModelKind::BradleyTerry),
            "thurstonian" | "probit" => Ok(ModelKind::Thurstonian),
            "rao-kupper" | "raokupper" => Ok(ModelKind::RaoKupper),
            "davidson" => Ok(ModelKind::Davidson),
            other => Err(Error::Config(format!("unknown comparison model '{other}'"))),
        }
    }
}

/// A parametrised comparison function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonModel {
    kind: ModelKind,
    tie_param: f64,
}

/// Lipschitz and curvature constants of `log g` over `|u| <= c_rstar`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaConstants {
    /// `sup |log g(y, u)|`
    pub kappa0: f64,
    /// `sup |d/du log g(y, u)|`
    pub kappa1: f64,
    /// `inf |d^2/du^2 log g(y, u)|`
    pub kappa2: f64,
    pub c_rstar: f64,
}

fn sigmoid(x: f64) -> f64 {
    if x >= LOGISTIC_SATURATION {
        1.0
    } else if x <= -LOGISTIC_SATURATION {
        // exp(x) is still representable; keep it so log-densities stay finite
        x.exp()
    } else if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > LOGISTIC_SATURATION {
        x
    } else if x < -LOGISTIC_SATURATION {
        x.exp()
    } else {
        x.max(0.0) + (-x.abs()).exp().ln_1p()
    }
}

/// `log sigma(x)`.
fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

impl ComparisonModel {
    pub fn bradley_terry() -> Self {
        Self { kind: ModelKind::BradleyTerry, tie_param: 0.0 }
    }

    pub fn thurstonian() -> Self {
        Self { kind: ModelKind::Thurstonian, tie_param: 0.0 }
    }

    /// Rao-Kupper with threshold `theta > 1`.
    pub fn rao_kupper(theta: f64) -> Result<Self> {
        if !(theta > 1.0 && theta.is_finite()) {
            return Err(Error::Config(format!("Rao-Kupper needs theta > 1, got {theta}")));
        }
        Ok(Self { kind: ModelKind::RaoKupper, tie_param: theta })
    }

    /// Davidson with tie weight `nu > 0`.
    pub fn davidson(nu: f64) -> Result<Self> {
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::Config(format!("Davidson needs nu > 0, got {nu}")));
        }
        Ok(Self { kind: ModelKind::Davidson, tie_param: nu })
    }

    /// Builds a model of the given kind, using `tie_param` only for the
    /// ternary models.
    pub fn new(kind: ModelKind, tie_param: f64) -> Result<Self> {
        match kind {
            ModelKind::BradleyTerry => Ok(Self::bradley_terry()),
            ModelKind::Thurstonian => Ok(Self::thurstonian()),
            ModelKind::RaoKupper => Self::rao_kupper(tie_param),
            ModelKind::Davidson => Self::davidson(tie_param),
        }
    }

    /// Model with a conventional tie parameter (theta = 1.5, nu = 1).
    pub fn with_default_ties(kind: ModelKind) -> Self {
        let tie = match kind {
            ModelKind::RaoKupper => 1.5,
            ModelKind::Davidson => 1.0,
            _ => 0.0,
        };
        Self::new(kind, tie).expect("default tie parameters are valid")
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn tie_param(&self) -> f64 {
        self.tie_param
    }

    pub fn outcome_space(&self) -> OutcomeSpace {
        match self.kind {
            ModelKind::BradleyTerry | ModelKind::Thurstonian => OutcomeSpace::Binary,
            ModelKind::RaoKupper | ModelKind::Davidson => OutcomeSpace::Ternary,
        }
    }

    fn check(&self, y: Outcome) -> Result<()> {
        if self.outcome_space().contains(y) {
            Ok(())
        } else {
            Err(Error::Domain(format!("outcome {} not in the outcome space of {}", y.value(), self.kind)))
        }
    }

    /// Davidson probabilities `(p_minus, p_tie, p_plus)`.
    fn davidson_masses(&self, u: f64) -> (f64, f64, f64) {
        let ln_nu = self.tie_param.ln();
        let terms = [-0.5 * u, ln_nu, 0.5 * u];
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = terms.iter().map(|t| (t - m).exp()).collect();
        let z: f64 = e.iter().sum();
        (e[0] / z, e[1] / z, e[2] / z)
    }

    fn davidson_log_z(&self, u: f64) -> f64 {
        let terms = [-0.5 * u, self.tie_param.ln(), 0.5 * u];
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
    }

    /// `log g(y, u)`.
    pub fn log_density(&self, y: Outcome, u: f64) -> Result<f64> {
        self.check(y)?;
        Ok(self.log_density_unchecked(y, u))
    }

    pub(crate) fn log_density_unchecked(&self, y: Outcome, u: f64) -> f64 {
        match self.kind {
            ModelKind::BradleyTerry => match y {
                Outcome::Win => log_sigmoid(u),
                _ => log_sigmoid(-u),
            },
            ModelKind::Thurstonian => match y {
                Outcome::Win => normal::log_cdf(u),
                _ => normal::log_cdf(-u),
            },
            ModelKind::RaoKupper => {
                let c = self.tie_param.ln();
                match y {
                    Outcome::Win => log_sigmoid(u - c),
                    Outcome::Lose => log_sigmoid(-u - c),
                    Outcome::Tie => {
                        // (theta^2 - 1) e^u / ((e^u + theta)(1 + theta e^u))
                        (self.tie_param * self.tie_param - 1.0).ln() + u - c - softplus(u - c) - softplus(u + c)
                    }
                }
            }
            ModelKind::Davidson => {
                let log_z = self.davidson_log_z(u);
                match y {
                    Outcome::Win => 0.5 * u - log_z,
                    Outcome::Lose => -0.5 * u - log_z,
                    Outcome::Tie => self.tie_param.ln() - log_z,
                }
            }
        }
    }

    /// `g(y, u)`.
    pub fn density(&self, y: Outcome, u: f64) -> Result<f64> {
        self.log_density(y, u).map(f64::exp)
    }

    /// Probability of a tie, `g(0, u)`; zero for binary models.
    pub fn tie_probability(&self, u: f64) -> f64 {
        match self.outcome_space() {
            OutcomeSpace::Binary => 0.0,
            OutcomeSpace::Ternary => self.log_density_unchecked(Outcome::Tie, u).exp(),
        }
    }

    /// `P(y > 0 | u)`.
    pub fn win_probability(&self, u: f64) -> f64 {
        match self.kind {
            ModelKind::BradleyTerry => sigmoid(u),
            ModelKind::Thurstonian => normal::cdf(u),
            ModelKind::RaoKupper => sigmoid(u - self.tie_param.ln()),
            ModelKind::Davidson => self.davidson_masses(u).2,
        }
    }

    /// `d/du log g(y, u)`.
    pub fn dlog_density_du(&self, y: Outcome, u: f64) -> Result<f64> {
        self.check(y)?;
        Ok(self.dlog_unchecked(y, u))
    }

    pub(crate) fn dlog_unchecked(&self, y: Outcome, u: f64) -> f64 {
        match self.kind {
            ModelKind::BradleyTerry => match y {
                Outcome::Win => sigmoid(-u),
                _ => -sigmoid(u),
            },
            ModelKind::Thurstonian => match y {
                Outcome::Win => normal::inverse_mills(u),
                _ => -normal::inverse_mills(-u),
            },
            ModelKind::RaoKupper => {
                let c = self.tie_param.ln();
                match y {
                    Outcome::Win => sigmoid(c - u),
                    Outcome::Lose => -sigmoid(u + c),
                    Outcome::Tie => 1.0 - sigmoid(u - c) - sigmoid(u + c),
                }
            }
            ModelKind::Davidson => {
                let (pm, _, pp) = self.davidson_masses(u);
                let dlog_z = 0.5 * (pp - pm);
                match y {
                    Outcome::Win => 0.5 - dlog_z,
                    Outcome::Lose => -0.5 - dlog_z,
                    Outcome::Tie => -dlog_z,
                }
            }
        }
    }

    /// `d^2/du^2 log g(y, u)`, strictly negative for every model and outcome.
    pub fn d2log_density_du2(&self, y: Outcome, u: f64) -> Result<f64> {
        self.check(y)?;
        Ok(self.d2log_unchecked(y, u))
    }

    pub(crate) fn d2log_unchecked(&self, y: Outcome, u: f64) -> f64 {
        match self.kind {
            ModelKind::BradleyTerry => -sigmoid(u) * sigmoid(-u),
            ModelKind::Thurstonian => {
                // d/du m(u) = -m(u) (u + m(u)) with m the inverse Mills ratio
                let v = match y {
                    Outcome::Win => u,
                    _ => -u,
                };
                let m = normal::inverse_mills(v);
                -m * (v + m)
            }
            ModelKind::RaoKupper => {
                let c = self.tie_param.ln();
                let lo = sigmoid(u - c) * sigmoid(c - u);
                let hi = sigmoid(u + c) * sigmoid(-u - c);
                match y {
                    Outcome::Win => -lo,
                    Outcome::Lose => -hi,
                    Outcome::Tie => -lo - hi,
                }
            }
            ModelKind::Davidson => {
                // minus the variance of y/2 under g(., u); identical for all y
                let (pm, _, pp) = self.davidson_masses(u);
                let mean = 0.5 * (pp - pm);
                -(0.25 * (pp + pm) - mean * mean)
            }
        }
    }

    /// Draws an outcome from `g(., u)`.
    pub fn sample_outcome<R: Rng + ?Sized>(&self, u: f64, rng: &mut R) -> Outcome {
        if self.kind == ModelKind::BradleyTerry {
            if u >= LOGISTIC_SATURATION {
                return Outcome::Win;
            }
            if u <= -LOGISTIC_SATURATION {
                return Outcome::Lose;
            }
        }
        let draw: f64 = rng.random();
        let p_win = self.win_probability(u);
        match self.outcome_space() {
            OutcomeSpace::Binary => {
                if draw < p_win {
                    Outcome::Win
                } else {
                    Outcome::Lose
                }
            }
            OutcomeSpace::Ternary => {
                let p_tie = self.tie_probability(u);
                if draw < p_win {
                    Outcome::Win
                } else if draw < p_win + p_tie {
                    Outcome::Tie
                } else {
                    Outcome::Lose
                }
            }
        }
    }

    /// Suprema and infimum of `log g` and its derivatives over `|u| <= c_rstar`.
    ///
    /// Closed forms for the binary models; the ternary ones scan a grid of
    /// step `1e-4` with both endpoints included.
    pub fn kappa_constants(&self, c_rstar: f64) -> Result<KappaConstants> {
        if !(c_rstar > 0.0 && c_rstar.is_finite()) {
            return Err(Error::Domain(format!("c_rstar must be positive and finite, got {c_rstar}")));
        }
        let c = c_rstar;
        let (kappa0, kappa1, kappa2) = match self.kind {
            // log g(+1, u) = log sigma(u) is monotone, worst at u = -c
            ModelKind::BradleyTerry => (softplus(c), sigmoid(c), sigmoid(c) * sigmoid(-c)),
            // inverse Mills ratio is decreasing and |d2| = m(u)(u + m(u)) too
            ModelKind::Thurstonian => {
                let m_c = normal::inverse_mills(c);
                (-normal::log_cdf(-c), normal::inverse_mills(-c), m_c * (c + m_c))
            }
            ModelKind::RaoKupper | ModelKind::Davidson => self.kappa_grid(c),
        };
        Ok(KappaConstants { kappa0, kappa1, kappa2, c_rstar })
    }

    fn kappa_grid(&self, c: f64) -> (f64, f64, f64) {
        const STEP: f64 = 1e-4;
        let steps = (2.0 * c / STEP).ceil() as usize;
        let mut k0: f64 = 0.0;
        let mut k1: f64 = 0.0;
        let mut k2 = f64::INFINITY;
        for i in 0..=steps {
            let u = (-c + i as f64 * STEP).min(c);
            for &y in self.outcome_space().outcomes() {
                k0 = k0.max(self.log_density_unchecked(y, u).abs());
                k1 = k1.max(self.dlog_unchecked(y, u).abs());
                k2 = k2.min(self.d2log_unchecked(y, u).abs());
            }
        }
        (k0, k1, k2)
    }
}
