//! Monte Carlo rate studies for the lasso/restriction example and the
//! minimum-variance portfolio risk example.
//!
//! A study walks a grid of cells `(n, p, s)`. Each cell builds its fixed
//! population once (design and coefficients, or precision matrix and GMV
//! weights) and then runs independent replications. Every replication
//! draws from its own substream keyed by `(n, p, s, replication)`, so
//! results do not depend on execution order or worker count.

mod report;
mod slope;
mod studies;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data_gen::Seed;
use crate::error::{invalid, Result};

pub use report::{build_report, CellEntry, MetricReport, RegimeEntry, Report, SlopeVsN, SlopeVsS};
pub use slope::{fit_loglog_slope, quantile_sorted, SlopeFit};
pub use studies::{
    run_lasso_rate_study, run_portfolio_study, run_restriction_study, run_study, study_lambda, CellSamples,
    CheckTally, StudyOutput, HOLDER_CHECK, INEQUALITY_CHECK, SQRT_IDENTITY_CHECK,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StudyKind {
    Lasso,
    Restriction,
    Portfolio,
}

impl StudyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StudyKind::Lasso => "lasso",
            StudyKind::Restriction => "restriction",
            StudyKind::Portfolio => "portfolio",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyKind {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lasso" => Ok(StudyKind::Lasso),
            "restriction" => Ok(StudyKind::Restriction),
            "portfolio" => Ok(StudyKind::Portfolio),
            other => Err(invalid(format!("unknown study kind {other:?}"))),
        }
    }
}

/// How `p` follows `n` across the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PRule {
    Fixed(usize),
    /// `p = k * n`
    Ratio(usize),
}

impl PRule {
    pub fn p_for(self, n: usize) -> usize {
        match self {
            PRule::Fixed(p) => p,
            PRule::Ratio(k) => k * n,
        }
    }
}

fn default_noise_sd() -> f64 {
    1.0
}

fn default_magnitude() -> f64 {
    1.0
}

fn default_m() -> usize {
    1
}

fn default_strength() -> f64 {
    0.5
}

fn default_lambda_c() -> f64 {
    crate::lasso::DEFAULT_LAMBDA_C
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_values: Vec<usize>,
    pub p_rule: PRule,
    /// `s0` for the lasso studies, band sparsity `s_per_row` for portfolios.
    pub s_values: Vec<usize>,
    #[serde(default = "default_m")]
    pub m: usize,
    pub replications: usize,
    pub seed: Seed,
    #[serde(default = "default_lambda_c")]
    pub lambda_c: f64,
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default = "default_noise_sd")]
    pub noise_sd: f64,
    #[serde(default = "default_magnitude")]
    pub beta_magnitude: f64,
}

impl GridConfig {
    /// Lasso and restriction defaults: `n` in {200, 400, 800, 1600}, `p = 2n`, `s0` in {2, 5, 10}.
    pub fn default_lasso() -> Self {
        Self {
            n_values: vec![200, 400, 800, 1600],
            p_rule: PRule::Ratio(2),
            s_values: vec![2, 5, 10],
            m: 1,
            replications: 200,
            seed: Seed(20_170_301),
            lambda_c: default_lambda_c(),
            strength: default_strength(),
            noise_sd: 1.0,
            beta_magnitude: 1.0,
        }
    }

    /// Portfolio defaults: `p = 500`, `n` in {125, 250, 500}, `s` in {3, 5, 9, 17}.
    pub fn default_portfolio() -> Self {
        Self {
            n_values: vec![125, 250, 500],
            p_rule: PRule::Fixed(500),
            s_values: vec![3, 5, 9, 17],
            ..Self::default_lasso()
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.n_values
            .iter()
            .flat_map(move |&n| self.s_values.iter().map(move |&s| (n, self.p_rule.p_for(n), s)))
    }

    /// Structural validation. Returns warnings for grids that leave the
    /// `p > n` regime in the lasso studies; the caller decides whether those
    /// are fatal.
    pub fn validate(&self, kind: StudyKind) -> Result<Vec<String>> {
        if self.n_values.is_empty() || self.s_values.is_empty() {
            return Err(invalid("n_values and s_values must be nonempty"));
        }
        if self.n_values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("n_values must be strictly increasing"));
        }
        if self.n_values[0] < 2 {
            return Err(invalid("every n must be at least 2"));
        }
        if self.replications == 0 {
            return Err(invalid("replications must be at least 1"));
        }
        let mut sorted_s = self.s_values.clone();
        sorted_s.sort_unstable();
        sorted_s.dedup();
        if sorted_s.len() != self.s_values.len() || sorted_s[0] == 0 {
            return Err(invalid("s_values must be distinct and positive"));
        }
        match self.p_rule {
            PRule::Fixed(p) if p < 2 => return Err(invalid("p must be at least 2")),
            PRule::Ratio(0) => return Err(invalid("ratio k must be positive")),
            _ => {}
        }
        let mut warnings = Vec::new();
        for (n, p, s) in self.cells() {
            if p < 2 {
                return Err(invalid(format!("cell n={n}: p = {p} must be at least 2")));
            }
            if s > p {
                return Err(invalid(format!("cell n={n}: s = {s} exceeds p = {p}")));
            }
        }
        match kind {
            StudyKind::Lasso | StudyKind::Restriction => {
                if !(self.lambda_c > 0.0 && self.lambda_c.is_finite()) {
                    return Err(invalid("lambda_c must be positive"));
                }
                if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
                    return Err(invalid("noise_sd must be nonnegative"));
                }
                if !(self.beta_magnitude > 0.0 && self.beta_magnitude.is_finite()) {
                    return Err(invalid("beta_magnitude must be positive"));
                }
                if kind == StudyKind::Restriction && self.m == 0 {
                    return Err(invalid("restriction study needs m >= 1"));
                }
                let low: Vec<String> = self
                    .cells()
                    .filter(|(n, p, _)| p <= n)
                    .map(|(n, p, _)| format!("n={n}, p={p}"))
                    .collect();
                if !low.is_empty() {
                    let mut cells = low;
                    cells.dedup();
                    warnings.push(format!("p>n regime not satisfied for cells {}", cells.join("; ")));
                }
            }
            StudyKind::Portfolio => {
                if !(self.strength > 0.0 && self.strength < 1.0) {
                    return Err(invalid("strength must lie in (0, 1)"));
                }
                if let Some(s) = self.s_values.iter().find(|s| *s % 2 == 0) {
                    return Err(invalid(format!("portfolio band sparsity s = {s} must be odd")));
                }
            }
        }
        Ok(warnings)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `|beta_hat - beta_0|_2`
    BetaL2,
    /// `|D (beta_hat - beta_0)|_2`
    RestrictionL2,
    /// Frobenius norm of the restriction matrix, the Jacobian of `beta -> D beta`.
    JacobianNorm,
    /// `|w' (Sigma_hat - Sigma) w|`
    QuadError,
    /// `|sqrt(w' Sigma_hat w) - sqrt(w' Sigma w)|`
    RiskError,
    /// `|w|_1^2 * max_ij |Sigma_hat - Sigma|`
    HolderBound,
    /// `(1/2) (w' Sigma w)^{-1/2}`, the derivative of the risk map.
    Jacobian,
    /// `|w|_1`, the gross exposure.
    WeightsL1,
}

impl Metric {
    pub const ALL: [Metric; 8] = [
        Metric::BetaL2,
        Metric::RestrictionL2,
        Metric::JacobianNorm,
        Metric::QuadError,
        Metric::RiskError,
        Metric::HolderBound,
        Metric::Jacobian,
        Metric::WeightsL1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::BetaL2 => "beta_l2",
            Metric::RestrictionL2 => "restriction_l2",
            Metric::JacobianNorm => "jacobian_norm",
            Metric::QuadError => "quad_error",
            Metric::RiskError => "risk_error",
            Metric::HolderBound => "holder_bound",
            Metric::Jacobian => "jacobian",
            Metric::WeightsL1 => "weights_l1",
        }
    }

    /// Metrics that are fixed population quantities rather than errors.
    pub fn is_population_constant(self) -> bool {
        matches!(self, Metric::JacobianNorm | Metric::Jacobian | Metric::WeightsL1)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| invalid(format!("unknown metric {s:?}")))
    }
}

/// Quartile summary of one metric over the replications of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateObservation {
    pub metric: Metric,
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub median_error: f64,
    pub q25: f64,
    pub q75: f64,
    pub replications: usize,
}

impl RateObservation {
    pub fn from_samples(metric: Metric, (n, p, s): (usize, usize, usize), samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(invalid(format!("no samples for {metric} at n={n}, p={p}, s={s}")));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            metric,
            n,
            p,
            s,
            median_error: quantile_sorted(&sorted, 0.5),
            q25: quantile_sorted(&sorted, 0.25),
            q75: quantile_sorted(&sorted, 0.75),
            replications: samples.len(),
        })
    }

    pub fn sort_key(&self) -> (Metric, usize, usize, usize) {
        (self.metric, self.n, self.p, self.s)
    }
}

fn check_rate_args(p: usize, s: usize) -> Result<()> {
    if p < 2 {
        return Err(invalid("theoretical rates need p >= 2"));
    }
    if s == 0 {
        return Err(invalid("theoretical rates need s >= 1"));
    }
    Ok(())
}

fn root_n_over_log_p(n: usize, p: usize) -> f64 {
    (n as f64 / (p as f64).ln()).sqrt()
}

/// Lasso estimation rate `sqrt(n / ln p) / sqrt(s0)`.
pub fn theoretical_rate_lasso(n: usize, p: usize, s0: usize) -> Result<f64> {
    check_rate_args(p, s0)?;
    Ok(root_n_over_log_p(n, p) / (s0 as f64).sqrt())
}

/// Rate of `D (beta_hat - beta_0)` with `s0` nonzeros per row: `sqrt(n / ln p) / s0`.
pub fn theoretical_rate_restriction(n: usize, p: usize, s0: usize) -> Result<f64> {
    check_rate_args(p, s0)?;
    Ok(root_n_over_log_p(n, p) / s0 as f64)
}

/// Rate of `w' (Sigma_hat - Sigma) w`: `sqrt(n / ln p) / s_max`.
pub fn theoretical_rate_portfolio(n: usize, p: usize, s_max: usize) -> Result<f64> {
    check_rate_args(p, s_max)?;
    Ok(root_n_over_log_p(n, p) / s_max as f64)
}

/// Theoretical rate paired with a metric, if any.
pub fn theory_rate_for(metric: Metric, n: usize, p: usize, s: usize) -> Option<f64> {
    let rate = match metric {
        Metric::BetaL2 => theoretical_rate_lasso(n, p, s),
        Metric::RestrictionL2 => theoretical_rate_restriction(n, p, s),
        Metric::QuadError | Metric::RiskError | Metric::HolderBound => theoretical_rate_portfolio(n, p, s),
        Metric::JacobianNorm | Metric::Jacobian | Metric::WeightsL1 => return None,
    };
    rate.ok()
}
