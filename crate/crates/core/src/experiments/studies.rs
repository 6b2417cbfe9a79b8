use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{GridConfig, Metric, RateObservation, StudyKind};
use crate::data_gen::{
    banded_precision, fixed_design, gaussian_returns, gmv_weights, normal_vec, restriction_matrix, sample_covariance,
    sparse_beta, PortfolioSpec,
};
use crate::error::Result;
use crate::exec::Execution;
use crate::lasso::{default_lambda, Design, DEFAULT_MAX_SWEEPS, DEFAULT_TOL};
use crate::linalg::inequalities::{operator_sides, InequalityFamily};
use crate::linalg::{mat_norm, matvec, quad_form, vec_norm, DenseMatrix, DenseVector, NormKind};

pub const INEQUALITY_CHECK: &str = "restriction_frobenius_bound";
pub const SQRT_IDENTITY_CHECK: &str = "sqrt_difference_identity";
pub const HOLDER_CHECK: &str = "holder_quadratic_bound";

const INEQUALITY_SLACK: f64 = 1e-12;
const IDENTITY_SLACK: f64 = 1e-10;

/// Share of failed replications above which a cell is flagged.
const FAILURE_FLAG_FRACTION: f64 = 0.01;

/// Penalty `lambda` handed to the lasso criterion with its `lambda / n`
/// scaling: `n * c * sqrt(ln p / n)`, so the effective per-observation
/// penalty `lambda / n` is `c * sqrt(ln p / n)`.
pub fn study_lambda(n: usize, p: usize, c: f64) -> Result<f64> {
    Ok(n as f64 * default_lambda(n, p, c)?)
}

/// Per-replication tally of an exact identity or inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckTally {
    pub name: String,
    pub checked: usize,
    pub violations: usize,
    /// Largest relative excess over the bound (negative when all hold).
    pub worst_relative: f64,
}

impl CheckTally {
    fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            checked: 0,
            violations: 0,
            worst_relative: f64::NEG_INFINITY,
        }
    }

    fn record(&mut self, relative_excess: f64, slack: f64) {
        self.checked += 1;
        self.worst_relative = self.worst_relative.max(relative_excess);
        if relative_excess > slack {
            self.violations += 1;
        }
    }

    fn merge(&mut self, other: &CheckTally) {
        self.checked += other.checked;
        self.violations += other.violations;
        self.worst_relative = self.worst_relative.max(other.worst_relative);
    }
}

/// Raw per-replication values of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSamples {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub replications: usize,
    pub failures: usize,
    pub samples: BTreeMap<Metric, Vec<f64>>,
}

impl CellSamples {
    pub fn flagged(&self) -> bool {
        self.failures as f64 > FAILURE_FLAG_FRACTION * self.replications as f64
    }

    pub fn get(&self, metric: Metric) -> &[f64] {
        self.samples.get(&metric).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOutput {
    pub kind: StudyKind,
    /// Sorted by `(metric, n, p, s)`.
    pub observations: Vec<RateObservation>,
    pub cells: Vec<CellSamples>,
    pub checks: Vec<CheckTally>,
}

impl StudyOutput {
    pub fn flagged_cells(&self) -> Vec<(usize, usize, usize)> {
        self.cells.iter().filter(|c| c.flagged()).map(|c| (c.n, c.p, c.s)).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckTally> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn cell(&self, n: usize, s: usize) -> Option<&CellSamples> {
        self.cells.iter().find(|c| c.n == n && c.s == s)
    }
}

/// Result of one replication: metric values and check excesses.
struct Replication {
    values: Vec<(Metric, f64)>,
    checks: Vec<(&'static str, f64, f64)>,
}

fn cell_index(n: usize, p: usize, s: usize) -> [u64; 3] {
    [n as u64, p as u64, s as u64]
}

fn summarize(
    kind: StudyKind,
    cells: Vec<CellSamples>,
    tallies: BTreeMap<&'static str, CheckTally>,
) -> Result<StudyOutput> {
    let mut observations = Vec::new();
    for cell in &cells {
        for (metric, values) in &cell.samples {
            if !values.is_empty() {
                observations.push(RateObservation::from_samples(*metric, (cell.n, cell.p, cell.s), values)?);
            }
        }
    }
    observations.sort_by_key(RateObservation::sort_key);
    Ok(StudyOutput {
        kind,
        observations,
        cells,
        checks: tallies.into_values().collect(),
    })
}

fn collect_cell(
    (n, p, s): (usize, usize, usize),
    replications: usize,
    results: Vec<Option<Replication>>,
    constants: &[(Metric, f64)],
    tallies: &mut BTreeMap<&'static str, CheckTally>,
) -> CellSamples {
    let mut samples: BTreeMap<Metric, Vec<f64>> = BTreeMap::new();
    let mut failures = 0;
    for result in results {
        let Some(rep) = result else {
            failures += 1;
            continue;
        };
        for (metric, value) in rep.values {
            samples.entry(metric).or_default().push(value);
        }
        for (name, excess, slack) in rep.checks {
            let mut one = CheckTally::new(name);
            one.record(excess, slack);
            tallies.entry(name).or_insert_with(|| CheckTally::new(name)).merge(&one);
        }
    }
    let successes = replications - failures;
    for (metric, value) in constants {
        if successes > 0 {
            samples.insert(*metric, vec![*value; successes]);
        }
    }
    CellSamples {
        n,
        p,
        s,
        replications,
        failures,
        samples,
    }
}

fn lasso_family_study(config: &GridConfig, exec: Execution, with_restriction: bool) -> Result<StudyOutput> {
    let kind = if with_restriction {
        StudyKind::Restriction
    } else {
        StudyKind::Lasso
    };
    config.validate(kind)?;
    let mut tallies = BTreeMap::new();
    if with_restriction {
        tallies.insert(INEQUALITY_CHECK, CheckTally::new(INEQUALITY_CHECK));
    }
    let mut cells = Vec::new();
    for &n in &config.n_values {
        let p = config.p_rule.p_for(n);
        let x = fixed_design(n, p, config.seed)?;
        let design = Design::new(&x)?;
        let lambda = study_lambda(n, p, config.lambda_c)?;
        for &s0 in &config.s_values {
            let beta0 = sparse_beta(p, s0, config.beta_magnitude)?;
            let signal = matvec(&x, &beta0)?;
            let restriction = if with_restriction {
                Some(restriction_matrix(config.m, p, s0)?.d)
            } else {
                None
            };
            let d_frob = restriction.as_ref().map(|d| mat_norm(d, NormKind::Frobenius)).transpose()?;
            let idx = cell_index(n, p, s0);

            let results = exec.map(config.replications, |rep| {
                let mut rng = config.seed.substream("noise", &[idx[0], idx[1], idx[2], rep as u64]);
                let y: Vec<f64> = normal_vec(&mut rng, n)
                    .into_iter()
                    .zip(signal.iter())
                    .map(|(u, mean)| mean + config.noise_sd * u)
                    .collect();
                let fit = design.fit(&y, lambda, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).ok()?;
                let err = fit.beta_hat.sub(&beta0).ok()?;
                let err_l2 = vec_norm(&err, NormKind::L2).ok()?;
                let mut values = vec![(Metric::BetaL2, err_l2)];
                let mut checks = Vec::new();
                if let Some(d) = &restriction {
                    let sides = operator_sides(InequalityFamily::Frobenius, d, &err).ok()?;
                    values.push((Metric::RestrictionL2, sides.lhs));
                    checks.push((INEQUALITY_CHECK, relative_excess(sides.lhs, sides.rhs), INEQUALITY_SLACK));
                }
                Some(Replication { values, checks })
            });
            let constants: Vec<(Metric, f64)> = d_frob.map(|f| (Metric::JacobianNorm, f)).into_iter().collect();
            cells.push(collect_cell((n, p, s0), config.replications, results, &constants, &mut tallies));
        }
    }
    summarize(kind, cells, tallies)
}

fn relative_excess(lhs: f64, rhs: f64) -> f64 {
    if rhs > 0.0 {
        (lhs - rhs) / rhs
    } else if lhs > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// `|beta_hat - beta_0|_2` over the grid, lasso fitted at [`study_lambda`].
pub fn run_lasso_rate_study(config: &GridConfig, exec: Execution) -> Result<StudyOutput> {
    lasso_family_study(config, exec, false)
}

/// As [`run_lasso_rate_study`], plus `|D (beta_hat - beta_0)|_2` for the
/// restriction matrix aligned with the true support.
pub fn run_restriction_study(config: &GridConfig, exec: Execution) -> Result<StudyOutput> {
    lasso_family_study(config, exec, true)
}

struct PortfolioCell {
    spec: PortfolioSpec,
    weights: DenseVector,
    variance: f64,
}

impl PortfolioCell {
    fn new(p: usize, s: usize, strength: f64) -> Result<Self> {
        let spec = banded_precision(p, s, strength)?;
        let weights = gmv_weights(&spec.sigma)?;
        let variance = quad_form(&weights, &spec.sigma)?;
        Ok(Self {
            spec,
            weights,
            variance,
        })
    }

    /// Risk-error quantities for a given sample covariance.
    fn evaluate(&self, sigma_hat: &DenseMatrix, weights_l1: f64) -> Result<Replication> {
        let v_hat = quad_form(&self.weights, sigma_hat)?;
        let v = self.variance;
        let quad = (v_hat - v).abs();
        let risk = (v_hat.max(0.0).sqrt() - v.sqrt()).abs();
        let dev = mat_norm(&sigma_hat.sub(&self.spec.sigma)?, NormKind::EntrywiseMax)?;
        let holder = weights_l1 * weights_l1 * dev;
        let recombined = risk * (v_hat.max(0.0).sqrt() + v.sqrt());
        let identity_gap = if quad > 0.0 {
            (recombined - quad).abs() / quad
        } else {
            recombined
        };
        Ok(Replication {
            values: vec![
                (Metric::QuadError, quad),
                (Metric::RiskError, risk),
                (Metric::HolderBound, holder),
            ],
            checks: vec![
                (SQRT_IDENTITY_CHECK, identity_gap, IDENTITY_SLACK),
                (HOLDER_CHECK, relative_excess(quad, holder), IDENTITY_SLACK),
            ],
        })
    }
}

/// Risk-estimation errors of the GMV portfolio on the banded-precision family.
pub fn run_portfolio_study(config: &GridConfig, exec: Execution) -> Result<StudyOutput> {
    config.validate(StudyKind::Portfolio)?;
    let mut tallies = BTreeMap::new();
    tallies.insert(SQRT_IDENTITY_CHECK, CheckTally::new(SQRT_IDENTITY_CHECK));
    tallies.insert(HOLDER_CHECK, CheckTally::new(HOLDER_CHECK));
    let mut populations: BTreeMap<(usize, usize), PortfolioCell> = BTreeMap::new();
    let mut cells = Vec::new();
    for &n in &config.n_values {
        let p = config.p_rule.p_for(n);
        for &s in &config.s_values {
            if let Entry::Vacant(slot) = populations.entry((p, s)) {
                slot.insert(PortfolioCell::new(p, s, config.strength)?);
            }
            let pop = &populations[&(p, s)];
            let weights_l1 = vec_norm(&pop.weights, NormKind::L1)?;
            let jacobian = 0.5 / pop.variance.sqrt();
            let idx = cell_index(n, p, s);
            let results = exec.map(config.replications, |rep| {
                let seed = config.seed.child("replication", &[idx[0], idx[1], idx[2], rep as u64]);
                let returns = gaussian_returns(n, &pop.spec, seed).ok()?;
                let sigma_hat = sample_covariance(&returns).ok()?;
                pop.evaluate(&sigma_hat, weights_l1).ok()
            });
            let constants = [(Metric::Jacobian, jacobian), (Metric::WeightsL1, weights_l1)];
            cells.push(collect_cell((n, p, s), config.replications, results, &constants, &mut tallies));
        }
    }
    summarize(StudyKind::Portfolio, cells, tallies)
}

pub fn run_study(kind: StudyKind, config: &GridConfig, exec: Execution) -> Result<StudyOutput> {
    match kind {
        StudyKind::Lasso => run_lasso_rate_study(config, exec),
        StudyKind::Restriction => run_restriction_study(config, exec),
        StudyKind::Portfolio => run_portfolio_study(config, exec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::PRule;

    fn portfolio_errors_for(
        p: usize,
        s: usize,
        strength: f64,
        sigma_hat: &DenseMatrix,
    ) -> Result<Vec<(Metric, f64)>> {
        let pop = PortfolioCell::new(p, s, strength)?;
        let l1 = vec_norm(&pop.weights, NormKind::L1)?;
        Ok(pop.evaluate(sigma_hat, l1)?.values)
    }

    fn small_lasso() -> GridConfig {
        GridConfig {
            n_values: vec![40, 80],
            p_rule: PRule::Ratio(2),
            s_values: vec![1, 3],
            replications: 12,
            ..GridConfig::default_lasso()
        }
    }

    fn small_portfolio() -> GridConfig {
        GridConfig {
            n_values: vec![30, 60],
            p_rule: PRule::Fixed(40),
            s_values: vec![3, 5],
            replications: 10,
            ..GridConfig::default_portfolio()
        }
    }

    #[test]
    fn cells_flag_above_one_percent_failures() {
        let cell = |failures| CellSamples {
            n: 10,
            p: 20,
            s: 1,
            replications: 200,
            failures,
            samples: BTreeMap::new(),
        };
        assert!(!cell(2).flagged());
        assert!(cell(3).flagged());
    }

    #[test]
    fn lasso_study_is_deterministic_across_execution_modes() {
        let c = small_lasso();
        let a = run_lasso_rate_study(&c, Execution::Sequential).unwrap();
        let b = run_lasso_rate_study(&c, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.observations.len(), 4);
        assert!(a.flagged_cells().is_empty());
    }

    #[test]
    fn noiseless_recovery_is_near_exact() {
        let c = GridConfig {
            n_values: vec![60],
            p_rule: PRule::Ratio(2),
            s_values: vec![2],
            replications: 3,
            noise_sd: 0.0,
            lambda_c: 1e-4,
            ..GridConfig::default_lasso()
        };
        let out = run_lasso_rate_study(&c, Execution::Sequential).unwrap();
        let median = out.observations[0].median_error;
        assert!(median < 1e-3, "median error {median}");
    }

    #[test]
    fn restriction_single_coordinate_matches_beta_error() {
        let c = GridConfig {
            s_values: vec![1],
            m: 1,
            ..small_lasso()
        };
        let out = run_restriction_study(&c, Execution::Sequential).unwrap();
        let tally = out.check(INEQUALITY_CHECK).unwrap();
        assert_eq!(tally.violations, 0);
        assert_eq!(tally.checked, 2 * 12);
        for cell in &out.cells {
            // D = e_1', so |D e|_2 = |e_1| <= |e|_2
            for (r, b) in cell.get(Metric::RestrictionL2).iter().zip(cell.get(Metric::BetaL2)) {
                assert!(r <= b);
            }
            assert!(cell.get(Metric::JacobianNorm).iter().all(|v| *v == 1.0));
        }
    }

    #[test]
    fn restriction_error_is_the_first_coordinate_when_s0_is_one() {
        // independent recomputation of one replication
        let (n, p) = (40, 80);
        let c = GridConfig {
            n_values: vec![n],
            s_values: vec![1],
            replications: 1,
            ..small_lasso()
        };
        let out = run_restriction_study(&c, Execution::Sequential).unwrap();
        let x = fixed_design(n, p, c.seed).unwrap();
        let beta0 = sparse_beta(p, 1, 1.0).unwrap();
        let mut rng = c.seed.substream("noise", &[n as u64, p as u64, 1, 0]);
        let signal = matvec(&x, &beta0).unwrap();
        let y: Vec<f64> = normal_vec(&mut rng, n).iter().zip(signal.iter()).map(|(u, m)| m + u).collect();
        let lambda = study_lambda(n, p, c.lambda_c).unwrap();
        let fit = Design::new(&x).unwrap().fit(&y, lambda, DEFAULT_TOL, DEFAULT_MAX_SWEEPS).unwrap();
        let expected = (fit.beta_hat[0] - 1.0).abs();
        assert_eq!(out.cells[0].get(Metric::RestrictionL2), &[expected]);
    }

    #[test]
    fn portfolio_identities_hold() {
        let out = run_portfolio_study(&small_portfolio(), Execution::Parallel).unwrap();
        for name in [SQRT_IDENTITY_CHECK, HOLDER_CHECK] {
            let t = out.check(name).unwrap();
            assert_eq!(t.checked, 40, "{name}");
            assert_eq!(t.violations, 0, "{name}: {t:?}");
        }
        let seq = run_portfolio_study(&small_portfolio(), Execution::Sequential).unwrap();
        assert_eq!(out, seq);
    }

    #[test]
    fn exact_covariance_gives_zero_error() {
        let spec = banded_precision(20, 3, 0.5).unwrap();
        let values = portfolio_errors_for(20, 3, 0.5, &spec.sigma).unwrap();
        for (metric, v) in values {
            assert!(v.abs() < 1e-12, "{metric}: {v}");
        }
    }
}
