use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{fit_loglog_slope, theory_rate_for, Metric, RateObservation, SlopeFit, StudyKind};
use crate::delta_method::{classify_regime, Regime, RegimeEvidence, DEFAULT_SLOPE_THRESHOLD};
use crate::error::{invalid, Result};

/// Per-cell comparison of the measured median with the theoretical rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub n: usize,
    pub p: usize,
    pub s: usize,
    pub median_error: f64,
    pub theory_rate: Option<f64>,
    /// `theory_rate * median_error`; bounded when the rate is sharp.
    pub normalized: Option<f64>,
}

/// Scaling in `n` at fixed `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeVsN {
    pub s: usize,
    pub empirical: SlopeFit,
    /// Slope of `1 / rate` in `n`, including the `ln p` drift when `p` moves with `n`.
    pub theory_slope: Option<f64>,
    /// Slope of `rate * median` in `n`.
    pub normalized: Option<SlopeFit>,
}

/// Scaling in `s` at fixed `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeVsS {
    pub n: usize,
    pub empirical: SlopeFit,
    pub theory_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub metric: Metric,
    pub cells: Vec<CellEntry>,
    pub slopes_vs_n: Vec<SlopeVsN>,
    pub slopes_vs_s: Vec<SlopeVsS>,
}

/// Regime classification of measured Jacobian norms along one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeEntry {
    pub metric: Metric,
    /// `"p"` or `"s"`: the dimension the Jacobian is tracked along.
    pub axis: String,
    /// Value of the other grid coordinate held fixed (`s` or `n`).
    pub fixed: usize,
    pub dims: Vec<usize>,
    pub norms: Vec<f64>,
    pub slope: Option<f64>,
    pub regime: Option<Regime>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub kind: StudyKind,
    pub slope_threshold: f64,
    pub metrics: Vec<MetricReport>,
    pub regimes: Vec<RegimeEntry>,
}

impl Report {
    pub fn metric(&self, metric: Metric) -> Option<&MetricReport> {
        self.metrics.iter().find(|m| m.metric == metric)
    }
}

fn theory_slope(points: &[(usize, usize, usize)], metric: Metric, axis: impl Fn(&(usize, usize, usize)) -> usize) -> Option<f64> {
    let xs: Vec<f64> = points.iter().map(|c| axis(c) as f64).collect();
    let ys: Option<Vec<f64>> = points
        .iter()
        .map(|&(n, p, s)| theory_rate_for(metric, n, p, s).map(|r| 1.0 / r))
        .collect();
    fit_loglog_slope(&xs, &ys?).ok().map(|f| f.slope)
}

fn metric_report(metric: Metric, obs: &[&RateObservation]) -> Result<MetricReport> {
    let cells: Vec<CellEntry> = obs
        .iter()
        .map(|o| {
            let theory_rate = theory_rate_for(metric, o.n, o.p, o.s);
            CellEntry {
                n: o.n,
                p: o.p,
                s: o.s,
                median_error: o.median_error,
                theory_rate,
                normalized: theory_rate.map(|r| r * o.median_error),
            }
        })
        .collect();

    let s_values: BTreeSet<usize> = cells.iter().map(|c| c.s).collect();
    let n_values: BTreeSet<usize> = cells.iter().map(|c| c.n).collect();
    let positive = |c: &&CellEntry| c.median_error > 0.0;

    let mut slopes_vs_n = Vec::new();
    for &s in &s_values {
        let row: Vec<&CellEntry> = cells.iter().filter(|c| c.s == s).filter(positive).collect();
        let xs: Vec<f64> = row.iter().map(|c| c.n as f64).collect();
        let ys: Vec<f64> = row.iter().map(|c| c.median_error).collect();
        let Ok(empirical) = fit_loglog_slope(&xs, &ys) else {
            continue;
        };
        let points: Vec<_> = row.iter().map(|c| (c.n, c.p, c.s)).collect();
        let normalized = row
            .iter()
            .map(|c| c.normalized)
            .collect::<Option<Vec<f64>>>()
            .and_then(|ys| fit_loglog_slope(&xs, &ys).ok());
        slopes_vs_n.push(SlopeVsN {
            s,
            empirical,
            theory_slope: theory_slope(&points, metric, |c| c.0),
            normalized,
        });
    }

    let mut slopes_vs_s = Vec::new();
    for &n in &n_values {
        let row: Vec<&CellEntry> = cells.iter().filter(|c| c.n == n).filter(positive).collect();
        let xs: Vec<f64> = row.iter().map(|c| c.s as f64).collect();
        let ys: Vec<f64> = row.iter().map(|c| c.median_error).collect();
        let Ok(empirical) = fit_loglog_slope(&xs, &ys) else {
            continue;
        };
        let points: Vec<_> = row.iter().map(|c| (c.n, c.p, c.s)).collect();
        slopes_vs_s.push(SlopeVsS {
            n,
            empirical,
            theory_slope: theory_slope(&points, metric, |c| c.2),
        });
    }

    Ok(MetricReport {
        metric,
        cells,
        slopes_vs_n,
        slopes_vs_s,
    })
}

fn regime_entry(metric: Metric, axis: &str, fixed: usize, points: Vec<(usize, f64)>) -> RegimeEntry {
    let dims: Vec<usize> = points.iter().map(|(d, _)| *d).collect();
    let norms: Vec<f64> = points.iter().map(|(_, v)| *v).collect();
    let evidence = RegimeEvidence::new(dims.iter().map(|d| *d as f64).collect(), norms.clone());
    let (slope, regime, note) = match evidence {
        Ok(ev) => {
            let slope = ev.slope().ok();
            match classify_regime(&ev, DEFAULT_SLOPE_THRESHOLD) {
                Ok(r) => (slope, Some(r), None),
                Err(e) => (slope, None, Some(e.to_string())),
            }
        }
        Err(e) => (None, None, Some(e.to_string())),
    };
    RegimeEntry {
        metric,
        axis: axis.to_string(),
        fixed,
        dims,
        norms,
        slope,
        regime,
        note,
    }
}

/// Regime evidence from the Jacobian rows of the table: the restriction
/// Jacobian `|D|_F` is tracked along `p` at fixed `s0`; the risk-map
/// derivative along the sparsity `s` at fixed `n`.
fn regimes(obs: &[&RateObservation]) -> Vec<RegimeEntry> {
    let mut out = Vec::new();
    let by_metric = |m: Metric| obs.iter().filter(move |o| o.metric == m);

    let mut by_s: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for o in by_metric(Metric::JacobianNorm) {
        by_s.entry(o.s).or_default().insert(o.p, o.median_error);
    }
    for (s, pts) in by_s {
        out.push(regime_entry(Metric::JacobianNorm, "p", s, pts.into_iter().collect()));
    }

    let mut by_n: BTreeMap<usize, BTreeMap<usize, f64>> = BTreeMap::new();
    for o in by_metric(Metric::Jacobian) {
        by_n.entry(o.n).or_default().insert(o.s, o.median_error);
    }
    for (n, pts) in by_n {
        out.push(regime_entry(Metric::Jacobian, "s", n, pts.into_iter().collect()));
    }
    out
}

/// Builds the slope and regime report from an observation table.
///
/// Depends only on the table, so a report rebuilt from persisted
/// observations equals the one built in memory.
pub fn build_report(kind: StudyKind, observations: &[RateObservation]) -> Result<Report> {
    if observations.is_empty() {
        return Err(invalid("cannot build a report from an empty observation table"));
    }
    let mut sorted: Vec<&RateObservation> = observations.iter().collect();
    sorted.sort_by_key(|o| o.sort_key());
    if sorted.windows(2).any(|w| w[0].sort_key() == w[1].sort_key()) {
        return Err(invalid("duplicate (metric, n, p, s) rows in observation table"));
    }
    let mut grid: Option<BTreeSet<(usize, usize, usize)>> = None;
    let mut metrics = Vec::new();
    for metric in Metric::ALL {
        let rows: Vec<&RateObservation> = sorted.iter().copied().filter(|o| o.metric == metric).collect();
        if rows.is_empty() {
            continue;
        }
        let cells: BTreeSet<_> = rows.iter().map(|o| (o.n, o.p, o.s)).collect();
        match &grid {
            None => grid = Some(cells),
            Some(g) if *g != cells => {
                return Err(invalid(format!("metric {metric} is observed on a different grid")));
            }
            Some(_) => {}
        }
        metrics.push(metric_report(metric, &rows)?);
    }
    Ok(Report {
        kind,
        slope_threshold: DEFAULT_SLOPE_THRESHOLD,
        metrics,
        regimes: regimes(&sorted),
    })
}
