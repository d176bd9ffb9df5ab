use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::run::{RunRecord, RunStatus};
use crate::error::{Error, Result};
use crate::model::EstimatorKind;

/// Linear-interpolation quantile of unsorted data; `None` when empty.
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

pub fn median(values: &[f64]) -> Option<f64> {
    quantile(values, 0.5)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    WelfareGap,
    L2Error,
    L1Error,
    PredictionError,
}

impl Quantity {
    pub fn of(self, r: &RunRecord) -> Option<f64> {
        match self {
            Self::WelfareGap => r.welfare_gap,
            Self::L2Error => r.l2_error,
            Self::L1Error => r.l1_error,
            Self::PredictionError => r.prediction_error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// `(T, median)` pairs the fit used.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn log_log_fit(points: &[(f64, f64)]) -> Result<(f64, f64, f64)> {
    if points.len() < 2 {
        return Err(Error::InsufficientData("a rate fit needs at least two points".into()));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InsufficientData("log-log fit needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok((slope, intercept, r2))
}

pub const MIN_RATE_POINTS: usize = 3;
pub const MIN_RATE_SUCCESSES: usize = 5;

/// Fits `ln median(quantity)` against `ln T` for one method, over the `T`
/// values with at least five successful runs.
pub fn rate_fit(records: &[RunRecord], quantity: Quantity, method: EstimatorKind) -> Result<RateFit> {
    let ts: BTreeSet<usize> = records.iter().filter(|r| r.method == method).map(|r| r.t).collect();
    let mut points = Vec::new();
    for t in ts {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.method == method && r.t == t && r.status == RunStatus::Ok)
            .filter_map(|r| quantity.of(r))
            .filter(|v| v.is_finite())
            .collect();
        if vals.len() >= MIN_RATE_SUCCESSES {
            points.push((t, median(&vals).expect("non-empty")));
        }
    }
    if points.len() < MIN_RATE_POINTS {
        return Err(Error::InsufficientData(format!(
            "{method}: {} episode counts with >= {MIN_RATE_SUCCESSES} successes, need {MIN_RATE_POINTS}",
            points.len()
        )));
    }
    if let Some(&(t, v)) = points.iter().find(|p| p.1 <= 0.0) {
        return Err(Error::InsufficientData(format!("{method}: median {v} at T = {t} is not positive")));
    }
    let xy: Vec<(f64, f64)> = points.iter().map(|&(t, v)| (t as f64, v)).collect();
    let (slope, intercept, r2) = log_log_fit(&xy)?;
    Ok(RateFit {
        slope,
        intercept,
        r2,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub t: usize,
    pub method: EstimatorKind,
    pub runs: usize,
    pub successes: usize,
    pub ill_posed_runs: usize,
    /// DLS at `T < m`: not applicable.
    pub ill_posed: bool,
    pub gap_median: Option<f64>,
    pub gap_q1: Option<f64>,
    pub gap_q3: Option<f64>,
    pub recovery_frequency: Option<f64>,
    pub mean_false_positives: Option<f64>,
    pub l2_median: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingFlag {
    pub t: usize,
    /// Methods whose median gaps should be non-decreasing in this order.
    pub chain: Vec<EstimatorKind>,
    pub holds: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub rows: Vec<RegimeRow>,
    pub orderings: Vec<OrderingFlag>,
}

impl RegimeReport {
    pub fn row(&self, t: usize, method: EstimatorKind) -> Option<&RegimeRow> {
        self.rows.iter().find(|r| r.t == t && r.method == method)
    }
}

const ORDER_CHAIN: [EstimatorKind; 3] = [EstimatorKind::Bgcp, EstimatorKind::Lasso, EstimatorKind::Epc];

/// Per-`(T, method)` gap statistics and the ordering
/// `median Δ_BGCP <= median Δ_LASSO <= median Δ_EPC` over the methods present.
pub fn regime_report(records: &[RunRecord]) -> RegimeReport {
    let ts: BTreeSet<usize> = records.iter().map(|r| r.t).collect();
    let methods: BTreeSet<EstimatorKind> = records.iter().map(|r| r.method).collect();
    let mut rows = Vec::new();
    for &t in &ts {
        for &method in &methods {
            let group: Vec<&RunRecord> = records.iter().filter(|r| r.t == t && r.method == method).collect();
            if group.is_empty() {
                continue;
            }
            let ok: Vec<&&RunRecord> = group.iter().filter(|r| r.is_ok()).collect();
            let gaps: Vec<f64> = ok.iter().filter_map(|r| r.welfare_gap).collect();
            let l2: Vec<f64> = ok.iter().filter_map(|r| r.l2_error).collect();
            let rec: Vec<bool> = ok.iter().filter_map(|r| r.support_recovered).collect();
            let fps: Vec<usize> = ok.iter().filter_map(|r| r.false_positives).collect();
            let m = group[0].m;
            rows.push(RegimeRow {
                t,
                method,
                runs: group.len(),
                successes: ok.len(),
                ill_posed_runs: group.iter().filter(|r| r.status == RunStatus::IllPosed).count(),
                ill_posed: method == EstimatorKind::Dls && t < m,
                gap_median: median(&gaps),
                gap_q1: quantile(&gaps, 0.25),
                gap_q3: quantile(&gaps, 0.75),
                recovery_frequency: (!rec.is_empty())
                    .then(|| rec.iter().filter(|&&b| b).count() as f64 / rec.len() as f64),
                mean_false_positives: (!fps.is_empty())
                    .then(|| fps.iter().sum::<usize>() as f64 / fps.len() as f64),
                l2_median: median(&l2),
            });
        }
    }
    let chain: Vec<EstimatorKind> = ORDER_CHAIN.iter().copied().filter(|k| methods.contains(k)).collect();
    let mut orderings = Vec::new();
    if chain.len() >= 2 {
        for &t in &ts {
            let medians: Vec<Option<f64>> = chain
                .iter()
                .map(|&k| rows.iter().find(|r| r.t == t && r.method == k).and_then(|r| r.gap_median))
                .collect();
            let holds = medians.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if a <= b));
            orderings.push(OrderingFlag {
                t,
                chain: chain.clone(),
                holds,
            });
        }
    }
    RegimeReport { rows, orderings }
}
