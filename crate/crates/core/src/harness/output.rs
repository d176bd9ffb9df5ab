use std::path::Path;
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{RunRecord, RunStatus, RUN_COLUMNS};
use super::stats::{median, rate_fit, regime_report, Quantity, RateFit, RegimeReport};
use crate::error::Result;
use crate::io::write_json;
use crate::model::EstimatorKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedRateFit {
    pub method: EstimatorKind,
    pub quantity: Quantity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<RateFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub regime: RegimeReport,
    pub rate_fits: Vec<NamedRateFit>,
}

pub fn summarise(records: &[RunRecord], methods: &[EstimatorKind]) -> Summary {
    if records.is_empty() {
        return Summary::default();
    }
    let mut rate_fits = Vec::new();
    for &method in methods {
        for quantity in [Quantity::WelfareGap, Quantity::L2Error] {
            let (fit, error) = match rate_fit(records, quantity, method) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rate_fits.push(NamedRateFit {
                method,
                quantity,
                fit,
                error,
            });
        }
    }
    Summary {
        regime: regime_report(records),
        rate_fits,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: usize,
    pub method: EstimatorKind,
    pub successes: usize,
    pub median_welfare_gap: Option<f64>,
    pub q1_welfare_gap: Option<f64>,
    pub q3_welfare_gap: Option<f64>,
    pub median_l2_error: Option<f64>,
    pub median_l1_error: Option<f64>,
    pub median_prediction_error: Option<f64>,
    pub recovery_frequency: Option<f64>,
}

/// One row per `(T, method)` of the grid, in grid order.
pub fn curves(records: &[RunRecord], t_grid: &[usize], methods: &[EstimatorKind]) -> Vec<CurveRow> {
    let mut rows = Vec::with_capacity(t_grid.len() * methods.len());
    for &t in t_grid {
        for &method in methods {
            let ok: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.t == t && r.method == method && r.status == RunStatus::Ok)
                .collect();
            let col = |q: Quantity| -> Vec<f64> { ok.iter().filter_map(|r| q.of(r)).collect() };
            let gaps = col(Quantity::WelfareGap);
            let rec: Vec<bool> = ok.iter().filter_map(|r| r.support_recovered).collect();
            rows.push(CurveRow {
                t,
                method,
                successes: ok.len(),
                median_welfare_gap: median(&gaps),
                q1_welfare_gap: super::stats::quantile(&gaps, 0.25),
                q3_welfare_gap: super::stats::quantile(&gaps, 0.75),
                median_l2_error: median(&col(Quantity::L2Error)),
                median_l1_error: median(&col(Quantity::L1Error)),
                median_prediction_error: median(&col(Quantity::PredictionError)),
                recovery_frequency: (!rec.is_empty())
                    .then(|| rec.iter().filter(|&&b| b).count() as f64 / rec.len() as f64),
            });
        }
    }
    rows
}

pub fn write_runs_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(RUN_COLUMNS)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs_csv(path: &Path) -> Result<Vec<RunRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for rec in r.deserialize() {
        out.push(rec?);
    }
    Ok(out)
}

#[derive(Serialize)]
struct TimingRow {
    replication: usize,
    t: usize,
    method: EstimatorKind,
    wall_time_secs: f64,
}

fn write_timings_csv(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if records.is_empty() {
        w.write_record(["replication", "t", "method", "wall_time_secs"])?;
    }
    for r in records {
        w.serialize(TimingRow {
            replication: r.replication,
            t: r.t,
            method: r.method,
            wall_time_secs: r.wall_time_secs,
        })?;
    }
    w.flush()?;
    Ok(())
}

fn write_curves_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if rows.is_empty() {
        w.write_record([
            "t",
            "method",
            "successes",
            "median_welfare_gap",
            "q1_welfare_gap",
            "q3_welfare_gap",
            "median_l2_error",
            "median_l1_error",
            "median_prediction_error",
            "recovery_frequency",
        ])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn git_describe() -> String {
    Command::new("git")
        .args(["describe", "--always", "--dirty", "--tags"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

#[derive(Debug, Clone, Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    git_describe: String,
    records: usize,
    config: &'a ExperimentConfig,
}

/// Writes `runs.csv`, `timings.csv`, `curves.csv`, `summary.json` and
/// `manifest.json` into `out_dir`. Wall times live only in `timings.csv`, so
/// `runs.csv` is reproducible byte for byte.
pub fn emit_outputs(out_dir: &Path, cfg: &ExperimentConfig, records: &[RunRecord]) -> Result<Summary> {
    std::fs::create_dir_all(out_dir)?;
    write_runs_csv(&out_dir.join("runs.csv"), records)?;
    write_timings_csv(&out_dir.join("timings.csv"), records)?;
    write_curves_csv(&out_dir.join("curves.csv"), &curves(records, &cfg.t_grid, &cfg.methods))?;
    let summary = summarise(records, &cfg.methods);
    write_json(&out_dir.join("summary.json"), &summary)?;
    write_json(
        &out_dir.join("manifest.json"),
        &Manifest {
            crate_version: env!("CARGO_PKG_VERSION"),
            git_describe: git_describe(),
            records: records.len(),
            config: cfg,
        },
    )?;
    Ok(summary)
}
