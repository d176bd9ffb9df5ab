use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sparse_csg::csg::solve_csg_dp;
use sparse_csg::diagnostics::{correlation_profile, design_report, CorrelationProfileStep, DesignReport, DesignReportOptions};
use sparse_csg::estimators::{bgcp, dls, epc, l0_map_oracle, lasso, BgcpConfig, LassoConfig, DEFAULT_L0_MAX_M};
use sparse_csg::harness::config::GenerateConfig;
use sparse_csg::harness::run::generate;
use sparse_csg::harness::{emit_outputs, run_experiment, ExperimentConfig, Preset};
use sparse_csg::io::{
    read_batch, read_json, read_theta_csv, write_batch, write_json, write_theta_csv, write_universe, ResultFile,
    StructureFile, ValueFunctionFile,
};
use sparse_csg::model::support_of;
use sparse_csg::{Error, EstimatorKind, GroundTruth, Result};

#[derive(Parser)]
#[command(name = "sparse-csg", version, about = "Sparse coalition value estimation and exact coalition structure generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a truth and an episode batch.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit coalition contributions on a batch.
    Estimate {
        #[arg(long)]
        method: EstimatorKind,
        #[arg(long)]
        batch: PathBuf,
        /// Estimator settings (JSON); required for bgcp (`k_max`).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Design diagnostics for a batch.
    Diagnose {
        #[arg(long)]
        batch: PathBuf,
        /// Ground truth CSV; enables support-dependent diagnostics.
        #[arg(long)]
        truth: Option<PathBuf>,
        /// A bgcp result JSON whose trace is profiled against the truth.
        #[arg(long)]
        result: Option<PathBuf>,
        #[arg(long, default_value_t = 3.0)]
        alpha: f64,
        #[arg(long, default_value_t = 2000)]
        re_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimal coalition structure for a value function.
    Solve {
        #[arg(long)]
        values: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a seeded multi-replication experiment.
    Experiment {
        #[arg(long, required_unless_present = "preset")]
        config: Option<PathBuf>,
        #[arg(long, conflicts_with = "config")]
        preset: Option<Preset>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Share one ground truth across replications.
        #[arg(long)]
        fixed_truth: bool,
        /// Overrides the configured master seed.
        #[arg(long, env = "SPARSE_CSG_SEED")]
        seed: Option<u64>,
    },
}

#[derive(Deserialize)]
struct DlsSettings {
    #[serde(default)]
    ridge: f64,
}

#[derive(Deserialize)]
struct L0Settings {
    lambda0: f64,
    #[serde(default)]
    max_m: Option<usize>,
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn settings<T: for<'de> Deserialize<'de>>(path: Option<&Path>, what: &str) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => serde_json::from_str("{}").map_err(|e| Error::InvalidConfig(format!("{what} needs --config: {e}"))),
    }
}

fn cmd_generate(config: &Path, out: &Path) -> Result<()> {
    let cfg: GenerateConfig = read_json(config)?;
    let (universe, truth, batch) = generate(&cfg)?;
    write_batch(out, &batch, Some(serde_json::to_value(&cfg)?))?;
    write_theta_csv(&out.join("truth.csv"), &truth.theta_star)?;
    write_universe(&out.join("universe.json"), &universe)?;
    println!(
        "wrote {} episodes x {} coalitions to {} ({} never-activated)",
        batch.episodes(),
        batch.m(),
        out.display(),
        batch.zero_columns.len()
    );
    Ok(())
}

fn cmd_estimate(method: EstimatorKind, batch_dir: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let (batch, _) = read_batch(batch_dir)?;
    let file = match method {
        EstimatorKind::Bgcp => {
            if !batch.column_normalised {
                warn("batch columns are not normalised; greedy selection compares raw correlations");
            }
            let cfg: BgcpConfig = settings(config, "bgcp")?;
            let fit = bgcp(&batch, &cfg)?;
            ResultFile::new(&fit.result, Some(&fit.trace))
        }
        EstimatorKind::Lasso => {
            let cfg: LassoConfig = settings(config, "lasso")?;
            let fit = lasso(&batch, &cfg)?;
            if !fit.result.converged {
                warn("coordinate descent hit max_sweeps before the KKT tolerance");
            }
            ResultFile::new(&fit.result, None)
        }
        EstimatorKind::Epc => ResultFile::new(&epc(&batch), None),
        EstimatorKind::Dls => {
            let cfg: DlsSettings = settings(config, "dls")?;
            ResultFile::new(&dls(&batch, cfg.ridge)?, None)
        }
        EstimatorKind::L0 => {
            let cfg: L0Settings = settings(config, "l0")?;
            ResultFile::new(&l0_map_oracle(&batch, cfg.lambda0, cfg.max_m.unwrap_or(DEFAULT_L0_MAX_M))?, None)
        }
    };
    write_json(out, &file)?;
    println!("{method}: {} nonzero coefficients, {} iterations", file.nonzero.len(), file.iterations);
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseReport {
    #[serde(flatten)]
    design: DesignReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    profile: Option<Vec<CorrelationProfileStep>>,
}

#[allow(clippy::too_many_arguments)]
fn cmd_diagnose(
    batch_dir: &Path,
    truth: Option<&Path>,
    result: Option<&Path>,
    alpha: f64,
    re_samples: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (batch, _) = read_batch(batch_dir)?;
    let truth = match truth {
        Some(p) => {
            let theta = read_theta_csv(p)?;
            let support = support_of(&theta, 0.0);
            let theta_min = support.iter().map(|&j| theta[j].abs()).fold(f64::INFINITY, f64::min);
            let theta_min = if theta_min.is_finite() { theta_min } else { 0.0 };
            Some(GroundTruth::new(theta, theta_min, 0.0)?)
        }
        None => None,
    };
    let opts = DesignReportOptions {
        support: truth.as_ref().map(|t| t.support.as_slice()),
        alpha,
        re_samples,
        seed,
        ..DesignReportOptions::default()
    };
    let design = design_report(&batch.design, &opts)?;
    let profile = match (result, &truth) {
        (Some(r), Some(t)) => {
            let file: ResultFile = read_json(r)?;
            match file.trace_zero_based() {
                Some(trace) if trace.steps.iter().any(|s| s.correlations.is_none()) => {
                    warn("trace has no correlation vectors (estimate with record_correlations); skipping the profile");
                    None
                }
                Some(trace) => Some(correlation_profile(t, &trace)?),
                None => {
                    warn("result has no greedy trace; skipping the correlation profile");
                    None
                }
            }
        }
        (Some(_), None) => {
            warn("--result needs --truth for a correlation profile");
            None
        }
        _ => None,
    };
    write_json(out, &DiagnoseReport { design, profile })?;
    Ok(())
}

fn cmd_solve(values: &Path, out: &Path) -> Result<()> {
    let file: ValueFunctionFile = read_json(values)?;
    let sol = solve_csg_dp(&file.to_value_function()?, None)?;
    if !sol.structure.unlisted_blocks.is_empty() {
        warn(&format!(
            "{} block(s) of the optimum are not listed and take the default value",
            sol.structure.unlisted_blocks.len()
        ));
    }
    let s = StructureFile::from_solution(&sol);
    write_json(out, &s)?;
    println!("welfare {} with blocks {:?}", s.welfare, s.blocks);
    Ok(())
}

fn cmd_experiment(
    config: Option<&Path>,
    preset: Option<Preset>,
    out: &Path,
    workers: Option<usize>,
    fixed_truth: bool,
    seed: Option<u64>,
) -> Result<()> {
    let mut cfg = match (config, preset) {
        (Some(p), _) => ExperimentConfig::from_json_file(p)?,
        (None, Some(p)) => ExperimentConfig::preset(p),
        (None, None) => return Err(Error::InvalidConfig("give --config or --preset".into())),
    };
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    cfg.fixed_truth |= fixed_truth;
    cfg.output = Some(out.to_path_buf());
    let res = run_experiment(&cfg, workers)?;
    let summary = emit_outputs(out, &cfg, &res.records)?;
    let failed = res.records.iter().filter(|r| r.status == sparse_csg::harness::RunStatus::Failed).count();
    println!("{} runs (m = {}), {failed} failed; outputs in {}", res.records.len(), res.m, out.display());
    for row in &summary.regime.rows {
        let gap = row.gap_median.map_or("-".to_string(), |g| format!("{g:.4}"));
        let status = if row.ill_posed { " ill-posed" } else { "" };
        println!("  T={:<6} {:<6} median gap {gap}{status}", row.t, row.method.as_str());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { config, out } => cmd_generate(&config, &out),
        Command::Estimate {
            method,
            batch,
            config,
            out,
        } => cmd_estimate(method, &batch, config.as_deref(), &out),
        Command::Diagnose {
            batch,
            truth,
            result,
            alpha,
            re_samples,
            seed,
            out,
        } => cmd_diagnose(&batch, truth.as_deref(), result.as_deref(), alpha, re_samples, seed, &out),
        Command::Solve { values, out } => cmd_solve(&values, &out),
        Command::Experiment {
            config,
            preset,
            out,
            workers,
            fixed_truth,
            seed,
        } => cmd_experiment(config.as_deref(), preset, &out, workers, fixed_truth, seed),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
