//! File formats. Agents and coalition indices are 1-based on disk and
//! 0-based in memory.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::csg::{CsgSolution, ValueFunction};
use crate::error::{Error, Result};
use crate::estimators::BgcpTrace;
use crate::model::{Coalition, CoalitionUniverse, EpisodeBatch, EstimateResult, EstimatorKind, Tuning};

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniverseFile {
    pub n_agents: usize,
    pub coalitions: Vec<Vec<usize>>,
}

impl UniverseFile {
    pub fn from_universe(u: &CoalitionUniverse) -> Self {
        Self {
            n_agents: u.n_agents(),
            coalitions: u.coalitions().iter().map(|c| c.labels()).collect(),
        }
    }

    pub fn to_universe(&self) -> Result<CoalitionUniverse> {
        let cs = self
            .coalitions
            .iter()
            .map(|c| Coalition::from_labels(c))
            .collect::<Result<Vec<_>>>()?;
        CoalitionUniverse::new(self.n_agents, cs)
    }
}

pub fn read_universe(path: &Path) -> Result<CoalitionUniverse> {
    read_json::<UniverseFile>(path)?.to_universe()
}

pub fn write_universe(path: &Path, u: &CoalitionUniverse) -> Result<()> {
    write_json(path, &UniverseFile::from_universe(u))
}

/// Sparse vector CSV: a first line `m=<m>`, then `index,value` rows with
/// 1-based indices for the nonzero entries.
pub fn write_theta_csv(path: &Path, theta: &DVector<f64>) -> Result<()> {
    let mut out = fs::File::create(path)?;
    writeln!(out, "m={}", theta.len())?;
    writeln!(out, "index,value")?;
    for (j, &v) in theta.iter().enumerate() {
        if v != 0.0 {
            writeln!(out, "{},{}", j + 1, v)?;
        }
    }
    Ok(())
}

pub fn read_theta_csv(path: &Path) -> Result<DVector<f64>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut lines = reader.lines();
    let first = lines.next().transpose()?.ok_or_else(|| parse_err(path, "empty file"))?;
    let m: usize = first
        .trim()
        .strip_prefix("m=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, "first line must be `m=<length>`"))?;
    let mut theta = DVector::zeros(m);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || (lineno == 0 && line == "index,value") {
            continue;
        }
        let (i, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, format!("bad row `{line}`")))?;
        let i: usize = i.trim().parse().map_err(|_| parse_err(path, format!("bad index `{i}`")))?;
        let v: f64 = v.trim().parse().map_err(|_| parse_err(path, format!("bad value `{v}`")))?;
        if i == 0 || i > m {
            return Err(parse_err(path, format!("index {i} outside 1..={m}")));
        }
        theta[i - 1] = v;
    }
    Ok(theta)
}

/// Headerless CSV, one matrix row per line, shortest round-trip formatting.
pub fn write_matrix_csv(path: &Path, x: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    let mut row = Vec::with_capacity(x.ncols());
    for i in 0..x.nrows() {
        row.clear();
        row.extend(x.row(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut data = Vec::new();
    let mut ncols = None;
    let mut nrows = 0;
    for rec in r.records() {
        let rec = rec?;
        match ncols {
            None => ncols = Some(rec.len()),
            Some(c) if c != rec.len() => {
                return Err(parse_err(path, format!("row {} has {} fields, expected {c}", nrows + 1, rec.len())))
            }
            _ => {}
        }
        for f in rec.iter() {
            data.push(f.trim().parse::<f64>().map_err(|_| parse_err(path, format!("bad number `{f}`")))?);
        }
        nrows += 1;
    }
    Ok(DMatrix::from_row_slice(nrows, ncols.unwrap_or(0), &data))
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    for x in v.iter() {
        writeln!(out, "{x}")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix_csv(path)?;
    if m.ncols() > 1 {
        return Err(parse_err(path, "expected a single column"));
    }
    Ok(DVector::from_iterator(m.nrows(), m.iter().copied()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchMeta {
    pub episodes: usize,
    pub m: usize,
    pub column_normalised: bool,
    /// 1-based indices of never-activated coalitions.
    pub zero_columns: Vec<usize>,
    pub has_noise: bool,
    /// Whatever produced the batch (configs, seeds).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generation: Option<serde_json::Value>,
}

pub fn write_batch(dir: &Path, batch: &EpisodeBatch, generation: Option<serde_json::Value>) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix_csv(&dir.join("design.csv"), &batch.design)?;
    write_vector_csv(&dir.join("response.csv"), &batch.response)?;
    if let Some(e) = &batch.noise {
        write_vector_csv(&dir.join("noise.csv"), e)?;
    }
    let meta = BatchMeta {
        episodes: batch.episodes(),
        m: batch.m(),
        column_normalised: batch.column_normalised,
        zero_columns: batch.zero_columns.iter().map(|j| j + 1).collect(),
        has_noise: batch.noise.is_some(),
        generation,
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn read_batch(dir: &Path) -> Result<(EpisodeBatch, BatchMeta)> {
    let meta: BatchMeta = read_json(&dir.join("meta.json"))?;
    let design = read_matrix_csv(&dir.join("design.csv"))?;
    let response = read_vector_csv(&dir.join("response.csv"))?;
    let noise_path = dir.join("noise.csv");
    let noise = if noise_path.exists() {
        Some(read_vector_csv(&noise_path)?)
    } else {
        None
    };
    if design.nrows() != meta.episodes || design.ncols() != meta.m {
        return Err(parse_err(
            &dir.join("design.csv"),
            format!("design is {}x{}, meta says {}x{}", design.nrows(), design.ncols(), meta.episodes, meta.m),
        ));
    }
    let batch = EpisodeBatch::new(design, response, noise, meta.column_normalised)?;
    Ok((batch, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunctionFile {
    pub n_agents: usize,
    pub entries: Vec<(Vec<usize>, f64)>,
    #[serde(default)]
    pub default_value: f64,
}

impl ValueFunctionFile {
    /// The listed coalitions become the universe.
    pub fn to_value_function(&self) -> Result<ValueFunction> {
        let mut by_coalition = BTreeMap::new();
        for (agents, v) in &self.entries {
            let c = Coalition::from_labels(agents)?;
            if by_coalition.insert(c, *v).is_some() {
                return Err(Error::InvalidCoalition(format!("coalition {c} listed twice")));
            }
        }
        let universe = CoalitionUniverse::new(self.n_agents, by_coalition.keys().copied().collect())?;
        let values = by_coalition
            .into_iter()
            .map(|(c, v)| (universe.index_of(c).expect("listed coalition"), v))
            .collect();
        ValueFunction::new(universe, values, self.default_value)
    }

    pub fn from_value_function(vf: &ValueFunction) -> Self {
        Self {
            n_agents: vf.universe().n_agents(),
            entries: vf
                .values()
                .iter()
                .map(|(&j, &v)| (vf.universe().coalition(j).labels(), v))
                .collect(),
            default_value: vf.default_value(),
        }
    }
}

pub const TIE_BREAK_RULE: &str = "more blocks, then lexicographically smallest block bitmasks ordered by lowest agent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFile {
    pub blocks: Vec<Vec<usize>>,
    pub welfare: f64,
    pub n_blocks: usize,
    /// Blocks valued at the default because they are not listed.
    pub unlisted_blocks: Vec<Vec<usize>>,
    pub tie_break: String,
}

impl StructureFile {
    pub fn from_solution(sol: &CsgSolution) -> Self {
        Self {
            blocks: sol.structure.block_labels(),
            welfare: sol.value,
            n_blocks: sol.structure.blocks.len(),
            unlisted_blocks: sol.structure.unlisted_blocks.iter().map(|b| b.labels()).collect(),
            tie_break: TIE_BREAK_RULE.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub estimator: EstimatorKind,
    pub tuning: Tuning,
    pub m: usize,
    /// `(1-based index, value)` for every nonzero coefficient.
    pub nonzero: Vec<(usize, f64)>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt_residual: Option<f64>,
    /// Greedy trace with 1-based `selected` indices.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<BgcpTrace>,
}

impl ResultFile {
    pub fn new(result: &EstimateResult, trace: Option<&BgcpTrace>) -> Self {
        let trace = trace.map(|t| {
            let mut t = t.clone();
            t.steps.iter_mut().for_each(|s| s.selected += 1);
            t
        });
        Self {
            estimator: result.estimator,
            tuning: result.tuning.clone(),
            m: result.theta_hat.len(),
            nonzero: result.support_hat.iter().map(|&j| (j + 1, result.theta_hat[j])).collect(),
            iterations: result.iterations,
            converged: result.converged,
            kkt_residual: result.kkt_residual,
            trace,
        }
    }

    pub fn theta_hat(&self) -> Result<DVector<f64>> {
        let mut theta = DVector::zeros(self.m);
        for &(i, v) in &self.nonzero {
            if i == 0 || i > self.m {
                return Err(Error::InvalidConfig(format!("index {i} outside 1..={}", self.m)));
            }
            theta[i - 1] = v;
        }
        Ok(theta)
    }

    /// The trace with 0-based indices.
    pub fn trace_zero_based(&self) -> Option<BgcpTrace> {
        self.trace.as_ref().map(|t| {
            let mut t = t.clone();
            t.steps.iter_mut().for_each(|s| s.selected -= 1);
            t
        })
    }
}

pub fn ensure_dir(path: &Path) -> Result<PathBuf> {
    fs::create_dir_all(path)?;
    Ok(path.to_path_buf())
}
