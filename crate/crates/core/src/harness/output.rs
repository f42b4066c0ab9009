//! Result files: `runs.csv`, `summary.json` and optional matrix dumps.
//!
//! `runs.csv` has one row per (run, checkpoint, estimator) with the fixed
//! column order `run_index,n,estimator,frob_error,coverage_hits,wall_ms`.
//! `frob_error` holds the configured error norm and is empty when the
//! estimator could not be evaluated. Matrices are written as a header line
//! `p rows cols` followed by `rows` lines of space-separated values.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::ci::Coverage;
use crate::harness::experiment::{EstimatorKind, ExperimentConfig, ExperimentResult, RunRecord};
use crate::harness::rate::fit_log_slope;
use crate::models::{Provenance, NORMAL_SAMPLER};

pub const RUNS_HEADER: [&str; 6] = [
    "run_index",
    "n",
    "estimator",
    "frob_error",
    "coverage_hits",
    "wall_ms",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngMetadata {
    pub generator: String,
    pub stream_derivation: String,
    pub normal_sampler: String,
}

impl Default for RngMetadata {
    fn default() -> Self {
        Self {
            generator: "ChaCha8".into(),
            stream_derivation: "key = seed_from_u64(seed), stream = run_index".into(),
            normal_sampler: NORMAL_SAMPLER.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    pub n: u64,
    pub mean_error: Option<f64>,
    pub sd_error: Option<f64>,
    pub coverage: Option<Coverage>,
    /// Negative variance estimates floored at zero across all runs.
    pub floored: usize,
    /// Runs where the estimator could not be evaluated.
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: EstimatorKind,
    pub checkpoints: Vec<CheckpointSummary>,
    /// Log-log slope of the mean error across checkpoints.
    pub error_slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub reps: usize,
    pub parameter_dim: usize,
    pub truth_provenance: Provenance,
    pub rng: RngMetadata,
    pub estimators: Vec<EstimatorSummary>,
}

fn mean_sd(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let sd = if values.len() > 1 {
        Some((values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt())
    } else {
        None
    };
    (Some(mean), sd)
}

impl Summary {
    pub fn new(
        config: &ExperimentConfig,
        parameter_dim: usize,
        truth_provenance: Provenance,
        records: &[RunRecord],
    ) -> Self {
        let estimators = EstimatorKind::ALL
            .into_iter()
            .filter(|k| config.estimators.contains(k))
            .map(|kind| {
                let checkpoints: Vec<CheckpointSummary> = if records.is_empty() {
                    Vec::new()
                } else {
                    config
                        .checkpoints
                        .iter()
                        .enumerate()
                        .map(|(j, &n)| summarize(records, kind, j, n))
                        .collect()
                };
                let points: Option<Vec<(f64, f64)>> = checkpoints
                    .iter()
                    .map(|c| c.mean_error.map(|m| (c.n as f64, m)))
                    .collect();
                let error_slope = points.and_then(|p| fit_log_slope(&p, false).ok());
                EstimatorSummary {
                    estimator: kind,
                    checkpoints,
                    error_slope,
                }
            })
            .collect();
        Self {
            config: config.clone(),
            reps: records.len(),
            parameter_dim,
            truth_provenance,
            rng: RngMetadata::default(),
            estimators,
        }
    }

    pub fn from_result(result: &ExperimentResult) -> Self {
        Self::new(
            &result.config,
            result.model.dim(),
            result.truth.provenance,
            &result.records,
        )
    }

    pub fn estimator(&self, kind: EstimatorKind) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} d={} p={} reps={} (error norm: {:?})",
            self.config.model, self.config.d, self.parameter_dim, self.reps, self.config.error_norm
        );
        let _ = writeln!(
            out,
            "{:<9} {:>9} {:>12} {:>10} {:>9} {:>8}",
            "estimator", "n", "mean_error", "sd", "coverage", "floored"
        );
        let fmt = |v: Option<f64>, prec: usize| match v {
            Some(v) => format!("{v:.prec$}"),
            None => "-".into(),
        };
        for est in &self.estimators {
            for cp in &est.checkpoints {
                let _ = writeln!(
                    out,
                    "{:<9} {:>9} {:>12} {:>10} {:>9} {:>8}",
                    est.estimator.name(),
                    cp.n,
                    fmt(cp.mean_error, 4),
                    fmt(cp.sd_error, 4),
                    fmt(cp.coverage.map(|c| c.rate), 4),
                    cp.floored
                );
            }
            if let Some(s) = est.error_slope {
                let _ = writeln!(
                    out,
                    "{:<9} slope of log error vs log n: {s:.4}",
                    est.estimator.name()
                );
            }
        }
        out
    }
}

fn summarize(records: &[RunRecord], kind: EstimatorKind, j: usize, n: u64) -> CheckpointSummary {
    let mut errors = Vec::new();
    let mut hits = Vec::new();
    let (mut floored, mut failures) = (0, 0);
    for rec in records {
        let Some(e) = rec.checkpoints.get(j).and_then(|cp| cp.estimate(kind)) else {
            failures += 1;
            continue;
        };
        match e.error {
            Some(err) => {
                errors.push(err);
                hits.push(e.hits.as_slice());
            }
            None => failures += 1,
        }
        floored += e.floored;
    }
    let (mean_error, sd_error) = mean_sd(&errors);
    let coverage = (!hits.is_empty()).then(|| Coverage::from_hits(hits));
    CheckpointSummary {
        n,
        mean_error,
        sd_error,
        coverage,
        floored,
        failures,
    }
}

pub fn write_runs_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let wrap = |e: csv::Error| Error::format(path, e);
    w.write_record(RUNS_HEADER).map_err(wrap)?;
    for rec in records {
        for cp in &rec.checkpoints {
            for e in &cp.estimates {
                let err = e.error.map(|v| v.to_string()).unwrap_or_default();
                w.write_record([
                    rec.run_index.to_string(),
                    cp.n.to_string(),
                    e.estimator.name().to_string(),
                    err,
                    e.hit_count().to_string(),
                    rec.wall_ms.to_string(),
                ])
                .map_err(wrap)?;
            }
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn write_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{} {} {}", m.nrows(), m.nrows(), m.ncols()).map_err(io)?;
    for r in 0..m.nrows() {
        let row: Vec<String> = m.row(r).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(" ")).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(path, "missing header"))?
        .map_err(|e| Error::io(path, e))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| {
            t.parse()
                .map_err(|_| Error::format(path, format!("bad header {header:?}")))
        })
        .collect::<Result<_>>()?;
    let [_, rows, cols] = dims[..] else {
        return Err(Error::format(
            path,
            format!("header must be `p rows cols`, got {header:?}"),
        ));
    };
    let mut values = Vec::with_capacity(rows * cols);
    for line in lines.take(rows) {
        let line = line.map_err(|e| Error::io(path, e))?;
        let before = values.len();
        for tok in line.split_whitespace() {
            values.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::format(path, format!("bad value {tok:?}")))?,
            );
        }
        if values.len() - before != cols {
            return Err(Error::format(
                path,
                format!("expected {cols} values per row"),
            ));
        }
    }
    if values.len() != rows * cols {
        return Err(Error::format(path, format!("expected {rows} rows")));
    }
    Ok(DMatrix::from_row_slice(rows, cols, &values))
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}

/// Writes `runs.csv`, `summary.json`, `sigma_truth.txt` and, when enabled,
/// per-run estimates under `sigma/` into `dir`.
pub fn emit_outputs(result: &ExperimentResult, dir: &Path) -> Result<Summary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_runs_csv(&result.records, &dir.join("runs.csv"))?;
    let summary = Summary::from_result(result);
    let path = dir.join("summary.json");
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::format(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    write_matrix(&result.truth.sigma, &dir.join("sigma_truth.txt"))?;
    if result.config.save_sigma {
        let sub = dir.join("sigma");
        fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for rec in &result.records {
            for cp in &rec.checkpoints {
                for e in &cp.estimates {
                    if let Some(m) = &e.sigma_hat {
                        let name = format!("run{}_{}_n{}.txt", rec.run_index, e.estimator, cp.n);
                        write_matrix(m, &sub.join(name))?;
                    }
                }
            }
        }
    }
    Ok(summary)
}
