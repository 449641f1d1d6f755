use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};

use super::config::{parse_pairs, ExperimentSpec};
use super::run::{execute, MeanStd, RunSummary};

/// One cell of an ablation matrix: config overrides on top of the base.
pub type Cell = Vec<(String, String)>;

/// Parse matrix text: one axis per line, `key = a | b | c`.
pub fn parse_matrix(text: &str) -> Result<Vec<(String, Vec<String>)>> {
    parse_pairs(text)?
        .into_iter()
        .map(|(k, v)| {
            let values: Vec<String> = v.split('|').map(|s| s.trim().to_string()).collect();
            if values.iter().any(String::is_empty) {
                return Err(MsthError::Config(format!(
                    "matrix axis {k} has an empty value"
                )));
            }
            Ok((k, values))
        })
        .collect()
}

/// Cross product of the axes, first axis varying slowest.
pub fn expand_matrix(axes: &[(String, Vec<String>)]) -> Vec<Cell> {
    if axes.is_empty() {
        return Vec::new();
    }
    let mut cells: Vec<Cell> = vec![Vec::new()];
    for (key, values) in axes {
        cells = cells
            .into_iter()
            .flat_map(|cell| {
                values.iter().map(move |v| {
                    let mut c = cell.clone();
                    c.push((key.clone(), v.clone()));
                    c
                })
            })
            .collect();
    }
    cells
}

fn cell_label(cell: &Cell) -> String {
    if cell.is_empty() {
        return "base".to_string();
    }
    cell.iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateBrief {
    pub model_seed: u64,
    pub failure_flag: bool,
    pub final_val_metric: Option<f64>,
    pub recovered_fraction: Option<f64>,
    pub regulator_flops: u64,
    pub realism_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub cell: String,
    pub overrides: Cell,
    pub replicates: usize,
    pub failures: usize,
    pub val_metric: Option<MeanStd>,
    pub recovered_fraction: Option<f64>,
    pub regulator_flops: MeanStd,
    pub realism_score: MeanStd,
    pub runs: Vec<ReplicateBrief>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub base_config_hash: String,
    pub rows: Vec<AblationRow>,
}

/// Specs for every replicate of `cell`; replicate `r` uses model seed
/// `base + r`.
pub fn cell_specs(base: &ExperimentSpec, cell: &Cell) -> Result<Vec<ExperimentSpec>> {
    let mut spec = base.clone();
    for (k, v) in cell {
        spec.set(k, v)?;
    }
    spec.validate()?;
    Ok((0..spec.replicates as u64)
        .map(|r| {
            let mut s = spec.clone();
            s.model_seed = spec.model_seed.wrapping_add(r);
            s
        })
        .collect())
}

fn summarize(cell: &Cell, specs: &[ExperimentSpec], runs: &[RunSummary]) -> AblationRow {
    let briefs: Vec<ReplicateBrief> = specs
        .iter()
        .zip(runs)
        .map(|(s, r)| ReplicateBrief {
            model_seed: s.model_seed,
            failure_flag: r.failure_flag,
            final_val_metric: r.final_val_metric.map(|m| m.mean),
            recovered_fraction: r.recovered_fraction,
            regulator_flops: r.regulator_flops,
            realism_score: r.realism.score,
        })
        .collect();
    let vals: Vec<f64> = briefs.iter().filter_map(|b| b.final_val_metric).collect();
    let recovered: Vec<f64> = briefs.iter().filter_map(|b| b.recovered_fraction).collect();
    let flops: Vec<f64> = briefs.iter().map(|b| b.regulator_flops as f64).collect();
    let realism: Vec<f64> = briefs.iter().map(|b| b.realism_score).collect();
    AblationRow {
        cell: cell_label(cell),
        overrides: cell.clone(),
        replicates: briefs.len(),
        failures: briefs.iter().filter(|b| b.failure_flag).count(),
        val_metric: MeanStd::of(&vals),
        recovered_fraction: MeanStd::of(&recovered).map(|m| m.mean),
        regulator_flops: MeanStd::of(&flops).expect("at least one replicate"),
        realism_score: MeanStd::of(&realism).expect("at least one replicate"),
        runs: briefs,
    }
}

/// Run every cell over its seed replicates in parallel. An empty cell list
/// is an error; a single empty cell reproduces the base run.
pub fn ablate(base: &ExperimentSpec, cells: &[Cell]) -> Result<AblationTable> {
    if cells.is_empty() {
        return Err(MsthError::EmptyMatrix);
    }
    let plans: Vec<Vec<ExperimentSpec>> = cells
        .iter()
        .map(|c| cell_specs(base, c))
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, &ExperimentSpec)> = plans
        .iter()
        .enumerate()
        .flat_map(|(i, specs)| specs.iter().map(move |s| (i, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(base.workers)
        .build()
        .map_err(|e| MsthError::Config(format!("worker pool: {e}")))?;
    let summaries = pool.install(|| {
        jobs.par_iter()
            .map(|(_, s)| execute(s).map(|o| o.summary))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::with_capacity(cells.len());
    let mut offset = 0;
    for (cell, specs) in cells.iter().zip(&plans) {
        rows.push(summarize(
            cell,
            specs,
            &summaries[offset..offset + specs.len()],
        ));
        offset += specs.len();
    }
    Ok(AblationTable {
        base_config_hash: base.config_hash(),
        rows,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl AblationTable {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "cell",
            "replicates",
            "failures",
            "val_metric_mean",
            "val_metric_std",
            "recovered_fraction",
            "regulator_flops_mean",
            "regulator_flops_std",
            "realism_mean",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.cell.clone(),
                r.replicates.to_string(),
                r.failures.to_string(),
                fmt_opt(r.val_metric.map(|m| m.mean)),
                fmt_opt(r.val_metric.map(|m| m.std)),
                fmt_opt(r.recovered_fraction),
                r.regulator_flops.mean.to_string(),
                r.regulator_flops.std.to_string(),
                r.realism_score.mean.to_string(),
            ])?;
        }
        let bytes = w
            .into_inner()
            .map_err(|e| MsthError::Config(format!("csv buffer: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    /// Write `ablation.csv` and `ablation.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| MsthError::io(dir, e))?;
        let csv_path = dir.join("ablation.csv");
        fs::write(&csv_path, self.to_csv()?).map_err(|e| MsthError::io(&csv_path, e))?;
        let json_path = dir.join("ablation.json");
        fs::write(&json_path, serde_json::to_string_pretty(self)? + "\n")
            .map_err(|e| MsthError::io(&json_path, e))
    }
}

/// Result of the failure benchmark at one perturbation magnitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationStep {
    pub magnitude: f64,
    pub baseline_failures: usize,
    pub msth_failures: usize,
    pub replicates: usize,
}

/// Run baseline and regulated arms over their replicates at increasing
/// perturbation magnitudes, stopping at the first magnitude where the
/// baseline fails at least once. Every perturbation's magnitude is set.
pub fn escalate_until_baseline_fails(
    baseline: &ExperimentSpec,
    msth: &ExperimentSpec,
    magnitudes: &[f64],
) -> Result<Vec<EscalationStep>> {
    let mut steps = Vec::new();
    for &m in magnitudes {
        let cell = |spec: &ExperimentSpec| -> Cell {
            (0..spec.perturbations.len())
                .map(|i| (format!("perturbation.{i}.magnitude"), m.to_string()))
                .collect()
        };
        let base_row = &ablate(baseline, &[cell(baseline)])?.rows[0];
        let msth_row = &ablate(msth, &[cell(msth)])?.rows[0];
        steps.push(EscalationStep {
            magnitude: m,
            baseline_failures: base_row.failures,
            msth_failures: msth_row.failures,
            replicates: msth_row.replicates,
        });
        if base_row.failures > 0 {
            break;
        }
    }
    Ok(steps)
}
