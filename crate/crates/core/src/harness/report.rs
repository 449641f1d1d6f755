use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};

use super::run::RunSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    /// summary location relative to the report root
    pub run: String,
    pub name: String,
    pub config_hash: String,
    pub folds: usize,
    pub failure_flag: bool,
    pub val_metric: Option<f64>,
    pub recovered_fraction: Option<f64>,
    pub regulator_flops: u64,
    pub realism_score: f64,
    pub ratios: [f64; 4],
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| MsthError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| MsthError::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_summaries(&p, out)?;
        } else if p.file_name().is_some_and(|n| n == "summary.json") {
            out.push(p);
        }
    }
    Ok(())
}

/// Gather every `summary.json` below `dir` into one comparison table.
pub fn collect_report(dir: &Path) -> Result<Vec<ReportRow>> {
    let mut paths = Vec::new();
    find_summaries(dir, &mut paths)?;
    paths
        .into_iter()
        .map(|p| {
            let text = fs::read_to_string(&p).map_err(|e| MsthError::io(&p, e))?;
            let s: RunSummary = serde_json::from_str(&text)?;
            let rel = p
                .parent()
                .and_then(|d| d.strip_prefix(dir).ok())
                .unwrap_or(Path::new(""));
            Ok(ReportRow {
                run: if rel.as_os_str().is_empty() {
                    ".".to_string()
                } else {
                    rel.display().to_string()
                },
                name: s.name,
                config_hash: s.config_hash,
                folds: s.folds.len(),
                failure_flag: s.failure_flag,
                val_metric: s.final_val_metric.map(|m| m.mean),
                recovered_fraction: s.recovered_fraction,
                regulator_flops: s.regulator_flops,
                realism_score: s.realism.score,
                ratios: s.ledger.ratios,
            })
        })
        .collect()
}

pub fn report_csv(rows: &[ReportRow]) -> Result<String> {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "run",
        "name",
        "config_hash",
        "folds",
        "failure_flag",
        "val_metric",
        "recovered_fraction",
        "regulator_flops",
        "realism_score",
        "r_ultra",
        "r_fast",
        "r_medium",
        "r_slow",
    ])?;
    for r in rows {
        let mut rec = vec![
            r.run.clone(),
            r.name.clone(),
            r.config_hash.clone(),
            r.folds.to_string(),
            r.failure_flag.to_string(),
            opt(r.val_metric),
            opt(r.recovered_fraction),
            r.regulator_flops.to_string(),
            r.realism_score.to_string(),
        ];
        rec.extend(r.ratios.iter().map(ToString::to_string));
        w.write_record(rec)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| MsthError::Config(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Write `report.csv` and `report.json` into `dir`.
pub fn write_report(dir: &Path, rows: &[ReportRow]) -> Result<()> {
    let csv_path = dir.join("report.csv");
    fs::write(&csv_path, report_csv(rows)?).map_err(|e| MsthError::io(&csv_path, e))?;
    let json_path = dir.join("report.json");
    fs::write(&json_path, serde_json::to_string_pretty(rows)? + "\n")
        .map_err(|e| MsthError::io(&json_path, e))
}
