use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordinator::{InterventionLedger, LedgerSummary};
use crate::error::{MsthError, Result};
use crate::health::{enhancement_estimate, realism_score, EnhancementEstimate, RealismReport};
use crate::network::{NetworkModel, Target};
use crate::training::{
    accuracy, early_stopping, holdout_split, kfold_split, OptimizerSettings, TrainRecord,
    TrainSettings, Trainer,
};

use super::config::{DatasetKind, ExperimentSpec};
use super::data::{generate_synthetic, load_tabular, Dataset, Standardizer};

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// Column order of `steps.csv`. Changing it is a format break.
pub const STEP_COLUMNS: [&str; 17] = [
    "fold",
    "step",
    "epoch",
    "loss",
    "val_metric",
    "h_activity",
    "h_calcium",
    "h_weights",
    "h_system",
    "lr",
    "ultra_fired",
    "fast_fired",
    "medium_fired",
    "slow_fired",
    "n_ultra",
    "override",
    "flops",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRow {
    pub fold: usize,
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    pub val_metric: Option<f64>,
    pub h_activity: f64,
    pub h_calcium: f64,
    pub h_weights: f64,
    pub h_system: f64,
    pub lr: f64,
    pub ultra_fired: u8,
    pub fast_fired: u8,
    pub medium_fired: u8,
    pub slow_fired: u8,
    pub n_ultra: u32,
    #[serde(rename = "override")]
    pub override_active: u8,
    pub flops: u64,
}

impl StepRow {
    fn new(fold: usize, r: &TrainRecord) -> Self {
        let fired = |i: usize| u8::from(r.interventions[i] > 0);
        StepRow {
            fold,
            step: r.step,
            epoch: r.epoch,
            loss: r.loss,
            val_metric: r.val_metric,
            h_activity: r.health.h_activity,
            h_calcium: r.health.h_calcium,
            h_weights: r.health.h_weights,
            h_system: r.health.h_system,
            lr: r.lr,
            ultra_fired: fired(0),
            fast_fired: fired(1),
            medium_fired: fired(2),
            slow_fired: fired(3),
            n_ultra: r.n_ultra,
            override_active: u8::from(r.override_active),
            flops: r.flops,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryResult {
    /// last validation metric before the first perturbation
    pub pre_metric: f64,
    pub recovered: bool,
    /// steps after the last perturbation window until recovery
    pub steps_to_recover: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub steps: u64,
    pub final_val_metric: Option<f64>,
    pub test_metric: Option<f64>,
    pub failure_flag: bool,
    pub failure_step: Option<u64>,
    pub recovery: Option<RecoveryResult>,
    pub ledger: LedgerSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub format_version: u32,
    pub name: String,
    pub config_hash: String,
    pub folds: Vec<FoldResult>,
    pub final_val_metric: Option<MeanStd>,
    pub test_metric: Option<MeanStd>,
    pub failure_flag: bool,
    pub failed_folds: usize,
    /// share of folds that recovered, when the run had perturbations
    pub recovered_fraction: Option<f64>,
    pub steps_to_recover: Option<MeanStd>,
    pub ledger: LedgerSummary,
    pub realism: RealismReport,
    pub enhancement: Option<EnhancementEstimate>,
    pub regulator_flops: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub rows: Vec<StepRow>,
    pub wall_time_secs: f64,
}

pub fn load_dataset(spec: &ExperimentSpec) -> Result<Dataset> {
    match spec.dataset.kind {
        DatasetKind::Tabular => {
            let path = spec.dataset.path.as_ref().ok_or_else(|| {
                MsthError::Config("dataset.path is required for tabular data".into())
            })?;
            load_tabular(path, &spec.dataset.label_column)
        }
        _ => generate_synthetic(&spec.dataset, spec.data_seed),
    }
}

struct FoldPlan {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn plan_folds(spec: &ExperimentSpec, data: &Dataset) -> Result<Vec<FoldPlan>> {
    if spec.train.k_folds == 1 {
        let s = holdout_split(&data.labels, spec.data_seed)?;
        return Ok(vec![FoldPlan {
            train: s.train,
            val: s.val,
            test: s.test,
        }]);
    }
    Ok(kfold_split(
        data.len(),
        spec.train.k_folds,
        Some(&data.labels),
        spec.data_seed,
    )?
    .into_iter()
    .map(|f| FoldPlan {
        train: f.train,
        val: f.val,
        test: Vec::new(),
    })
    .collect())
}

fn train_settings(spec: &ExperimentSpec) -> TrainSettings {
    TrainSettings {
        loss: spec.train.loss,
        adaptive_lr: spec.adaptive_lr,
        perf_window: spec.train.perf_window,
        optimizer: OptimizerSettings {
            kind: spec.train.optimizer,
            base_lr: spec.train.lr,
            weight_decay: spec.train.weight_decay,
            ..Default::default()
        },
    }
}

pub fn build_model(spec: &ExperimentSpec, inputs: usize, classes: usize) -> Result<NetworkModel> {
    let mut sizes = vec![inputs];
    sizes.extend_from_slice(&spec.hidden);
    sizes.push(classes);
    let mut model = NetworkModel::init(
        &sizes,
        spec.activation,
        spec.model_seed,
        spec.regulator.calcium_target,
    )?;
    model.regulation_enabled = spec.regulation_enabled();
    model.scales = spec.scales;
    model.coordination = spec.coordination;
    Ok(model)
}

fn recovery(spec: &ExperimentSpec, evals: &[(u64, f64)], failed: bool) -> Option<RecoveryResult> {
    let start = spec.perturbations.iter().map(|p| p.start_step).min()?;
    let end = spec.perturbations.iter().map(|p| p.end_step).max()?;
    let pre = evals.iter().rev().find(|(s, _)| *s < start)?.1;
    let threshold = pre * (1.0 - spec.recovery_band);
    let hit = evals
        .iter()
        .find(|(s, v)| *s > end && *s - end <= spec.recovery_window && *v >= threshold)
        .filter(|_| !failed);
    Some(RecoveryResult {
        pre_metric: pre,
        recovered: hit.is_some(),
        steps_to_recover: hit.map(|(s, _)| s - end),
    })
}

fn run_fold(
    spec: &ExperimentSpec,
    data: &Dataset,
    fold: usize,
    plan: &FoldPlan,
) -> Result<(FoldResult, Vec<StepRow>, InterventionLedger)> {
    let scaler = Standardizer::fit(&data.features, &plan.train)?;
    let x = scaler.apply(&data.features);
    let scaled = Dataset {
        features: x,
        labels: data.labels.clone(),
        classes: data.classes,
    };
    let (x_val, y_val) = scaled.select(&plan.val)?;

    let model = build_model(spec, data.features.cols(), data.classes)?;
    let mut trainer = Trainer::new(
        model,
        spec.regulator.clone(),
        train_settings(spec),
        spec.perturbations.clone(),
        spec.model_seed.wrapping_add(1 + fold as u64),
    )?;
    let mut order_rng = ChaCha8Rng::seed_from_u64(spec.model_seed);
    order_rng.set_stream(1 + fold as u64);

    let horizon = spec
        .perturbations
        .iter()
        .map(|p| p.end_step + spec.recovery_window)
        .max()
        .unwrap_or(0);
    let max_steps = spec.train.max_steps;
    let mut rows = Vec::new();
    let mut evals: Vec<(u64, f64)> = Vec::new();
    let mut epoch_history = Vec::new();
    let mut failure_step = None;

    'epochs: for epoch in 0..spec.train.epochs as u64 {
        let mut order = plan.train.clone();
        order.shuffle(&mut order_rng);
        for chunk in order.chunks(spec.train.batch_size) {
            if max_steps > 0 && trainer.step() >= max_steps {
                break 'epochs;
            }
            let (xb, yb) = scaled.select(chunk)?;
            let targets: Vec<Target> = yb.into_iter().map(Target::Class).collect();
            let mut rec = trainer.train_step(&xb, &targets, epoch)?;
            if rec.failure_flag {
                failure_step = Some(rec.step);
                rows.push(StepRow::new(fold, &rec));
                break 'epochs;
            }
            if rec.step % spec.train.eval_every == 0 {
                let v = accuracy(&trainer.model, &x_val, &y_val)?;
                evals.push((rec.step, v));
                rec.val_metric = Some(v);
            }
            rows.push(StepRow::new(fold, &rec));
        }
        epoch_history.push(accuracy(&trainer.model, &x_val, &y_val)?);
        if spec.train.patience > 0
            && trainer.step() > horizon
            && early_stopping(&epoch_history, spec.train.patience)
        {
            break;
        }
    }

    let failed = failure_step.is_some();
    let final_val_metric = if failed {
        None
    } else {
        Some(accuracy(&trainer.model, &x_val, &y_val)?)
    };
    let test_metric = if failed || plan.test.is_empty() {
        None
    } else {
        let (x_test, y_test) = scaled.select(&plan.test)?;
        Some(accuracy(&trainer.model, &x_test, &y_test)?)
    };
    let result = FoldResult {
        fold,
        steps: trainer.step(),
        final_val_metric,
        test_metric,
        failure_flag: failed,
        failure_step,
        recovery: recovery(spec, &evals, failed),
        ledger: trainer.ledger.summary(),
    };
    Ok((result, rows, trainer.ledger))
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| MsthError::Config(format!("worker pool: {e}")))
}

/// Train every fold of `spec` in memory. Nothing is written.
pub fn execute(spec: &ExperimentSpec) -> Result<RunOutput> {
    spec.validate()?;
    let started = Instant::now();
    let data = load_dataset(spec)?;
    let plans = plan_folds(spec, &data)?;
    let results = pool(spec.workers)?.install(|| {
        plans
            .par_iter()
            .enumerate()
            .map(|(fold, plan)| run_fold(spec, &data, fold, plan))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut ledger = InterventionLedger::new();
    let mut folds = Vec::with_capacity(results.len());
    let mut rows = Vec::new();
    for (fold, fold_rows, fold_ledger) in results {
        for i in 0..4 {
            ledger.counts[i] += fold_ledger.counts[i];
        }
        ledger.coordination_events += fold_ledger.coordination_events;
        ledger.regulator_flops += fold_ledger.regulator_flops;
        ledger.steps_recorded += fold_ledger.steps_recorded;
        folds.push(fold);
        rows.extend(fold_rows);
    }

    let val: Vec<f64> = folds.iter().filter_map(|f| f.final_val_metric).collect();
    let test: Vec<f64> = folds.iter().filter_map(|f| f.test_metric).collect();
    let recoveries: Vec<&RecoveryResult> =
        folds.iter().filter_map(|f| f.recovery.as_ref()).collect();
    let recovered_fraction = (!spec.perturbations.is_empty())
        .then(|| recoveries.iter().filter(|r| r.recovered).count() as f64 / folds.len() as f64);
    let steps: Vec<f64> = recoveries
        .iter()
        .filter_map(|r| r.steps_to_recover.map(|s| s as f64))
        .collect();
    let failed_folds = folds.iter().filter(|f| f.failure_flag).count();
    let summary = RunSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        name: spec.name.clone(),
        config_hash: spec.config_hash(),
        final_val_metric: MeanStd::of(&val),
        test_metric: MeanStd::of(&test),
        failure_flag: failed_folds > 0,
        failed_folds,
        recovered_fraction,
        steps_to_recover: MeanStd::of(&steps),
        realism: realism_score(ledger.counts, ledger.coordination_events),
        enhancement: enhancement_estimate(&ledger, ledger.steps_recorded).ok(),
        regulator_flops: ledger.regulator_flops,
        ledger: ledger.summary(),
        folds,
    };
    Ok(RunOutput {
        summary,
        rows,
        wall_time_secs: started.elapsed().as_secs_f64(),
    })
}

pub fn write_steps_csv(path: &Path, rows: &[StepRow]) -> Result<()> {
    // header written explicitly so an empty run still gets one
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(STEP_COLUMNS)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| MsthError::io(path, e))
}

#[derive(Serialize)]
struct Timing {
    wall_time_secs: f64,
}

/// Write `steps.csv`, `summary.json`, `config.resolved` and `timing.json`
/// into `dir`. Everything but the timing file is reproducible byte for byte.
pub fn write_outputs(dir: &Path, spec: &ExperimentSpec, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| MsthError::io(dir, e))?;
    write_steps_csv(&dir.join("steps.csv"), &out.rows)?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| MsthError::io(&p, e))
    };
    write(
        "summary.json",
        serde_json::to_string_pretty(&out.summary)? + "\n",
    )?;
    write(
        "config.resolved",
        format!("# config_hash: {}\n{}", spec.config_hash(), spec.to_text()),
    )?;
    write(
        "timing.json",
        serde_json::to_string_pretty(&Timing {
            wall_time_secs: out.wall_time_secs,
        })? + "\n",
    )
}

/// Execute and write outputs to the experiment's resolved output directory.
pub fn run(spec: &ExperimentSpec) -> Result<RunOutput> {
    let out = execute(spec)?;
    write_outputs(&spec.resolved_output_dir(), spec, &out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smoke() -> ExperimentSpec {
        ExperimentSpec::from_text("train.epochs = 2\ndataset.n = 120").unwrap()
    }

    #[test]
    fn smoke_run_completes() {
        let out = execute(&smoke()).unwrap();
        assert!(!out.summary.failure_flag);
        assert!(!out.rows.is_empty());
        assert!(out.summary.final_val_metric.is_some());
        assert!(out.summary.recovered_fraction.is_none());
    }

    #[test]
    fn recovery_band_logic() {
        let mut spec = smoke();
        spec.perturbations.push(crate::training::PerturbationSpec {
            kind: crate::training::PerturbationKind::InputShift,
            magnitude: 1.0,
            start_step: 20,
            end_step: 30,
            target_layer: None,
        });
        let evals = [(10, 0.9), (20, 0.5), (30, 0.6), (40, 0.8), (50, 0.86)];
        let r = recovery(&spec, &evals, false).unwrap();
        assert_eq!(r.pre_metric, 0.9);
        assert_eq!(r.steps_to_recover, Some(20));
        assert!(!recovery(&spec, &evals, true).unwrap().recovered);
        assert!(recovery(&smoke(), &evals, false).is_none());
    }
}
