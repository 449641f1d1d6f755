//! Experiment harness: configuration, datasets, single runs, ablation
//! matrices and reports.

mod ablate;
mod config;
mod data;
mod report;
mod run;

pub use ablate::{
    ablate, cell_specs, escalate_until_baseline_fails, expand_matrix, parse_matrix, AblationRow,
    AblationTable, Cell, EscalationStep, ReplicateBrief,
};
pub use config::{
    parse_override, parse_pairs, DatasetKind, DatasetSpec, ExperimentSpec, TrainSpec,
    DEFAULT_BATCH_SIZE, DEFAULT_DATA_SEED, DEFAULT_MODEL_SEED, DEFAULT_RECOVERY_BAND,
    DEFAULT_REPLICATES, OUTPUT_ROOT_ENV,
};
pub use data::{generate_synthetic, load_tabular, Dataset, Standardizer};
pub use report::{collect_report, report_csv, write_report, ReportRow};
pub use run::{
    build_model, execute, load_dataset, run, write_outputs, write_steps_csv, FoldResult, MeanStd,
    RecoveryResult, RunOutput, RunSummary, StepRow, STEP_COLUMNS, SUMMARY_FORMAT_VERSION,
};
