//! Training engine: optimizers, perturbation injection, the per-step loop
//! with regulation hooks, data splits and early stopping.

mod optimizer;
mod perturbation;
mod split;
mod trainer;

pub use optimizer::{OptimizerKind, OptimizerSettings, OptimizerState};
pub use perturbation::{
    add_gaussian_noise, corrupt_weights, inject_perturbation, shift_inputs, PerturbationKind,
    PerturbationSpec, PerturbationTarget, CORRUPTION_FRACTION,
};
pub use split::{early_stopping, holdout_split, kfold_split, Fold, HoldoutSplit};
pub use trainer::{
    accuracy, update_performance, TrainRecord, TrainSettings, Trainer, DEFAULT_PERF_WINDOW,
};
