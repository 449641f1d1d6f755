use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coordinator::{CoordinatorState, InterventionLedger};
use crate::error::{MsthError, Result};
use crate::health::{assess_health, scaled_lr, HealthReport, StabilityTracker};
use crate::network::{
    backward_pass, batch_activity, forward, predict, regulate_weights, LossKind, NetworkModel,
    PreActivationNoise, Target,
};
use crate::numerics::{mean, Mat};
use crate::regulators::{NeuronState, RegulatorConfig};

use super::optimizer::{OptimizerSettings, OptimizerState};
use super::perturbation::{
    inject_perturbation, PerturbationKind, PerturbationSpec, PerturbationTarget,
};

pub const DEFAULT_PERF_WINDOW: usize = 20;
const PERF_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub loss: LossKind,
    /// Scale the learning rate by system health and its stability.
    pub adaptive_lr: bool,
    pub perf_window: usize,
    pub optimizer: OptimizerSettings,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            loss: LossKind::CrossEntropy,
            adaptive_lr: false,
            perf_window: DEFAULT_PERF_WINDOW,
            optimizer: OptimizerSettings::default(),
        }
    }
}

/// Telemetry of one training step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub step: u64,
    pub epoch: u64,
    pub loss: f64,
    /// Filled in by the caller on evaluation steps.
    pub val_metric: Option<f64>,
    pub health: HealthReport,
    pub lr: f64,
    /// Fired interventions per scale this step, summed over layers.
    pub interventions: [u32; 4],
    pub n_ultra: u32,
    pub override_active: bool,
    /// Cumulative regulator FLOPs.
    pub flops: u64,
    pub failure_flag: bool,
}

/// Append the loss-window performance ratio `prev / cur` to the
/// accumulator. Nothing happens until both windows exist.
pub fn update_performance(
    mut state: NeuronState,
    previous: &[f64],
    current: &[f64],
) -> NeuronState {
    if previous.is_empty() || current.is_empty() {
        return state;
    }
    let p = mean(previous) / mean(current).max(PERF_EPS);
    state.perf_accumulator.push(p);
    state
}

#[derive(Debug, Clone)]
struct PinnedWeights {
    spec: usize,
    layer: usize,
    indices: Vec<usize>,
    values: Vec<f64>,
}

/// One training run: model, optimizer, coordinator, ledger and RNG.
pub struct Trainer {
    pub model: NetworkModel,
    pub optimizer: OptimizerState,
    pub coord: CoordinatorState,
    pub ledger: InterventionLedger,
    pub cfg: RegulatorConfig,
    pub settings: TrainSettings,
    perturbations: Vec<PerturbationSpec>,
    rng: ChaCha8Rng,
    step: u64,
    health: HealthReport,
    stability: StabilityTracker,
    previous_window: Vec<f64>,
    current_window: Vec<f64>,
    pinned: Vec<PinnedWeights>,
    failed: bool,
}

impl Trainer {
    pub fn new(
        model: NetworkModel,
        cfg: RegulatorConfig,
        settings: TrainSettings,
        perturbations: Vec<PerturbationSpec>,
        seed: u64,
    ) -> Result<Self> {
        cfg.validate()?;
        if settings.perf_window == 0 {
            return Err(MsthError::Config("perf_window must be positive".into()));
        }
        for p in &perturbations {
            p.validate()?;
            if p.kind != PerturbationKind::InputShift && p.layer() >= model.layers.len() {
                return Err(MsthError::InvalidLayer {
                    index: p.layer(),
                    layers: model.layers.len(),
                });
            }
        }
        Ok(Trainer {
            optimizer: OptimizerState::new(settings.optimizer.clone(), &model),
            model,
            coord: CoordinatorState::default(),
            ledger: InterventionLedger::new(),
            cfg,
            settings,
            perturbations,
            rng: ChaCha8Rng::seed_from_u64(seed),
            step: 0,
            health: HealthReport::perfect(),
            stability: StabilityTracker::default(),
            previous_window: Vec::new(),
            current_window: Vec::new(),
            pinned: Vec::new(),
            failed: false,
        })
    }

    /// Steps taken so far.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn failed(&self) -> bool {
        self.failed
    }

    pub fn health(&self) -> &HealthReport {
        &self.health
    }

    /// Learning rate for the next step.
    pub fn next_lr(&self) -> Result<f64> {
        let base = self.settings.optimizer.base_lr;
        if self.settings.adaptive_lr {
            scaled_lr(base, self.health.h_system, self.stability.value())
        } else {
            Ok(base)
        }
    }

    fn apply_pins(&mut self) {
        for pin in &self.pinned {
            let w = self.model.layers[pin.layer].weights.as_mut_slice();
            for (&i, &v) in pin.indices.iter().zip(&pin.values) {
                w[i] = v;
            }
        }
    }

    /// Weight corruptions start, hold and release here; returns the
    /// perturbed batch and the active activation-noise spec, if any.
    fn perturb(&mut self, x: &Mat) -> Result<(Mat, Option<(usize, f64)>)> {
        let step = self.step;
        self.pinned
            .retain(|p| self.perturbations[p.spec].is_active(step));
        let mut batch = x.clone();
        let mut noise = None;
        for idx in 0..self.perturbations.len() {
            let spec = self.perturbations[idx].clone();
            if !spec.is_active(step) {
                continue;
            }
            match spec.kind {
                PerturbationKind::WeightCorruption if step == spec.start_step => {
                    let indices = inject_perturbation(
                        PerturbationTarget::Model(&mut self.model),
                        &spec,
                        &mut self.rng,
                    )?;
                    let w = self.model.layers[spec.layer()].weights.as_slice();
                    let values = indices.iter().map(|&i| w[i]).collect();
                    self.pinned.push(PinnedWeights {
                        spec: idx,
                        layer: spec.layer(),
                        indices,
                        values,
                    });
                }
                PerturbationKind::WeightCorruption => {}
                PerturbationKind::InputShift => {
                    inject_perturbation(
                        PerturbationTarget::Batch(&mut batch),
                        &spec,
                        &mut self.rng,
                    )?;
                }
                PerturbationKind::ActivationNoise => {
                    noise.get_or_insert((spec.layer(), spec.magnitude));
                }
            }
        }
        self.apply_pins();
        Ok((batch, noise))
    }

    /// Forward with ultra/fast hooks, loss and gradients, optimizer update,
    /// medium/slow weight cascade, ledger, health. A non-finite loss,
    /// gradient, activation or parameter flags the record and ends the run.
    pub fn train_step(&mut self, x: &Mat, targets: &[Target], epoch: u64) -> Result<TrainRecord> {
        if self.failed {
            return Err(MsthError::RunFailed { step: self.step });
        }
        if x.rows() == 0 || targets.is_empty() {
            return Err(MsthError::EmptyInput);
        }
        self.step += 1;
        let step = self.step;
        let (batch, noise) = self.perturb(x)?;
        let lr = self.next_lr()?;

        let mut noise_rng = noise.map(|_| self.rng.clone());
        let noise = noise
            .zip(noise_rng.as_mut())
            .map(|((layer, magnitude), rng)| PreActivationNoise {
                layer,
                magnitude,
                rng,
            });
        let fwd = forward(
            &mut self.model,
            &batch,
            &mut self.coord,
            &mut self.ledger,
            &self.cfg,
            step,
            noise,
        )?;
        if let Some(rng) = noise_rng {
            self.rng = rng;
        }
        let (loss, grads) = backward_pass(&self.model, &fwd.pass, targets, self.settings.loss)?;

        let mut outcomes = fwd.outcomes;
        let mut failure = !(loss.is_finite() && grads.is_finite() && fwd.pass.is_finite());
        if !failure {
            self.optimizer.step(&mut self.model, &grads, lr)?;
            outcomes.extend(regulate_weights(
                &mut self.model,
                &self.coord,
                &mut self.ledger,
                &self.cfg,
                step,
            )?);
            failure = !self.model.parameters_finite();
        }
        self.ledger.record(step, &outcomes);

        let mut interventions = [0u32; 4];
        for o in outcomes.iter().filter(|o| o.fired) {
            interventions[o.scale.index()] += 1;
        }

        if !failure {
            let reports = self
                .model
                .layers
                .iter()
                .zip(&fwd.pass.post)
                .map(|(layer, a)| {
                    assess_health(
                        mean(&batch_activity(a)),
                        &layer.state.calcium,
                        &layer.weights,
                    )
                })
                .collect::<Result<Vec<_>>>()?;
            let mut h = HealthReport::average(&reports).ok_or(MsthError::EmptyInput)?;
            failure = !h.h_system.is_finite();
            if !failure {
                self.stability.push(h.h_system);
                h.adaptive_lr = lr;
                h.h_stability = self.stability.value();
                self.health = h;
            }
        }

        if !failure {
            self.current_window.push(loss);
            if self.current_window.len() == self.settings.perf_window {
                if !self.previous_window.is_empty() {
                    for layer in &mut self.model.layers {
                        let state = std::mem::replace(&mut layer.state, NeuronState::new(0, 0.0));
                        layer.state =
                            update_performance(state, &self.previous_window, &self.current_window);
                    }
                }
                self.previous_window = std::mem::take(&mut self.current_window);
            }
        }

        self.failed = failure;
        Ok(TrainRecord {
            step,
            epoch,
            loss,
            val_metric: None,
            health: self.health,
            lr,
            interventions,
            n_ultra: self.coord.consecutive_ultra,
            override_active: self.coord.override_active,
            flops: self.ledger.regulator_flops,
            failure_flag: failure,
        })
    }
}

/// Fraction of rows whose arg-max output equals the label.
pub fn accuracy(model: &NetworkModel, x: &Mat, labels: &[usize]) -> Result<f64> {
    if labels.len() != x.rows() {
        return Err(MsthError::shape(x.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(MsthError::EmptyInput);
    }
    let out = predict(model, x)?;
    let correct = (0..out.rows())
        .filter(|&b| {
            let row = out.row(b);
            let best = row
                .iter()
                .enumerate()
                .fold(0, |best, (j, &v)| if v > row[best] { j } else { best });
            best == labels[b]
        })
        .count();
    Ok(correct as f64 / labels.len() as f64)
}
