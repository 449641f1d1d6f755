use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};
use crate::network::NetworkModel;
use crate::numerics::Mat;

/// Share of a layer's weights hit by a corruption event.
pub const CORRUPTION_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationKind {
    ActivationNoise,
    WeightCorruption,
    InputShift,
}

impl PerturbationKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "activation_noise" => Some(PerturbationKind::ActivationNoise),
            "weight_corruption" => Some(PerturbationKind::WeightCorruption),
            "input_shift" => Some(PerturbationKind::InputShift),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PerturbationKind::ActivationNoise => "activation_noise",
            PerturbationKind::WeightCorruption => "weight_corruption",
            PerturbationKind::InputShift => "input_shift",
        }
    }
}

/// A perturbation active on training steps `start_step..=end_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub magnitude: f64,
    pub start_step: u64,
    pub end_step: u64,
    pub target_layer: Option<usize>,
}

impl PerturbationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.start_step > self.end_step {
            return Err(MsthError::Config(format!(
                "perturbation start_step {} is after end_step {}",
                self.start_step, self.end_step
            )));
        }
        if !(self.magnitude.is_finite() && self.magnitude >= 0.0) {
            return Err(MsthError::Config(format!(
                "perturbation magnitude must be finite and >= 0, got {}",
                self.magnitude
            )));
        }
        Ok(())
    }

    pub fn is_active(&self, step: u64) -> bool {
        (self.start_step..=self.end_step).contains(&step)
    }

    pub fn layer(&self) -> usize {
        self.target_layer.unwrap_or(0)
    }
}

/// What a perturbation acts on.
pub enum PerturbationTarget<'a> {
    Model(&'a mut NetworkModel),
    Batch(&'a mut Mat),
    PreActivation(&'a mut Mat),
}

/// Apply `spec` once to `target`. Returns the corrupted weight indices for a
/// weight corruption, empty otherwise.
pub fn inject_perturbation(
    target: PerturbationTarget<'_>,
    spec: &PerturbationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    spec.validate()?;
    match (spec.kind, target) {
        (PerturbationKind::WeightCorruption, PerturbationTarget::Model(model)) => {
            corrupt_weights(model, spec.layer(), spec.magnitude, rng)
        }
        (PerturbationKind::InputShift, PerturbationTarget::Batch(x)) => {
            shift_inputs(x, spec.magnitude);
            Ok(Vec::new())
        }
        (PerturbationKind::ActivationNoise, PerturbationTarget::PreActivation(z)) => {
            add_gaussian_noise(z, spec.magnitude, rng)?;
            Ok(Vec::new())
        }
        (kind, _) => Err(MsthError::Config(format!(
            "{} cannot be applied to this target",
            kind.name()
        ))),
    }
}

/// Multiply a seeded random 10% of one layer's weights by `1 + magnitude`.
pub fn corrupt_weights(
    model: &mut NetworkModel,
    layer: usize,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let layers = model.layers.len();
    let w = &mut model
        .layers
        .get_mut(layer)
        .ok_or(MsthError::InvalidLayer {
            index: layer,
            layers,
        })?
        .weights;
    let n = w.len();
    let count = ((n as f64 * CORRUPTION_FRACTION).ceil() as usize).clamp(1, n);
    let mut picked = sample(rng, n, count).into_vec();
    picked.sort_unstable();
    let data = w.as_mut_slice();
    for &i in &picked {
        data[i] *= 1.0 + magnitude;
    }
    Ok(picked)
}

pub fn shift_inputs(x: &mut Mat, magnitude: f64) {
    for v in x.as_mut_slice() {
        *v += magnitude;
    }
}

pub fn add_gaussian_noise(z: &mut Mat, magnitude: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if magnitude == 0.0 {
        return Ok(());
    }
    let normal =
        Normal::new(0.0, magnitude).map_err(|e| MsthError::Config(format!("noise: {e}")))?;
    for v in z.as_mut_slice() {
        *v += normal.sample(rng);
    }
    Ok(())
}
