//! The four timescale regulators as pure state transitions.
//!
//! * ultra-fast: emergency detection and selective activation suppression
//! * fast: calcium homeostasis with a sigmoid-gated pump
//! * medium: multiplicative synaptic scaling driven by accumulated activity
//! * slow: trigger-gated structural weight shrinkage
//!
//! Nothing here holds hidden state; callers pass the [`NeuronState`] and
//! get a new one back.

mod calcium;
mod config;
mod emergency;
mod structural;
mod synaptic;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use calcium::{calcium_error, regulate_calcium, squash, update_calcium_from_activity};
pub use config::{RegulatorConfig, StepSchedule};
pub use emergency::{
    detect_emergency, emergency_predicates, suppress, suppression_mask, EmergencyPredicates,
};
pub use structural::{performance_window, structural_step, StructuralTriggers};
pub use synaptic::{accumulate_activity, medium_scale};

/// Regulatory timescale, ordered fastest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    UltraFast,
    Fast,
    Medium,
    Slow,
}

impl Scale {
    pub const ALL: [Scale; 4] = [Scale::UltraFast, Scale::Fast, Scale::Medium, Scale::Slow];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Scale::UltraFast => "ultra_fast",
            Scale::Fast => "fast",
            Scale::Medium => "medium",
            Scale::Slow => "slow",
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-layer homeostatic state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeuronState {
    pub activations: Vec<f64>,
    pub calcium: Vec<f64>,
    pub activity_accum: f64,
    pub accum_steps: u64,
    /// Performance ratios, most recent last.
    pub perf_accumulator: Vec<f64>,
}

impl NeuronState {
    /// Fresh state for a layer of `width` neurons, calcium at `resting`.
    pub fn new(width: usize, resting: f64) -> Self {
        NeuronState {
            activations: vec![0.0; width],
            calcium: vec![resting; width],
            activity_accum: 0.0,
            accum_steps: 0,
            perf_accumulator: Vec::new(),
        }
    }

    pub fn width(&self) -> usize {
        self.calcium.len()
    }

    /// Mean accumulated activity per step, if anything was accumulated.
    pub fn activity_rate(&self) -> Option<f64> {
        (self.accum_steps > 0).then(|| self.activity_accum / self.accum_steps as f64)
    }
}

/// Result of asking one regulator to act.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionOutcome {
    pub scale: Scale,
    pub fired: bool,
    pub layer: Option<usize>,
    /// Named measurements; empty unless `fired`.
    pub detail: BTreeMap<String, f64>,
}

impl InterventionOutcome {
    pub fn quiet(scale: Scale) -> Self {
        InterventionOutcome {
            scale,
            fired: false,
            layer: None,
            detail: BTreeMap::new(),
        }
    }

    pub fn fired<I, K>(scale: Scale, detail: I) -> Self
    where
        I: IntoIterator<Item = (K, f64)>,
        K: Into<String>,
    {
        InterventionOutcome {
            scale,
            fired: true,
            layer: None,
            detail: detail.into_iter().map(|(k, v)| (k.into(), v)).collect(),
        }
    }

    pub fn on_layer(mut self, layer: usize) -> Self {
        self.layer = Some(layer);
        self
    }
}
