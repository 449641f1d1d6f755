use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};

/// How many training steps separate two ticks of each regulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub ultra_every: u64,
    pub fast_every: u64,
    pub medium_every: u64,
    pub slow_every: u64,
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule {
            ultra_every: 1,
            fast_every: 10,
            medium_every: 100,
            slow_every: 500,
        }
    }
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ordered = 1 <= self.ultra_every
            && self.ultra_every <= self.fast_every
            && self.fast_every <= self.medium_every
            && self.medium_every <= self.slow_every;
        if ordered {
            Ok(())
        } else {
            Err(MsthError::Config(format!(
                "schedule must satisfy 1 <= ultra <= fast <= medium <= slow, got {}/{}/{}/{}",
                self.ultra_every, self.fast_every, self.medium_every, self.slow_every
            )))
        }
    }

    // Steps are 1-based when checked against the schedule, so step 10 is
    // the first fast tick and step 500 the first slow tick.
    fn tick(every: u64, step: u64) -> bool {
        step > 0 && step.is_multiple_of(every)
    }

    pub fn is_ultra_tick(&self, step: u64) -> bool {
        Self::tick(self.ultra_every, step)
    }

    pub fn is_fast_tick(&self, step: u64) -> bool {
        Self::tick(self.fast_every, step)
    }

    pub fn is_medium_tick(&self, step: u64) -> bool {
        Self::tick(self.medium_every, step)
    }

    pub fn is_slow_tick(&self, step: u64) -> bool {
        Self::tick(self.slow_every, step)
    }
}

/// Every threshold, gain and factor of the four regulators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegulatorConfig {
    // emergency predicates
    pub mag_threshold: f64,
    pub rate_value_threshold: f64,
    pub rate_fraction_threshold: f64,
    pub var_threshold: f64,
    pub mean_threshold: f64,
    // suppression
    pub suppress_mask_threshold: f64,
    pub suppress_factor: f64,
    pub refractory_steps: u64,
    pub max_consecutive_ultra: u32,
    // calcium
    pub calcium_target: f64,
    pub calcium_threshold: f64,
    pub pump_gain: f64,
    pub pump_efficiency: f64,
    pub calcium_leak: f64,
    // synaptic scaling
    pub activity_target: f64,
    pub downscale_trigger: f64,
    pub upscale_trigger: f64,
    pub downscale_factor: f64,
    pub upscale_factor: f64,
    // structural plasticity
    pub perf_threshold: f64,
    pub fro_threshold: f64,
    pub outlier_threshold: f64,
    pub wstd_threshold: f64,
    pub structural_factor: f64,
    pub schedule: StepSchedule,
}

impl Default for RegulatorConfig {
    fn default() -> Self {
        RegulatorConfig {
            mag_threshold: 4.0,
            rate_value_threshold: 1.5,
            rate_fraction_threshold: 0.25,
            var_threshold: 3.0,
            mean_threshold: 2.0,
            suppress_mask_threshold: 2.0,
            suppress_factor: 0.95,
            // Any positive refractory gap makes three consecutive
            // ultra-fast interventions (and so the coordinator override)
            // unreachable.
            refractory_steps: 0,
            max_consecutive_ultra: 3,
            calcium_target: 0.5,
            calcium_threshold: 0.08,
            pump_gain: 4.0,
            pump_efficiency: 0.12,
            calcium_leak: 0.9,
            activity_target: 1.0,
            downscale_trigger: 1.3,
            upscale_trigger: 0.7,
            downscale_factor: 0.996,
            upscale_factor: 1.004,
            perf_threshold: 1.05,
            fro_threshold: 12.0,
            outlier_threshold: 1.2,
            wstd_threshold: 0.3,
            structural_factor: 0.999,
            schedule: StepSchedule::default(),
        }
    }
}

impl RegulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(MsthError::Config(format!("regulator: {what}")));
        let positive = [
            ("mag_threshold", self.mag_threshold),
            ("rate_value_threshold", self.rate_value_threshold),
            ("rate_fraction_threshold", self.rate_fraction_threshold),
            ("var_threshold", self.var_threshold),
            ("mean_threshold", self.mean_threshold),
            ("suppress_mask_threshold", self.suppress_mask_threshold),
            ("calcium_target", self.calcium_target),
            ("pump_gain", self.pump_gain),
            ("pump_efficiency", self.pump_efficiency),
            ("activity_target", self.activity_target),
            ("downscale_trigger", self.downscale_trigger),
            ("upscale_trigger", self.upscale_trigger),
            ("perf_threshold", self.perf_threshold),
            ("fro_threshold", self.fro_threshold),
            ("outlier_threshold", self.outlier_threshold),
            ("wstd_threshold", self.wstd_threshold),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be a positive finite number, got {v}"));
            }
        }
        if !(self.suppress_factor > 0.0 && self.suppress_factor <= 1.0) {
            return bad("suppress_factor must lie in (0, 1]");
        }
        if !(self.structural_factor > 0.0 && self.structural_factor <= 1.0) {
            return bad("structural_factor must lie in (0, 1]");
        }
        if !(self.calcium_threshold > 0.0 && self.calcium_threshold < 1.0) {
            return bad("calcium_threshold must lie in (0, 1)");
        }
        if !(self.calcium_leak > 0.0 && self.calcium_leak < 1.0) {
            return bad("calcium_leak must lie in (0, 1)");
        }
        if !(self.downscale_factor < 1.0
            && 1.0 < self.upscale_factor
            && self.downscale_factor > 0.0)
        {
            return bad("need 0 < downscale_factor < 1 < upscale_factor");
        }
        if self.upscale_trigger >= self.downscale_trigger {
            return bad("upscale_trigger must be below downscale_trigger");
        }
        self.schedule.validate()
    }
}
