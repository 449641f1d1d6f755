use crate::error::Result;
use crate::numerics::stats;

use super::RegulatorConfig;

/// Which of the four emergency conditions hold for an activation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EmergencyPredicates {
    pub magnitude: bool,
    pub rate: bool,
    pub variance: bool,
    pub mean: bool,
}

impl EmergencyPredicates {
    pub fn count(&self) -> usize {
        [self.magnitude, self.rate, self.variance, self.mean]
            .iter()
            .filter(|&&b| b)
            .count()
    }
}

pub fn emergency_predicates(a: &[f64], cfg: &RegulatorConfig) -> Result<EmergencyPredicates> {
    let s = stats(a)?;
    let above = a
        .iter()
        .filter(|x| x.abs() > cfg.rate_value_threshold)
        .count();
    let rate = above as f64 / a.len() as f64;
    Ok(EmergencyPredicates {
        magnitude: s.max_abs > cfg.mag_threshold,
        rate: rate > cfg.rate_fraction_threshold,
        variance: s.var > cfg.var_threshold,
        mean: s.mean_abs > cfg.mean_threshold,
    })
}

/// Consensus emergency test with refractory and consecutive-intervention gates.
///
/// `steps_since_last_ultra` is the number of steps elapsed since the last
/// ultra-fast intervention; the gate requires it to exceed
/// `cfg.refractory_steps`. All comparisons are strict.
pub fn detect_emergency(
    a: &[f64],
    steps_since_last_ultra: u64,
    consecutive_ultra: u32,
    cfg: &RegulatorConfig,
) -> Result<bool> {
    let predicates = emergency_predicates(a, cfg)?;
    Ok(predicates.count() >= 2
        && steps_since_last_ultra > cfg.refractory_steps
        && consecutive_ultra < cfg.max_consecutive_ultra)
}

/// Neurons whose activity magnitude exceeds the suppression threshold.
pub fn suppression_mask(a: &[f64], cfg: &RegulatorConfig) -> Vec<bool> {
    a.iter()
        .map(|x| x.abs() > cfg.suppress_mask_threshold)
        .collect()
}

/// Scale overactive entries by `suppress_factor`, leave the rest alone.
pub fn suppress(a: &[f64], cfg: &RegulatorConfig) -> Vec<f64> {
    a.iter()
        .map(|&x| {
            if x.abs() > cfg.suppress_mask_threshold {
                x * cfg.suppress_factor
            } else {
                x
            }
        })
        .collect()
}
