use crate::error::{MsthError, Result};
use crate::numerics::sigmoid;

use super::{InterventionOutcome, RegulatorConfig, Scale};

/// Mean absolute deviation of calcium from its set-point.
pub fn calcium_error(c: &[f64], cfg: &RegulatorConfig) -> Result<f64> {
    if c.is_empty() {
        return Err(MsthError::EmptyInput);
    }
    let total: f64 = c.iter().map(|x| (x - cfg.calcium_target).abs()).sum();
    Ok(total / c.len() as f64)
}

/// Sigmoid-gated pump. Fires only when the mean error exceeds the threshold,
/// then pulls every element toward the set-point.
pub fn regulate_calcium(
    c: &[f64],
    cfg: &RegulatorConfig,
) -> Result<(Vec<f64>, InterventionOutcome)> {
    let error = calcium_error(c, cfg)?;
    if error <= cfg.calcium_threshold {
        return Ok((c.to_vec(), InterventionOutcome::quiet(Scale::Fast)));
    }
    let regulated = c
        .iter()
        .map(|&ci| {
            let delta = ci - cfg.calcium_target;
            let pumped = ci - cfg.pump_efficiency * sigmoid(cfg.pump_gain * delta) * delta;
            pumped.clamp(0.0, 1.0)
        })
        .collect::<Vec<_>>();
    let after = calcium_error(&regulated, cfg)?;
    let outcome = InterventionOutcome::fired(
        Scale::Fast,
        [("calcium_error", error), ("calcium_error_after", after)],
    );
    Ok((regulated, outcome))
}

/// Maps non-negative activity into [0, 1).
pub fn squash(x: f64) -> f64 {
    x / (1.0 + x)
}

/// Leaky integration of squashed activity into the calcium proxy.
pub fn update_calcium_from_activity(
    c: &[f64],
    a: &[f64],
    cfg: &RegulatorConfig,
) -> Result<Vec<f64>> {
    if c.len() != a.len() {
        return Err(MsthError::shape(c.len(), a.len()));
    }
    let leak = cfg.calcium_leak;
    Ok(c.iter()
        .zip(a)
        .map(|(&ci, &ai)| (leak * ci + (1.0 - leak) * squash(ai.abs())).clamp(0.0, 1.0))
        .collect())
}
