//! Health assessment, adaptive learning rate, bounded enhancement estimate
//! and biological realism scoring.

use serde::{Deserialize, Serialize};

use crate::coordinator::InterventionLedger;
use crate::error::{MsthError, Result};
use crate::numerics::{stats, Mat};
use crate::regulators::Scale;

/// Learning rate that the health product modulates.
pub const BASE_LR: f64 = 0.001;

/// Decay of the exponential moving average behind the stability factor.
pub const STABILITY_DECAY: f64 = 0.95;

pub const EXPECTED_RATIOS: [f64; 4] = [0.10, 0.35, 0.40, 0.15];
pub const REALISM_WEIGHTS: [f64; 4] = [3.0, 0.3, 0.4, 0.4];
pub const COORDINATION_BONUS: f64 = 0.1;
pub const REALISM_FLOOR: f64 = 0.1;
pub const REALISM_CEILING: f64 = 0.99;
pub const ULTRA_RATIO_LIMIT: f64 = 0.20;
pub const ULTRA_EXCESS_PENALTY: f64 = 1.0;
pub const DEFAULT_MIN_INTERVENTIONS: u64 = 10;

const NOISE_CAP: f64 = 0.02;
const EFFICIENCY_CAP: f64 = 0.015;
const RECOVERY_CAP: f64 = 0.015;
const TOTAL_CAP: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HealthReport {
    pub h_activity: f64,
    pub h_calcium: f64,
    pub h_weights: f64,
    pub h_system: f64,
    pub adaptive_lr: f64,
    pub h_stability: f64,
}

impl HealthReport {
    pub fn perfect() -> Self {
        HealthReport {
            h_activity: 1.0,
            h_calcium: 1.0,
            h_weights: 1.0,
            h_system: 1.0,
            adaptive_lr: BASE_LR,
            h_stability: 1.0,
        }
    }

    /// Component-wise mean of several layer reports; lr fields are taken
    /// from the first report.
    pub fn average(reports: &[HealthReport]) -> Option<HealthReport> {
        let first = *reports.first()?;
        let n = reports.len() as f64;
        let avg = |f: fn(&HealthReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(HealthReport {
            h_activity: avg(|r| r.h_activity),
            h_calcium: avg(|r| r.h_calcium),
            h_weights: avg(|r| r.h_weights),
            h_system: avg(|r| r.h_system),
            ..first
        })
    }
}

fn clamp01(x: f64) -> f64 {
    x.clamp(0.0, 1.0)
}

/// Activity, calcium and weight health of one layer. Each component is
/// clamped to [0, 1] before averaging. The learning-rate fields are left at
/// their neutral values.
pub fn assess_health(a_level: f64, c: &[f64], w: &Mat) -> Result<HealthReport> {
    let c_stats = stats(c)?;
    let h_activity = clamp01(1.0 - (a_level - 1.0).abs());
    let h_calcium = clamp01(1.0 - c_stats.std);
    let h_weights = clamp01(1.0 / (1.0 + w.stats().std));
    Ok(HealthReport {
        h_activity,
        h_calcium,
        h_weights,
        h_system: (h_activity + h_calcium + h_weights) / 3.0,
        adaptive_lr: BASE_LR,
        h_stability: 1.0,
    })
}

pub fn adaptive_lr(h_current: f64, h_stability: f64) -> Result<f64> {
    scaled_lr(BASE_LR, h_current, h_stability)
}

/// Health-modulated learning rate around an arbitrary base rate.
pub fn scaled_lr(base_lr: f64, h_current: f64, h_stability: f64) -> Result<f64> {
    for h in [h_current, h_stability] {
        if !(0.0..=1.0).contains(&h) {
            return Err(MsthError::InvalidHealth(h));
        }
    }
    Ok(base_lr * h_current * h_stability)
}

/// EMA of the system-health history, seeded by its first entry.
pub fn stability_factor(history: &[f64]) -> f64 {
    let mut tracker = StabilityTracker::default();
    for &h in history {
        tracker.push(h);
    }
    tracker.value()
}

/// Streaming form of [`stability_factor`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StabilityTracker {
    ema: Option<f64>,
}

impl StabilityTracker {
    pub fn push(&mut self, h_system: f64) {
        self.ema = Some(match self.ema {
            None => h_system,
            Some(prev) => STABILITY_DECAY * prev + (1.0 - STABILITY_DECAY) * h_system,
        });
    }

    pub fn value(&self) -> f64 {
        clamp01(self.ema.unwrap_or(1.0))
    }
}

/// Capped estimate of coordination benefits. Telemetry only; it is never
/// folded into any measured loss or accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementEstimate {
    pub noise_reduction: f64,
    pub regulatory_efficiency: f64,
    pub recovery_speed: f64,
    pub total: f64,
}

impl EnhancementEstimate {
    pub fn from_components(noise: f64, efficiency: f64, recovery: f64) -> Self {
        let noise_reduction = noise.clamp(0.0, NOISE_CAP);
        let regulatory_efficiency = efficiency.clamp(0.0, EFFICIENCY_CAP);
        let recovery_speed = recovery.clamp(0.0, RECOVERY_CAP);
        EnhancementEstimate {
            noise_reduction,
            regulatory_efficiency,
            recovery_speed,
            total: (noise_reduction + regulatory_efficiency + recovery_speed).min(TOTAL_CAP),
        }
    }
}

pub fn enhancement_estimate(
    ledger: &InterventionLedger,
    steps: u64,
) -> Result<EnhancementEstimate> {
    if steps == 0 {
        return Err(MsthError::EmptyRun);
    }
    let per_step = |count: u64| count as f64 / steps as f64;
    Ok(EnhancementEstimate::from_components(
        NOISE_CAP * per_step(ledger.count(Scale::Fast)),
        EFFICIENCY_CAP * per_step(ledger.coordination_events),
        RECOVERY_CAP * per_step(ledger.count(Scale::Medium)),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealismReport {
    pub actual_ratios: [f64; 4],
    pub expected_ratios: [f64; 4],
    pub weights: [f64; 4],
    pub coord_bonus: f64,
    pub raw: f64,
    pub score: f64,
}

/// Weighted-deviation score before the ultra-fast penalty and clamping.
pub fn raw_realism(ratios: &[f64; 4], coord_bonus: f64) -> f64 {
    let deviation: f64 = ratios
        .iter()
        .zip(EXPECTED_RATIOS)
        .zip(REALISM_WEIGHTS)
        .map(|((r, e), w)| w * (r - e).abs())
        .sum();
    1.0 - deviation + coord_bonus
}

pub fn realism_score(counts: [u64; 4], coordination_events: u64) -> RealismReport {
    realism_score_with(counts, coordination_events, DEFAULT_MIN_INTERVENTIONS)
}

pub fn realism_score_with(
    counts: [u64; 4],
    coordination_events: u64,
    min_interventions: u64,
) -> RealismReport {
    let total: u64 = counts.iter().sum();
    let ratios = if total == 0 {
        [0.0; 4]
    } else {
        counts.map(|c| c as f64 / total as f64)
    };
    let coord_bonus = if coordination_events > 0 {
        COORDINATION_BONUS
    } else {
        0.0
    };
    let mut report = RealismReport {
        actual_ratios: ratios,
        expected_ratios: EXPECTED_RATIOS,
        weights: REALISM_WEIGHTS,
        coord_bonus,
        raw: REALISM_FLOOR,
        score: REALISM_FLOOR,
    };
    if total < min_interventions.max(1) {
        return report;
    }
    let mut raw = raw_realism(&ratios, coord_bonus);
    if ratios[Scale::UltraFast.index()] > ULTRA_RATIO_LIMIT {
        raw -= ULTRA_EXCESS_PENALTY;
    }
    report.raw = raw;
    report.score = raw.clamp(REALISM_FLOOR, REALISM_CEILING);
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regulators::InterventionOutcome;
    use proptest::prelude::*;

    #[test]
    fn perfect_health() {
        let w = Mat::from_vec(2, 2, vec![0.3; 4]).unwrap();
        let r = assess_health(1.0, &[0.5, 0.5], &w).unwrap();
        assert_eq!(
            (r.h_activity, r.h_calcium, r.h_weights, r.h_system),
            (1.0, 1.0, 1.0, 1.0)
        );
    }

    #[test]
    fn weight_health_at_unit_std() {
        let w = Mat::from_vec(1, 2, vec![1.0, -1.0]).unwrap();
        let r = assess_health(1.0, &[0.5], &w).unwrap();
        assert_eq!(r.h_weights, 0.5);
    }

    #[test]
    fn activity_health_clamped() {
        let w = Mat::zeros(1, 1);
        let r = assess_health(2.5, &[0.5], &w).unwrap();
        assert_eq!(r.h_activity, 0.0);
        assert!(assess_health(1.0, &[], &w).is_err());
    }

    #[test]
    fn lr_examples() {
        assert_eq!(adaptive_lr(1.0, 1.0).unwrap(), 0.001);
        assert!((adaptive_lr(0.5, 0.5).unwrap() - 0.00025).abs() < 1e-15);
        assert_eq!(adaptive_lr(0.0, 0.7).unwrap(), 0.0);
        assert!(matches!(
            adaptive_lr(1.2, 1.0),
            Err(MsthError::InvalidHealth(_))
        ));
        assert!(adaptive_lr(0.5, -0.1).is_err());
    }

    #[test]
    fn stability_examples() {
        assert_eq!(stability_factor(&[]), 1.0);
        assert!((stability_factor(&[0.8; 200]) - 0.8).abs() < 1e-6);
        assert!((stability_factor(&[1.0, 0.0]) - 0.95).abs() < 1e-12);
    }

    #[test]
    fn enhancement_examples() {
        let empty = InterventionLedger::new();
        let e = enhancement_estimate(&empty, 10).unwrap();
        assert_eq!(
            (
                e.noise_reduction,
                e.regulatory_efficiency,
                e.recovery_speed,
                e.total
            ),
            (0.0, 0.0, 0.0, 0.0)
        );
        assert!(matches!(
            enhancement_estimate(&empty, 0),
            Err(MsthError::EmptyRun)
        ));

        let mut l = InterventionLedger::new();
        for step in 0..50 {
            l.record(
                step,
                &[InterventionOutcome::fired(Scale::Fast, [("e", 0.1)])],
            );
        }
        assert_eq!(enhancement_estimate(&l, 50).unwrap().noise_reduction, 0.02);

        let e = EnhancementEstimate::from_components(0.02, 0.015, 0.015);
        assert!((e.total - 0.05).abs() < 1e-15);
    }

    #[test]
    fn realism_examples() {
        let r = realism_score([10, 35, 40, 15], 1);
        assert!((r.raw - 1.1).abs() < 1e-12);
        assert_eq!(r.score, 0.99);

        // weighted deviations: 3.0*0.4 + 0.3*0.05 + 0.4*0.25 + 0.4*0.10
        let r = realism_score([50, 30, 15, 5], 0);
        assert!((raw_realism(&r.actual_ratios, 0.0) - (-0.355)).abs() < 1e-12);
        assert_eq!(r.score, 0.1);

        assert_eq!(realism_score([0, 0, 0, 0], 5).score, 0.1);
        assert_eq!(realism_score([0, 3, 3, 2], 5).score, 0.1);
    }

    proptest! {
        #[test]
        fn realism_bounded(counts in prop::array::uniform4(0u64..10_000), coord in 0u64..3) {
            let r = realism_score(counts, coord);
            prop_assert!((0.1..=0.99).contains(&r.score));
            prop_assert!(r.actual_ratios.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn realism_peaks_at_expected(k in 0usize..4, delta in 0.05f64..0.5, bonus in prop::bool::ANY) {
            let b = if bonus { 0.1 } else { 0.0 };
            let base = raw_realism(&EXPECTED_RATIOS, b);
            let mut r = EXPECTED_RATIOS;
            r[k] += delta;
            let s: f64 = r.iter().sum();
            let r = r.map(|x| x / s);
            prop_assert!(raw_realism(&r, b) < base);
        }

        #[test]
        fn adaptive_lr_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, d in 0.0f64..=1.0) {
            let a2 = (a + d).min(1.0);
            prop_assert!(adaptive_lr(a2, b).unwrap() >= adaptive_lr(a, b).unwrap());
            prop_assert!(adaptive_lr(b, a2).unwrap() >= adaptive_lr(b, a).unwrap());
        }

        #[test]
        fn enhancement_respects_caps(fast in 0u64..500, coord in 0u64..500, medium in 0u64..500, steps in 1u64..300) {
            let mut l = InterventionLedger::new();
            l.counts = [0, fast, medium, 0];
            l.coordination_events = coord;
            let e = enhancement_estimate(&l, steps).unwrap();
            prop_assert!(e.total <= 0.05 + 1e-15);
            prop_assert!(e.noise_reduction <= 0.02 && e.regulatory_efficiency <= 0.015 && e.recovery_speed <= 0.015);
        }

        #[test]
        fn health_components_in_unit_interval(
            a in -10.0f64..10.0,
            c in prop::collection::vec(0.0f64..=1.0, 1..8),
            w in prop::collection::vec(-20.0f64..20.0, 4),
        ) {
            let w = Mat::from_vec(2, 2, w).unwrap();
            let r = assess_health(a, &c, &w).unwrap();
            for h in [r.h_activity, r.h_calcium, r.h_weights, r.h_system] {
                prop_assert!((0.0..=1.0).contains(&h));
            }
        }
    }
}
