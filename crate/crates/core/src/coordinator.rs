//! Cross-scale coordination, intervention ledger and regulatory FLOP
//! accounting.
//!
//! All regulators run in parallel by default. When the ultra-fast regulator
//! fires and has done so for `max_consecutive_ultra` consecutive steps
//! (counting the current one), every other scale is held back for that step.
//! There is no latching: the override is re-evaluated every step.

use serde::{Deserialize, Serialize};

use crate::regulators::{InterventionOutcome, Scale};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoordinatorState {
    pub consecutive_ultra: u32,
    pub steps_since_last_ultra: u64,
    pub override_active: bool,
    pub step_counter: u64,
}

impl Default for CoordinatorState {
    fn default() -> Self {
        CoordinatorState {
            consecutive_ultra: 0,
            // nothing has fired yet, so the refractory gate starts open
            steps_since_last_ultra: u64::MAX,
            override_active: false,
            step_counter: 0,
        }
    }
}

impl CoordinatorState {
    /// Steps elapsed between the last ultra-fast intervention and the
    /// step about to run.
    pub fn elapsed_since_ultra(&self) -> u64 {
        self.steps_since_last_ultra.saturating_add(1)
    }
}

/// Emergency counter transition: increments on an ultra-fast intervention,
/// resets to zero otherwise.
pub fn update_emergency_counter(state: &CoordinatorState, ultra_fired: bool) -> CoordinatorState {
    let mut next = state.clone();
    if ultra_fired {
        next.consecutive_ultra = state.consecutive_ultra.saturating_add(1);
        next.steps_since_last_ultra = 0;
    } else {
        next.consecutive_ultra = 0;
        next.steps_since_last_ultra = state.steps_since_last_ultra.saturating_add(1);
        next.override_active = false;
    }
    next
}

/// Which scales want to act this step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScaleRequestSet {
    pub ultra: bool,
    pub fast: bool,
    pub medium: bool,
    pub slow: bool,
}

impl ScaleRequestSet {
    pub fn contains(&self, scale: Scale) -> bool {
        match scale {
            Scale::UltraFast => self.ultra,
            Scale::Fast => self.fast,
            Scale::Medium => self.medium,
            Scale::Slow => self.slow,
        }
    }

    pub fn only_ultra() -> Self {
        ScaleRequestSet {
            ultra: true,
            ..Default::default()
        }
    }
}

/// Apply the override rule. `state.consecutive_ultra` must already include
/// the current step's ultra-fast intervention.
pub fn coordinate(
    requests: ScaleRequestSet,
    state: &mut CoordinatorState,
    threshold: u32,
) -> ScaleRequestSet {
    if requests.ultra && state.consecutive_ultra >= threshold {
        state.override_active = true;
        ScaleRequestSet::only_ultra()
    } else {
        state.override_active = false;
        requests
    }
}

/// Fixed per-element cost model for regulator work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlopKind {
    /// four predicates over n activations
    Detection,
    /// mask and multiply over n activations
    Suppression,
    /// calcium error over n neurons
    CalciumCheck,
    /// sigmoid pump over n neurons
    CalciumPump,
    /// stats and scaling over r*c weights
    MediumScale,
    /// trigger evaluation and scaling over r*c weights
    Structural,
}

impl FlopKind {
    pub fn cost_per_element(self) -> u64 {
        match self {
            FlopKind::Detection => 8,
            FlopKind::Suppression => 3,
            FlopKind::CalciumCheck => 2,
            FlopKind::CalciumPump => 9,
            FlopKind::MediumScale => 2,
            FlopKind::Structural => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub step: u64,
    pub scale: Scale,
    pub layer: Option<usize>,
    pub detail: std::collections::BTreeMap<String, f64>,
}

/// Per-scale intervention counts, timeline and regulator FLOPs of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterventionLedger {
    pub counts: [u64; 4],
    pub timeline: Vec<LedgerRecord>,
    pub coordination_events: u64,
    pub regulator_flops: u64,
    pub steps_recorded: u64,
}

impl InterventionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Log one step's outcomes. Fired outcomes are appended in scale order,
    /// then layer order.
    pub fn record(&mut self, step: u64, outcomes: &[InterventionOutcome]) {
        self.steps_recorded += 1;
        let mut fired: Vec<&InterventionOutcome> = outcomes.iter().filter(|o| o.fired).collect();
        fired.sort_by_key(|o| (o.scale, o.layer));
        let mut scales_fired = [false; 4];
        for o in fired {
            self.counts[o.scale.index()] += 1;
            scales_fired[o.scale.index()] = true;
            self.timeline.push(LedgerRecord {
                step,
                scale: o.scale,
                layer: o.layer,
                detail: o.detail.clone(),
            });
        }
        if scales_fired.iter().filter(|&&b| b).count() >= 2 {
            self.coordination_events += 1;
        }
    }

    pub fn charge_flops(&mut self, kind: FlopKind, n_elements: usize) {
        self.regulator_flops += kind.cost_per_element() * n_elements as u64;
    }

    pub fn count(&self, scale: Scale) -> u64 {
        self.counts[scale.index()]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Share of each scale in all interventions, `None` when nothing fired.
    pub fn ratios(&self) -> Option<[f64; 4]> {
        let total = self.total();
        if total == 0 {
            return None;
        }
        Some(self.counts.map(|c| c as f64 / total as f64))
    }

    pub fn summary(&self) -> LedgerSummary {
        LedgerSummary {
            counts: self.counts,
            ratios: self.ratios().unwrap_or([0.0; 4]),
            coordination_events: self.coordination_events,
            regulator_flops: self.regulator_flops,
        }
    }
}

/// The serialized view of a ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub counts: [u64; 4],
    pub ratios: [f64; 4],
    pub coordination_events: u64,
    pub regulator_flops: u64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn with_n(n: u32) -> CoordinatorState {
        CoordinatorState {
            consecutive_ultra: n,
            ..Default::default()
        }
    }

    #[test]
    fn counter_increments_and_resets() {
        assert_eq!(
            update_emergency_counter(&with_n(0), true).consecutive_ultra,
            1
        );
        assert_eq!(
            update_emergency_counter(&with_n(5), false).consecutive_ultra,
            0
        );
        let mut s = with_n(0);
        for _ in 0..3 {
            s = update_emergency_counter(&s, true);
        }
        assert_eq!(s.consecutive_ultra, 3);
        assert_eq!(s.steps_since_last_ultra, 0);
        let s = update_emergency_counter(&s, false);
        assert_eq!(s.steps_since_last_ultra, 1);
        assert_eq!(s.elapsed_since_ultra(), 2);
    }

    #[test]
    fn override_restricts_to_ultra() {
        let all = ScaleRequestSet {
            ultra: true,
            fast: true,
            medium: true,
            slow: false,
        };
        let mut s = with_n(3);
        assert_eq!(coordinate(all, &mut s, 3), ScaleRequestSet::only_ultra());
        assert!(s.override_active);
    }

    #[test]
    fn no_ultra_request_means_no_override() {
        let req = ScaleRequestSet {
            fast: true,
            medium: true,
            ..Default::default()
        };
        let mut s = with_n(7);
        assert_eq!(coordinate(req, &mut s, 3), req);
        assert!(!s.override_active);
    }

    #[test]
    fn below_threshold_is_permissive() {
        let req = ScaleRequestSet {
            ultra: true,
            slow: true,
            ..Default::default()
        };
        let mut s = with_n(2);
        assert_eq!(coordinate(req, &mut s, 3), req);
    }

    #[test]
    fn parallelism_recovers_after_quiet_step() {
        let mut s = with_n(3);
        s.override_active = true;
        let mut s = update_emergency_counter(&s, false);
        assert_eq!(s.consecutive_ultra, 0);
        let req = ScaleRequestSet {
            fast: true,
            medium: true,
            slow: true,
            ultra: false,
        };
        assert_eq!(coordinate(req, &mut s, 3), req);
    }

    #[test]
    fn ledger_counts_coordination_events() {
        let mut l = InterventionLedger::new();
        l.record(1, &[InterventionOutcome::quiet(Scale::Fast)]);
        assert_eq!(l.total(), 0);
        assert_eq!(l.steps_recorded, 1);
        l.record(
            2,
            &[
                InterventionOutcome::fired(Scale::Medium, [("factor", 0.996)]),
                InterventionOutcome::fired(Scale::Fast, [("calcium_error", 0.2)]),
            ],
        );
        assert_eq!(l.count(Scale::Fast), 1);
        assert_eq!(l.count(Scale::Medium), 1);
        assert_eq!(l.coordination_events, 1);
        assert_eq!(l.timeline[0].scale, Scale::Fast);
        assert_eq!(l.timeline[1].scale, Scale::Medium);
    }

    #[test]
    fn same_scale_on_two_layers_is_not_coordination() {
        let mut l = InterventionLedger::new();
        l.record(
            1,
            &[
                InterventionOutcome::fired(Scale::Fast, [("e", 0.1)]).on_layer(1),
                InterventionOutcome::fired(Scale::Fast, [("e", 0.1)]).on_layer(0),
            ],
        );
        assert_eq!(l.count(Scale::Fast), 2);
        assert_eq!(l.coordination_events, 0);
        assert_eq!(l.timeline[0].layer, Some(0));
    }

    #[test]
    fn hundred_fast_steps() {
        let mut l = InterventionLedger::new();
        for step in 1..=100 {
            l.record(
                step,
                &[InterventionOutcome::fired(Scale::Fast, [("e", 0.1)])],
            );
        }
        assert_eq!(l.count(Scale::Fast), 100);
    }

    #[test]
    fn flop_cost_model() {
        let mut l = InterventionLedger::new();
        l.charge_flops(FlopKind::Suppression, 4);
        assert_eq!(l.regulator_flops, 12);

        let mut l = InterventionLedger::new();
        l.charge_flops(FlopKind::Detection, 4);
        l.charge_flops(FlopKind::CalciumCheck, 4);
        assert_eq!(l.regulator_flops, 40);
        l.charge_flops(FlopKind::MediumScale, 16);
        l.charge_flops(FlopKind::Structural, 16);
        assert_eq!(l.regulator_flops, 40 + 32 + 64);
    }

    proptest! {
        #[test]
        fn ratios_sum_to_one(fired in prop::collection::vec((0usize..4, any::<bool>()), 1..60)) {
            let mut l = InterventionLedger::new();
            for (step, (s, f)) in fired.iter().enumerate() {
                let o = if *f {
                    InterventionOutcome::fired(Scale::ALL[*s], [("x", 1.0)])
                } else {
                    InterventionOutcome::quiet(Scale::ALL[*s])
                };
                l.record(step as u64, &[o]);
            }
            prop_assert_eq!(l.total() as usize, l.timeline.len());
            if let Some(r) = l.ratios() {
                prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
