use crate::numerics::{frobenius_norm, Mat};

use super::{InterventionOutcome, NeuronState, RegulatorConfig, Scale};

const WINDOW: usize = 3;

/// Mean of the last three performance entries, if there are three.
pub fn performance_window(state: &NeuronState) -> Option<f64> {
    let p = &state.perf_accumulator;
    if p.len() < WINDOW {
        return None;
    }
    Some(p[p.len() - WINDOW..].iter().sum::<f64>() / WINDOW as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StructuralTriggers {
    pub performance: bool,
    pub frobenius: bool,
    pub outlier: bool,
    pub instability: bool,
}

impl StructuralTriggers {
    pub fn evaluate(w: &Mat, state: &NeuronState, cfg: &RegulatorConfig) -> Self {
        let s = w.stats();
        StructuralTriggers {
            performance: performance_window(state).is_some_and(|p| p < cfg.perf_threshold),
            frobenius: frobenius_norm(w) > cfg.fro_threshold,
            outlier: s.max_abs > cfg.outlier_threshold,
            instability: s.std > cfg.wstd_threshold,
        }
    }

    pub fn any(&self) -> bool {
        self.performance || self.frobenius || self.outlier || self.instability
    }
}

/// Conservative global shrinkage when any structural trigger holds.
pub fn structural_step(
    w: &Mat,
    state: &NeuronState,
    cfg: &RegulatorConfig,
) -> (Mat, InterventionOutcome) {
    let t = StructuralTriggers::evaluate(w, state, cfg);
    if !t.any() {
        return (w.clone(), InterventionOutcome::quiet(Scale::Slow));
    }
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let outcome = InterventionOutcome::fired(
        Scale::Slow,
        [
            ("factor", cfg.structural_factor),
            ("trigger_performance", flag(t.performance)),
            ("trigger_frobenius", flag(t.frobenius)),
            ("trigger_outlier", flag(t.outlier)),
            ("trigger_instability", flag(t.instability)),
        ],
    );
    (w.scaled(cfg.structural_factor), outcome)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> RegulatorConfig {
        RegulatorConfig::default()
    }

    fn with_perf(p: &[f64]) -> NeuronState {
        let mut s = NeuronState::new(2, 0.5);
        s.perf_accumulator = p.to_vec();
        s
    }

    #[test]
    fn window_examples() {
        assert_eq!(performance_window(&with_perf(&[])), None);
        assert_eq!(performance_window(&with_perf(&[1.0, 1.0])), None);
        let p = performance_window(&with_perf(&[1.0, 1.1, 1.2, 0.9, 1.0])).unwrap();
        assert!((p - (1.2 + 0.9 + 1.0) / 3.0).abs() < 1e-12);
        assert!((p - 1.0333).abs() < 1e-4);
    }

    #[test]
    fn performance_trigger_is_strict() {
        let w = Mat::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.1]]).unwrap();
        let s = with_perf(&[1.05, 1.05, 1.05]);
        let t = StructuralTriggers::evaluate(&w, &s, &cfg());
        assert!(!t.performance);
        let (out, o) = structural_step(&w, &s, &cfg());
        assert!(!o.fired);
        assert_eq!(out, w);
    }

    #[test]
    fn tame_weights_good_performance_unchanged() {
        let w = Mat::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.1]]).unwrap();
        let (out, o) = structural_step(&w, &with_perf(&[2.0, 2.0, 2.0]), &cfg());
        assert!(!o.fired);
        assert_eq!(out, w);
    }

    #[test]
    fn large_diagonal_fires_three_triggers() {
        let w = Mat::from_rows(&[vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap();
        let (out, o) = structural_step(&w, &with_perf(&[]), &cfg());
        assert!(o.fired);
        assert_eq!(o.detail["trigger_performance"], 0.0);
        assert_eq!(o.detail["trigger_frobenius"], 1.0);
        assert_eq!(o.detail["trigger_outlier"], 1.0);
        assert_eq!(o.detail["trigger_instability"], 1.0);
        assert_eq!(out.get(0, 0), 9.99);
        assert_eq!(out.get(0, 1), 0.0);
    }

    #[test]
    fn stalled_performance_fires() {
        let w = Mat::from_rows(&[vec![0.1, 0.1], vec![0.1, 0.1]]).unwrap();
        let (_, o) = structural_step(&w, &with_perf(&[1.0, 1.0, 1.0]), &cfg());
        assert!(o.fired);
        assert_eq!(o.detail["trigger_performance"], 1.0);
    }

    proptest! {
        #[test]
        fn fired_step_scales_norm_and_keeps_signs(data in prop::collection::vec(-5.0f64..5.0, 4)) {
            let w = Mat::from_vec(2, 2, data).unwrap();
            let (out, o) = structural_step(&w, &with_perf(&[1.0, 1.0, 1.0]), &cfg());
            prop_assert!(o.fired);
            let before = frobenius_norm(&w);
            prop_assert!((frobenius_norm(&out) - 0.999 * before).abs() <= 1e-12 * before.max(1e-300));
            for (a, b) in w.as_slice().iter().zip(out.as_slice()) {
                prop_assert!(a.signum() == b.signum() || *a == 0.0);
            }
        }
    }
}
