use proptest::prelude::*;

use msth::coordinator::{coordinate, update_emergency_counter, CoordinatorState, ScaleRequestSet};
use msth::harness::ExperimentSpec;
use msth::health::{assess_health, realism_score, scaled_lr};
use msth::network::{predict, Activation, Checkpoint, NetworkModel};
use msth::numerics::Mat;
use msth::regulators::{calcium_error, regulate_calcium, suppress, RegulatorConfig};

fn requests() -> impl Strategy<Value = ScaleRequestSet> {
    (any::<bool>(), any::<bool>(), any::<bool>(), any::<bool>()).prop_map(
        |(ultra, fast, medium, slow)| ScaleRequestSet {
            ultra,
            fast,
            medium,
            slow,
        },
    )
}

proptest! {
    #[test]
    fn suppression_never_amplifies(a in prop::collection::vec(-50.0f64..50.0, 1..32)) {
        let out = suppress(&a, &RegulatorConfig::default());
        for (x, y) in a.iter().zip(&out) {
            prop_assert!(y.abs() <= x.abs());
            prop_assert!(x * y >= 0.0);
        }
    }

    #[test]
    fn coordinator_only_removes_requests(fired in prop::collection::vec(any::<bool>(), 1..40), req in requests()) {
        let mut state = CoordinatorState::default();
        for f in fired {
            state = update_emergency_counter(&state, f);
            let asked = ScaleRequestSet { ultra: f, ..req };
            let got = coordinate(asked, &mut state, 3);
            prop_assert!(!got.fast || asked.fast);
            prop_assert!(!got.medium || asked.medium);
            prop_assert!(!got.slow || asked.slow);
            prop_assert_eq!(got.ultra, asked.ultra);
            prop_assert!(!state.override_active || (f && state.consecutive_ultra >= 3));
        }
    }

    #[test]
    fn calcium_pump_reduces_error(c in prop::collection::vec(0.0f64..1.0, 1..8)) {
        let cfg = RegulatorConfig::default();
        let before = calcium_error(&c, &cfg).unwrap();
        let (after, outcome) = regulate_calcium(&c, &cfg).unwrap();
        let now = calcium_error(&after, &cfg).unwrap();
        if outcome.fired {
            prop_assert!(now < before);
        } else {
            prop_assert_eq!(after, c);
        }
    }

    #[test]
    fn health_and_realism_stay_bounded(
        level in -10.0f64..10.0,
        c in prop::collection::vec(-2.0f64..2.0, 1..6),
        w in prop::collection::vec(-5.0f64..5.0, 1..12),
        counts in prop::array::uniform4(0u64..200),
        coord in 0u64..5,
    ) {
        let wm = Mat::from_vec(1, w.len(), w).unwrap();
        let h = assess_health(level, &c, &wm).unwrap();
        for v in [h.h_activity, h.h_calcium, h.h_weights, h.h_system] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let lr = scaled_lr(0.01, h.h_system, h.h_system).unwrap();
        prop_assert!((0.0..=0.01).contains(&lr));
        let r = realism_score(counts, coord).score;
        prop_assert!((0.1..=0.99).contains(&r));
    }

    #[test]
    fn checkpoint_preserves_predictions(seed in 0u64..1000, hidden in 1usize..10) {
        let model = NetworkModel::init(&[3, hidden, 2], Activation::Tanh, seed, 0.5).unwrap();
        let back = Checkpoint::from_json(&Checkpoint::from_model(&model, "p").to_json().unwrap())
            .unwrap()
            .to_model()
            .unwrap();
        let x = Mat::from_rows(&[vec![0.3, -1.0, 2.0]]).unwrap();
        prop_assert_eq!(predict(&model, &x).unwrap(), predict(&back, &x).unwrap());
    }

    #[test]
    fn config_text_round_trips(lr in 1e-5f64..1.0, n in 10usize..1000, hidden in prop::collection::vec(1usize..64, 1..4)) {
        let mut spec = ExperimentSpec::default();
        spec.train.lr = lr;
        spec.dataset.n = n;
        spec.hidden = hidden;
        let back = ExperimentSpec::from_text(&spec.to_text()).unwrap();
        prop_assert_eq!(back.config_hash(), spec.config_hash());
        prop_assert_eq!(back, spec);
    }
}
