use crate::error::{MsthError, Result};
use crate::numerics::{mean_abs, Mat};

use super::{InterventionOutcome, NeuronState, RegulatorConfig, Scale};

/// Integrate one step of activity. The activity level of a step is the mean
/// absolute activation of the layer.
pub fn accumulate_activity(mut state: NeuronState, a: &[f64]) -> NeuronState {
    state.activity_accum += mean_abs(a);
    state.accum_steps += 1;
    state
}

/// Multiplicative synaptic scaling from the accumulated activity rate.
///
/// Above `downscale_trigger * target` the whole matrix is scaled by
/// `downscale_factor`, below `upscale_trigger * target` by `upscale_factor`.
/// Inside the dead band a stability correction downscales when the weight
/// spread or the largest weight exceeds the structural thresholds. The
/// accumulator is reset afterwards in every case.
pub fn medium_scale(
    w: &Mat,
    state: &mut NeuronState,
    cfg: &RegulatorConfig,
) -> Result<(Mat, InterventionOutcome)> {
    let rate = state
        .activity_rate()
        .ok_or(MsthError::NoAccumulatedActivity)?;
    state.activity_accum = 0.0;
    state.accum_steps = 0;

    let high = cfg.downscale_trigger * cfg.activity_target;
    let low = cfg.upscale_trigger * cfg.activity_target;
    let (factor, reason) = if rate > high {
        (Some(cfg.downscale_factor), 1.0)
    } else if rate < low {
        (Some(cfg.upscale_factor), 2.0)
    } else {
        let s = w.stats();
        if s.std > cfg.wstd_threshold || s.max_abs > cfg.outlier_threshold {
            (Some(cfg.downscale_factor), 3.0)
        } else {
            (None, 0.0)
        }
    };

    Ok(match factor {
        Some(f) => (
            w.scaled(f),
            InterventionOutcome::fired(
                Scale::Medium,
                [("activity_rate", rate), ("factor", f), ("reason", reason)],
            ),
        ),
        None => (w.clone(), InterventionOutcome::quiet(Scale::Medium)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cfg() -> RegulatorConfig {
        RegulatorConfig::default()
    }

    fn tame() -> Mat {
        Mat::from_rows(&[vec![0.1, -0.1], vec![0.05, 0.2]]).unwrap()
    }

    fn state_with_rate(rate: f64) -> NeuronState {
        let mut s = NeuronState::new(2, 0.5);
        s.activity_accum = rate * 4.0;
        s.accum_steps = 4;
        s
    }

    #[test]
    fn accumulate_examples() {
        let s = accumulate_activity(NeuronState::new(2, 0.5), &[0.0, 0.0]);
        assert_eq!((s.activity_accum, s.accum_steps), (0.0, 1));

        let mut s = NeuronState::new(2, 0.5);
        s.activity_accum = 1.0;
        let s = accumulate_activity(s, &[2.0, 0.0]);
        assert_eq!((s.activity_accum, s.accum_steps), (2.0, 1));

        let mut s = NeuronState::new(2, 0.5);
        for _ in 0..3 {
            s = accumulate_activity(s, &[1.0, -1.0]);
        }
        assert_eq!((s.activity_accum, s.accum_steps), (3.0, 3));
    }

    #[test]
    fn dead_zone_leaves_tame_weights() {
        let mut s = state_with_rate(1.0);
        let (w, o) = medium_scale(&tame(), &mut s, &cfg()).unwrap();
        assert_eq!(w, tame());
        assert!(!o.fired);
        assert_eq!((s.activity_accum, s.accum_steps), (0.0, 0));
    }

    #[test]
    fn high_activity_downscales() {
        let mut s = state_with_rate(2.0);
        let (w, o) = medium_scale(&tame(), &mut s, &cfg()).unwrap();
        assert!(o.fired);
        assert_eq!(o.detail["factor"], 0.996);
        for (a, b) in w.as_slice().iter().zip(tame().as_slice()) {
            assert_eq!(*a, b * 0.996);
        }
    }

    #[test]
    fn low_activity_upscales() {
        let mut s = state_with_rate(0.5);
        let (w, o) = medium_scale(&tame(), &mut s, &cfg()).unwrap();
        assert!(o.fired);
        for (a, b) in w.as_slice().iter().zip(tame().as_slice()) {
            assert_eq!(*a, b * 1.004);
        }
    }

    #[test]
    fn stability_correction_inside_dead_band() {
        let wild = Mat::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.1]]).unwrap();
        let mut s = state_with_rate(1.0);
        let (w, o) = medium_scale(&wild, &mut s, &cfg()).unwrap();
        assert!(o.fired);
        assert_eq!(o.detail["reason"], 3.0);
        assert_eq!(w.get(0, 0), 2.0 * 0.996);
    }

    #[test]
    fn requires_accumulated_activity() {
        let mut s = NeuronState::new(2, 0.5);
        assert!(matches!(
            medium_scale(&tame(), &mut s, &cfg()),
            Err(MsthError::NoAccumulatedActivity)
        ));
    }

    proptest! {
        #[test]
        fn scaling_preserves_ratios(
            data in prop::collection::vec(-3.0f64..3.0, 6),
            rate in 0.0f64..4.0,
        ) {
            let w = Mat::from_vec(2, 3, data).unwrap();
            let mut s = state_with_rate(rate);
            let (scaled, _) = medium_scale(&w, &mut s, &cfg()).unwrap();
            for i in 0..6 {
                for j in 0..6 {
                    let (wi, wj) = (w.as_slice()[i], w.as_slice()[j]);
                    if wj != 0.0 {
                        let before = wi / wj;
                        let after = scaled.as_slice()[i] / scaled.as_slice()[j];
                        prop_assert!((after - before).abs() <= 1e-14 * before.abs().max(1e-300));
                    }
                }
                prop_assert!(w.as_slice()[i].signum() == scaled.as_slice()[i].signum());
            }
        }
    }
}
