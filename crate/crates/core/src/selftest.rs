//! Invariant checks runnable from the command line without the test
//! harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coordinator::InterventionLedger;
use crate::coordinator::{coordinate, update_emergency_counter, CoordinatorState, ScaleRequestSet};
use crate::harness::{execute, ExperimentSpec};
use crate::health::{adaptive_lr, realism_score, EXPECTED_RATIOS};
use crate::network::{
    backward, forward, predict, Activation, Checkpoint, LossKind, NetworkModel, Target,
};
use crate::numerics::Mat;
use crate::regulators::{
    calcium_error, detect_emergency, medium_scale, regulate_calcium, structural_step, suppress,
    NeuronState, RegulatorConfig,
};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: Option<String>,
}

impl Check {
    pub fn detail_suffix(&self) -> String {
        self.detail
            .as_ref()
            .map(|d| format!(" ({d})"))
            .unwrap_or_default()
    }
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(), String>) -> Check {
    match f() {
        Ok(()) => Check {
            name,
            passed: true,
            detail: None,
        },
        Err(d) => Check {
            name,
            passed: false,
            detail: Some(d),
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn emergency_boundaries() -> Result<(), String> {
    let cfg = RegulatorConfig::default();
    let at = |a: &[f64]| detect_emergency(a, 1, 0, &cfg).map_err(|e| e.to_string());
    // max 4, rate 0.25 and variance 3 all sit exactly on their strict boundaries
    ensure(!at(&[4.0, 0.0, 0.0, 0.0])?, "boundary vector fired")?;
    ensure(at(&[5.0, 5.0])?, "clear emergency missed")?;
    ensure(!at(&[0.5; 8])?, "quiet vector fired")?;
    ensure(
        !detect_emergency(&[5.0, 5.0], 1, 3, &cfg).map_err(|e| e.to_string())?,
        "consecutive cap ignored",
    )
}

fn suppression_factor() -> Result<(), String> {
    let out = suppress(&[5.0, 1.0, -3.0], &RegulatorConfig::default());
    ensure(
        out == vec![4.75, 1.0, -2.8499999999999996],
        format!("got {out:?}"),
    )
}

fn calcium_converges() -> Result<(), String> {
    let cfg = RegulatorConfig::default();
    for i in 0..=20 {
        for j in 0..=20 {
            let mut c = vec![i as f64 * 0.05, j as f64 * 0.05];
            let mut err = calcium_error(&c, &cfg).map_err(|e| e.to_string())?;
            let mut n = 0;
            while err > cfg.calcium_threshold {
                c = regulate_calcium(&c, &cfg).map_err(|e| e.to_string())?.0;
                let next = calcium_error(&c, &cfg).map_err(|e| e.to_string())?;
                ensure(next < err, format!("error not decreasing from {c:?}"))?;
                err = next;
                n += 1;
                ensure(n <= 500, "no convergence in 500 iterations")?;
            }
        }
    }
    Ok(())
}

fn weight_factors() -> Result<(), String> {
    let cfg = RegulatorConfig::default();
    let w = Mat::from_vec(1, 2, vec![0.5, -0.5]).map_err(|e| e.to_string())?;
    let mut s = NeuronState::new(1, 0.5);
    s.activity_accum = 2.0;
    s.accum_steps = 1;
    let (down, _) = medium_scale(&w, &mut s, &cfg).map_err(|e| e.to_string())?;
    ensure(down.get(0, 0) == 0.5 * 0.996, "medium downscale factor")?;
    s.activity_accum = 0.5;
    s.accum_steps = 1;
    let (up, _) = medium_scale(&w, &mut s, &cfg).map_err(|e| e.to_string())?;
    ensure(up.get(0, 0) == 0.5 * 1.004, "medium upscale factor")?;
    let big = Mat::from_vec(1, 1, vec![2.0]).map_err(|e| e.to_string())?;
    let (pruned, o) = structural_step(&big, &NeuronState::new(1, 0.5), &cfg);
    ensure(
        o.fired && pruned.get(0, 0) == 2.0 * 0.999,
        "structural factor",
    )
}

fn override_trace() -> Result<(), String> {
    let mut state = CoordinatorState::default();
    let all = ScaleRequestSet {
        ultra: true,
        fast: true,
        medium: true,
        slow: true,
    };
    let mut overrides = Vec::new();
    for fired in [true, true, true, true, false, true] {
        state = update_emergency_counter(&state, fired);
        let req = ScaleRequestSet {
            ultra: fired,
            ..all
        };
        let permitted = coordinate(req, &mut state, 3);
        overrides.push(permitted == ScaleRequestSet::only_ultra());
    }
    ensure(
        overrides == [false, false, true, true, false, false],
        format!("override trace {overrides:?}"),
    )
}

fn health_arithmetic() -> Result<(), String> {
    ensure(
        adaptive_lr(1.0, 1.0).map_err(|e| e.to_string())? == 0.001,
        "full-health lr",
    )?;
    ensure(
        adaptive_lr(1.5, 1.0).is_err(),
        "out-of-range health accepted",
    )?;
    let ideal = EXPECTED_RATIOS.map(|r| (r * 1000.0) as u64);
    let best = realism_score(ideal, 1).score;
    ensure((best - 0.99).abs() < 1e-12, format!("ideal realism {best}"))?;
    let floor = realism_score([100, 0, 0, 0], 0).score;
    ensure(floor == 0.1, format!("ultra-only realism {floor}"))
}

fn gradients_match() -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..10 {
        let model = NetworkModel::init(&[3, 5, 2], Activation::Tanh, seed, 0.5)
            .map_err(|e| e.to_string())?;
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = Target::Class(seed as usize % 2);
        let (_, g) = backward(&model, &x, &y, LossKind::CrossEntropy).map_err(|e| e.to_string())?;
        let h = 1e-5;
        for l in 0..model.layers.len() {
            for k in 0..model.layers[l].weights.len() {
                let mut p = model.clone();
                p.layers[l].weights.as_mut_slice()[k] += h;
                let mut m = model.clone();
                m.layers[l].weights.as_mut_slice()[k] -= h;
                let fp = backward(&p, &x, &y, LossKind::CrossEntropy)
                    .map_err(|e| e.to_string())?
                    .0;
                let fm = backward(&m, &x, &y, LossKind::CrossEntropy)
                    .map_err(|e| e.to_string())?
                    .0;
                let num = (fp - fm) / (2.0 * h);
                let ana = g.layers[l].dw.as_slice()[k];
                let rel = (num - ana).abs() / num.abs().max(ana.abs()).max(1e-8);
                ensure(
                    rel < 1e-4 || (num - ana).abs() < 1e-9,
                    format!("relative error {rel}"),
                )?;
            }
        }
    }
    Ok(())
}

fn bypass_equivalence() -> Result<(), String> {
    let mut model = NetworkModel::init(&[4, 8, 3], Activation::Relu, 3, 0.5)
        .map_err(|e| e.to_string())?
        .with_regulation(false);
    let x = Mat::from_rows(&[vec![1.0, -2.0, 0.5, 3.0], vec![0.2, 0.1, -0.7, 9.0]])
        .map_err(|e| e.to_string())?;
    let plain = predict(&model, &x).map_err(|e| e.to_string())?;
    let mut coord = CoordinatorState::default();
    let mut ledger = InterventionLedger::new();
    let out = forward(
        &mut model,
        &x,
        &mut coord,
        &mut ledger,
        &RegulatorConfig::default(),
        1,
        None,
    )
    .map_err(|e| e.to_string())?;
    ensure(
        out.pass.output() == &plain,
        "bypass output differs from plain forward",
    )
}

fn checkpoint_round_trip() -> Result<(), String> {
    let model =
        NetworkModel::init(&[3, 4, 2], Activation::Relu, 11, 0.5).map_err(|e| e.to_string())?;
    let text = Checkpoint::from_model(&model, "selftest")
        .to_json()
        .map_err(|e| e.to_string())?;
    let back = Checkpoint::from_json(&text).map_err(|e| e.to_string())?;
    ensure(
        back.to_model().map_err(|e| e.to_string())? == model,
        "model changed",
    )?;
    ensure(
        back.to_json().map_err(|e| e.to_string())? == text,
        "json changed",
    )
}

fn run_is_deterministic() -> Result<(), String> {
    let spec =
        ExperimentSpec::from_text("dataset.n = 80\ntrain.epochs = 2").map_err(|e| e.to_string())?;
    let a = execute(&spec).map_err(|e| e.to_string())?;
    let b = execute(&spec).map_err(|e| e.to_string())?;
    ensure(
        a.summary == b.summary && a.rows == b.rows,
        "two runs differ",
    )
}

pub fn run_all() -> Vec<Check> {
    vec![
        check("emergency predicate boundaries", emergency_boundaries),
        check("suppression factor 0.95", suppression_factor),
        check("calcium convergence on the 2-d grid", calcium_converges),
        check("medium and structural factors", weight_factors),
        check("emergency counter and override trace", override_trace),
        check("health and realism arithmetic", health_arithmetic),
        check("gradients match finite differences", gradients_match),
        check("regulation bypass equals plain forward", bypass_equivalence),
        check("checkpoint round trip", checkpoint_round_trip),
        check("runs are deterministic", run_is_deterministic),
    ]
}
