//! Dense feed-forward network whose layers carry homeostatic state.
//!
//! The training forward pass runs the ultra-fast and fast regulators on
//! each layer's activity; [`regulate_weights`] runs the medium-then-slow
//! cascade on the weights after the optimizer update. Regulation is
//! out-of-band for gradients: suppression gains enter the backward pass as
//! constants.

mod backprop;
mod checkpoint;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::coordinator::{
    coordinate, update_emergency_counter, CoordinatorState, FlopKind, InterventionLedger,
    ScaleRequestSet,
};
use crate::error::{MsthError, Result};
use crate::numerics::{all_finite, Mat};
use crate::regulators::{
    accumulate_activity, detect_emergency, emergency_predicates, medium_scale, regulate_calcium,
    structural_step, suppression_mask, update_calcium_from_activity, InterventionOutcome,
    NeuronState, RegulatorConfig, Scale,
};

pub use backprop::{backward, backward_pass, GradientSet, LayerGradient, LossKind, Target};
pub use checkpoint::{Checkpoint, LayerSnapshot, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "relu" => Some(Activation::Relu),
            "tanh" => Some(Activation::Tanh),
            "identity" | "linear" => Some(Activation::Identity),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }
}

/// Which regulators are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleSwitches {
    pub ultra: bool,
    pub fast: bool,
    pub medium: bool,
    pub slow: bool,
}

impl ScaleSwitches {
    pub const ALL: ScaleSwitches = ScaleSwitches {
        ultra: true,
        fast: true,
        medium: true,
        slow: true,
    };
    pub const NONE: ScaleSwitches = ScaleSwitches {
        ultra: false,
        fast: false,
        medium: false,
        slow: false,
    };

    /// Named ablation profiles: `none`, `single` (calcium homeostasis only),
    /// `dual_slow` (medium + slow), `fast_medium`, `full`.
    pub fn profile(name: &str) -> Option<Self> {
        let s = |ultra, fast, medium, slow| ScaleSwitches {
            ultra,
            fast,
            medium,
            slow,
        };
        Some(match name.trim().to_ascii_lowercase().as_str() {
            "none" | "off" => Self::NONE,
            "single" | "single_scale" => s(false, true, false, false),
            "dual_slow" => s(false, false, true, true),
            "fast_medium" => s(false, true, true, false),
            "full" | "all" => Self::ALL,
            _ => return None,
        })
    }

    pub fn is_on(&self, scale: Scale) -> bool {
        match scale {
            Scale::UltraFast => self.ultra,
            Scale::Fast => self.fast,
            Scale::Medium => self.medium,
            Scale::Slow => self.slow,
        }
    }

    pub fn any(&self) -> bool {
        self.ultra || self.fast || self.medium || self.slow
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomeostaticLayer {
    /// out x in
    pub weights: Mat,
    pub bias: Vec<f64>,
    pub state: NeuronState,
    pub activation: Activation,
}

impl HomeostaticLayer {
    pub fn new(
        weights: Mat,
        bias: Vec<f64>,
        activation: Activation,
        resting_calcium: f64,
    ) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(MsthError::shape(weights.rows(), bias.len()));
        }
        Ok(HomeostaticLayer {
            state: NeuronState::new(weights.rows(), resting_calcium),
            weights,
            bias,
            activation,
        })
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite() && all_finite(&self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub layers: Vec<HomeostaticLayer>,
    pub regulation_enabled: bool,
    pub scales: ScaleSwitches,
    pub coordination: bool,
}

impl NetworkModel {
    pub fn new(layers: Vec<HomeostaticLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(MsthError::EmptyInput);
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(MsthError::shape(pair[0].outputs(), pair[1].inputs()));
            }
        }
        Ok(NetworkModel {
            layers,
            regulation_enabled: true,
            scales: ScaleSwitches::ALL,
            coordination: true,
        })
    }

    /// Seeded Glorot-uniform initialisation, zero biases. `sizes` lists the
    /// input width followed by every layer width; `hidden` applies to all
    /// but the last layer, which is linear.
    pub fn init(
        sizes: &[usize],
        hidden: Activation,
        seed: u64,
        resting_calcium: f64,
    ) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(MsthError::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-s..=s))
                .collect();
            let act = if i + 2 == sizes.len() {
                Activation::Identity
            } else {
                hidden
            };
            layers.push(HomeostaticLayer::new(
                Mat::from_vec(fan_out, fan_in, data)?,
                vec![0.0; fan_out],
                act,
                resting_calcium,
            )?);
        }
        NetworkModel::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].outputs()
    }

    pub fn parameters_finite(&self) -> bool {
        self.layers.iter().all(HomeostaticLayer::is_finite)
    }

    pub fn with_regulation(mut self, enabled: bool) -> Self {
        self.regulation_enabled = enabled;
        self
    }

    fn scale_active(&self, scale: Scale) -> bool {
        self.regulation_enabled && self.scales.is_on(scale)
    }

    /// Scales that have a tick at `step` and are switched on.
    pub fn scheduled(&self, cfg: &RegulatorConfig, step: u64) -> ScaleRequestSet {
        let sch = &cfg.schedule;
        ScaleRequestSet {
            ultra: self.scale_active(Scale::UltraFast) && sch.is_ultra_tick(step),
            fast: self.scale_active(Scale::Fast) && sch.is_fast_tick(step),
            medium: self.scale_active(Scale::Medium) && sch.is_medium_tick(step),
            slow: self.scale_active(Scale::Slow) && sch.is_slow_tick(step),
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// input to each layer, batch x in
    pub inputs: Vec<Mat>,
    /// pre-activations, batch x out
    pub pre: Vec<Mat>,
    /// post-activations after regulation, batch x out
    pub post: Vec<Mat>,
    /// per-neuron suppression gains (1.0 where untouched)
    pub gains: Vec<Vec<f64>>,
}

impl ForwardPass {
    pub fn output(&self) -> &Mat {
        self.post.last().expect("at least one layer")
    }

    pub fn is_finite(&self) -> bool {
        self.pre.iter().chain(&self.post).all(Mat::is_finite)
    }
}

/// Result of a regulated training forward pass.
#[derive(Debug, Clone)]
pub struct RegulatedForward {
    pub pass: ForwardPass,
    pub outcomes: Vec<InterventionOutcome>,
    /// scales that were scheduled and allowed by the coordinator
    pub permitted: ScaleRequestSet,
    pub ultra_fired: bool,
}

/// Gaussian noise added to one layer's pre-activation.
pub struct PreActivationNoise<'a> {
    pub layer: usize,
    pub magnitude: f64,
    pub rng: &'a mut ChaCha8Rng,
}

fn affine(layer: &HomeostaticLayer, x: &Mat) -> Result<Mat> {
    if x.cols() != layer.inputs() {
        return Err(MsthError::shape(
            format!("{} input features", layer.inputs()),
            x.cols(),
        ));
    }
    let out = layer.outputs();
    let mut z = Mat::zeros(x.rows(), out);
    for b in 0..x.rows() {
        let row = layer.weights.matvec(x.row(b))?;
        for (j, (zj, bias)) in row.iter().zip(&layer.bias).enumerate() {
            z.set(b, j, zj + bias);
        }
    }
    Ok(z)
}

fn activate(layer: &HomeostaticLayer, z: &Mat, gains: &[f64]) -> Mat {
    let mut a = z.clone();
    for b in 0..z.rows() {
        for (j, v) in a.row_mut(b).iter_mut().enumerate() {
            *v = layer.activation.apply(*v) * gains[j];
        }
    }
    a
}

/// Per-neuron mean of `|z|` over the batch: the activity vector the
/// regulators observe.
pub fn batch_activity(z: &Mat) -> Vec<f64> {
    let n = z.rows() as f64;
    (0..z.cols())
        .map(|j| (0..z.rows()).map(|b| z.get(b, j).abs()).sum::<f64>() / n)
        .collect()
}

/// Unregulated forward pass. Does not touch any state.
pub fn forward_plain(model: &NetworkModel, x: &Mat) -> Result<ForwardPass> {
    let mut pass = ForwardPass {
        inputs: Vec::with_capacity(model.layers.len()),
        pre: Vec::with_capacity(model.layers.len()),
        post: Vec::with_capacity(model.layers.len()),
        gains: Vec::with_capacity(model.layers.len()),
    };
    let mut current = x.clone();
    for layer in &model.layers {
        let z = affine(layer, &current)?;
        let gains = vec![1.0; layer.outputs()];
        let a = activate(layer, &z, &gains);
        pass.inputs.push(current);
        pass.pre.push(z);
        current = a.clone();
        pass.post.push(a);
        pass.gains.push(gains);
    }
    Ok(pass)
}

/// Network output for a batch, no regulation.
pub fn predict(model: &NetworkModel, x: &Mat) -> Result<Mat> {
    Ok(forward_plain(model, x)?
        .post
        .pop()
        .expect("at least one layer"))
}

/// Training forward pass with the ultra-fast and fast regulators.
///
/// Per layer the emergency detector sees the batch-mean absolute
/// pre-activation; when it fires, neurons above the suppression threshold
/// have their activations scaled for the whole batch. After every layer has
/// been evaluated the emergency counter is advanced, the coordinator decides
/// which other scales may act, and on fast ticks calcium is integrated from
/// the regulated activity and pumped if permitted. Regulator FLOPs are
/// charged to `ledger`; outcomes are returned, not recorded.
pub fn forward(
    model: &mut NetworkModel,
    x: &Mat,
    coord: &mut CoordinatorState,
    ledger: &mut InterventionLedger,
    cfg: &RegulatorConfig,
    step: u64,
    mut noise: Option<PreActivationNoise<'_>>,
) -> Result<RegulatedForward> {
    if let Some(n) = &noise {
        if n.layer >= model.layers.len() {
            return Err(MsthError::InvalidLayer {
                index: n.layer,
                layers: model.layers.len(),
            });
        }
    }
    if !model.regulation_enabled && noise.is_none() {
        let pass = forward_plain(model, x)?;
        return Ok(RegulatedForward {
            pass,
            outcomes: Vec::new(),
            permitted: ScaleRequestSet::default(),
            ultra_fired: false,
        });
    }

    let scheduled = model.scheduled(cfg, step);
    let mut outcomes = Vec::new();
    let mut pass = ForwardPass {
        inputs: Vec::new(),
        pre: Vec::new(),
        post: Vec::new(),
        gains: Vec::new(),
    };
    let mut ultra_fired = false;
    let mut current = x.clone();
    let elapsed = coord.elapsed_since_ultra();
    let consecutive = coord.consecutive_ultra;

    for (idx, layer) in model.layers.iter_mut().enumerate() {
        let mut z = affine(layer, &current)?;
        if let Some(n) = noise
            .as_mut()
            .filter(|n| n.layer == idx && n.magnitude > 0.0)
        {
            let normal = Normal::new(0.0, n.magnitude)
                .map_err(|e| MsthError::Config(format!("activation noise: {e}")))?;
            for v in z.as_mut_slice() {
                *v += normal.sample(n.rng);
            }
        }
        let width = layer.outputs();
        let mut gains = vec![1.0; width];

        if model.regulation_enabled {
            let activity = batch_activity(&z);
            if scheduled.ultra {
                ledger.charge_flops(FlopKind::Detection, width);
                if detect_emergency(&activity, elapsed, consecutive, cfg)? {
                    ultra_fired = true;
                    let mask = suppression_mask(&activity, cfg);
                    let suppressed = mask.iter().filter(|&&m| m).count();
                    for (g, m) in gains.iter_mut().zip(&mask) {
                        if *m {
                            *g = cfg.suppress_factor;
                        }
                    }
                    ledger.charge_flops(FlopKind::Suppression, width);
                    let predicates = emergency_predicates(&activity, cfg)?;
                    outcomes.push(
                        InterventionOutcome::fired(
                            Scale::UltraFast,
                            [
                                ("predicates", predicates.count() as f64),
                                ("suppressed", suppressed as f64),
                            ],
                        )
                        .on_layer(idx),
                    );
                }
            }
            layer.state.activations = activity.iter().zip(&gains).map(|(a, g)| a * g).collect();
        }

        let a = activate(layer, &z, &gains);
        pass.inputs.push(current);
        pass.pre.push(z);
        current = a.clone();
        pass.post.push(a);
        pass.gains.push(gains);
    }

    if !model.regulation_enabled {
        return Ok(RegulatedForward {
            pass,
            outcomes,
            permitted: ScaleRequestSet::default(),
            ultra_fired,
        });
    }

    *coord = update_emergency_counter(coord, ultra_fired);
    coord.step_counter += 1;
    let requests = ScaleRequestSet {
        ultra: ultra_fired,
        ..scheduled
    };
    let permitted = if model.coordination {
        coordinate(requests, coord, cfg.max_consecutive_ultra)
    } else {
        coord.override_active = false;
        requests
    };

    for (idx, layer) in model.layers.iter_mut().enumerate() {
        let activity = std::mem::take(&mut layer.state.activations);
        let state = std::mem::replace(&mut layer.state, NeuronState::new(0, 0.0));
        layer.state = accumulate_activity(state, &activity);
        if permitted.fast {
            let width = layer.outputs();
            let c = update_calcium_from_activity(&layer.state.calcium, &activity, cfg)?;
            ledger.charge_flops(FlopKind::CalciumCheck, width);
            let (c, outcome) = regulate_calcium(&c, cfg)?;
            if outcome.fired {
                ledger.charge_flops(FlopKind::CalciumPump, width);
                outcomes.push(outcome.on_layer(idx));
            }
            layer.state.calcium = c;
        }
        layer.state.activations = activity;
    }

    Ok(RegulatedForward {
        pass,
        outcomes,
        permitted,
        ultra_fired,
    })
}

/// Medium-then-slow weight cascade for one training step. Runs only on the
/// corresponding schedule ticks, only for switched-on scales, and never
/// while the coordinator override is active.
pub fn regulate_weights(
    model: &mut NetworkModel,
    coord: &CoordinatorState,
    ledger: &mut InterventionLedger,
    cfg: &RegulatorConfig,
    step: u64,
) -> Result<Vec<InterventionOutcome>> {
    let mut outcomes = Vec::new();
    if !model.regulation_enabled || coord.override_active {
        return Ok(outcomes);
    }
    let scheduled = model.scheduled(cfg, step);
    for (idx, layer) in model.layers.iter_mut().enumerate() {
        let n = layer.weights.len();
        if scheduled.medium && layer.state.accum_steps > 0 {
            ledger.charge_flops(FlopKind::MediumScale, n);
            let (w, outcome) = medium_scale(&layer.weights, &mut layer.state, cfg)?;
            layer.weights = w;
            if outcome.fired {
                outcomes.push(outcome.on_layer(idx));
            }
        }
        if scheduled.slow {
            ledger.charge_flops(FlopKind::Structural, n);
            let (w, outcome) = structural_step(&layer.weights, &layer.state, cfg);
            layer.weights = w;
            if outcome.fired {
                outcomes.push(outcome.on_layer(idx));
            }
        }
    }
    Ok(outcomes)
}
