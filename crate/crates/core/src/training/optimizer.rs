use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};
use crate::network::{GradientSet, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl OptimizerKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sgd" => Some(OptimizerKind::Sgd),
            "adam" => Some(OptimizerKind::Adam),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub kind: OptimizerKind,
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            kind: OptimizerKind::Adam,
            base_lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// SGD or Adam with L2 weight decay folded into the gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub settings: OptimizerSettings,
    pub t: u64,
    // per layer: weights then bias
    moments: Vec<(Moments, Moments)>,
}

impl OptimizerState {
    pub fn new(settings: OptimizerSettings, model: &NetworkModel) -> Self {
        let moments = model
            .layers
            .iter()
            .map(|l| {
                (
                    Moments::zeros(l.weights.len()),
                    Moments::zeros(l.bias.len()),
                )
            })
            .collect();
        OptimizerState {
            settings,
            t: 0,
            moments,
        }
    }

    pub fn step(&mut self, model: &mut NetworkModel, grads: &GradientSet, lr: f64) -> Result<()> {
        if grads.layers.len() != model.layers.len() || self.moments.len() != model.layers.len() {
            return Err(MsthError::shape(model.layers.len(), grads.layers.len()));
        }
        self.t += 1;
        let s = self.settings.clone();
        let t = self.t as i32;
        let bc1 = 1.0 - s.beta1.powi(t);
        let bc2 = 1.0 - s.beta2.powi(t);
        let update = |params: &mut [f64], grad: &[f64], mom: &mut Moments| {
            for i in 0..params.len() {
                let g = grad[i] + s.weight_decay * params[i];
                match s.kind {
                    OptimizerKind::Sgd => params[i] -= lr * g,
                    OptimizerKind::Adam => {
                        mom.m[i] = s.beta1 * mom.m[i] + (1.0 - s.beta1) * g;
                        mom.v[i] = s.beta2 * mom.v[i] + (1.0 - s.beta2) * g * g;
                        let m_hat = mom.m[i] / bc1;
                        let v_hat = mom.v[i] / bc2;
                        params[i] -= lr * m_hat / (v_hat.sqrt() + s.eps);
                    }
                }
            }
        };
        for ((layer, grad), (mw, mb)) in model
            .layers
            .iter_mut()
            .zip(&grads.layers)
            .zip(&mut self.moments)
        {
            if grad.dw.len() != layer.weights.len() || grad.db.len() != layer.bias.len() {
                return Err(MsthError::shape(layer.weights.len(), grad.dw.len()));
            }
            update(layer.weights.as_mut_slice(), grad.dw.as_slice(), mw);
            update(&mut layer.bias, &grad.db, mb);
        }
        Ok(())
    }
}
