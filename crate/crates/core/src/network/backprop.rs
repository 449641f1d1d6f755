use serde::{Deserialize, Serialize};

use crate::error::{MsthError, Result};
use crate::numerics::{all_finite, Mat};

use super::{forward_plain, ForwardPass, NetworkModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// `0.5 * sum((y_hat - y)^2)` per sample
    Mse,
    /// softmax cross-entropy per sample
    CrossEntropy,
}

impl LossKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mse" => Some(LossKind::Mse),
            "cross_entropy" | "ce" | "crossentropy" => Some(LossKind::CrossEntropy),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::CrossEntropy => "cross_entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Class(usize),
    Values(Vec<f64>),
}

impl Target {
    fn dense(&self, width: usize, loss: LossKind) -> Result<Vec<f64>> {
        match self {
            Target::Class(k) if *k < width => {
                let mut v = vec![0.0; width];
                v[*k] = 1.0;
                Ok(v)
            }
            Target::Class(k) => Err(MsthError::BadTarget(format!(
                "class {k} with {width} outputs"
            ))),
            Target::Values(v) if v.len() != width => Err(MsthError::BadTarget(format!(
                "target of length {} for {width} outputs",
                v.len()
            ))),
            Target::Values(v) if !all_finite(v) => {
                Err(MsthError::BadTarget("non-finite target".into()))
            }
            Target::Values(v) => {
                if loss == LossKind::CrossEntropy {
                    let ones = v.iter().filter(|&&x| x == 1.0).count();
                    let zeros = v.iter().filter(|&&x| x == 0.0).count();
                    if ones != 1 || ones + zeros != width {
                        return Err(MsthError::BadTarget(
                            "cross-entropy needs a one-hot target".into(),
                        ));
                    }
                }
                Ok(v.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub dw: Mat,
    pub db: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

impl GradientSet {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.dw.is_finite() && all_finite(&g.db))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Batch-mean loss and its gradient with respect to the network output.
fn loss_and_output_grad(output: &Mat, targets: &[Target], loss: LossKind) -> Result<(f64, Mat)> {
    if targets.len() != output.rows() {
        return Err(MsthError::shape(output.rows(), targets.len()));
    }
    let batch = output.rows() as f64;
    let width = output.cols();
    let mut total = 0.0;
    let mut grad = Mat::zeros(output.rows(), width);
    for (b, target) in targets.iter().enumerate() {
        let y = target.dense(width, loss)?;
        let y_hat = output.row(b);
        match loss {
            LossKind::Mse => {
                let mut l = 0.0;
                for j in 0..width {
                    let d = y_hat[j] - y[j];
                    l += d * d;
                    grad.set(b, j, d / batch);
                }
                total += 0.5 * l;
            }
            LossKind::CrossEntropy => {
                let p = softmax(y_hat);
                let max = y_hat.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + y_hat.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
                for j in 0..width {
                    total -= y[j] * (y_hat[j] - lse);
                    grad.set(b, j, (p[j] - y[j]) / batch);
                }
            }
        }
    }
    Ok((total / batch, grad))
}

/// Loss and gradients for a recorded forward pass. Suppression gains are
/// treated as constants.
pub fn backward_pass(
    model: &NetworkModel,
    pass: &ForwardPass,
    targets: &[Target],
    loss: LossKind,
) -> Result<(f64, GradientSet)> {
    let (value, mut delta) = loss_and_output_grad(pass.output(), targets, loss)?;
    let mut grads = Vec::with_capacity(model.layers.len());
    for (idx, layer) in model.layers.iter().enumerate().rev() {
        let z = &pass.pre[idx];
        let x = &pass.inputs[idx];
        let gains = &pass.gains[idx];
        let (rows, cols) = (layer.outputs(), layer.inputs());
        let mut dz = Mat::zeros(z.rows(), rows);
        for b in 0..z.rows() {
            for (j, gain) in gains.iter().enumerate() {
                dz.set(
                    b,
                    j,
                    delta.get(b, j) * layer.activation.derivative(z.get(b, j)) * gain,
                );
            }
        }
        let mut dw = Mat::zeros(rows, cols);
        let mut db = vec![0.0; rows];
        for b in 0..z.rows() {
            let xb = x.row(b);
            for (j, dbj) in db.iter_mut().enumerate() {
                let g = dz.get(b, j);
                *dbj += g;
                for (w, xi) in dw.row_mut(j).iter_mut().zip(xb) {
                    *w += g * xi;
                }
            }
        }
        if idx > 0 {
            let mut next = Mat::zeros(z.rows(), cols);
            for b in 0..z.rows() {
                for j in 0..rows {
                    let g = dz.get(b, j);
                    for (d, w) in next.row_mut(b).iter_mut().zip(layer.weights.row(j)) {
                        *d += g * w;
                    }
                }
            }
            delta = next;
        }
        grads.push(LayerGradient { dw, db });
    }
    grads.reverse();
    Ok((value, GradientSet { layers: grads }))
}

/// Loss and exact gradients of the unregulated network for one sample.
pub fn backward(
    model: &NetworkModel,
    x: &[f64],
    y: &Target,
    loss: LossKind,
) -> Result<(f64, GradientSet)> {
    let input = Mat::from_vec(1, x.len(), x.to_vec())?;
    let pass = forward_plain(model, &input)?;
    backward_pass(model, &pass, std::slice::from_ref(y), loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Activation, HomeostaticLayer};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear(w: f64, b: f64) -> NetworkModel {
        let layer = HomeostaticLayer::new(
            Mat::from_vec(1, 1, vec![w]).unwrap(),
            vec![b],
            Activation::Identity,
            0.5,
        )
        .unwrap();
        NetworkModel::new(vec![layer]).unwrap()
    }

    #[test]
    fn hand_differentiated_linear_mse() {
        let (loss, g) = backward(
            &linear(1.0, 0.0),
            &[1.0],
            &Target::Values(vec![0.0]),
            LossKind::Mse,
        )
        .unwrap();
        assert_eq!(loss, 0.5);
        assert_eq!(g.layers[0].dw.as_slice(), &[1.0]);
        assert_eq!(g.layers[0].db, vec![1.0]);
    }

    #[test]
    fn zero_error_zero_gradient() {
        let (loss, g) = backward(
            &linear(2.0, 0.0),
            &[1.5],
            &Target::Values(vec![3.0]),
            LossKind::Mse,
        )
        .unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.layers[0].dw.as_slice(), &[0.0]);
        assert_eq!(g.layers[0].db, vec![0.0]);
    }

    #[test]
    fn bad_targets_rejected() {
        let m = NetworkModel::init(&[2, 3], Activation::Relu, 3, 0.5).unwrap();
        assert!(matches!(
            backward(&m, &[1.0, 1.0], &Target::Class(3), LossKind::CrossEntropy),
            Err(MsthError::BadTarget(_))
        ));
        assert!(matches!(
            backward(
                &m,
                &[1.0, 1.0],
                &Target::Values(vec![0.5, 0.5, 0.0]),
                LossKind::CrossEntropy
            ),
            Err(MsthError::BadTarget(_))
        ));
        assert!(matches!(
            backward(
                &m,
                &[1.0, 1.0],
                &Target::Values(vec![0.0; 2]),
                LossKind::Mse
            ),
            Err(MsthError::BadTarget(_))
        ));
    }

    #[test]
    fn cross_entropy_is_stable_for_large_logits() {
        let layer = HomeostaticLayer::new(
            Mat::from_vec(2, 1, vec![1000.0, -1000.0]).unwrap(),
            vec![0.0, 0.0],
            Activation::Identity,
            0.5,
        )
        .unwrap();
        let m = NetworkModel::new(vec![layer]).unwrap();
        let (loss, g) = backward(&m, &[1.0], &Target::Class(1), LossKind::CrossEntropy).unwrap();
        assert!((loss - 2000.0).abs() < 1e-9);
        assert!(g.is_finite());
    }

    // Central differences on a small tanh network, both losses.
    #[test]
    fn matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for (seed, loss) in [(1, LossKind::Mse), (2, LossKind::CrossEntropy)] {
            let model = NetworkModel::init(&[3, 4, 3], Activation::Tanh, seed, 0.5).unwrap();
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = Target::Class(1);
            let (_, g) = backward(&model, &x, &y, loss).unwrap();
            let h = 1e-5;
            for (l, layer) in model.layers.iter().enumerate() {
                for k in 0..layer.weights.len() {
                    let mut plus = model.clone();
                    plus.layers[l].weights.as_mut_slice()[k] += h;
                    let mut minus = model.clone();
                    minus.layers[l].weights.as_mut_slice()[k] -= h;
                    let fp = backward(&plus, &x, &y, loss).unwrap().0;
                    let fm = backward(&minus, &x, &y, loss).unwrap().0;
                    let numeric = (fp - fm) / (2.0 * h);
                    let analytic = g.layers[l].dw.as_slice()[k];
                    assert!((numeric - analytic).abs() <= 1e-6 * (1.0 + analytic.abs()));
                }
            }
        }
    }
}
