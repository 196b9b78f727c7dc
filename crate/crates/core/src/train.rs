//! Adam, the epoch loop, evaluation and the run manifest.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::model::{Gradients, LayerGraph};
use crate::real::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(model: &LayerGraph<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<T>> = model
            .parameters()
            .iter()
            .map(|p| vec![T::zero(); p.data.len()])
            .collect();
        OptimizerState {
            config,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }
}

/// One Adam update with bias-corrected moments.
pub fn adam_step<T: Real>(
    params: Vec<&mut [T]>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
) -> Result<()> {
    let shapes_match = params.len() == grads.0.len()
        && params.len() == state.m.len()
        && params
            .iter()
            .zip(&grads.0)
            .zip(&state.m)
            .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len());
    if !shapes_match {
        return Err(Error::shape("parameters, gradients and moments differ in shape"));
    }
    let c = state.config;
    state.t += 1;
    let t = state.t as i32;
    let step = c.alpha * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
    let eps_hat = c.eps * (1.0 - c.beta2.powi(t)).sqrt();
    let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
    let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
    let (step, eps_hat) = (T::of(step), T::of(eps_hat));
    for (((p, g), m), v) in params
        .into_iter()
        .zip(&grads.0)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        for i in 0..p.len() {
            m[i] = b1 * m[i] + one_b1 * g[i];
            v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
            p[i] -= step * m[i] / (v[i].sqrt() + eps_hat);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Epochs (0-based) at whose start the learning rate is multiplied by `lr_decay`.
    pub lr_milestones: Vec<usize>,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 100,
            batch_size: 128,
            lr: adam.alpha,
            seed: 0,
            lr_milestones: vec![60, 85],
            lr_decay: 0.1,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        let drops = self.lr_milestones.iter().filter(|&&m| epoch >= m).count();
        self.lr * self.lr_decay.powi(drops as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub valid_error: Option<f64>,
}

/// Gather a batch of images and labels.
pub fn batch<T: Real>(data: &LabeledDataset, indices: &[usize]) -> (Vec<crate::PlanarStack<T>>, Vec<usize>) {
    (
        indices.iter().map(|&i| data.image(i)).collect(),
        indices.iter().map(|&i| data.labels()[i] as usize).collect(),
    )
}

/// Train with Adam on seeded shuffles of `train`. After every epoch
/// `on_epoch` sees the metrics and the current model; validation error uses
/// eval mode.
pub fn train<T: Real>(
    model: &mut LayerGraph<T>,
    optimizer: &mut OptimizerState<T>,
    train: &LabeledDataset,
    valid: Option<&LabeledDataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochMetrics, &LayerGraph<T>, &OptimizerState<T>) -> Result<()>,
) -> Result<Vec<EpochMetrics>> {
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        optimizer.config.alpha = config.lr_at(epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let (images, labels) = batch::<T>(train, chunk);
            let (loss, grads) = model.loss_and_grad(&images, &labels, optimizer.t)?;
            adam_step(model.parameters_mut(), &grads, optimizer)?;
            loss_sum += loss.as_f64() * chunk.len() as f64;
        }
        if !model.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "parameters became non-finite in epoch {epoch}"
            )));
        }
        let valid_error = valid
            .map(|v| evaluate(model, v, config.batch_size))
            .transpose()?;
        let m = EpochMetrics {
            epoch,
            lr: optimizer.config.alpha,
            train_loss: loss_sum / train.len() as f64,
            valid_error,
        };
        on_epoch(&m, model, optimizer)?;
        log.push(m);
    }
    Ok(log)
}

/// Fraction of misclassified items, eval-mode batch norm and no dropout.
pub fn evaluate<T: Real>(model: &mut LayerGraph<T>, data: &LabeledDataset, batch_size: usize) -> Result<f64> {
    let indices: Vec<usize> = (0..data.len()).collect();
    let mut wrong = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (images, labels) = batch::<T>(data, chunk);
        let predicted = model.predict(&images)?;
        wrong += predicted.iter().zip(&labels).filter(|(p, l)| p != l).count();
    }
    Ok(wrong as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetInfo {
    pub role: String,
    pub items: usize,
    pub sha256: String,
}

/// Everything needed to reproduce a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub model: String,
    pub parameters: usize,
    pub config: TrainConfig,
    pub loss: String,
    pub dropout: f64,
    pub batch_norm: String,
    pub split_rule: String,
    pub datasets: Vec<DatasetInfo>,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose weights were kept (lowest validation error).
    pub selected_epoch: Option<usize>,
}

impl RunManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        crate::checkpoint::write_atomic(path, text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayerSpec, ModelName};
    use crate::gconv::LayerKind;
    use crate::group::GroupId;

    fn tiny() -> LayerGraph<f64> {
        let specs = vec![LayerSpec::Conv {
            group: GroupId::P4,
            kind: LayerKind::FirstLayer,
            in_channels: 1,
            out_channels: 2,
            size: 3,
        }];
        LayerGraph::from_specs(ModelName::Custom, 3, specs, (1, 5, 5)).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut m = tiny();
        let before = m.parameters();
        let mut st = OptimizerState::new(&m, AdamConfig::default());
        let zeros = Gradients(before.iter().map(|p| vec![0.0; p.data.len()]).collect());
        for _ in 0..3 {
            adam_step(m.parameters_mut(), &zeros, &mut st).unwrap();
        }
        assert_eq!(m.parameters(), before);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn first_step_moves_by_alpha() {
        let mut m = tiny();
        let before = m.parameters();
        let mut st = OptimizerState::new(&m, AdamConfig::default());
        let g = Gradients(before.iter().map(|p| vec![0.37; p.data.len()]).collect());
        adam_step(m.parameters_mut(), &g, &mut st).unwrap();
        for (a, b) in m.parameters().iter().zip(&before) {
            for (x, y) in a.data.iter().zip(&b.data) {
                assert!(((y - x) - 1e-3).abs() < 1e-9, "{}", y - x);
            }
        }
        let bad = Gradients(vec![vec![0.0; 1]]);
        assert!(adam_step(m.parameters_mut(), &bad, &mut st).is_err());
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.lr_at(0), 1e-3);
        assert!((c.lr_at(60) - 1e-4).abs() < 1e-18);
        assert!((c.lr_at(99) - 1e-5).abs() < 1e-18);
    }
}
