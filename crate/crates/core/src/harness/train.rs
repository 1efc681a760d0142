//! Adam optimizer and the mini-batch training loop.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, ModelConfig};
use crate::params::{Binder, ModelParams};
use crate::scene::{read_dataset, SceneRecord};
use crate::tensor::{Tape, Tensor};

use super::checkpoint::save_checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: BTreeMap<String, Tensor>,
    second: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(params: &ModelParams, config: AdamConfig) -> Self {
        let zeros: BTreeMap<String, Tensor> = params
            .iter()
            .map(|(k, t)| (k.clone(), Tensor::zeros(t.shape().to_vec())))
            .collect();
        Self {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&Tensor> {
        self.first.get(name)
    }

    pub fn second_moment(&self, name: &str) -> Option<&Tensor> {
        self.second.get(name)
    }
}

/// One bias-corrected Adam update, visiting parameters in sorted path order.
/// Parameters absent from `grads` are treated as having zero gradient.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
) -> Result<()> {
    for (name, g) in grads {
        if let Some(bad) = g.data().iter().position(|v| !v.is_finite()) {
            return Err(Error::Training(format!(
                "non-finite gradient in {name} at index {bad}"
            )));
        }
    }
    state.step += 1;
    let AdamConfig {
        lr,
        beta1,
        beta2,
        eps,
    } = state.config;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (name, p) in params.iter_mut() {
        let m = state
            .first
            .get_mut(name)
            .ok_or_else(|| Error::Training(format!("optimizer has no state for {name}")))?;
        let v = state
            .second
            .get_mut(name)
            .expect("moments are created together");
        let g = grads.get(name);
        let p = p.data_mut();
        let (m, v) = (m.data_mut(), v.data_mut());
        for i in 0..p.len() {
            let gi = g.map_or(0.0, |g| g.data()[i]);
            m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
            v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
            let m_hat = m[i] / c1;
            let v_hat = v[i] / c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Stop after this many optimizer steps (whole epochs otherwise).
    pub max_steps: Option<usize>,
    /// Rescale each batch gradient to at most this global L2 norm.
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 24,
            seed: 42,
            adam: AdamConfig::default(),
            max_steps: None,
            clip_norm: Some(1.0),
        }
    }
}

/// Global L2 norm of `grads`, rescaling them in place when it exceeds `max`.
pub fn clip_gradients(grads: &mut BTreeMap<String, Tensor>, max: Option<f64>) -> f64 {
    let norm = grads
        .values()
        .flat_map(|g| g.data().iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if let Some(max) = max {
        if norm > max {
            let scale = max / norm;
            for g in grads.values_mut() {
                g.data_mut().iter_mut().for_each(|v| *v *= scale);
            }
        }
    }
    norm
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub point: f64,
    pub line: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean sample losses per epoch.
    pub epochs: Vec<LossBreakdown>,
    /// Mean batch loss of every optimizer step.
    pub steps: Vec<f64>,
}

/// Loss and parameter gradients of one scene.
pub fn sample_gradients<R: Rng + ?Sized>(
    params: &ModelParams,
    record: &SceneRecord,
    training: bool,
    rng: &mut R,
) -> Result<(LossBreakdown, BTreeMap<String, Tensor>)> {
    let mut tape = Tape::new();
    let mut binder = Binder::new(params, true);
    let graph = model::training_forward(&mut tape, &mut binder, record, training, rng)?;
    let losses = LossBreakdown {
        total: tape.value(graph.total).data()[0],
        point: tape.value(graph.point_loss).data()[0],
        line: tape.value(graph.line_loss).data()[0],
    };
    let grads = tape.backward(graph.total)?;
    Ok((losses, binder.gradients(&tape, &grads)))
}

pub fn train_records(
    records: &[SceneRecord],
    model_config: &ModelConfig,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainReport)> {
    if records.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if config.batch_size == 0 {
        return Err(Error::Parameter("batch size must be positive".into()));
    }
    let mut params = ModelParams::init(model_config, config.seed)?;
    let mut state = AdamState::new(&params, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_7A1B);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..records.len()).collect();
    let started = Instant::now();

    'epochs: for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_sum = LossBreakdown::default();
        let mut seen = 0usize;
        for batch in order.chunks(config.batch_size) {
            if config
                .max_steps
                .is_some_and(|max| report.steps.len() >= max)
            {
                break 'epochs;
            }
            let scale = 1.0 / batch.len() as f64;
            let mut acc: BTreeMap<String, Tensor> = BTreeMap::new();
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (loss, grads) = sample_gradients(&params, &records[idx], true, &mut rng)?;
                if !loss.total.is_finite() {
                    return Err(Error::Training(format!(
                        "loss diverged at epoch {epoch}, step {} (scene seed {}): {loss:?}",
                        report.steps.len(),
                        records[idx].seed
                    )));
                }
                batch_loss += loss.total * scale;
                epoch_sum.total += loss.total;
                epoch_sum.point += loss.point;
                epoch_sum.line += loss.line;
                seen += 1;
                for (name, g) in grads {
                    match acc.get_mut(&name) {
                        Some(a) => a
                            .data_mut()
                            .iter_mut()
                            .zip(g.data())
                            .for_each(|(a, g)| *a += scale * g),
                        None => {
                            acc.insert(name, g.map(|v| v * scale));
                        }
                    }
                }
            }
            let norm = clip_gradients(&mut acc, config.clip_norm);
            debug!(
                "step {} loss {batch_loss:.5} gradient norm {norm:.3e}",
                report.steps.len()
            );
            adam_step(&mut params, &acc, &mut state)?;
            report.steps.push(batch_loss);
        }
        if seen > 0 {
            let n = seen as f64;
            let mean = LossBreakdown {
                total: epoch_sum.total / n,
                point: epoch_sum.point / n,
                line: epoch_sum.line / n,
            };
            info!(
                "epoch {:>3}: loss {:.5} (point {:.5}, line {:.5}) [{:.0}s]",
                epoch + 1,
                mean.total,
                mean.point,
                mean.line,
                started.elapsed().as_secs_f64()
            );
            report.epochs.push(mean);
        }
    }
    Ok((params, report))
}

/// Trains on a dataset file and writes the checkpoint to `out`.
pub fn train(
    dataset: impl AsRef<Path>,
    model_config: &ModelConfig,
    config: &TrainConfig,
    out: impl AsRef<Path>,
) -> Result<TrainReport> {
    let records = read_dataset(dataset)?;
    info!("training on {} scenes", records.len());
    let (params, report) = train_records(&records, model_config, config)?;
    save_checkpoint(&params, out)?;
    Ok(report)
}
