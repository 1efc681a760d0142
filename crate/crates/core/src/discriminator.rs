//! Entrance-line discriminator: scores every ordered node pair.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::{Binder, ParamSpec};
use crate::perception::MarkingPoint;
use crate::tensor::{Tape, Tensor, Var};

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before the log.
pub const PROB_CLAMP: f64 = 1e-7;

/// One row of the `K×5` output: an ordered point pair and its probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotPrediction {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub t: f64,
}

impl SlotPrediction {
    pub fn as_row(&self) -> [f64; 5] {
        [self.x1, self.y1, self.x2, self.y2, self.t]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda1: 100.0,
            lambda2: 1.0,
        }
    }
}

pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.node_dim;
    let mut specs = Vec::new();
    specs.extend(ParamSpec::dense(
        "discriminator.fc0",
        2 * d,
        config.disc_hidden,
        true,
    ));
    specs.extend(ParamSpec::dense(
        "discriminator.fc1",
        config.disc_hidden,
        1,
        false,
    ));
    specs
}

/// `N×N` matrix with entry `(i, j) = σ(MLP([vᵢ ∥ vⱼ]))`.
///
/// The first layer is split as `[vᵢ ∥ vⱼ]·W = vᵢ·W_top + vⱼ·W_bottom`, which
/// scores all `N²` pairs without materializing the concatenations.
pub fn pair_probs<R: Rng + ?Sized>(
    tape: &mut Tape,
    binder: &mut Binder,
    nodes: Var,
    training: bool,
    rng: &mut R,
) -> Result<Var> {
    let cfg = binder.config();
    let d = cfg.node_dim;
    let shape = tape.shape(nodes).to_vec();
    if shape.len() != 2 || shape[1] != d {
        return Err(Error::dim(format!(
            "pair_probs expects N×{d}, got {shape:?}"
        )));
    }
    let n = shape[0];
    let w0 = binder.var(tape, "discriminator.fc0.weight")?;
    let b0 = binder.var(tape, "discriminator.fc0.bias")?;
    let w1 = binder.var(tape, "discriminator.fc1.weight")?;
    let b1 = binder.var(tape, "discriminator.fc1.bias")?;

    let w_top = tape.slice_rows(w0, 0, d)?;
    let w_bottom = tape.slice_rows(w0, d, 2 * d)?;
    let left = tape.matmul(nodes, w_top)?;
    let right = tape.matmul(nodes, w_bottom)?;
    let mut h = tape.pair_sum(left, right)?;
    h = tape.add_bias(h, b0)?;
    h = tape.relu(h);
    h = tape.dropout(h, cfg.dropout_rate, training, rng)?;
    let logits = tape.matmul(h, w1)?;
    let logits = tape.add_bias(logits, b1)?;
    let probs = tape.sigmoid(logits);
    tape.reshape(probs, &[n, n])
}

/// All `N²` rows plus the accepted subset.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairDecisions {
    pub rows: Vec<SlotPrediction>,
    /// Off-diagonal rows with `t ≥ threshold`, one direction per unordered
    /// pair, sorted by descending `t`.
    pub accepted: Vec<SlotPrediction>,
}

pub fn assemble_predictions(
    points: &[MarkingPoint],
    probs: &Tensor,
    pair_threshold: f64,
) -> Result<PairDecisions> {
    let n = points.len();
    if probs.len() != n * n || (n > 0 && probs.shape() != [n, n]) {
        return Err(Error::dim(format!(
            "{n} points but probability matrix {:?}",
            probs.shape()
        )));
    }
    let pred = |i: usize, j: usize| SlotPrediction {
        x1: points[i].x,
        y1: points[i].y,
        x2: points[j].x,
        y2: points[j].y,
        t: probs.data()[i * n + j],
    };
    let mut rows = Vec::with_capacity(n * n);
    let mut accepted = Vec::new();
    for i in 0..n {
        for j in 0..n {
            rows.push(pred(i, j));
            if i == j {
                continue;
            }
            let t = probs.data()[i * n + j];
            let reverse = probs.data()[j * n + i];
            if t < pair_threshold {
                continue;
            }
            // Of two accepted directions keep the stronger; ties go to i < j.
            let reverse_wins =
                reverse >= pair_threshold && (reverse > t || (reverse == t && j < i));
            if !reverse_wins {
                accepted.push(pred(i, j));
            }
        }
    }
    accepted.sort_by(|a, b| b.t.partial_cmp(&a.t).unwrap_or(Ordering::Equal));
    Ok(PairDecisions { rows, accepted })
}

/// Mean binary cross-entropy over all `N²` ordered pairs; `(i, j)` is
/// positive iff it is listed in `gt_pairs`.
pub fn line_loss(tape: &mut Tape, probs: Var, gt_pairs: &[(usize, usize)]) -> Result<Var> {
    let shape = tape.shape(probs).to_vec();
    let n = shape.first().copied().unwrap_or(0);
    if n == 0 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    if shape != [n, n] {
        return Err(Error::dim(format!("line loss expects N×N, got {shape:?}")));
    }
    let mut labels = vec![0.0; n * n];
    for &(i, j) in gt_pairs {
        if i >= n || j >= n {
            return Err(Error::Data(format!(
                "entrance pair ({i}, {j}) out of range for {n} points"
            )));
        }
        labels[i * n + j] = 1.0;
    }
    tape.binary_cross_entropy(
        probs,
        labels,
        1.0 / (n * n) as f64,
        PROB_CLAMP,
        1.0 - PROB_CLAMP,
    )
}

pub fn total_loss(
    tape: &mut Tape,
    point_loss: Var,
    line_loss: Var,
    weights: LossWeights,
) -> Result<Var> {
    let a = tape.scale(point_loss, weights.lambda1);
    let b = tape.scale(line_loss, weights.lambda2);
    tape.add(a, b)
}
