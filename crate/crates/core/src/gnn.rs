//! Attentional message passing over the fully connected marking-point graph.
//!
//! Each layer computes, per head, `qᵢ = Wq·xᵢ + bq`, `kⱼ`, `vⱼ` likewise,
//! `αᵢⱼ = softmaxⱼ(qᵢᵀkⱼ)` and `mᵢ = Σⱼ αᵢⱼ vⱼ`. Heads are concatenated and
//! merged by a linear map, and the node is updated residually:
//! `xᵢ ← xᵢ + MLP([xᵢ ∥ mᵢ])`. Every node attends to every node, itself
//! included. There is no `1/√d` score scaling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{self, Activation, Dense};
use crate::params::{Binder, ParamSpec};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GnnVariant {
    Attentional,
    /// Per-node residual MLPs with roughly the attentional parameter count
    /// and no cross-node interaction.
    FcnBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub layers: usize,
    pub heads: usize,
    pub variant: GnnVariant,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self {
            layers: 3,
            heads: 4,
            variant: GnnVariant::Attentional,
        }
    }
}

/// Scalar parameter count of one attentional layer of width `d`.
pub fn attention_layer_param_count(d: usize) -> usize {
    let projections = 3 * (d * d + d);
    let merge = d * d + d;
    let update = (2 * d) * (2 * d) + 2 * d + (2 * d) * d + d;
    projections + merge + update
}

/// Hidden width `h` of the baseline's `d→h→d` MLP whose parameter count
/// (`(2d+1)·h + d`) is closest to an attentional layer.
pub fn fcn_hidden_width(d: usize) -> usize {
    let target = attention_layer_param_count(d) as f64;
    ((target - d as f64) / (2 * d + 1) as f64).round() as usize
}

pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let d = config.node_dim;
    let g = &config.gnn;
    let mut specs = Vec::new();
    for l in 0..g.layers {
        match g.variant {
            GnnVariant::Attentional => {
                let head_dim = d / g.heads;
                for h in 0..g.heads {
                    for role in ["query", "key", "value"] {
                        specs.extend(ParamSpec::dense(
                            &format!("gnn.layer{l}.head{h}.{role}"),
                            d,
                            head_dim,
                            false,
                        ));
                    }
                }
                specs.extend(ParamSpec::dense(
                    &format!("gnn.layer{l}.merge"),
                    d,
                    d,
                    false,
                ));
                specs.extend(ParamSpec::dense(
                    &format!("gnn.layer{l}.update.fc0"),
                    2 * d,
                    2 * d,
                    true,
                ));
                specs.extend(ParamSpec::dense(
                    &format!("gnn.layer{l}.update.fc1"),
                    2 * d,
                    d,
                    false,
                ));
            }
            GnnVariant::FcnBaseline => {
                let hidden = fcn_hidden_width(d);
                specs.extend(ParamSpec::dense(
                    &format!("gnn.layer{l}.fc0"),
                    d,
                    hidden,
                    true,
                ));
                specs.extend(ParamSpec::dense(
                    &format!("gnn.layer{l}.fc1"),
                    hidden,
                    d,
                    false,
                ));
            }
        }
    }
    specs
}

#[derive(Clone, Copy, Debug)]
pub struct HeadParams {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
}

/// One attentional layer's parameters, bound to a tape.
#[derive(Clone, Debug)]
pub struct GraphLayerParams {
    pub heads: Vec<HeadParams>,
    pub merge: Dense,
    pub update: [Dense; 2],
}

impl GraphLayerParams {
    pub fn bind(tape: &mut Tape, binder: &mut Binder, layer: usize, heads: usize) -> Result<Self> {
        let id = Activation::Identity;
        let mut hs = Vec::with_capacity(heads);
        for h in 0..heads {
            let p = format!("gnn.layer{layer}.head{h}");
            hs.push(HeadParams {
                query: binder.dense(tape, &format!("{p}.query"), id)?,
                key: binder.dense(tape, &format!("{p}.key"), id)?,
                value: binder.dense(tape, &format!("{p}.value"), id)?,
            });
        }
        Ok(Self {
            heads: hs,
            merge: binder.dense(tape, &format!("gnn.layer{layer}.merge"), id)?,
            update: [
                binder.dense(
                    tape,
                    &format!("gnn.layer{layer}.update.fc0"),
                    Activation::Relu,
                )?,
                binder.dense(tape, &format!("gnn.layer{layer}.update.fc1"), id)?,
            ],
        })
    }
}

fn project(tape: &mut Tape, x: Var, layer: Dense) -> Result<Var> {
    nn::linear(tape, x, layer.weight, layer.bias)
}

/// Row-stochastic `N×N` attention of one head.
fn head_attention(tape: &mut Tape, x: Var, head: &HeadParams) -> Result<(Var, Var)> {
    let q = project(tape, x, head.query)?;
    let k = project(tape, x, head.key)?;
    let v = project(tape, x, head.value)?;
    let kt = tape.transpose(k)?;
    let scores = tape.matmul(q, kt)?;
    let alpha = tape.softmax(scores)?;
    Ok((alpha, v))
}

pub fn attention_layer(tape: &mut Tape, x: Var, params: &GraphLayerParams) -> Result<Var> {
    if tape.shape(x)[0] == 0 {
        return Ok(x);
    }
    let mut messages = Vec::with_capacity(params.heads.len());
    for head in &params.heads {
        let (alpha, v) = head_attention(tape, x, head)?;
        messages.push(tape.matmul(alpha, v)?);
    }
    let concat = tape.concat_cols(&messages)?;
    let m = project(tape, concat, params.merge)?;
    let joined = tape.concat_cols(&[x, m])?;
    let delta = nn::mlp_forward(tape, joined, &params.update)?;
    tape.add(x, delta)
}

/// Attention distribution of one head (row `i` is node `i`'s weights).
pub fn attention_weights(
    tape: &mut Tape,
    x: Var,
    params: &GraphLayerParams,
    head: usize,
) -> Result<Tensor> {
    let Some(h) = params.heads.get(head) else {
        return Err(Error::Parameter(format!(
            "head {head} out of range for {} heads",
            params.heads.len()
        )));
    };
    if tape.shape(x)[0] == 0 {
        return Tensor::new_allow_empty([0, 0], vec![]);
    }
    let (alpha, _) = head_attention(tape, x, h)?;
    Ok(tape.value(alpha).clone())
}

/// Runs the configured stack over `N×D` node features.
pub fn gnn_forward(tape: &mut Tape, binder: &mut Binder, nodes: Var) -> Result<Var> {
    let cfg = binder.config().gnn;
    let mut x = nodes;
    for l in 0..cfg.layers {
        match cfg.variant {
            GnnVariant::Attentional => {
                let params = GraphLayerParams::bind(tape, binder, l, cfg.heads)?;
                x = attention_layer(tape, x, &params)?;
            }
            GnnVariant::FcnBaseline => {
                let layers = [
                    binder.dense(tape, &format!("gnn.layer{l}.fc0"), Activation::Relu)?,
                    binder.dense(tape, &format!("gnn.layer{l}.fc1"), Activation::Identity)?,
                ];
                let delta = nn::mlp_forward(tape, x, &layers)?;
                x = tape.add(x, delta)?;
            }
        }
    }
    Ok(x)
}
