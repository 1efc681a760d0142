//! Per-point node features: a convolutional feature head, bilinear sampling
//! at the point positions, and an additive positional embedding.

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::nn::{self, Activation};
use crate::params::{Binder, ParamSpec};
use crate::tensor::{Tape, Tensor, Var};

pub const ENCODER_LAYERS: usize = 4;

/// Node features plus the normalized positions they were sampled at.
#[derive(Clone, Debug)]
pub struct NodeFeatures {
    /// `N×D` on the tape.
    pub features: Var,
    pub positions: Vec<[f64; 2]>,
}

pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let c = config.feature_channels;
    let d = config.node_dim;
    let mut specs = Vec::new();
    for i in 0..ENCODER_LAYERS {
        let cin = if i == 0 { c } else { d };
        specs.extend(ParamSpec::conv(
            &format!("encoder.conv{i}"),
            3,
            cin,
            d,
            i + 1 < ENCODER_LAYERS,
        ));
    }
    if config.pos_encoder {
        specs.extend(ParamSpec::dense(
            "pos_encoder.fc0",
            2,
            config.pos_hidden,
            true,
        ));
        specs.extend(ParamSpec::dense(
            "pos_encoder.fc1",
            config.pos_hidden,
            d,
            false,
        ));
    }
    specs
}

/// Backbone features → `S×S×D` map. ReLU between layers, linear output.
pub fn encoder_forward(tape: &mut Tape, binder: &mut Binder, features: Var) -> Result<Var> {
    let cfg = binder.config();
    let s = cfg.grid_size;
    if tape.shape(features) != [s, s, cfg.feature_channels] {
        return Err(Error::dim(format!(
            "encoder expects {:?}, got {:?}",
            [s, s, cfg.feature_channels],
            tape.shape(features)
        )));
    }
    let mut h = features;
    for i in 0..ENCODER_LAYERS {
        let (k, b) = binder.conv(tape, &format!("encoder.conv{i}"))?;
        h = tape.conv2d(h, k, 1, 1)?;
        h = tape.add_bias(h, b)?;
        if i + 1 < ENCODER_LAYERS {
            h = tape.relu(h);
        }
    }
    Ok(h)
}

/// Samples an `S×S×D` map at normalized positions. Position `(x, y)` maps to
/// grid coordinate `(x·(S−1), y·(S−1))`; values outside `[0, 1]` are clamped
/// to the border.
pub fn bilinear_sample(tape: &mut Tape, map: Var, positions: &[[f64; 2]]) -> Result<Var> {
    let shape = tape.shape(map).to_vec();
    if shape.len() != 3 {
        return Err(Error::dim(format!(
            "bilinear_sample expects H×W×C, got {shape:?}"
        )));
    }
    let (h, w) = (shape[0], shape[1]);
    let coords: Vec<(f64, f64)> = positions
        .iter()
        .map(|&[x, y]| {
            (
                x.clamp(0.0, 1.0) * (w - 1) as f64,
                y.clamp(0.0, 1.0) * (h - 1) as f64,
            )
        })
        .collect();
    tape.bilinear_gather(map, &coords)
}

/// `vᵢ = fᵢ + MLP(xᵢ, yᵢ)`; with the positional encoder disabled the
/// features pass through.
pub fn fuse_position(
    tape: &mut Tape,
    binder: &mut Binder,
    features: Var,
    positions: &[[f64; 2]],
) -> Result<NodeFeatures> {
    let shape = tape.shape(features).to_vec();
    let d = binder.config().node_dim;
    if shape.len() != 2 || shape[0] != positions.len() || shape[1] != d {
        return Err(Error::dim(format!(
            "fuse_position: features {shape:?} vs {} positions of width {d}",
            positions.len()
        )));
    }
    if !binder.config().pos_encoder {
        return Ok(NodeFeatures {
            features,
            positions: positions.to_vec(),
        });
    }
    let coords = Tensor::new_allow_empty(
        [positions.len(), 2],
        positions.iter().flat_map(|p| p.iter().copied()).collect(),
    )?;
    let coords = tape.constant(coords);
    let layers = [
        binder.dense(tape, "pos_encoder.fc0", Activation::Relu)?,
        binder.dense(tape, "pos_encoder.fc1", Activation::Identity)?,
    ];
    let embedding = nn::mlp_forward(tape, coords, &layers)?;
    Ok(NodeFeatures {
        features: tape.add(features, embedding)?,
        positions: positions.to_vec(),
    })
}
