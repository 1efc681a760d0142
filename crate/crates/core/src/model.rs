//! Model configuration and the end-to-end forward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::{self, LossWeights, PairDecisions};
use crate::encoder;
use crate::error::{Error, Result};
use crate::gnn::{self, GnnConfig};
use crate::params::{Binder, ModelParams};
use crate::perception::{self, GridMap, MarkingPoint};
use crate::scene::{Image, SceneRecord};
use crate::tensor::{Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub image_size: usize,
    pub grid_size: usize,
    pub feature_channels: usize,
    pub node_dim: usize,
    pub pos_hidden: usize,
    pub disc_hidden: usize,
    pub gnn: GnnConfig,
    pub pos_encoder: bool,
    pub loss_weights: LossWeights,
    pub conf_threshold: f64,
    pub nms_radius: f64,
    pub max_points: usize,
    pub pair_threshold: f64,
    pub dropout_rate: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            grid_size: 16,
            feature_channels: 64,
            node_dim: 64,
            pos_hidden: 32,
            disc_hidden: 64,
            gnn: GnnConfig::default(),
            pos_encoder: true,
            loss_weights: LossWeights::default(),
            conf_threshold: 0.5,
            nms_radius: 0.0625,
            max_points: 16,
            pair_threshold: 0.5,
            dropout_rate: 0.5,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        // four stride-2 convolutions
        if self.grid_size == 0 || self.image_size != self.grid_size * 16 {
            return bad(format!(
                "image size {} must be 16 × grid size {}",
                self.image_size, self.grid_size
            ));
        }
        if self.feature_channels != perception::BACKBONE_CHANNELS[4] {
            return bad(format!(
                "backbone emits {} channels, config says {}",
                perception::BACKBONE_CHANNELS[4],
                self.feature_channels
            ));
        }
        if self.gnn.heads == 0 || self.node_dim % self.gnn.heads != 0 {
            return bad(format!(
                "node width {} is not divisible into {} heads",
                self.node_dim, self.gnn.heads
            ));
        }
        for (name, v) in [
            ("conf_threshold", self.conf_threshold),
            ("pair_threshold", self.pair_threshold),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return bad(format!("{name} must be in (0, 1), got {v}"));
            }
        }
        if !(self.nms_radius > 0.0) {
            return bad(format!(
                "nms_radius must be positive, got {}",
                self.nms_radius
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!(
                "dropout rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        let w = self.loss_weights;
        if !(w.lambda1 >= 0.0 && w.lambda2 >= 0.0) {
            return bad(format!("loss weights must be non-negative, got {w:?}"));
        }
        Ok(())
    }
}

pub fn image_tensor(image: &Image) -> Result<Tensor> {
    Tensor::new(
        [image.height, image.width, 3],
        image.data.iter().map(|&v| f64::from(v)).collect(),
    )
}

fn positions_of(points: &[MarkingPoint]) -> Vec<[f64; 2]> {
    points.iter().map(|p| [p.x, p.y]).collect()
}

/// Handles of one training forward pass.
#[derive(Clone, Copy, Debug)]
pub struct TrainingGraph {
    pub total: Var,
    pub point_loss: Var,
    pub line_loss: Var,
}

/// Both heads on one scene. Node features are sampled at the ground-truth
/// point positions.
pub fn training_forward<R: Rng + ?Sized>(
    tape: &mut Tape,
    binder: &mut Binder,
    record: &SceneRecord,
    training: bool,
    rng: &mut R,
) -> Result<TrainingGraph> {
    let weights = binder.config().loss_weights;
    let image = tape.constant(image_tensor(&record.image)?);
    let features = perception::backbone_forward(tape, binder, image)?;
    let map = perception::detector_forward(tape, binder, features)?;
    let point_loss = perception::point_loss(tape, map, &record.points)?;

    let feature_map = encoder::encoder_forward(tape, binder, features)?;
    let positions = positions_of(&record.points);
    let sampled = encoder::bilinear_sample(tape, feature_map, &positions)?;
    let nodes = encoder::fuse_position(tape, binder, sampled, &positions)?;
    let nodes = gnn::gnn_forward(tape, binder, nodes.features)?;
    let probs = discriminator::pair_probs(tape, binder, nodes, training, rng)?;
    let pairs: Vec<(usize, usize)> = record
        .entrance_pairs
        .iter()
        .map(|&(a, b)| (a as usize, b as usize))
        .collect();
    let line_loss = discriminator::line_loss(tape, probs, &pairs)?;
    let total = discriminator::total_loss(tape, point_loss, line_loss, weights)?;
    Ok(TrainingGraph {
        total,
        point_loss,
        line_loss,
    })
}

#[derive(Clone, Debug)]
pub struct Inference {
    pub points: Vec<MarkingPoint>,
    /// `N×N` entrance probabilities.
    pub probs: Tensor,
    pub decisions: PairDecisions,
}

/// Detect points, encode them at their detected positions and score pairs.
pub fn infer(params: &ModelParams, image: &Image) -> Result<Inference> {
    let cfg = &params.config;
    let mut tape = Tape::new();
    let mut binder = Binder::new(params, false);
    let img = tape.constant(image_tensor(image)?);
    let features = perception::backbone_forward(&mut tape, &mut binder, img)?;
    let map = perception::detector_forward(&mut tape, &mut binder, features)?;
    let grid = GridMap::new(tape.value(map).clone())?;
    let points =
        perception::decode_points(&grid, cfg.conf_threshold, cfg.nms_radius, cfg.max_points);
    if points.is_empty() {
        return Ok(Inference {
            points,
            probs: Tensor::new_allow_empty([0, 0], vec![])?,
            decisions: PairDecisions::default(),
        });
    }
    let feature_map = encoder::encoder_forward(&mut tape, &mut binder, features)?;
    let positions = positions_of(&points);
    let sampled = encoder::bilinear_sample(&mut tape, feature_map, &positions)?;
    let nodes = encoder::fuse_position(&mut tape, &mut binder, sampled, &positions)?;
    let nodes = gnn::gnn_forward(&mut tape, &mut binder, nodes.features)?;
    // dropout is inactive outside training, the generator is never drawn from
    let mut unused = rand::rngs::mock::StepRng::new(0, 0);
    let probs = discriminator::pair_probs(&mut tape, &mut binder, nodes, false, &mut unused)?;
    let probs = tape.value(probs).clone();
    let decisions = discriminator::assemble_predictions(&points, &probs, cfg.pair_threshold)?;
    Ok(Inference {
        points,
        probs,
        decisions,
    })
}

/// Node features entering and leaving the graph network for the given
/// positions.
pub fn graph_features(
    params: &ModelParams,
    image: &Image,
    points: &[MarkingPoint],
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let mut binder = Binder::new(params, false);
    let img = tape.constant(image_tensor(image)?);
    let features = perception::backbone_forward(&mut tape, &mut binder, img)?;
    let feature_map = encoder::encoder_forward(&mut tape, &mut binder, features)?;
    let positions = positions_of(points);
    let sampled = encoder::bilinear_sample(&mut tape, feature_map, &positions)?;
    let nodes = encoder::fuse_position(&mut tape, &mut binder, sampled, &positions)?;
    let out = gnn::gnn_forward(&mut tape, &mut binder, nodes.features)?;
    Ok((tape.value(nodes.features).clone(), tape.value(out).clone()))
}
