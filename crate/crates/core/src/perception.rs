//! Convolutional backbone and grid marking-point detector.
//!
//! The detector predicts, for each of the `S×S` cells, a cell-relative point
//! offset `(dx, dy)` and a confidence. A point at normalized image position
//! `(x, y)` belongs to cell `(row, col) = (⌊y·S⌋, ⌊x·S⌋)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::params::{Binder, Init, ParamSpec};
use crate::tensor::{Tape, Tensor, Var};

/// Channel widths of the backbone's stride-2 convolutions.
pub const BACKBONE_CHANNELS: [usize; 5] = [3, 16, 32, 64, 64];

/// Initial confidence of every cell. Starting near the share of occupied
/// cells keeps the confidence sigmoid out of saturation early in training.
pub const CONFIDENCE_PRIOR: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkingPoint {
    pub x: f64,
    pub y: f64,
    pub confidence: f64,
}

impl MarkingPoint {
    pub fn new(x: f64, y: f64, confidence: f64) -> Self {
        Self { x, y, confidence }
    }

    pub fn distance(&self, other: &MarkingPoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// `(row, col, dx, dy)` of the grid cell holding this point.
    pub fn grid_cell(&self, grid_size: usize) -> (usize, usize, f64, f64) {
        let s = grid_size as f64;
        let gx = (self.x * s).clamp(0.0, s);
        let gy = (self.y * s).clamp(0.0, s);
        let col = (gx.floor() as usize).min(grid_size - 1);
        let row = (gy.floor() as usize).min(grid_size - 1);
        (row, col, gx - col as f64, gy - row as f64)
    }
}

/// Detector output: `S×S×3` with channels `(dx, dy, confidence)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridMap {
    cells: Tensor,
    grid_size: usize,
}

impl GridMap {
    pub fn new(cells: Tensor) -> Result<Self> {
        let s = cells.shape().first().copied().unwrap_or(0);
        if cells.shape() != [s, s, 3] {
            return Err(Error::dim(format!(
                "grid map must be S×S×3, got {:?}",
                cells.shape()
            )));
        }
        Ok(Self {
            cells,
            grid_size: s,
        })
    }

    /// Ideal map for a set of points: confidence 1 and exact offsets at their
    /// cells, zero elsewhere.
    pub fn encode(points: &[MarkingPoint], grid_size: usize) -> Result<Self> {
        let mut cells = Tensor::zeros([grid_size, grid_size, 3]);
        for p in points {
            let (row, col, dx, dy) = p.grid_cell(grid_size);
            let base = (row * grid_size + col) * 3;
            let data = cells.data_mut();
            if data[base + 2] != 0.0 {
                return Err(Error::Data(format!(
                    "two marking-points fall into grid cell ({row}, {col})"
                )));
            }
            data[base] = dx;
            data[base + 1] = dy;
            data[base + 2] = 1.0;
        }
        Self::new(cells)
    }

    pub fn grid_size(&self) -> usize {
        self.grid_size
    }

    pub fn cells(&self) -> &Tensor {
        &self.cells
    }

    /// `(dx, dy, confidence)` of cell `(row, col)`.
    pub fn cell(&self, row: usize, col: usize) -> (f64, f64, f64) {
        let c = &self.cells;
        (c.at3(row, col, 0), c.at3(row, col, 1), c.at3(row, col, 2))
    }
}

pub fn param_specs(config: &ModelConfig) -> Vec<ParamSpec> {
    let mut specs = Vec::new();
    for (i, w) in BACKBONE_CHANNELS.windows(2).enumerate() {
        specs.extend(ParamSpec::conv(
            &format!("backbone.conv{i}"),
            3,
            w[0],
            w[1],
            true,
        ));
    }
    let c = config.feature_channels;
    specs.extend(ParamSpec::conv("detector.conv0", 3, c, c, true));
    let [kernel, _] = ParamSpec::conv("detector.conv1", 1, c, 3, false);
    let prior_logit = (CONFIDENCE_PRIOR / (1.0 - CONFIDENCE_PRIOR)).ln();
    specs.push(kernel);
    specs.push(ParamSpec::new(
        "detector.conv1.bias",
        [3],
        Init::Values(vec![0.0, 0.0, prior_logit]),
    ));
    specs
}

/// `H×W×3` image → `S×S×C` features through four stride-2 3×3 convolutions.
pub fn backbone_forward(tape: &mut Tape, binder: &mut Binder, image: Var) -> Result<Var> {
    let cfg = binder.config();
    let expected = [cfg.image_size, cfg.image_size, 3];
    if tape.shape(image) != expected {
        return Err(Error::dim(format!(
            "backbone expects an image of shape {expected:?}, got {:?}",
            tape.shape(image)
        )));
    }
    let mut h = image;
    for i in 0..BACKBONE_CHANNELS.len() - 1 {
        let (k, b) = binder.conv(tape, &format!("backbone.conv{i}"))?;
        h = tape.conv2d(h, k, 2, 1)?;
        h = tape.add_bias(h, b)?;
        h = tape.relu(h);
    }
    Ok(h)
}

/// Features → `S×S×3` map with every channel squashed by a sigmoid.
pub fn detector_forward(tape: &mut Tape, binder: &mut Binder, features: Var) -> Result<Var> {
    let (k0, b0) = binder.conv(tape, "detector.conv0")?;
    let (k1, b1) = binder.conv(tape, "detector.conv1")?;
    let mut h = tape.conv2d(features, k0, 1, 1)?;
    h = tape.add_bias(h, b0)?;
    h = tape.relu(h);
    h = tape.conv2d(h, k1, 1, 0)?;
    h = tape.add_bias(h, b1)?;
    Ok(tape.sigmoid(h))
}

/// Thresholds the map, runs greedy NMS and returns at most `max_points`
/// points in descending confidence.
pub fn decode_points(
    map: &GridMap,
    conf_threshold: f64,
    nms_radius: f64,
    max_points: usize,
) -> Vec<MarkingPoint> {
    let s = map.grid_size();
    let mut candidates = Vec::new();
    for row in 0..s {
        for col in 0..s {
            let (dx, dy, c) = map.cell(row, col);
            if c >= conf_threshold {
                candidates.push(MarkingPoint::new(
                    (col as f64 + dx) / s as f64,
                    (row as f64 + dy) / s as f64,
                    c,
                ));
            }
        }
    }
    // Stable sort keeps raster order among equal confidences.
    candidates.sort_by(|a, b| {
        b.confidence
            .partial_cmp(&a.confidence)
            .unwrap_or(Ordering::Equal)
    });
    let mut kept: Vec<MarkingPoint> = Vec::new();
    for p in candidates {
        if kept.len() >= max_points {
            break;
        }
        if kept.iter().all(|k| k.distance(&p) >= nms_radius) {
            kept.push(p);
        }
    }
    kept
}

/// Per-cell squared error: confidence everywhere, offsets only in cells that
/// hold a ground-truth point, averaged over the `S²` cells.
pub fn point_loss(tape: &mut Tape, map: Var, gt_points: &[MarkingPoint]) -> Result<Var> {
    let shape = tape.shape(map).to_vec();
    let s = shape[0];
    if shape != [s, s, 3] {
        return Err(Error::dim(format!(
            "point loss expects S×S×3, got {shape:?}"
        )));
    }
    let target = GridMap::encode(gt_points, s)?;
    let mut weights = vec![0.0; s * s * 3];
    for (cell, w) in weights.chunks_exact_mut(3).enumerate() {
        let has_point = target.cells.data()[cell * 3 + 2] == 1.0;
        let mask = if has_point { 1.0 } else { 0.0 };
        w[0] = mask;
        w[1] = mask;
        w[2] = 1.0;
    }
    tape.weighted_sq_error(map, target.cells.into_data(), weights, 1.0 / (s * s) as f64)
}
