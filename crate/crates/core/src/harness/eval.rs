//! Precision/recall of ordered entrance lines.
//!
//! A detection `(p1ᵈ, p2ᵈ)` matches a ground-truth slot `(p1ᵍ, p2ᵍ)` when the
//! Euclidean norm of the stacked endpoint differences, measured in pixels of
//! a reference frame, is strictly below the threshold. Detections are visited
//! in descending confidence and take the closest still-unmatched slot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discriminator::SlotPrediction;
use crate::error::Result;
use crate::model;
use crate::params::ModelParams;
use crate::scene::{read_dataset, SceneRecord};

use super::checkpoint::load_checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub threshold_px: f64,
    /// Side length of the frame the threshold is expressed in.
    pub reference_px: f64,
    /// Only reported; coordinates are normalized.
    pub image_size_px: usize,
    /// Allow a detection to match with its endpoints swapped.
    pub order_agnostic: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            threshold_px: 10.0,
            reference_px: 600.0,
            image_size_px: 256,
            order_agnostic: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MatchEntry {
    pub detection: usize,
    pub ground_truth: usize,
    pub distance_px: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneMatches {
    pub seed: u64,
    pub matches: Vec<MatchEntry>,
    /// Indices of unmatched detections.
    pub false_positives: Vec<usize>,
    /// Indices of unmatched ground-truth slots.
    pub false_negatives: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub threshold_px: f64,
    pub image_size_px: usize,
    pub scenes: Vec<SceneMatches>,
}

impl EvalReport {
    pub fn from_scenes(scenes: Vec<SceneMatches>, config: &EvalConfig) -> Self {
        let tp: usize = scenes.iter().map(|s| s.matches.len()).sum();
        let fp: usize = scenes.iter().map(|s| s.false_positives.len()).sum();
        let fn_: usize = scenes.iter().map(|s| s.false_negatives.len()).sum();
        let ratio = |num: usize, den: usize| {
            if den == 0 {
                1.0
            } else {
                num as f64 / den as f64
            }
        };
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            threshold_px: config.threshold_px,
            image_size_px: config.image_size_px,
            scenes,
        }
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision, self.recall);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

fn endpoint_distance(gt: &[f64; 4], det: &[f64; 4], scale: f64) -> f64 {
    gt.iter()
        .zip(det)
        .map(|(g, d)| {
            let diff = (g - d) * scale;
            diff * diff
        })
        .sum::<f64>()
        .sqrt()
}

/// Greedy matching of one scene. `detections` are `(x1, y1, x2, y2)` rows
/// already sorted by descending confidence; `scale` converts coordinate
/// differences into the threshold's unit.
pub fn match_slots(
    gt: &[[f64; 4]],
    detections: &[[f64; 4]],
    threshold: f64,
    scale: f64,
    order_agnostic: bool,
) -> SceneMatches {
    let mut taken = vec![false; gt.len()];
    let mut out = SceneMatches::default();
    for (di, det) in detections.iter().enumerate() {
        let swapped = [det[2], det[3], det[0], det[1]];
        let mut best: Option<(usize, f64)> = None;
        for (gi, g) in gt.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let mut d = endpoint_distance(g, det, scale);
            if order_agnostic {
                d = d.min(endpoint_distance(g, &swapped, scale));
            }
            if d < threshold && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((gi, d));
            }
        }
        match best {
            Some((gi, d)) => {
                taken[gi] = true;
                out.matches.push(MatchEntry {
                    detection: di,
                    ground_truth: gi,
                    distance_px: d,
                });
            }
            None => out.false_positives.push(di),
        }
    }
    out.false_negatives = taken
        .iter()
        .enumerate()
        .filter(|(_, t)| !**t)
        .map(|(i, _)| i)
        .collect();
    out
}

pub fn ground_truth_slots(record: &SceneRecord) -> Vec<[f64; 4]> {
    record
        .entrance_pairs
        .iter()
        .map(|&(a, b)| {
            let (p, q) = (record.points[a as usize], record.points[b as usize]);
            [p.x, p.y, q.x, q.y]
        })
        .collect()
}

/// Ground-truth slots as confidence-1 predictions, for previews.
pub fn ground_truth_predictions(record: &SceneRecord) -> Vec<SlotPrediction> {
    ground_truth_slots(record)
        .into_iter()
        .map(|[x1, y1, x2, y2]| SlotPrediction {
            x1,
            y1,
            x2,
            y2,
            t: 1.0,
        })
        .collect()
}

pub fn match_scene(
    record: &SceneRecord,
    predictions: &[SlotPrediction],
    config: &EvalConfig,
) -> SceneMatches {
    let dets: Vec<[f64; 4]> = predictions
        .iter()
        .map(|p| [p.x1, p.y1, p.x2, p.y2])
        .collect();
    let mut m = match_slots(
        &ground_truth_slots(record),
        &dets,
        config.threshold_px,
        config.reference_px,
        config.order_agnostic,
    );
    m.seed = record.seed;
    m
}

pub fn evaluate_records(
    params: &ModelParams,
    records: &[SceneRecord],
    config: &EvalConfig,
) -> Result<EvalReport> {
    let mut scenes = Vec::with_capacity(records.len());
    for record in records {
        let inference = model::infer(params, &record.image)?;
        scenes.push(match_scene(record, &inference.decisions.accepted, config));
    }
    Ok(EvalReport::from_scenes(scenes, config))
}

pub fn evaluate(
    checkpoint: impl AsRef<Path>,
    dataset: impl AsRef<Path>,
    config: &EvalConfig,
) -> Result<EvalReport> {
    let params = load_checkpoint(checkpoint)?;
    let records = read_dataset(dataset)?;
    evaluate_records(&params, &records, config)
}
