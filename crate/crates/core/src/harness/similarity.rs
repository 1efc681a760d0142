//! Cosine similarity of node features, split by whether the two points form
//! an entrance line, measured before and after the graph network.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model;
use crate::params::ModelParams;
use crate::scene::SceneRecord;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub paired_before: f64,
    pub unpaired_before: f64,
    pub paired_after: f64,
    pub unpaired_after: f64,
    pub paired_count: usize,
    pub unpaired_count: usize,
    pub scenes_used: usize,
}

impl SimilarityReport {
    pub fn gap_before(&self) -> f64 {
        self.paired_before - self.unpaired_before
    }

    pub fn gap_after(&self) -> f64 {
        self.paired_after - self.unpaired_after
    }
}

/// Zero when either vector is zero.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Features are taken at the ground-truth point positions; scenes with fewer
/// than two points are skipped.
pub fn similarity_report(
    params: &ModelParams,
    records: &[SceneRecord],
) -> Result<SimilarityReport> {
    let mut sums = [0.0f64; 4];
    let (mut paired, mut unpaired, mut used) = (0usize, 0usize, 0usize);
    for record in records {
        let n = record.points.len();
        if n < 2 {
            continue;
        }
        used += 1;
        let (before, after) = model::graph_features(params, &record.image, &record.points)?;
        for i in 0..n {
            for j in i + 1..n {
                let is_pair = record.entrance_pairs.iter().any(|&(a, b)| {
                    (a as usize, b as usize) == (i, j) || (a as usize, b as usize) == (j, i)
                });
                let sb = cosine_similarity(before.row(i), before.row(j));
                let sa = cosine_similarity(after.row(i), after.row(j));
                if is_pair {
                    sums[0] += sb;
                    sums[2] += sa;
                    paired += 1;
                } else {
                    sums[1] += sb;
                    sums[3] += sa;
                    unpaired += 1;
                }
            }
        }
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    Ok(SimilarityReport {
        paired_before: mean(sums[0], paired),
        unpaired_before: mean(sums[1], unpaired),
        paired_after: mean(sums[2], paired),
        unpaired_after: mean(sums[3], unpaired),
        paired_count: paired,
        unpaired_count: unpaired,
        scenes_used: used,
    })
}
