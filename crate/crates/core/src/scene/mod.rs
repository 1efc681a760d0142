//! Procedural around-view parking scenes.
//!
//! A scene is a row of one or more adjacent perpendicular slots painted on a
//! textured ground. The marking-points are the junctions of the separator lines
//! with the entrance line; every slot contributes one ordered entrance pair
//! `(P1, P2)` such that `P1, P2, P3, P4` runs anticlockwise as seen on screen
//! (`P3`, `P4` being the rear corners).

mod dataset;
pub mod raster;

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perception::MarkingPoint;

pub use dataset::{read_dataset, write_dataset, DATASET_MAGIC, DATASET_VERSION};
use raster::{segments_distance, Rgb};

/// Minimum distance between two marking-points: 1.5 cells of a 16-cell grid.
pub const MIN_POINT_SEPARATION: f64 = 0.09375;
/// Marking-points stay inside `[POINT_MARGIN, 1 − POINT_MARGIN]²`.
pub const POINT_MARGIN: f64 = 0.05;
const PLACEMENT_ATTEMPTS: usize = 100;

/// Row-major `height×width×3` RGB image with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneRecord {
    pub image: Image,
    pub points: Vec<MarkingPoint>,
    /// Ordered `(P1, P2)` indices into `points`.
    pub entrance_pairs: Vec<(u32, u32)>,
    pub seed: u64,
}

impl SceneRecord {
    /// Checks index validity, point bounds and separation.
    pub fn validate(&self) -> Result<()> {
        let n = self.points.len();
        for &(a, b) in &self.entrance_pairs {
            if a == b || a as usize >= n || b as usize >= n {
                return Err(Error::Data(format!(
                    "invalid entrance pair ({a}, {b}) for {n} points"
                )));
            }
        }
        for p in &self.points {
            if !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y) {
                return Err(Error::Data(format!(
                    "point ({}, {}) outside the image",
                    p.x, p.y
                )));
            }
        }
        for i in 0..n {
            for j in i + 1..n {
                if self.points[i].distance(&self.points[j]) < MIN_POINT_SEPARATION {
                    return Err(Error::Data(format!(
                        "points {i} and {j} closer than {MIN_POINT_SEPARATION}"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    pub image_size: usize,
    pub slots_min: usize,
    pub slots_max: usize,
    /// Normalized slot width (distance between neighbouring points).
    pub slot_width: (f64, f64),
    pub slot_depth: (f64, f64),
    /// Line thickness in pixels.
    pub line_thickness: (f64, f64),
    /// Extension of the entrance line past the outer points, in slot widths.
    pub overhang: (f64, f64),
    /// Standard deviation of the per-pixel Gaussian noise.
    pub noise_amplitude: f64,
    pub distractors: usize,
    /// Entrance direction is drawn from `[−rotation_range, rotation_range]`.
    pub rotation_range: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            image_size: 256,
            slots_min: 1,
            slots_max: 3,
            slot_width: (0.17, 0.24),
            slot_depth: (0.28, 0.40),
            line_thickness: (3.5, 5.5),
            overhang: (0.0, 0.4),
            noise_amplitude: 0.03,
            distractors: 3,
            rotation_range: PI,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if self.image_size < 16 {
            return bad(format!("image size {} too small", self.image_size));
        }
        if self.slots_min == 0 || self.slots_min > self.slots_max {
            return bad(format!(
                "slot count range {}..={} invalid",
                self.slots_min, self.slots_max
            ));
        }
        for (name, (lo, hi)) in [
            ("slot_width", self.slot_width),
            ("slot_depth", self.slot_depth),
            ("line_thickness", self.line_thickness),
            ("overhang", self.overhang),
        ] {
            if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                return bad(format!("{name} range ({lo}, {hi}) invalid"));
            }
        }
        if !(self.noise_amplitude >= 0.0) || !(self.rotation_range >= 0.0) {
            return bad("noise amplitude and rotation range must be non-negative".into());
        }
        Ok(())
    }
}

/// Visual (y-up) signed area of a polygon given in image coordinates
/// (y down). Positive means anticlockwise on screen.
pub fn screen_signed_area(poly: &[[f64; 2]]) -> f64 {
    let mut twice = 0.0;
    for (i, a) in poly.iter().enumerate() {
        let b = poly[(i + 1) % poly.len()];
        twice += a[0] * b[1] - b[0] * a[1];
    }
    -twice / 2.0
}

/// Geometry of one generated slot row, normalized coordinates.
#[derive(Clone, Debug)]
struct SlotRow {
    /// Junctions along the entrance line, in order along `direction`.
    junctions: Vec<[f64; 2]>,
    direction: [f64; 2],
    /// Unit vector from the entrance line into the slots.
    inward: [f64; 2],
    depth: f64,
    overhang: f64,
}

impl SlotRow {
    fn rear(&self, k: usize) -> [f64; 2] {
        let p = self.junctions[k];
        [
            p[0] + self.depth * self.inward[0],
            p[1] + self.depth * self.inward[1],
        ]
    }

    /// All painted segments, normalized coordinates.
    fn segments(&self) -> Vec<([f64; 2], [f64; 2])> {
        let n = self.junctions.len();
        let first = self.junctions[0];
        let last = self.junctions[n - 1];
        let o = self.overhang;
        let d = self.direction;
        let mut segs = vec![(
            [first[0] - o * d[0], first[1] - o * d[1]],
            [last[0] + o * d[0], last[1] + o * d[1]],
        )];
        for k in 0..n {
            segs.push((self.junctions[k], self.rear(k)));
        }
        segs
    }
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.gen_range(lo..hi)
    } else {
        lo
    }
}

fn inside(p: [f64; 2], lo: f64, hi: f64) -> bool {
    p.iter().all(|v| (lo..=hi).contains(v))
}

fn place_row(config: &SceneConfig, slots: usize, rng: &mut ChaCha8Rng) -> Result<SlotRow> {
    for _ in 0..PLACEMENT_ATTEMPTS {
        let width = uniform(rng, config.slot_width);
        let depth = uniform(rng, config.slot_depth);
        let theta = if config.rotation_range > 0.0 {
            rng.gen_range(-config.rotation_range..=config.rotation_range)
        } else {
            0.0
        };
        let direction = [theta.cos(), theta.sin()];
        let side = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let inward = [-direction[1] * side, direction[0] * side];
        let origin = [
            rng.gen_range(POINT_MARGIN..1.0 - POINT_MARGIN),
            rng.gen_range(POINT_MARGIN..1.0 - POINT_MARGIN),
        ];
        let junctions: Vec<[f64; 2]> = (0..=slots)
            .map(|k| {
                let s = k as f64 * width;
                [origin[0] + s * direction[0], origin[1] + s * direction[1]]
            })
            .collect();
        let overhang = uniform(rng, config.overhang) * width;
        let row = SlotRow {
            junctions,
            direction,
            inward,
            depth,
            overhang,
        };
        let points_ok = row
            .junctions
            .iter()
            .all(|&p| inside(p, POINT_MARGIN, 1.0 - POINT_MARGIN));
        let rear_ok = (0..=slots).all(|k| inside(row.rear(k), 0.0, 1.0));
        let separated = width >= MIN_POINT_SEPARATION;
        if points_ok && rear_ok && separated {
            return Ok(row);
        }
    }
    Err(Error::Generation(format!(
        "could not place {slots} slot(s) inside the image after {PLACEMENT_ATTEMPTS} attempts"
    )))
}

struct Palette {
    ground: Rgb,
    paint: Rgb,
    brick: bool,
}

fn pick_palette(rng: &mut ChaCha8Rng) -> Palette {
    let (ground, brick) = match rng.gen_range(0..3) {
        // asphalt
        0 => {
            let g = rng.gen_range(0.18..0.42f32);
            (
                [
                    g,
                    g * rng.gen_range(0.97..1.03),
                    g * rng.gen_range(0.95..1.08),
                ],
                false,
            )
        }
        // red brick
        1 => (
            [
                rng.gen_range(0.40..0.55f32),
                rng.gen_range(0.20..0.30f32),
                rng.gen_range(0.15..0.25f32),
            ],
            true,
        ),
        // pale concrete
        _ => {
            let g = rng.gen_range(0.45..0.58f32);
            ([g, g, g * rng.gen_range(0.92..1.0)], false)
        }
    };
    let paint = if rng.gen_bool(0.75) {
        let w = rng.gen_range(0.88..1.0f32);
        [w, w, w * rng.gen_range(0.95..1.0)]
    } else {
        [
            rng.gen_range(0.9..1.0f32),
            rng.gen_range(0.78..0.9f32),
            rng.gen_range(0.2..0.4f32),
        ]
    };
    Palette {
        ground,
        paint,
        brick,
    }
}

fn paint_ground(img: &mut Image, palette: &Palette, rng: &mut ChaCha8Rng) {
    let size = img.width as f64;
    // broad illumination variation
    for _ in 0..rng.gen_range(2..5) {
        let center = [rng.gen_range(0.0..size), rng.gen_range(0.0..size)];
        let r = rng.gen_range(0.2..0.6) * size;
        let shade: f32 = rng.gen_range(-0.08..0.08);
        let color = palette.ground.map(|c| (c + shade).clamp(0.0, 1.0));
        img.draw_ellipse(
            center,
            [r, r * rng.gen_range(0.5..1.0)],
            rng.gen_range(0.0..PI),
            color,
            0.5,
        );
    }
    if palette.brick {
        let pitch = rng.gen_range(10.0..18.0);
        let angle: f64 = rng.gen_range(0.0..PI);
        let (s, c) = angle.sin_cos();
        let mortar = palette.ground.map(|v| v * 0.75);
        let reach = size * 1.5;
        let mid = size / 2.0;
        let mut k = -reach;
        while k < reach {
            let a = [mid + k * c - reach * s, mid + k * s + reach * c];
            let b = [mid + k * c + reach * s, mid + k * s - reach * c];
            img.draw_segment(a, b, 1.2, mortar, 0.6);
            k += pitch;
        }
    }
}

fn paint_distractors(
    img: &mut Image,
    config: &SceneConfig,
    row: &SlotRow,
    palette: &Palette,
    rng: &mut ChaCha8Rng,
) {
    let size = img.width as f64;
    let slot_segments = row.segments();
    for _ in 0..config.distractors {
        if rng.gen_bool(0.5) {
            // stain
            let center = [rng.gen_range(0.0..size), rng.gen_range(0.0..size)];
            let r = rng.gen_range(0.02..0.08) * size;
            let tone: f32 = rng.gen_range(0.3..0.8);
            let color = palette.ground.map(|c| c * tone);
            img.draw_ellipse(
                center,
                [r, r * rng.gen_range(0.4..1.0)],
                rng.gen_range(0.0..PI),
                color,
                0.7,
            );
            continue;
        }
        // Isolated painted stroke, kept clear of the slot lines so it never
        // forms a junction with them.
        for _ in 0..20 {
            let a = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let len = rng.gen_range(0.08..0.25);
            let phi: f64 = rng.gen_range(0.0..2.0 * PI);
            let b = [a[0] + len * phi.cos(), a[1] + len * phi.sin()];
            let clear = slot_segments
                .iter()
                .all(|&(s0, s1)| segments_distance(a, b, s0, s1) > 0.06);
            if clear {
                let thick = uniform(rng, config.line_thickness) * rng.gen_range(0.6..1.0);
                let alpha = rng.gen_range(0.4..0.9);
                img.draw_segment(
                    [a[0] * size, a[1] * size],
                    [b[0] * size, b[1] * size],
                    thick,
                    palette.paint,
                    alpha,
                );
                break;
            }
        }
    }
}

/// Deterministic scene for `(config, seed)`.
pub fn generate_scene(config: &SceneConfig, seed: u64) -> Result<SceneRecord> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slots = rng.gen_range(config.slots_min..=config.slots_max);
    let row = place_row(config, slots, &mut rng)?;

    let size = config.image_size;
    let palette = pick_palette(&mut rng);
    let mut img = Image::filled(size, size, palette.ground);
    paint_ground(&mut img, &palette, &mut rng);
    paint_distractors(&mut img, config, &row, &palette, &mut rng);

    let px = |p: [f64; 2]| [p[0] * size as f64, p[1] * size as f64];
    let thickness = uniform(&mut rng, config.line_thickness);
    let wear = rng.gen_range(0.75..1.0f32);
    for (a, b) in row.segments() {
        img.draw_segment(px(a), px(b), thickness, palette.paint, wear);
    }

    if config.noise_amplitude > 0.0 {
        let noise = Normal::new(0.0, config.noise_amplitude).expect("non-negative std");
        for v in img.data.iter_mut() {
            *v += noise.sample(&mut rng) as f32;
        }
    }
    img.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));

    // Shuffle point order so indices carry no geometric hint.
    let mut order: Vec<usize> = (0..row.junctions.len()).collect();
    order.shuffle(&mut rng);
    let mut index_of = vec![0u32; order.len()];
    for (new, &old) in order.iter().enumerate() {
        index_of[old] = new as u32;
    }
    let points = order
        .iter()
        .map(|&k| MarkingPoint::new(row.junctions[k][0], row.junctions[k][1], 1.0))
        .collect();
    let entrance_pairs = (0..slots)
        .map(|k| {
            let quad = [
                row.junctions[k],
                row.junctions[k + 1],
                row.rear(k + 1),
                row.rear(k),
            ];
            if screen_signed_area(&quad) > 0.0 {
                (index_of[k], index_of[k + 1])
            } else {
                (index_of[k + 1], index_of[k])
            }
        })
        .collect();

    let record = SceneRecord {
        image: img,
        points,
        entrance_pairs,
        seed,
    };
    record.validate()?;
    Ok(record)
}

/// Per-scene seeds derived from one base seed.
pub fn scene_seeds(base: u64, count: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    (0..count).map(|_| rng.gen()).collect()
}

pub fn generate_dataset(
    config: &SceneConfig,
    base_seed: u64,
    count: usize,
) -> Result<Vec<SceneRecord>> {
    scene_seeds(base_seed, count)
        .into_iter()
        .map(|s| generate_scene(config, s))
        .collect()
}

/// Rear corners `(P3, P4)` of the slot entered through `(p1, p2)`, assuming
/// the anticlockwise convention. Used by renderers to sketch side lines.
pub fn rear_corners(p1: [f64; 2], p2: [f64; 2], depth: f64) -> ([f64; 2], [f64; 2]) {
    let d = [p2[0] - p1[0], p2[1] - p1[1]];
    let len = d[0].hypot(d[1]).max(f64::EPSILON);
    // On screen (y down) anticlockwise P1→P2→P3 turns the interior to the
    // image-space vector (d.y, −d.x).
    let inward = [d[1] / len, -d[0] / len];
    (
        [p2[0] + depth * inward[0], p2[1] + depth * inward[1]],
        [p1[0] + depth * inward[0], p1[1] + depth * inward[1]],
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_scene() {
        let cfg = SceneConfig::default();
        assert_eq!(
            generate_scene(&cfg, 17).unwrap(),
            generate_scene(&cfg, 17).unwrap()
        );
        assert_ne!(
            generate_scene(&cfg, 17).unwrap(),
            generate_scene(&cfg, 18).unwrap()
        );
    }

    #[test]
    fn one_slot_gives_one_pair() {
        let cfg = SceneConfig {
            slots_min: 1,
            slots_max: 1,
            ..SceneConfig::default()
        };
        for seed in 0..20 {
            let s = generate_scene(&cfg, seed).unwrap();
            assert_eq!(s.entrance_pairs.len(), 1);
            assert!(s.points.len() >= 2);
        }
    }

    #[test]
    fn impossible_geometry_is_reported() {
        let cfg = SceneConfig {
            slots_min: 3,
            slots_max: 3,
            slot_width: (0.5, 0.5),
            ..SceneConfig::default()
        };
        assert!(matches!(generate_scene(&cfg, 1), Err(Error::Generation(_))));
    }

    #[test]
    fn rear_corners_close_an_anticlockwise_slot() {
        let cfg = SceneConfig::default();
        for seed in 0..50 {
            let s = generate_scene(&cfg, seed).unwrap();
            for &(a, b) in &s.entrance_pairs {
                let p1 = [s.points[a as usize].x, s.points[a as usize].y];
                let p2 = [s.points[b as usize].x, s.points[b as usize].y];
                let (p3, p4) = rear_corners(p1, p2, 0.3);
                assert!(screen_signed_area(&[p1, p2, p3, p4]) > 0.0);
            }
        }
    }

    #[test]
    fn signed_area_orientation() {
        // On screen: right, then down, then left is clockwise.
        let cw = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        assert!(screen_signed_area(&cw) < 0.0);
        let mut ccw = cw;
        ccw.reverse();
        assert!(screen_signed_area(&ccw) > 0.0);
    }
}
