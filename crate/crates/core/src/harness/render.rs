//! PPM output and detection overlays: marking-points as red rings, entrance
//! lines as blue segments.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::discriminator::SlotPrediction;
use crate::error::Result;
use crate::perception::MarkingPoint;
use crate::scene::raster::Rgb;
use crate::scene::Image;

pub const POINT_COLOR: Rgb = [1.0, 0.0, 0.0];
pub const LINE_COLOR: Rgb = [0.0, 0.2, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Primitive {
    /// Entrance line between two normalized points.
    Segment { from: [f64; 2], to: [f64; 2] },
    /// Marking-point at a normalized position.
    Circle { center: [f64; 2] },
}

/// Shapes to draw: every listed point plus the endpoints of each prediction,
/// one circle per distinct position.
pub fn overlay_primitives(
    points: &[MarkingPoint],
    predictions: &[SlotPrediction],
) -> Vec<Primitive> {
    let mut centers: Vec<[f64; 2]> = Vec::new();
    let mut add = |c: [f64; 2]| {
        if !centers.contains(&c) {
            centers.push(c);
        }
    };
    for p in points {
        add([p.x, p.y]);
    }
    for p in predictions {
        add([p.x1, p.y1]);
        add([p.x2, p.y2]);
    }
    let mut prims: Vec<Primitive> = predictions
        .iter()
        .map(|p| Primitive::Segment {
            from: [p.x1, p.y1],
            to: [p.x2, p.y2],
        })
        .collect();
    prims.extend(
        centers
            .into_iter()
            .map(|center| Primitive::Circle { center }),
    );
    prims
}

/// Binary 8-bit PPM (`P6`).
pub fn write_ppm(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P6\n{} {}\n255\n", image.width, image.height)?;
    let bytes: Vec<u8> = image
        .data
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    w.write_all(&bytes)?;
    w.flush()?;
    Ok(())
}

/// Draws the overlay onto a copy of `image` and writes it as PPM. Shapes
/// reaching past the border are clipped.
pub fn render_overlay(
    image: &Image,
    points: &[MarkingPoint],
    predictions: &[SlotPrediction],
    out: impl AsRef<Path>,
) -> Result<()> {
    let mut canvas = image.clone();
    let (w, h) = (image.width as f64, image.height as f64);
    let px = |p: [f64; 2]| [p[0].clamp(0.0, 1.0) * w, p[1].clamp(0.0, 1.0) * h];
    let scale = w.min(h) / 256.0;
    for prim in overlay_primitives(points, predictions) {
        match prim {
            Primitive::Segment { from, to } => {
                canvas.draw_segment(px(from), px(to), 2.5 * scale, LINE_COLOR, 1.0);
            }
            Primitive::Circle { center } => {
                canvas.draw_ring(px(center), 5.0 * scale, 2.0 * scale, POINT_COLOR);
            }
        }
    }
    write_ppm(&canvas, out)
}
