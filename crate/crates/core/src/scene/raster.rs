//! Anti-aliased primitives on an RGB float canvas.

use super::Image;

pub type Rgb = [f32; 3];

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&color);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// `pixel ← pixel·(1−a) + color·a`.
    pub fn blend(&mut self, x: usize, y: usize, color: Rgb, alpha: f32) {
        if alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        let i = (y * self.width + x) * 3;
        for c in 0..3 {
            self.data[i + c] = self.data[i + c] * (1.0 - a) + color[c] * a;
        }
    }

    /// Thick segment between two points given in pixel units. Coverage falls
    /// off linearly over one pixel at the edge.
    pub fn draw_segment(
        &mut self,
        a: [f64; 2],
        b: [f64; 2],
        thickness: f64,
        color: Rgb,
        alpha: f32,
    ) {
        let r = thickness / 2.0;
        let pad = r + 1.0;
        let (x0, x1) = span(a[0].min(b[0]) - pad, a[0].max(b[0]) + pad, self.width);
        let (y0, y1) = span(a[1].min(b[1]) - pad, a[1].max(b[1]) + pad, self.height);
        for y in y0..y1 {
            for x in x0..x1 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let d = segment_distance(p, a, b);
                let cov = (r + 0.5 - d).clamp(0.0, 1.0) as f32;
                self.blend(x, y, color, cov * alpha);
            }
        }
    }

    /// Filled axis-aligned ellipse rotated by `angle`, pixel units.
    pub fn draw_ellipse(
        &mut self,
        center: [f64; 2],
        radii: [f64; 2],
        angle: f64,
        color: Rgb,
        alpha: f32,
    ) {
        let reach = radii[0].max(radii[1]) + 1.0;
        let (x0, x1) = span(center[0] - reach, center[0] + reach, self.width);
        let (y0, y1) = span(center[1] - reach, center[1] + reach, self.height);
        let (s, c) = angle.sin_cos();
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = x as f64 + 0.5 - center[0];
                let dy = y as f64 + 0.5 - center[1];
                let u = (c * dx + s * dy) / radii[0];
                let v = (-s * dx + c * dy) / radii[1];
                let rho = (u * u + v * v).sqrt();
                // soft rim about one pixel wide
                let rim = 1.0 / radii[0].min(radii[1]).max(1.0);
                let cov = ((1.0 - rho) / rim + 0.5).clamp(0.0, 1.0) as f32;
                self.blend(x, y, color, cov * alpha);
            }
        }
    }

    /// Filled disc outline (ring) of the given radius, pixel units.
    pub fn draw_ring(&mut self, center: [f64; 2], radius: f64, thickness: f64, color: Rgb) {
        let reach = radius + thickness + 1.0;
        let (x0, x1) = span(center[0] - reach, center[0] + reach, self.width);
        let (y0, y1) = span(center[1] - reach, center[1] + reach, self.height);
        for y in y0..y1 {
            for x in x0..x1 {
                let d = (x as f64 + 0.5 - center[0]).hypot(y as f64 + 0.5 - center[1]);
                let cov = (thickness / 2.0 + 0.5 - (d - radius).abs()).clamp(0.0, 1.0) as f32;
                self.blend(x, y, color, cov);
            }
        }
    }
}

fn span(lo: f64, hi: f64, size: usize) -> (usize, usize) {
    let lo = lo.floor().max(0.0) as usize;
    let hi = (hi.ceil().max(0.0) as usize).min(size);
    (lo.min(size), hi)
}

pub fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Shortest distance between two segments (zero when they cross).
pub fn segments_distance(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> f64 {
    if segments_cross(a0, a1, b0, b1) {
        return 0.0;
    }
    segment_distance(a0, b0, b1)
        .min(segment_distance(a1, b0, b1))
        .min(segment_distance(b0, a0, a1))
        .min(segment_distance(b1, a0, a1))
}

fn segments_cross(a0: [f64; 2], a1: [f64; 2], b0: [f64; 2], b1: [f64; 2]) -> bool {
    let cross = |o: [f64; 2], p: [f64; 2], q: [f64; 2]| {
        (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])
    };
    let d1 = cross(b0, b1, a0);
    let d2 = cross(b0, b1, a1);
    let d3 = cross(a0, a1, b0);
    let d4 = cross(a0, a1, b1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}
