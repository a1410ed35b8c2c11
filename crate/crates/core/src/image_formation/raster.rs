//! Z-buffered triangle rasterization with perspective-correct interpolation.
//!
//! A pixel `(x, y)` is sampled at its center `(x + 0.5, y + 0.5)` and is covered when
//! the center lies inside or on the boundary of the projected triangle. Triangles
//! are visited in index order and only a strictly nearer sample replaces the stored
//! one, so depth ties go to the lower triangle id.

use crate::image_formation::camera::Projection;
use crate::image_formation::image::ImageRgb;
use crate::landmarks::Vec2;
use crate::morphable_model::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    /// Shaded color clamped to `[0, 1]`; black where `mask` is false.
    pub color: ImageRgb,
    /// Camera-space depth; `+inf` on background.
    pub depth: Vec<f64>,
    /// Face region `M`.
    pub mask: Vec<bool>,
    /// Skin attention `A` in `[0, 1]`.
    pub attention: Vec<f64>,
    pub triangle_id: Vec<Option<u32>>,
    /// Perspective-corrected barycentric weights of the covering triangle.
    pub barycentric: Vec<[f64; 3]>,
}

impl RenderOutput {
    pub fn empty(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            color: ImageRgb::new(width, height),
            depth: vec![f64::INFINITY; n],
            mask: vec![false; n],
            attention: vec![0.0; n],
            triangle_id: vec![None; n],
            barycentric: vec![[0.0; 3]; n],
        }
    }

    pub fn covered_pixels(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Signed doubled area of `(a, b, c)`; positive when counter-clockwise in a y-up frame.
#[inline]
pub fn edge(a: &Vec2, b: &Vec2, c: &Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Rasterize `triangles` given per-vertex projections, colors and attention weights.
///
/// Triangles touching a clipped vertex are skipped, as are triangles with zero or
/// non-finite screen area.
pub fn rasterize(
    triangles: &[[u32; 3]],
    projection: &Projection,
    colors: &[Vec3],
    attention: &[f64],
    width: u32,
    height: u32,
) -> RenderOutput {
    let mut out = RenderOutput::empty(width, height);
    let w = width as usize;

    for (tid, tri) in triangles.iter().enumerate() {
        let idx = tri.map(|i| i as usize);
        if idx.iter().any(|&i| projection.clipped[i]) {
            continue;
        }
        let p = idx.map(|i| projection.points[i]);
        let z = idx.map(|i| projection.depth[i]);
        let area = edge(&p[0], &p[1], &p[2]);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let sign = area.signum();

        let min_x = p.iter().map(|q| q.x).fold(f64::INFINITY, f64::min);
        let max_x = p.iter().map(|q| q.x).fold(f64::NEG_INFINITY, f64::max);
        let min_y = p.iter().map(|q| q.y).fold(f64::INFINITY, f64::min);
        let max_y = p.iter().map(|q| q.y).fold(f64::NEG_INFINITY, f64::max);
        let x0 = (min_x - 0.5).ceil().max(0.0);
        let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
        let y0 = (min_y - 0.5).ceil().max(0.0);
        let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
        if x0 > x1 || y0 > y1 {
            continue;
        }

        for py in y0 as usize..=y1 as usize {
            for px in x0 as usize..=x1 as usize {
                let c = Vec2::new(px as f64 + 0.5, py as f64 + 0.5);
                let e0 = edge(&p[1], &p[2], &c) * sign;
                let e1 = edge(&p[2], &p[0], &c) * sign;
                let e2 = edge(&p[0], &p[1], &c) * sign;
                if e0 < 0.0 || e1 < 0.0 || e2 < 0.0 {
                    continue;
                }
                let a = area * sign;
                let l = [e0 / a, e1 / a, e2 / a];
                let inv_z = l[0] / z[0] + l[1] / z[1] + l[2] / z[2];
                let depth = 1.0 / inv_z;
                let pi = py * w + px;
                if !(depth < out.depth[pi]) {
                    continue;
                }
                let b = [l[0] / z[0] * depth, l[1] / z[1] * depth, l[2] / z[2] * depth];
                let color = colors[idx[0]] * b[0] + colors[idx[1]] * b[1] + colors[idx[2]] * b[2];
                let att = attention[idx[0]] * b[0] + attention[idx[1]] * b[1] + attention[idx[2]] * b[2];
                out.depth[pi] = depth;
                out.mask[pi] = true;
                out.triangle_id[pi] = Some(tid as u32);
                out.barycentric[pi] = b;
                out.color.pixels[pi] = color.map(|c| if c.is_nan() { 0.0 } else { c.clamp(0.0, 1.0) });
                out.attention[pi] = att.clamp(0.0, 1.0);
            }
        }
    }
    out
}
