//! Procedural desk-scale image sets.
//!
//! Each image is a smooth background gradient with a few soft-edged
//! ellipses and rectangles on top, values in `[0, 1]`. Sets drawn with
//! different seeds are disjoint in practice, which gives a matching
//! non-training set for every training set.

use crate::error::{Error, Result};
use crate::geometry::Geometry;
use crate::numerics::{derive_seed, Rng, Vector};

/// `n` images of the given geometry, channel-interleaved (HWC).
pub fn synthetic_images(n: usize, geometry: Geometry, seed: u64) -> Result<Vec<Vector>> {
    if n == 0 {
        return Err(Error::Empty("synthetic image count"));
    }
    Ok((0..n)
        .map(|i| one_image(geometry, &mut Rng::new(derive_seed(seed, i as u64))))
        .collect())
}

enum Shape {
    Ellipse { cy: f64, cx: f64, ry: f64, rx: f64 },
    Rect { y0: f64, x0: f64, y1: f64, x1: f64 },
}

impl Shape {
    /// Soft coverage in `[0,1]` at pixel centre `(y, x)` (unit square coords).
    fn coverage(&self, y: f64, x: f64, softness: f64) -> f64 {
        let signed = match *self {
            Shape::Ellipse { cy, cx, ry, rx } => {
                let r = (((y - cy) / ry).powi(2) + ((x - cx) / rx).powi(2)).sqrt();
                (1.0 - r) * ry.min(rx)
            }
            Shape::Rect { y0, x0, y1, x1 } => (y - y0).min(y1 - y).min(x - x0).min(x1 - x),
        };
        (0.5 + signed / softness).clamp(0.0, 1.0)
    }
}

fn one_image(g: Geometry, rng: &mut Rng) -> Vector {
    let base = rng.uniform_range(0.1, 0.6);
    let angle = rng.uniform_range(0.0, std::f64::consts::TAU);
    let slope = rng.uniform_range(0.0, 0.35);
    let (gy, gx) = (angle.sin() * slope, angle.cos() * slope);
    let tint: Vec<f64> = (0..g.channels)
        .map(|_| rng.uniform_range(-0.08, 0.08))
        .collect();

    let count = 2 + rng.below(3);
    let shapes: Vec<(Shape, f64)> = (0..count)
        .map(|_| {
            let shape = if rng.bernoulli(0.5) {
                Shape::Ellipse {
                    cy: rng.uniform_range(0.15, 0.85),
                    cx: rng.uniform_range(0.15, 0.85),
                    ry: rng.uniform_range(0.08, 0.35),
                    rx: rng.uniform_range(0.08, 0.35),
                }
            } else {
                let (ya, yb) = (rng.uniform_range(0.0, 0.8), rng.uniform_range(0.15, 0.5));
                let (xa, xb) = (rng.uniform_range(0.0, 0.8), rng.uniform_range(0.15, 0.5));
                Shape::Rect {
                    y0: ya,
                    x0: xa,
                    y1: (ya + yb).min(1.0),
                    x1: (xa + xb).min(1.0),
                }
            };
            (shape, rng.uniform_range(0.0, 1.0))
        })
        .collect();
    let softness = 1.5 / g.height.max(g.width) as f64;

    let mut out = Vec::with_capacity(g.len());
    for r in 0..g.height {
        for c in 0..g.width {
            let y = (r as f64 + 0.5) / g.height as f64;
            let x = (c as f64 + 0.5) / g.width as f64;
            let mut v = base + gy * (y - 0.5) + gx * (x - 0.5);
            for (shape, level) in &shapes {
                let a = shape.coverage(y, x, softness);
                v = (1.0 - a) * v + a * level;
            }
            for t in &tint {
                out.push((v + t).clamp(0.0, 1.0));
            }
        }
    }
    out.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_in_unit_range_and_deterministic() {
        let g = Geometry::new(16, 16, 1).unwrap();
        let a = synthetic_images(5, g, 42).unwrap();
        let b = synthetic_images(5, g, 42).unwrap();
        assert_eq!(a, b);
        for img in &a {
            assert_eq!(img.len(), 256);
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let c = synthetic_images(5, g, 43).unwrap();
        assert!(a.iter().zip(&c).all(|(x, y)| x.mean_sq_diff(y) > 1e-4));
    }

    #[test]
    fn color_images_have_channels() {
        let g = Geometry::new(8, 8, 3).unwrap();
        let imgs = synthetic_images(2, g, 1).unwrap();
        assert_eq!(imgs[0].len(), 192);
    }
}
