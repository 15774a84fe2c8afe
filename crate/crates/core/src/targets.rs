//! Procedural fitting targets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::raster::{Image, Rgb};

/// Per-axis supersampling used for anti-aliased edges.
pub const SUPERSAMPLE: usize = 8;

fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

fn inside_triangle(tri: &[[f64; 2]; 3], p: [f64; 2]) -> bool {
    let e = [
        edge(tri[0], tri[1], p),
        edge(tri[1], tri[2], p),
        edge(tri[2], tri[0], p),
    ];
    e.iter().all(|&x| x >= 0.0) || e.iter().all(|&x| x <= 0.0)
}

/// Solid triangle over a flat background, coverage estimated with an
/// `SUPERSAMPLE`² grid per pixel. Vertices are in pixel coordinates.
pub fn triangle(
    width: usize,
    height: usize,
    vertices: [[f64; 2]; 3],
    fill: Rgb,
    background: Rgb,
) -> Result<Image> {
    let mut img = Image::filled(width, height, background)?;
    let n = SUPERSAMPLE as f64;
    for y in 0..height {
        for x in 0..width {
            let mut hits = 0usize;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let p = [
                        x as f64 + (sx as f64 + 0.5) / n,
                        y as f64 + (sy as f64 + 0.5) / n,
                    ];
                    hits += inside_triangle(&vertices, p) as usize;
                }
            }
            let cov = hits as f64 / (n * n);
            let c = std::array::from_fn(|k| cov * fill[k] + (1.0 - cov) * background[k]);
            img.set_pixel(x, y, c);
        }
    }
    Ok(img)
}

/// The two-splat edge-fitting scene: a white triangle on black.
pub fn fig3_triangle(size: usize) -> Result<Image> {
    let s = size as f64;
    triangle(
        size,
        size,
        [
            [0.5 * s, 0.15 * s],
            [0.85 * s, 0.8 * s],
            [0.15 * s, 0.8 * s],
        ],
        [1.0; 3],
        [0.0; 3],
    )
}

struct ValueNoise {
    lattice: Vec<f64>,
    cells: usize,
}

impl ValueNoise {
    fn new(rng: &mut ChaCha8Rng, cells: usize) -> Self {
        let lattice = (0..(cells + 1) * (cells + 1))
            .map(|_| rng.random::<f64>())
            .collect();
        ValueNoise { lattice, cells }
    }

    /// Smoothly interpolated noise at `(x, y)` in `[0, 1]²`.
    fn at(&self, x: f64, y: f64) -> f64 {
        let fx = x * self.cells as f64;
        let fy = y * self.cells as f64;
        let ix = (fx.floor() as usize).min(self.cells - 1);
        let iy = (fy.floor() as usize).min(self.cells - 1);
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty) = (smooth(fx - ix as f64), smooth(fy - iy as f64));
        let row = self.cells + 1;
        let l = |i: usize, j: usize| self.lattice[j * row + i];
        let top = l(ix, iy) * (1.0 - tx) + l(ix + 1, iy) * tx;
        let bottom = l(ix, iy + 1) * (1.0 - tx) + l(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

/// Deterministic photograph stand-in: smooth color fields, multi-octave
/// noise, stripes, a checkerboard and hard-edged discs.
pub fn textured(width: usize, height: usize, seed: u64) -> Result<Image> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let octaves: Vec<ValueNoise> = [4, 8, 16, 32, 64]
        .iter()
        .map(|&c| ValueNoise::new(&mut rng, c))
        .collect();
    let hue = ValueNoise::new(&mut rng, 3);
    let discs: Vec<([f64; 3], Rgb)> = (0..24)
        .map(|_| {
            let geom = [
                rng.random::<f64>(),
                rng.random::<f64>(),
                rng.random_range(0.02..0.09),
            ];
            (geom, [rng.random(), rng.random(), rng.random()])
        })
        .collect();
    let mut img = Image::new(width, height)?;
    for y in 0..height {
        for x in 0..width {
            let (fx, fy) = (
                (x as f64 + 0.5) / width as f64,
                (y as f64 + 0.5) / height as f64,
            );
            let mut detail = 0.0;
            let mut amp = 0.5;
            for o in &octaves {
                detail += amp * (o.at(fx, fy) - 0.5);
                amp *= 0.7;
            }
            let h = hue.at(fx, fy);
            let mut c = [
                0.25 + 0.5 * h + detail,
                0.35 + 0.3 * fy + 0.6 * detail,
                0.65 - 0.4 * h + 0.3 * detail,
            ];
            if fx > 0.55 && fy > 0.55 {
                let stripe =
                    0.5 + 0.5 * (2.0 * std::f64::consts::PI * 12.0 * (fx + 0.5 * fy)).sin();
                for v in &mut c {
                    *v = 0.7 * *v + 0.3 * stripe;
                }
            }
            if fx < 0.4 && fy > 0.6 {
                let check = ((x / 6 + y / 6) % 2) as f64;
                c = [0.15 + 0.7 * check, 0.2 + 0.5 * check, 0.1 + 0.3 * check];
            }
            for (g, col) in &discs {
                if (fx - g[0]).hypot(fy - g[1]) < g[2] {
                    c = *col;
                }
            }
            img.set_pixel(x, y, c.map(|v| v.clamp(0.0, 1.0)));
        }
    }
    Ok(img)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triangle_coverage_is_area() {
        let img = triangle(
            16,
            16,
            [[2.0, 2.0], [14.0, 2.0], [2.0, 14.0]],
            [1.0; 3],
            [0.0; 3],
        )
        .unwrap();
        let area: f64 = img.rgb.iter().step_by(3).sum();
        assert!((area - 72.0).abs() < 1.0, "{area}");
        assert_eq!(img.pixel(4, 4), [1.0; 3]);
        assert_eq!(img.pixel(13, 13), [0.0; 3]);
    }

    #[test]
    fn textured_is_deterministic_and_in_range() {
        let a = textured(32, 32, 7).unwrap();
        assert_eq!(a, textured(32, 32, 7).unwrap());
        assert_ne!(a, textured(32, 32, 8).unwrap());
        assert!(a.rgb.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
