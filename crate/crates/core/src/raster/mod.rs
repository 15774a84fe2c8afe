//! Tile-based software rasterizer with front-to-back alpha blending.
//!
//! Splats are binned into 16×16 pixel tiles by their conservative bounding
//! boxes, sorted by blend key (ties broken by index) and composited per pixel.
//! Tiles are independent, so the output does not depend on execution order.

mod image;

pub use self::image::{quantize, Image, Rgb};

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{
    bounding_box_2d, bounding_box_3d, build_h, ray_splat_intersect, Camera, PixelRect, Splat2D,
    Splat3D, NEAR_PLANE,
};
use crate::kernel::{splat_response, GhParams, GlConfig, KernelKind};

pub const TILE_SIZE: usize = 16;

/// Responses below this are skipped.
pub const ALPHA_FLOOR: f64 = 1.0 / 512.0;
/// Blending stops once transmittance drops below this.
pub const TRANSMITTANCE_STOP: f64 = 1e-4;
/// Minimum accumulated weight for a defined depth value.
pub const DEPTH_WEIGHT_MIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub alpha_floor: f64,
    pub transmittance_stop: f64,
    pub gl: GlConfig,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            alpha_floor: ALPHA_FLOOR,
            transmittance_stop: TRANSMITTANCE_STOP,
            gl: GlConfig::default(),
        }
    }
}

impl RenderOptions {
    /// No response floor and no early stop: the render is a smooth function
    /// of the splat parameters. Used by gradient checks.
    pub fn exact() -> Self {
        RenderOptions {
            alpha_floor: 0.0,
            transmittance_stop: 0.0,
            gl: GlConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TileEntry {
    pub splat: u32,
    pub key: f64,
}

/// Per-tile splat lists, each sorted by `(key, splat)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileBinning {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<TileEntry>>,
}

impl TileBinning {
    pub fn tile_rect(&self, tile: usize, width: usize, height: usize) -> PixelRect {
        let tx = tile % self.tiles_x;
        let ty = tile / self.tiles_x;
        PixelRect {
            x0: tx * self.tile_size,
            y0: ty * self.tile_size,
            x1: ((tx + 1) * self.tile_size).min(width),
            y1: ((ty + 1) * self.tile_size).min(height),
        }
    }
}

#[inline]
pub(crate) fn key_order(a: &TileEntry, b: &TileEntry) -> std::cmp::Ordering {
    a.key.total_cmp(&b.key).then(a.splat.cmp(&b.splat))
}

/// Bins precomputed boxes into tiles.
pub fn bin_boxes(boxes: &[PixelRect], keys: &[f64], width: usize, height: usize) -> TileBinning {
    let tiles_x = width.div_ceil(TILE_SIZE);
    let tiles_y = height.div_ceil(TILE_SIZE);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];
    for (i, (b, &key)) in boxes.iter().zip(keys).enumerate() {
        if b.is_empty() {
            continue;
        }
        for ty in b.y0 / TILE_SIZE..=(b.y1 - 1) / TILE_SIZE {
            for tx in b.x0 / TILE_SIZE..=(b.x1 - 1) / TILE_SIZE {
                lists[ty * tiles_x + tx].push(TileEntry {
                    splat: i as u32,
                    key,
                });
            }
        }
    }
    for list in &mut lists {
        list.sort_by(key_order);
    }
    TileBinning {
        tile_size: TILE_SIZE,
        tiles_x,
        tiles_y,
        lists,
    }
}

pub fn bin_tiles_2d(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    opts: &RenderOptions,
) -> TileBinning {
    let boxes: Vec<_> = splats
        .iter()
        .map(|s| bounding_box_2d(s, width, height, opts.gl, opts.alpha_floor))
        .collect();
    let keys: Vec<_> = splats.iter().map(|s| s.z_order).collect();
    bin_boxes(&boxes, &keys, width, height)
}

pub fn bin_tiles_3d(
    splats: &[Splat3D],
    camera: &Camera,
    opts: &RenderOptions,
) -> Result<TileBinning> {
    let prepared = prepare_3d(splats, camera, opts)?;
    let boxes: Vec<_> = prepared.iter().map(|p| p.rect).collect();
    let keys: Vec<_> = prepared.iter().map(|p| p.key).collect();
    Ok(bin_boxes(&boxes, &keys, camera.width, camera.height))
}

/// Per-splat data hoisted out of the pixel loop.
#[derive(Debug, Clone)]
pub(crate) struct Prepared2D {
    pub mu: [f64; 2],
    pub sin: f64,
    pub cos: f64,
    pub scale: [f64; 2],
    pub kind: KernelKind,
    pub gh: GhParams,
    pub opacity: f64,
    pub color: [f64; 3],
    pub rect: PixelRect,
}

impl Prepared2D {
    pub fn new(s: &Splat2D, width: usize, height: usize, opts: &RenderOptions) -> Self {
        let (sin, cos) = s.theta.sin_cos();
        Prepared2D {
            mu: s.mu,
            sin,
            cos,
            scale: s.scale,
            kind: s.kind,
            gh: s.gh,
            opacity: s.opacity,
            color: s.color,
            rect: bounding_box_2d(s, width, height, opts.gl, opts.alpha_floor),
        }
    }

    /// Same arithmetic as [`crate::geometry::local_to_pixel_2d`].
    #[inline]
    pub fn local(&self, px: [f64; 2]) -> [f64; 2] {
        let dx = px[0] - self.mu[0];
        let dy = px[1] - self.mu[1];
        [
            (self.cos * dx + self.sin * dy) / self.scale[0],
            (-self.sin * dx + self.cos * dy) / self.scale[1],
        ]
    }

    #[inline]
    pub fn response(&self, uv: [f64; 2], gl: GlConfig) -> f64 {
        splat_response(uv[0], uv[1], self.kind, &self.gh, self.opacity, gl)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Prepared3D {
    pub wh: Matrix4<f64>,
    pub key: f64,
    pub kind: KernelKind,
    pub gh: GhParams,
    pub opacity: f64,
    pub color: [f64; 3],
    pub rect: PixelRect,
    /// False when the center is not in front of the near plane.
    pub drawable: bool,
}

pub(crate) fn prepare_3d(
    splats: &[Splat3D],
    camera: &Camera,
    opts: &RenderOptions,
) -> Result<Vec<Prepared3D>> {
    splats
        .iter()
        .map(|s| {
            let key = camera.depth_of(&s.position);
            Ok(Prepared3D {
                wh: camera.w * build_h(s)?,
                key,
                kind: s.kind,
                gh: s.gh,
                opacity: s.opacity,
                color: s.color,
                rect: bounding_box_3d(s, camera, opts.gl, opts.alpha_floor)?,
                drawable: key > NEAR_PLANE,
            })
        })
        .collect()
}

#[inline]
pub(crate) fn pixel_center(x: usize, y: usize) -> [f64; 2] {
    [x as f64 + 0.5, y as f64 + 0.5]
}

/// Front-to-back compositing of one pixel over a pre-sorted candidate list.
#[inline]
fn blend_2d<'a>(
    px: [f64; 2],
    candidates: impl Iterator<Item = &'a Prepared2D>,
    background: Rgb,
    opts: &RenderOptions,
) -> Rgb {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    for s in candidates {
        let a = s.response(s.local(px), opts.gl);
        if a < opts.alpha_floor {
            continue;
        }
        let w = a * t;
        for ch in 0..3 {
            c[ch] += s.color[ch] * w;
        }
        t *= 1.0 - a;
        if t < opts.transmittance_stop {
            break;
        }
    }
    for ch in 0..3 {
        c[ch] += t * background[ch];
    }
    c
}

struct Blend3D {
    rgb: Rgb,
    depth: f64,
}

#[inline]
fn blend_3d<'a>(
    px: [f64; 2],
    candidates: impl Iterator<Item = &'a Prepared3D>,
    background: Rgb,
    opts: &RenderOptions,
) -> Blend3D {
    let mut c = [0.0; 3];
    let mut t = 1.0;
    let mut zsum = 0.0;
    let mut wsum = 0.0;
    for s in candidates {
        let Some(hit) = ray_splat_intersect(&s.wh, px) else {
            continue;
        };
        let a = splat_response(hit.u, hit.v, s.kind, &s.gh, s.opacity, opts.gl);
        if a < opts.alpha_floor {
            continue;
        }
        let w = a * t;
        for ch in 0..3 {
            c[ch] += s.color[ch] * w;
        }
        zsum += hit.z * w;
        wsum += w;
        t *= 1.0 - a;
        if t < opts.transmittance_stop {
            break;
        }
    }
    for ch in 0..3 {
        c[ch] += t * background[ch];
    }
    let depth = if wsum < DEPTH_WEIGHT_MIN {
        0.0
    } else {
        zsum / wsum
    };
    Blend3D { rgb: c, depth }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Argument(format!(
            "cannot render a {width}x{height} image"
        )));
    }
    Ok(())
}

/// Renders planar splats into a `width × height` image.
pub fn rasterize_2d(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    background: Rgb,
    opts: &RenderOptions,
) -> Result<Image> {
    check_dims(width, height)?;
    let prepared: Vec<_> = splats
        .iter()
        .map(|s| Prepared2D::new(s, width, height, opts))
        .collect();
    let boxes: Vec<_> = prepared.iter().map(|p| p.rect).collect();
    let keys: Vec<_> = splats.iter().map(|s| s.z_order).collect();
    let binning = bin_boxes(&boxes, &keys, width, height);

    let tiles: Vec<Vec<Rgb>> = (0..binning.lists.len())
        .into_par_iter()
        .map(|tile| {
            let rect = binning.tile_rect(tile, width, height);
            let list = &binning.lists[tile];
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    let cands = list
                        .iter()
                        .map(|e| &prepared[e.splat as usize])
                        .filter(|p| p.rect.contains(x, y));
                    out.push(blend_2d(pixel_center(x, y), cands, background, opts));
                }
            }
            out
        })
        .collect();

    let mut img = Image::new(width, height)?;
    for (tile, colors) in tiles.into_iter().enumerate() {
        let rect = binning.tile_rect(tile, width, height);
        let mut it = colors.into_iter();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                img.set_pixel(x, y, it.next().expect("tile pixel count"));
            }
        }
    }
    Ok(img)
}

/// Reference renderer: every splat at every pixel, no tiles or boxes.
pub fn rasterize_2d_exhaustive(
    splats: &[Splat2D],
    width: usize,
    height: usize,
    background: Rgb,
    opts: &RenderOptions,
) -> Result<Image> {
    check_dims(width, height)?;
    let prepared: Vec<_> = splats
        .iter()
        .map(|s| Prepared2D::new(s, width, height, opts))
        .collect();
    let mut order: Vec<_> = splats
        .iter()
        .enumerate()
        .map(|(i, s)| TileEntry {
            splat: i as u32,
            key: s.z_order,
        })
        .collect();
    order.sort_by(key_order);
    let mut img = Image::new(width, height)?;
    for y in 0..height {
        for x in 0..width {
            let cands = order.iter().map(|e| &prepared[e.splat as usize]);
            img.set_pixel(x, y, blend_2d(pixel_center(x, y), cands, background, opts));
        }
    }
    Ok(img)
}

/// Renders 3D splats through `camera`; the result carries a depth channel.
pub fn rasterize_3d(
    splats: &[Splat3D],
    camera: &Camera,
    background: Rgb,
    opts: &RenderOptions,
) -> Result<Image> {
    let (width, height) = (camera.width, camera.height);
    check_dims(width, height)?;
    let prepared = prepare_3d(splats, camera, opts)?;
    let boxes: Vec<_> = prepared.iter().map(|p| p.rect).collect();
    let keys: Vec<_> = prepared.iter().map(|p| p.key).collect();
    let binning = bin_boxes(&boxes, &keys, width, height);

    let tiles: Vec<Vec<Blend3D>> = (0..binning.lists.len())
        .into_par_iter()
        .map(|tile| {
            let rect = binning.tile_rect(tile, width, height);
            let list = &binning.lists[tile];
            let mut out = Vec::with_capacity(TILE_SIZE * TILE_SIZE);
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    let cands = list
                        .iter()
                        .map(|e| &prepared[e.splat as usize])
                        .filter(|p| p.rect.contains(x, y));
                    out.push(blend_3d(pixel_center(x, y), cands, background, opts));
                }
            }
            out
        })
        .collect();

    let mut img = Image::new(width, height)?;
    let mut depth = vec![0.0; width * height];
    for (tile, px) in tiles.into_iter().enumerate() {
        let rect = binning.tile_rect(tile, width, height);
        let mut it = px.into_iter();
        for y in rect.y0..rect.y1 {
            for x in rect.x0..rect.x1 {
                let b = it.next().expect("tile pixel count");
                img.set_pixel(x, y, b.rgb);
                depth[y * width + x] = b.depth;
            }
        }
    }
    img.depth = Some(depth);
    Ok(img)
}

/// Reference 3D renderer without tiles or boxes.
pub fn rasterize_3d_exhaustive(
    splats: &[Splat3D],
    camera: &Camera,
    background: Rgb,
    opts: &RenderOptions,
) -> Result<Image> {
    let (width, height) = (camera.width, camera.height);
    check_dims(width, height)?;
    let prepared = prepare_3d(splats, camera, opts)?;
    let mut order: Vec<_> = prepared
        .iter()
        .enumerate()
        .filter(|(_, p)| p.drawable)
        .map(|(i, p)| TileEntry {
            splat: i as u32,
            key: p.key,
        })
        .collect();
    order.sort_by(key_order);
    let mut img = Image::new(width, height)?;
    let mut depth = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let cands = order.iter().map(|e| &prepared[e.splat as usize]);
            let b = blend_3d(pixel_center(x, y), cands, background, opts);
            img.set_pixel(x, y, b.rgb);
            depth[y * width + x] = b.depth;
        }
    }
    img.depth = Some(depth);
    Ok(img)
}
