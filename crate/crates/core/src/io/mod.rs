//! Image, scene and metrics files.

mod metrics;
mod ppm;
mod scene;

use std::fs;
use std::path::Path;

pub use metrics::{metrics_csv_string, read_metrics_csv, write_metrics_csv, METRICS_HEADER};
pub use ppm::{decode_ppm, encode_ppm};
pub use scene::{
    camera_from_str, scene_from_str, scene_to_string, Scene, SceneSplats, SCENE_VERSION,
};

use crate::error::{Error, Result};
use crate::raster::Image;

fn is_png(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { message, .. } => Error::Parse {
            path: path.display().to_string(),
            message,
        },
        other => other,
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Loads a PPM, or a PNG when the extension says so. PNG alpha is kept.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if !is_png(path) {
        return decode_ppm(&bytes).map_err(|e| with_path(e, path));
    }
    let decoded = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
        .into_rgba16();
    let (w, h) = decoded.dimensions();
    let mut rgb = Vec::with_capacity(3 * (w * h) as usize);
    let mut alpha = Vec::with_capacity((w * h) as usize);
    for p in decoded.pixels() {
        rgb.extend(p.0[..3].iter().map(|&v| v as f64 / 65535.0));
        alpha.push(p.0[3] as f64 / 65535.0);
    }
    let mut img = Image::from_rgb(w as usize, h as usize, rgb)?;
    if alpha.iter().any(|&a| a < 1.0) {
        img.alpha = Some(alpha);
    }
    Ok(img)
}

/// Writes 8-bit RGB as PPM, or PNG when the extension says so.
pub fn write_image(path: impl AsRef<Path>, img: &Image) -> Result<()> {
    let path = path.as_ref();
    if !is_png(path) {
        return write_bytes(path, &encode_ppm(img));
    }
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, img.to_rgb8())
        .ok_or_else(|| Error::Argument("image buffer size mismatch".into()))?;
    let mut out = std::io::Cursor::new(Vec::new());
    buf.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    write_bytes(path, &out.into_inner())
}

/// Depth normalized by its maximum as a gray image; pixels without a hit are black.
pub fn depth_image(img: &Image) -> Result<Image> {
    let depth = img
        .depth
        .as_ref()
        .ok_or_else(|| Error::Argument("image carries no depth channel".into()))?;
    let max = depth.iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let rgb = depth.iter().flat_map(|&d| [d * scale; 3]).collect();
    Image::from_rgb(img.width, img.height, rgb)
}

/// Target, render and absolute error side by side.
pub fn comparison_strip(target: &Image, render: &Image) -> Result<Image> {
    target.same_dims(render)?;
    let (w, h) = (target.width, target.height);
    let mut out = Image::new(3 * w, h)?;
    for y in 0..h {
        for x in 0..w {
            let (t, r) = (target.pixel(x, y), render.pixel(x, y));
            out.set_pixel(x, y, t);
            out.set_pixel(w + x, y, r);
            out.set_pixel(2 * w + x, y, std::array::from_fn(|k| (t[k] - r[k]).abs()));
        }
    }
    Ok(out)
}

pub fn read_scene(path: impl AsRef<Path>) -> Result<Scene> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.display().to_string(),
        message: "scene file is not UTF-8".into(),
    })?;
    scene_from_str(&text).map_err(|e| with_path(e, path))
}

pub fn write_scene(path: impl AsRef<Path>, scene: &Scene) -> Result<()> {
    write_bytes(path.as_ref(), scene_to_string(scene)?.as_bytes())
}

pub fn read_camera(
    path: impl AsRef<Path>,
    default_dims: Option<(usize, usize)>,
) -> Result<crate::geometry::Camera> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    let text = String::from_utf8_lossy(&bytes);
    camera_from_str(&text, default_dims).map_err(|e| with_path(e, path))
}

pub fn write_metrics(path: impl AsRef<Path>, rows: &[crate::optim::MetricsRow]) -> Result<()> {
    write_bytes(path.as_ref(), metrics_csv_string(rows)?.as_bytes())
}
