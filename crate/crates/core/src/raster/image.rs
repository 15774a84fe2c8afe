use crate::error::{Error, Result};

pub type Rgb = [f64; 3];

/// Row-major RGB float image. Channels are not clamped while accumulating.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    /// Interleaved RGB, length `3 * width * height`.
    pub rgb: Vec<f64>,
    /// Alpha-weighted mean depth, 0 where nothing was hit.
    pub depth: Option<Vec<f64>>,
    /// Coverage of an imported target, if the file carried one.
    pub alpha: Option<Vec<f64>>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, color: Rgb) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument(format!(
                "image must be non-empty, got {width}x{height}"
            )));
        }
        let mut rgb = Vec::with_capacity(3 * width * height);
        for _ in 0..width * height {
            rgb.extend_from_slice(&color);
        }
        Ok(Image {
            width,
            height,
            rgb,
            depth: None,
            alpha: None,
        })
    }

    pub fn from_rgb(width: usize, height: usize, rgb: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || rgb.len() != 3 * width * height {
            return Err(Error::Argument(format!(
                "buffer of {} values does not match {width}x{height} RGB",
                rgb.len()
            )));
        }
        Ok(Image {
            width,
            height,
            rgb,
            depth: None,
            alpha: None,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.rgb[i], self.rgb[i + 1], self.rgb[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, c: Rgb) {
        let i = 3 * (y * self.width + x);
        self.rgb[i..i + 3].copy_from_slice(&c);
    }

    /// Nearest-pixel sample at a continuous position.
    pub fn sample_nearest(&self, px: [f64; 2]) -> Rgb {
        let x = (px[0].floor().max(0.0) as usize).min(self.width - 1);
        let y = (px[1].floor().max(0.0) as usize).min(self.height - 1);
        self.pixel(x, y)
    }

    pub fn same_dims(&self, other: &Image) -> Result<()> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Argument(format!(
                "image dimensions differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }

    /// Target composited over `background` using its alpha, if any.
    pub fn over_background(&self, background: Rgb) -> Image {
        let Some(alpha) = &self.alpha else {
            return self.clone();
        };
        let mut out = self.clone();
        out.alpha = None;
        for (p, &a) in alpha.iter().enumerate() {
            for ch in 0..3 {
                out.rgb[3 * p + ch] = a * self.rgb[3 * p + ch] + (1.0 - a) * background[ch];
            }
        }
        out
    }

    /// 8-bit quantization with clamping and round-half-up.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.rgb.iter().map(|&v| quantize(v)).collect()
    }
}

#[inline]
pub fn quantize(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}
