//! L1 and SSIM losses with gradients with respect to the rendered image.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) evaluated at every window
//! position fully inside the image, with `C1 = 0.01²`, `C2 = 0.03²` and a
//! dynamic range of 1. The reported value is the mean over positions and
//! channels.

use crate::error::{Error, Result};
use crate::raster::Image;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    /// Weight of the `1 - SSIM` term; L1 gets `1 - lambda_ssim`.
    pub lambda_ssim: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda_ssim: 0.2 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_ssim) {
            return Err(Error::Argument(format!(
                "lambda_ssim {} outside [0, 1]",
                self.lambda_ssim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub l1: f64,
    pub ssim: f64,
}

/// Normalized 1D Gaussian window.
pub fn ssim_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as f64;
    for (k, wk) in w.iter_mut().enumerate() {
        let d = k as f64 - half;
        *wk = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= sum);
    w
}

/// Neumaier-compensated sum. Image means change by tiny amounts under
/// finite-difference perturbations, and plain summation noise would swamp them.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut carry = 0.0;
    for v in values {
        let t = sum + v;
        carry += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + carry
}

pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let sum = compensated_sum(a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y).abs()));
    Ok(sum / a.rgb.len() as f64)
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.same_dims(b)?;
    let sum = compensated_sum(a.rgb.iter().zip(&b.rgb).map(|(x, y)| (x - y) * (x - y)));
    Ok(sum / a.rgb.len() as f64)
}

fn check_ssim_dims(img: &Image) -> Result<()> {
    if img.width < SSIM_WINDOW || img.height < SSIM_WINDOW {
        return Err(Error::Argument(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {}x{}",
            img.width, img.height
        )));
    }
    Ok(())
}

/// Valid-mode separable filtering of a single plane.
fn filter_valid(plane: &[f64], width: usize, height: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..ow {
            let mut acc = 0.0;
            for k in 0..SSIM_WINDOW {
                acc += w[k] * row[x + k];
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = 0.0;
            for k in 0..SSIM_WINDOW {
                acc += w[k] * horiz[(y + k) * ow + x];
            }
            out[y * ow + x] = acc;
        }
    }
    out
}

/// Adjoint of [`filter_valid`]: scatters a valid-size map back to full size.
fn filter_valid_adjoint(
    map: &[f64],
    width: usize,
    height: usize,
    w: &[f64; SSIM_WINDOW],
) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut vert = vec![0.0; ow * height];
    for y in 0..oh {
        for x in 0..ow {
            let m = map[y * ow + x];
            for k in 0..SSIM_WINDOW {
                vert[(y + k) * ow + x] += w[k] * m;
            }
        }
    }
    let mut out = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..ow {
            let m = vert[y * ow + x];
            for k in 0..SSIM_WINDOW {
                out[y * width + x + k] += w[k] * m;
            }
        }
    }
    out
}

fn channel(img: &Image, ch: usize) -> Vec<f64> {
    img.rgb.iter().skip(ch).step_by(3).copied().collect()
}

/// Mean SSIM and, optionally, its gradient with respect to `x` (interleaved RGB).
fn ssim_impl(x: &Image, y: &Image, want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    x.same_dims(y)?;
    check_ssim_dims(x)?;
    let (width, height) = (x.width, x.height);
    let w = ssim_window();
    let npos = ((width - SSIM_WINDOW + 1) * (height - SSIM_WINDOW + 1)) as f64;
    let norm = 1.0 / (3.0 * npos);
    let mut terms = Vec::with_capacity(3 * npos as usize);
    let mut grad = want_grad.then(|| vec![0.0; x.rgb.len()]);

    for ch in 0..3 {
        let xs = channel(x, ch);
        let ys = channel(y, ch);
        let xx: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = ys.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = xs.iter().zip(&ys).map(|(a, b)| a * b).collect();
        let mx = filter_valid(&xs, width, height, &w);
        let my = filter_valid(&ys, width, height, &w);
        let exx = filter_valid(&xx, width, height, &w);
        let eyy = filter_valid(&yy, width, height, &w);
        let exy = filter_valid(&xy, width, height, &w);

        let n = mx.len();
        let mut d_mean = vec![0.0; if want_grad { n } else { 0 }];
        let mut d_sq = vec![0.0; if want_grad { n } else { 0 }];
        let mut d_cross = vec![0.0; if want_grad { n } else { 0 }];
        for p in 0..n {
            let (ux, uy) = (mx[p], my[p]);
            let vx = exx[p] - ux * ux;
            let vy = eyy[p] - uy * uy;
            let cxy = exy[p] - ux * uy;
            let a1 = 2.0 * ux * uy + SSIM_C1;
            let a2 = 2.0 * cxy + SSIM_C2;
            let b1 = ux * ux + uy * uy + SSIM_C1;
            let b2 = vx + vy + SSIM_C2;
            let s = a1 * a2 / (b1 * b2);
            terms.push(s);
            if want_grad {
                let ds_dux = 2.0 * uy * a2 / (b1 * b2) - s * 2.0 * ux / b1;
                let ds_dvx = -s / b2;
                let ds_dcxy = 2.0 * a1 / (b1 * b2);
                d_mean[p] = ds_dux - 2.0 * ux * ds_dvx - uy * ds_dcxy;
                d_sq[p] = ds_dvx;
                d_cross[p] = ds_dcxy;
            }
        }
        if let Some(g) = grad.as_mut() {
            let gm = filter_valid_adjoint(&d_mean, width, height, &w);
            let gs = filter_valid_adjoint(&d_sq, width, height, &w);
            let gc = filter_valid_adjoint(&d_cross, width, height, &w);
            for q in 0..width * height {
                g[3 * q + ch] = norm * (gm[q] + 2.0 * xs[q] * gs[q] + ys[q] * gc[q]);
            }
        }
    }
    Ok((compensated_sum(terms) * norm, grad))
}

/// Mean structural similarity over channels and window positions.
pub fn ssim(x: &Image, y: &Image) -> Result<f64> {
    Ok(ssim_impl(x, y, false)?.0)
}

/// `(1 - λ) L1 + λ (1 - SSIM)`. SSIM is always computed for reporting.
pub fn loss(rendered: &Image, target: &Image, cfg: &LossConfig) -> Result<LossBreakdown> {
    cfg.validate()?;
    let l1 = l1(rendered, target)?;
    let s = ssim(rendered, target)?;
    Ok(LossBreakdown {
        total: (1.0 - cfg.lambda_ssim) * l1 + cfg.lambda_ssim * (1.0 - s),
        l1,
        ssim: s,
    })
}

/// Loss value together with `dL/d rendered` (interleaved RGB).
pub fn loss_with_grad(
    rendered: &Image,
    target: &Image,
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    cfg.validate()?;
    let l1v = l1(rendered, target)?;
    let lambda = cfg.lambda_ssim;
    let (s, sgrad) = ssim_impl(rendered, target, lambda > 0.0)?;
    let n = rendered.rgb.len() as f64;
    let w1 = (1.0 - lambda) / n;
    let mut grad: Vec<f64> = rendered
        .rgb
        .iter()
        .zip(&target.rgb)
        .map(|(x, y)| {
            let d = x - y;
            if d > 0.0 {
                w1
            } else if d < 0.0 {
                -w1
            } else {
                0.0
            }
        })
        .collect();
    if let Some(sg) = sgrad {
        for (g, s) in grad.iter_mut().zip(sg) {
            *g -= lambda * s;
        }
    }
    Ok((
        LossBreakdown {
            total: (1.0 - lambda) * l1v + lambda * (1.0 - s),
            l1: l1v,
            ssim: s,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_image(w: usize, h: usize, seed: u64) -> Image {
        let mut state = seed;
        let rgb = (0..3 * w * h)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        Image::from_rgb(w, h, rgb).unwrap()
    }

    /// Direct 2D-window SSIM, no separable filtering.
    fn reference_ssim(x: &Image, y: &Image) -> f64 {
        let w1 = ssim_window();
        let mut total = 0.0;
        let mut count = 0usize;
        for ch in 0..3 {
            for oy in 0..=y.height - SSIM_WINDOW {
                for ox in 0..=x.width - SSIM_WINDOW {
                    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for j in 0..SSIM_WINDOW {
                        for i in 0..SSIM_WINDOW {
                            let wt = w1[i] * w1[j];
                            let a = x.pixel(ox + i, oy + j)[ch];
                            let b = y.pixel(ox + i, oy + j)[ch];
                            mx += wt * a;
                            my += wt * b;
                            sxx += wt * a * a;
                            syy += wt * b * b;
                            sxy += wt * a * b;
                        }
                    }
                    let vx = sxx - mx * mx;
                    let vy = syy - my * my;
                    let cxy = sxy - mx * my;
                    total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                        / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                    count += 1;
                }
            }
        }
        total / count as f64
    }

    #[test]
    fn identical_images_have_zero_loss() {
        let a = noise_image(16, 14, 1);
        let l = loss(&a, &a, &LossConfig { lambda_ssim: 0.2 }).unwrap();
        assert!(l.total.abs() < 1e-15);
        assert!((l.ssim - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_offset_is_pure_l1() {
        let a = Image::filled(12, 12, [0.2; 3]).unwrap();
        let b = Image::filled(12, 12, [0.7; 3]).unwrap();
        let l = loss(&a, &b, &LossConfig { lambda_ssim: 0.0 }).unwrap();
        assert!((l.total - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ssim_matches_reference_on_inverted_target() {
        let t = noise_image(20, 17, 9);
        let inv = Image::from_rgb(20, 17, t.rgb.iter().map(|v| 1.0 - v).collect()).unwrap();
        let l = loss(&inv, &t, &LossConfig { lambda_ssim: 1.0 }).unwrap();
        assert!((l.total - (1.0 - reference_ssim(&inv, &t))).abs() < 1e-6);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Image::new(12, 12).unwrap();
        let b = Image::new(13, 12).unwrap();
        assert!(loss(&a, &b, &LossConfig::default()).is_err());
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let x = noise_image(14, 13, 3);
        let y = noise_image(14, 13, 4);
        let cfg = LossConfig { lambda_ssim: 0.6 };
        let (_, g) = loss_with_grad(&x, &y, &cfg).unwrap();
        let h = 1e-6;
        for &i in &[0usize, 7, 100, 301, 545] {
            let mut xp = x.clone();
            xp.rgb[i] += h;
            let mut xm = x.clone();
            xm.rgb[i] -= h;
            let fd = (loss(&xp, &y, &cfg).unwrap().total - loss(&xm, &y, &cfg).unwrap().total)
                / (2.0 * h);
            assert!(
                (fd - g[i]).abs() < 1e-7 * (1.0 + g[i].abs()),
                "{i}: {fd} vs {}",
                g[i]
            );
        }
    }
}
