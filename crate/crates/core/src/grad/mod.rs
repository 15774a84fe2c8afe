//! Analytic backward pass for the 2D image-fitting path.

mod check;
mod loss;
mod params;

pub use check::{
    check_scene, finite_diff_check, random_check_scene, CheckScene, FdReport, GroupErrors,
    ParamSelector, FD_ABS_FLOOR,
};
pub use loss::{
    l1, loss, loss_with_grad, mse, ssim, ssim_window, LossBreakdown, LossConfig, SSIM_C1, SSIM_C2,
    SSIM_SIGMA, SSIM_WINDOW,
};
pub use params::{
    logit, raw_param, set_raw_param, sigmoid, GradientRecord, ParamGroup, ParamId, PARAMS_PER_SPLAT,
};

use rayon::prelude::*;

use crate::error::Result;
use crate::geometry::Splat2D;
use crate::hermite::BASIS_LEN;
use crate::kernel::{splat_response_grad, KernelKind, ResponseGrad};
use crate::raster::{bin_boxes, pixel_center, rasterize_2d, Image, Prepared2D, RenderOptions, Rgb};

/// Everything produced by one forward/backward evaluation.
#[derive(Debug, Clone)]
pub struct BackwardOutput {
    pub loss: LossBreakdown,
    pub grads: Vec<GradientRecord>,
    pub rendered: Image,
}

struct Contributor {
    slot: usize,
    alpha: f64,
    /// Transmittance in front of this splat.
    trans: f64,
    uv: [f64; 2],
    grad: ResponseGrad,
}

/// Loss of the rendered splats against `target` and its gradient with respect
/// to every splat's raw parameters.
pub fn backward_2d(
    splats: &[Splat2D],
    target: &Image,
    background: Rgb,
    cfg: &LossConfig,
    opts: &RenderOptions,
) -> Result<BackwardOutput> {
    let (width, height) = (target.width, target.height);
    let rendered = rasterize_2d(splats, width, height, background, opts)?;
    let (loss, dl_dc) = loss_with_grad(&rendered, target, cfg)?;

    let prepared: Vec<_> = splats
        .iter()
        .map(|s| Prepared2D::new(s, width, height, opts))
        .collect();
    let boxes: Vec<_> = prepared.iter().map(|p| p.rect).collect();
    let keys: Vec<_> = splats.iter().map(|s| s.z_order).collect();
    let binning = bin_boxes(&boxes, &keys, width, height);

    let per_tile: Vec<Vec<[f64; PARAMS_PER_SPLAT]>> = (0..binning.lists.len())
        .into_par_iter()
        .map(|tile| {
            let list = &binning.lists[tile];
            let mut acc = vec![[0.0; PARAMS_PER_SPLAT]; list.len()];
            if list.is_empty() {
                return acc;
            }
            let rect = binning.tile_rect(tile, width, height);
            let mut contrib: Vec<Contributor> = Vec::new();
            for y in rect.y0..rect.y1 {
                for x in rect.x0..rect.x1 {
                    let pix = y * width + x;
                    let g_px = [dl_dc[3 * pix], dl_dc[3 * pix + 1], dl_dc[3 * pix + 2]];
                    if g_px == [0.0; 3] {
                        continue;
                    }
                    let px = pixel_center(x, y);

                    // replay the forward blend
                    contrib.clear();
                    let mut t = 1.0;
                    for (slot, e) in list.iter().enumerate() {
                        let s = &prepared[e.splat as usize];
                        if !s.rect.contains(x, y) {
                            continue;
                        }
                        let uv = s.local(px);
                        let a = s.response(uv, opts.gl);
                        if a < opts.alpha_floor {
                            continue;
                        }
                        let grad =
                            splat_response_grad(uv[0], uv[1], s.kind, &s.gh, s.opacity, opts.gl);
                        contrib.push(Contributor {
                            slot,
                            alpha: a,
                            trans: t,
                            uv,
                            grad,
                        });
                        t *= 1.0 - a;
                        if t < opts.transmittance_stop {
                            break;
                        }
                    }

                    // back to front; `behind` is the normalized color behind splat i
                    let mut behind = background;
                    for c in contrib.iter().rev() {
                        let s = &prepared[list[c.slot].splat as usize];
                        let out = &mut acc[c.slot];
                        let mut dl_da = 0.0;
                        for ch in 0..3 {
                            dl_da += g_px[ch] * c.trans * (s.color[ch] - behind[ch]);
                            out[6 + ch] += g_px[ch] * c.alpha * c.trans;
                            behind[ch] = c.alpha * s.color[ch] + (1.0 - c.alpha) * behind[ch];
                        }
                        accumulate_splat(out, s, c, dl_da);
                    }
                }
            }
            acc
        })
        .collect();

    // fixed tile order keeps the reduction deterministic
    let mut flat = vec![[0.0; PARAMS_PER_SPLAT]; splats.len()];
    for (tile, acc) in per_tile.iter().enumerate() {
        for (slot, g) in acc.iter().enumerate() {
            let dst = &mut flat[binning.lists[tile][slot].splat as usize];
            for k in 0..PARAMS_PER_SPLAT {
                dst[k] += g[k];
            }
        }
    }
    let grads = flat.iter().map(GradientRecord::from_array).collect();
    Ok(BackwardOutput {
        loss,
        grads,
        rendered,
    })
}

/// Chain rule from `dL/da` through the kernel and the 2D similarity transform.
#[inline]
fn accumulate_splat(
    out: &mut [f64; PARAMS_PER_SPLAT],
    s: &Prepared2D,
    c: &Contributor,
    dl_da: f64,
) {
    let r = &c.grad;
    let gu = dl_da * r.du;
    let gv = dl_da * r.dv;
    let (u, v) = (c.uv[0], c.uv[1]);
    let (su, sv) = (s.scale[0], s.scale[1]);
    let (sn, cs) = (s.sin, s.cos);
    out[0] += gu * (-cs / su) + gv * (sn / sv);
    out[1] += gu * (-sn / su) + gv * (-cs / sv);
    out[2] += gu * (v * sv / su) + gv * (-u * su / sv);
    out[3] += gu * (-u);
    out[4] += gv * (-v);
    out[5] += dl_da * r.dopacity * s.opacity * (1.0 - s.opacity);
    match s.kind {
        KernelKind::GaussianHermite => {
            for n in 0..=s.gh.active_rank.get() {
                out[9 + n] += dl_da * r.dc[n];
                out[9 + BASIS_LEN + n] += dl_da * r.dd[n];
            }
        }
        KernelKind::Ges { .. } => out[PARAMS_PER_SPLAT - 1] += dl_da * r.dbeta,
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::HermiteRank;
    use crate::kernel::GhParams;

    fn splat(kind: KernelKind) -> Splat2D {
        Splat2D {
            mu: [15.3, 17.1],
            theta: 0.4,
            scale: [4.0, 2.5],
            opacity: 0.7,
            color: [0.9, 0.3, 0.1],
            kind,
            gh: GhParams::gaussian(),
            z_order: 0.0,
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient() {
        let s = splat(KernelKind::GaussianHermite);
        let opts = RenderOptions::default();
        let target = rasterize_2d(std::slice::from_ref(&s), 32, 32, [0.0; 3], &opts).unwrap();
        let out = backward_2d(
            &[s],
            &target,
            [0.0; 3],
            &LossConfig { lambda_ssim: 0.0 },
            &opts,
        )
        .unwrap();
        assert!(out.loss.total.abs() < 1e-15);
        assert!(out.grads[0].to_array().iter().all(|g| g.abs() < 1e-10));
    }

    #[test]
    fn single_splat_color_gradient_by_hand() {
        let s = splat(KernelKind::Gaussian);
        let opts = RenderOptions::default();
        let target = Image::filled(32, 32, [0.5, 0.5, 0.5]).unwrap();
        let out = backward_2d(
            std::slice::from_ref(&s),
            &target,
            [0.0; 3],
            &LossConfig { lambda_ssim: 0.0 },
            &opts,
        )
        .unwrap();
        let n = (3 * 32 * 32) as f64;
        let mut expect = [0.0; 3];
        for y in 0..32 {
            for x in 0..32 {
                let uv = crate::geometry::local_to_pixel_2d(&s, [x as f64 + 0.5, y as f64 + 0.5]);
                let a =
                    crate::kernel::splat_response(uv[0], uv[1], s.kind, &s.gh, s.opacity, opts.gl);
                if a < opts.alpha_floor {
                    continue;
                }
                let c = out.rendered.pixel(x, y);
                for ch in 0..3 {
                    expect[ch] += a * (c[ch] - 0.5).signum() / n;
                }
            }
        }
        for ch in 0..3 {
            assert!((out.grads[0].d_color[ch] - expect[ch]).abs() < 1e-14);
        }
    }

    #[test]
    fn masked_rank_gradients_are_zero() {
        let mut s = splat(KernelKind::GaussianHermite);
        s.gh.set_rank(HermiteRank::new(4).unwrap());
        s.gh.c[2] = 0.2;
        s.gh.d[4] = -0.1;
        let target = Image::filled(32, 32, [0.2, 0.6, 0.4]).unwrap();
        let out = backward_2d(
            &[s],
            &target,
            [0.0; 3],
            &LossConfig::default(),
            &RenderOptions::default(),
        )
        .unwrap();
        let g = &out.grads[0];
        assert!(g.d_c[5..].iter().chain(&g.d_d[5..]).all(|&x| x == 0.0));
        assert!(g.d_c[4] != 0.0);
    }

    #[test]
    fn backward_is_deterministic() {
        let splats: Vec<_> = (0..6)
            .map(|i| {
                let mut s = splat(KernelKind::GaussianGl);
                s.mu = [5.0 + 4.0 * i as f64, 8.0 + 3.0 * i as f64];
                s.z_order = i as f64 * 0.1;
                s
            })
            .collect();
        let target = Image::filled(40, 40, [0.3, 0.3, 0.8]).unwrap();
        let a = backward_2d(
            &splats,
            &target,
            [0.1; 3],
            &LossConfig::default(),
            &RenderOptions::default(),
        )
        .unwrap();
        let b = backward_2d(
            &splats,
            &target,
            [0.1; 3],
            &LossConfig::default(),
            &RenderOptions::default(),
        )
        .unwrap();
        assert_eq!(a.grads, b.grads);
    }
}
