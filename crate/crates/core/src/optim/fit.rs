//! Image fitting: render → loss → backward → Adam, with the two-phase
//! Hermite schedule.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::adam::AdamState;
use super::schedule::active_rank;
use crate::error::{Error, Result};
use crate::geometry::Splat2D;
use crate::grad::{
    backward_2d, raw_param, set_raw_param, ssim, LossConfig, ParamGroup, ParamId, PARAMS_PER_SPLAT,
};
use crate::hermite::HermiteRank;
use crate::kernel::{clamp_beta, GhParams, KernelKind};
use crate::raster::{rasterize_2d, Image, RenderOptions, Rgb};

/// Reported instead of infinity for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

/// Smallest 2D scale the optimizer may reach, pixels.
const MIN_SCALE_PX: f64 = 2e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningRates {
    /// In units of the image width per step.
    pub mu: f64,
    pub theta: f64,
    pub scale: f64,
    pub opacity: f64,
    pub color: f64,
    pub gh: f64,
    pub beta: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            mu: 2e-3,
            theta: 1e-2,
            scale: 5e-3,
            opacity: 5e-2,
            color: 1e-2,
            gh: 5e-3,
            beta: 2e-3,
        }
    }
}

impl LearningRates {
    /// Step size of one raw parameter. Coefficient `n` is scaled by
    /// `1 / sqrt(n!)`, the growth rate of `H_n`, so each order moves the
    /// kernel by a comparable amount.
    pub fn for_param(&self, id: ParamId, width: usize) -> f64 {
        match id {
            ParamId::C(n) | ParamId::D(n) => {
                self.gh / (1..=n).map(|k| k as f64).product::<f64>().sqrt()
            }
            _ => self.for_group(id.group(), width),
        }
    }

    fn for_group(&self, group: ParamGroup, width: usize) -> f64 {
        match group {
            ParamGroup::Mu => self.mu * width as f64,
            ParamGroup::Theta => self.theta,
            ParamGroup::Scale => self.scale,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::Color => self.color,
            ParamGroup::GhC | ParamGroup::GhD => self.gh,
            ParamGroup::Beta => self.beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BackgroundPolicy {
    Fixed(Rgb),
    /// A fresh uniformly random color every step, drawn from the run seed.
    RandomPerStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub total_steps: usize,
    /// Steps before Hermite coefficients start training.
    pub phase1_steps: usize,
    pub rank_period: usize,
    pub max_rank: HermiteRank,
    pub lr: LearningRates,
    pub lambda_ssim: f64,
    pub seed: u64,
    pub kernel: KernelKind,
    pub splat_count: usize,
    pub background: BackgroundPolicy,
    pub render: RenderOptions,
    /// Fill `wall_ms` with elapsed time; off by default so traces are reproducible.
    pub record_wall_time: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            total_steps: 3000,
            phase1_steps: 1000,
            rank_period: 1000,
            max_rank: HermiteRank::MAX,
            lr: LearningRates::default(),
            lambda_ssim: 0.2,
            seed: 0,
            kernel: KernelKind::GaussianHermite,
            splat_count: 100,
            background: BackgroundPolicy::Fixed([0.0; 3]),
            render: RenderOptions::default(),
            record_wall_time: false,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.phase1_steps > self.total_steps {
            return Err(Error::Argument(format!(
                "phase1 steps ({}) exceed total steps ({})",
                self.phase1_steps, self.total_steps
            )));
        }
        if self.rank_period == 0 {
            return Err(Error::Argument("rank period must be at least 1".into()));
        }
        if self.splat_count == 0 {
            return Err(Error::Argument("need at least one splat".into()));
        }
        LossConfig {
            lambda_ssim: self.lambda_ssim,
        }
        .validate()
    }

    /// Rank in force at `step`; always 0 for kernels without Hermite terms.
    pub fn active_rank(&self, step: usize) -> HermiteRank {
        match self.kernel {
            KernelKind::GaussianHermite => {
                active_rank(step, self.phase1_steps, self.rank_period, self.max_rank)
            }
            _ => HermiteRank::ZERO,
        }
    }

    fn eval_background(&self) -> Rgb {
        match self.background {
            BackgroundPolicy::Fixed(c) => c,
            BackgroundPolicy::RandomPerStep => [0.0; 3],
        }
    }
}

/// One line of the metrics trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub l1: f64,
    pub ssim: f64,
    pub psnr: f64,
    pub active_rank: usize,
    pub wall_ms: u64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub splats: Vec<Splat2D>,
    pub trace: Vec<MetricsRow>,
    pub final_render: Image,
    pub final_psnr: f64,
    pub final_ssim: f64,
    pub final_mse: f64,
    /// Background used for the final render.
    pub background: Rgb,
}

/// `10 log10(1 / MSE)` for images in `[0, 1]`, capped at 99 dB.
pub fn psnr(rendered: &Image, target: &Image) -> Result<f64> {
    let mse = crate::grad::mse(rendered, target)?;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

/// Jittered grid covering the target, deterministic in `cfg.seed`.
pub fn initial_splats(target: &Image, cfg: &FitConfig) -> Vec<Splat2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (w, h) = (target.width as f64, target.height as f64);
    let n = cfg.splat_count;
    let cols = ((n as f64 * w / h).sqrt().ceil() as usize).max(1);
    let rows = n.div_ceil(cols);
    let pitch = [w / cols as f64, h / rows as f64];
    let scale = 0.5 * (pitch[0] * pitch[1]).sqrt();
    let reference = target.over_background(cfg.eval_background());
    let kind = match cfg.kernel {
        KernelKind::Ges { .. } => KernelKind::ges(),
        k => k,
    };
    (0..n)
        .map(|k| {
            let (cx, cy) = ((k % cols) as f64, (k / cols) as f64);
            let jx: f64 = rng.random_range(-0.25..0.25);
            let jy: f64 = rng.random_range(-0.25..0.25);
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let mu = [(cx + 0.5 + jx) * pitch[0], (cy + 0.5 + jy) * pitch[1]];
            Splat2D {
                mu,
                theta,
                scale: [scale, scale],
                opacity: 0.5,
                color: cell_mean(&reference, [cx * pitch[0], cy * pitch[1]], pitch),
                kind,
                gh: GhParams::gaussian(),
                z_order: k as f64,
            }
        })
        .collect()
}

/// Mean target color over one grid cell.
fn cell_mean(img: &Image, origin: [f64; 2], pitch: [f64; 2]) -> Rgb {
    let x0 = (origin[0].round() as usize).min(img.width - 1);
    let y0 = (origin[1].round() as usize).min(img.height - 1);
    let x1 = ((origin[0] + pitch[0]).round() as usize).clamp(x0 + 1, img.width);
    let y1 = ((origin[1] + pitch[1]).round() as usize).clamp(y0 + 1, img.height);
    let mut sum = [0.0; 3];
    for y in y0..y1 {
        for x in x0..x1 {
            let p = img.pixel(x, y);
            for k in 0..3 {
                sum[k] += p[k];
            }
        }
    }
    let n = ((x1 - x0) * (y1 - y0)) as f64;
    sum.map(|v| v / n)
}

/// Same as [`fit_image_with`] without a progress callback.
pub fn fit_image(target: &Image, cfg: &FitConfig) -> Result<FitResult> {
    fit_image_with(target, cfg, |_| {})
}

/// Runs the full optimization. `on_step` sees every metrics row as it is
/// produced, so a caller still has the trace when the run diverges.
pub fn fit_image_with(
    target: &Image,
    cfg: &FitConfig,
    mut on_step: impl FnMut(&MetricsRow),
) -> Result<FitResult> {
    cfg.validate()?;
    let loss_cfg = LossConfig {
        lambda_ssim: cfg.lambda_ssim,
    };
    let started = Instant::now();
    let mut splats = initial_splats(target, cfg);
    let n = splats.len();

    let mut params = vec![0.0; n * PARAMS_PER_SPLAT];
    let mut lr = vec![0.0; n * PARAMS_PER_SPLAT];
    for (i, s) in splats.iter().enumerate() {
        for id in ParamId::all() {
            params[i * PARAMS_PER_SPLAT + id.index()] = raw_param(s, id);
            lr[i * PARAMS_PER_SPLAT + id.index()] = cfg.lr.for_param(id, target.width);
        }
    }
    let mut adam = AdamState::new(params.len());
    let mut frozen = vec![false; params.len()];
    let mut grads = vec![0.0; params.len()];
    let mut bg_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    bg_rng.set_stream(1);
    let mut trace = Vec::with_capacity(cfg.total_steps);

    for step in 0..cfg.total_steps {
        let rank = cfg.active_rank(step);
        let coeffs_live = step >= cfg.phase1_steps;
        for s in &mut splats {
            s.gh.set_rank(rank);
        }
        let background = match cfg.background {
            BackgroundPolicy::Fixed(c) => c,
            BackgroundPolicy::RandomPerStep => [bg_rng.random(), bg_rng.random(), bg_rng.random()],
        };
        let step_target = target.over_background(background);
        let out = backward_2d(&splats, &step_target, background, &loss_cfg, &cfg.render)?;
        let mse = crate::grad::mse(&out.rendered, &step_target)?;
        let row = MetricsRow {
            step,
            loss: out.loss.total,
            l1: out.loss.l1,
            ssim: out.loss.ssim,
            psnr: psnr_from_mse(mse),
            active_rank: rank.get(),
            wall_ms: if cfg.record_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            },
        };
        on_step(&row);
        trace.push(row);
        if !out.loss.total.is_finite() {
            return Err(Error::Divergence {
                step,
                loss: out.loss.total,
            });
        }

        for (i, (g, s)) in out.grads.iter().zip(&splats).enumerate() {
            let ga = g.to_array();
            for id in ParamId::all() {
                let k = i * PARAMS_PER_SPLAT + id.index();
                grads[k] = ga[id.index()];
                frozen[k] = !id.applies_to(s.kind)
                    || match id {
                        ParamId::C(m) | ParamId::D(m) => !coeffs_live || m > rank.get(),
                        _ => false,
                    };
            }
        }
        adam.step(&mut params, &grads, &lr, &frozen)?;

        for (i, s) in splats.iter_mut().enumerate() {
            let base = i * PARAMS_PER_SPLAT;
            for k in 0..3 {
                let c = &mut params[base + ParamId::Color(k).index()];
                *c = c.clamp(0.0, 1.0);
            }
            for id in [ParamId::LogScaleU, ParamId::LogScaleV] {
                let p = &mut params[base + id.index()];
                *p = p.max(MIN_SCALE_PX.ln());
            }
            let b = &mut params[base + ParamId::Beta.index()];
            if matches!(s.kind, KernelKind::Ges { .. }) {
                *b = clamp_beta(*b);
            }
            for id in ParamId::all() {
                if id.applies_to(s.kind) {
                    set_raw_param(s, id, params[base + id.index()]);
                }
            }
        }
    }

    let final_rank = cfg.active_rank(cfg.total_steps);
    for s in &mut splats {
        s.gh.set_rank(final_rank);
    }
    let background = cfg.eval_background();
    let reference = target.over_background(background);
    let final_render = rasterize_2d(
        &splats,
        target.width,
        target.height,
        background,
        &cfg.render,
    )?;
    let final_mse = crate::grad::mse(&final_render, &reference)?;
    Ok(FitResult {
        final_psnr: psnr_from_mse(final_mse),
        final_ssim: ssim(&final_render, &reference)?,
        final_mse,
        splats,
        trace,
        final_render,
        background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 4, [0.5; 3]).unwrap();
        let b = Image::filled(4, 4, [0.6; 3]).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &a).unwrap(), PSNR_CAP_DB);

        let mut check = Image::new(8, 8).unwrap();
        let mut inv = Image::new(8, 8).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                let v = ((x + y) % 2) as f64;
                check.set_pixel(x, y, [v; 3]);
                inv.set_pixel(x, y, [1.0 - v; 3]);
            }
        }
        assert_eq!(psnr(&check, &inv).unwrap(), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = FitConfig::default();
        cfg.phase1_steps = cfg.total_steps + 1;
        assert!(cfg.validate().is_err());
        let cfg = FitConfig {
            rank_period: 0,
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = FitConfig {
            splat_count: 0,
            ..FitConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_covers_frame() {
        let target = Image::filled(64, 32, [0.3, 0.5, 0.7]).unwrap();
        let cfg = FitConfig {
            splat_count: 10,
            ..FitConfig::default()
        };
        let a = initial_splats(&target, &cfg);
        assert_eq!(a, initial_splats(&target, &cfg));
        assert_eq!(a.len(), 10);
        for s in &a {
            assert!(s.mu[0] > 0.0 && s.mu[0] < 64.0 && s.mu[1] > 0.0 && s.mu[1] < 32.0);
            assert!(s
                .color
                .iter()
                .zip([0.3, 0.5, 0.7])
                .all(|(a, b)| (a - b).abs() < 1e-12));
            assert_eq!(s.opacity, 0.5);
        }
    }
}
