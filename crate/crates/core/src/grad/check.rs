//! Central finite-difference checks of the analytic backward pass.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{loss, LossConfig};
use super::params::{raw_param, set_raw_param, ParamGroup, ParamId};
use super::{backward_2d, GradientRecord};
use crate::error::{Error, Result};
use crate::geometry::Splat2D;
use crate::hermite::{HermiteRank, BASIS_LEN};
use crate::kernel::{GhParams, KernelKind};
use crate::raster::{rasterize_2d, Image, RenderOptions, Rgb};

/// Relative errors are measured against `max(|analytic|, |numeric|, FD_ABS_FLOOR)`.
pub const FD_ABS_FLOOR: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamSelector {
    pub splat: usize,
    pub param: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

impl FdReport {
    fn new(analytic: f64, numeric: f64) -> Self {
        let scale = analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR);
        FdReport {
            analytic,
            numeric,
            rel_error: (analytic - numeric).abs() / scale,
        }
    }
}

fn eval_loss(
    splats: &[Splat2D],
    target: &Image,
    background: Rgb,
    cfg: &LossConfig,
    opts: &RenderOptions,
) -> Result<f64> {
    let img = rasterize_2d(splats, target.width, target.height, background, opts)?;
    Ok(loss(&img, target, cfg)?.total)
}

/// Shrink factor between successive steps of the extrapolation tableau.
const RIDDERS_SHRINK: f64 = 1.4;
const RIDDERS_TABLE: usize = 8;

/// Central difference refined by Ridders' polynomial extrapolation, starting
/// from `step` and shrinking it until the error estimate stops improving.
fn numeric_derivative(
    splats: &[Splat2D],
    target: &Image,
    background: Rgb,
    cfg: &LossConfig,
    opts: &RenderOptions,
    sel: ParamSelector,
    step: f64,
) -> Result<f64> {
    let mut work = splats.to_vec();
    let x0 = raw_param(&splats[sel.splat], sel.param);
    let mut central = |h: f64| -> Result<f64> {
        set_raw_param(&mut work[sel.splat], sel.param, x0 + h);
        let plus = eval_loss(&work, target, background, cfg, opts)?;
        set_raw_param(&mut work[sel.splat], sel.param, x0 - h);
        let minus = eval_loss(&work, target, background, cfg, opts)?;
        Ok((plus - minus) / (2.0 * h))
    };
    let c2 = RIDDERS_SHRINK * RIDDERS_SHRINK;
    let mut h = step;
    let mut prev = vec![central(h)?];
    let mut best = prev[0];
    let mut best_err = f64::INFINITY;
    for _ in 1..RIDDERS_TABLE {
        h /= RIDDERS_SHRINK;
        let mut row = vec![central(h)?];
        let mut fac = c2;
        for j in 1..=prev.len() {
            let next = (row[j - 1] * fac - prev[j - 1]) / (fac - 1.0);
            fac *= c2;
            let err = (next - row[j - 1]).abs().max((next - prev[j - 1]).abs());
            if err <= best_err {
                best_err = err;
                best = next;
            }
            row.push(next);
        }
        let last = row.len() - 1;
        if (row[last] - prev[last - 1]).abs() >= 2.0 * best_err {
            break;
        }
        prev = row;
    }
    Ok(best)
}

/// Compares one analytic partial with an extrapolated central difference.
pub fn finite_diff_check(
    splats: &[Splat2D],
    target: &Image,
    background: Rgb,
    cfg: &LossConfig,
    opts: &RenderOptions,
    sel: ParamSelector,
    step: f64,
) -> Result<FdReport> {
    if !(step > 0.0) {
        return Err(Error::Argument(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    if sel.splat >= splats.len() {
        return Err(Error::Argument(format!(
            "splat index {} out of range",
            sel.splat
        )));
    }
    let out = backward_2d(splats, target, background, cfg, opts)?;
    let analytic = out.grads[sel.splat].get(sel.param);
    let numeric = numeric_derivative(splats, target, background, cfg, opts, sel, step)?;
    Ok(FdReport::new(analytic, numeric))
}

/// Worst relative error per parameter group over a whole scene.
#[derive(Debug, Clone, Default)]
pub struct GroupErrors {
    pub max_rel: BTreeMap<ParamGroup, f64>,
    pub worst: BTreeMap<ParamGroup, (ParamSelector, FdReport)>,
    pub checked: usize,
}

impl GroupErrors {
    pub fn merge(&mut self, other: &GroupErrors) {
        for (g, &e) in &other.max_rel {
            let slot = self.max_rel.entry(*g).or_insert(0.0);
            if e >= *slot {
                *slot = e;
                if let Some(w) = other.worst.get(g) {
                    self.worst.insert(*g, *w);
                }
            }
        }
        self.checked += other.checked;
    }

    pub fn overall_max(&self) -> f64 {
        self.max_rel.values().copied().fold(0.0, f64::max)
    }
}

/// Checks every applicable raw parameter of every splat.
pub fn check_scene(
    splats: &[Splat2D],
    target: &Image,
    background: Rgb,
    cfg: &LossConfig,
    opts: &RenderOptions,
    step: f64,
) -> Result<GroupErrors> {
    let out = backward_2d(splats, target, background, cfg, opts)?;
    let mut errors = GroupErrors::default();
    for (i, s) in splats.iter().enumerate() {
        let g: &GradientRecord = &out.grads[i];
        for id in ParamId::all() {
            if !id.applies_to(s.kind) {
                continue;
            }
            if let ParamId::C(n) | ParamId::D(n) = id {
                if n > s.gh.active_rank.get() {
                    continue;
                }
            }
            let sel = ParamSelector {
                splat: i,
                param: id,
            };
            let numeric = numeric_derivative(splats, target, background, cfg, opts, sel, step)?;
            let report = FdReport::new(g.get(id), numeric);
            let group = id.group();
            let slot = errors.max_rel.entry(group).or_insert(0.0);
            if report.rel_error >= *slot {
                *slot = report.rel_error;
                errors.worst.insert(group, (sel, report));
            }
            errors.checked += 1;
        }
    }
    Ok(errors)
}

/// Bounds on the per-channel residual between a check scene's render and its
/// target. Keeping residuals away from zero keeps the L1 term smooth under the
/// finite-difference perturbation.
pub const CHECK_RESIDUAL_MIN: f64 = 0.05;
pub const CHECK_RESIDUAL_MAX: f64 = 0.5;

/// A random scene for gradient checking: splats of every kernel kind (GH at
/// full rank), a random background, and a target that differs from the render
/// by a random signed offset in every channel.
#[derive(Debug, Clone)]
pub struct CheckScene {
    pub splats: Vec<Splat2D>,
    pub target: Image,
    pub background: Rgb,
}

pub fn random_check_scene(seed: u64, splat_count: usize, size: usize) -> Result<CheckScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = size as f64;
    let kinds = [
        KernelKind::GaussianHermite,
        KernelKind::Gaussian,
        KernelKind::GaussianGl,
        KernelKind::Ges { beta: 0.0 },
    ];
    let splats: Vec<Splat2D> = (0..splat_count)
        .map(|i| {
            let kind = match kinds[i % kinds.len()] {
                KernelKind::Ges { .. } => KernelKind::Ges {
                    beta: rng.random_range(1.3..5.0),
                },
                k => k,
            };
            let mut gh = GhParams::gaussian();
            if kind == KernelKind::GaussianHermite {
                gh.set_rank(HermiteRank::MAX);
                for n in 0..BASIS_LEN {
                    let spread = 0.4 / (1.0 + n as f64);
                    gh.c[n] += rng.random_range(-spread..spread);
                    gh.d[n] += rng.random_range(-spread..spread);
                }
            }
            Splat2D {
                mu: [
                    rng.random_range(0.15..0.85) * side,
                    rng.random_range(0.15..0.85) * side,
                ],
                theta: rng.random_range(0.0..std::f64::consts::TAU),
                scale: [
                    rng.random_range(0.05..0.18) * side,
                    rng.random_range(0.05..0.18) * side,
                ],
                opacity: rng.random_range(0.2..0.9),
                color: [rng.random(), rng.random(), rng.random()],
                kind,
                gh,
                z_order: rng.random(),
            }
        })
        .collect();
    let background = [rng.random(), rng.random(), rng.random()];
    let mut target = rasterize_2d(&splats, size, size, background, &RenderOptions::exact())?;
    for v in &mut target.rgb {
        let offset = rng.random_range(CHECK_RESIDUAL_MIN..CHECK_RESIDUAL_MAX);
        *v += if rng.random::<bool>() {
            offset
        } else {
            -offset
        };
    }
    Ok(CheckScene {
        splats,
        target,
        background,
    })
}
