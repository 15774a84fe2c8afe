use std::fs;
use std::path::{Path, PathBuf};

use ghsplat::grad::{check_scene, random_check_scene, GroupErrors, LossConfig, ParamGroup};
use ghsplat::hermite::{max_relative_off_diagonal, orthogonality_matrix, HermiteRank, BASIS_LEN};
use ghsplat::io::{self, Scene, SceneSplats};
use ghsplat::kernel::KernelKind;
use ghsplat::optim::{fit_image, BackgroundPolicy, FitConfig, FitResult};
use ghsplat::raster::{rasterize_2d, rasterize_3d, Image, RenderOptions};
use ghsplat::targets;

use crate::{
    AblateArgs, CompareArgs, Failure, FitArgs, FitOptions, GradcheckArgs, RenderArgs, SynthArgs,
};

/// Largest allowed off-diagonal orthogonality integral relative to the diagonal scale.
const ORTHO_OFF_DIAGONAL_TOL: f64 = 1e-8;
const ORTHO_DIAGONAL_TOL: f64 = 1e-6;

type CmdResult = Result<(), Failure>;

fn parse_background(text: &str) -> Result<BackgroundPolicy, Failure> {
    if text.eq_ignore_ascii_case("random") {
        return Ok(BackgroundPolicy::RandomPerStep);
    }
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("invalid background '{text}'")))?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|v| (0.0..=1.0).contains(v)) => {
            Ok(BackgroundPolicy::Fixed([r, g, b]))
        }
        _ => Err(Failure::Usage(format!(
            "background must be 'random' or three values in [0, 1], got '{text}'"
        ))),
    }
}

fn rank(value: usize) -> Result<HermiteRank, Failure> {
    HermiteRank::new(value).map_err(Failure::from)
}

fn base_config(opts: &FitOptions) -> Result<FitConfig, Failure> {
    let cfg = FitConfig {
        total_steps: opts.steps,
        phase1_steps: opts.phase1,
        rank_period: opts.rank_period,
        lambda_ssim: opts.lambda_ssim,
        seed: opts.seed,
        splat_count: opts.splats,
        background: parse_background(&opts.background)?,
        record_wall_time: opts.wall_time,
        ..FitConfig::default()
    };
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", dir.display())))
}

fn run_fit(target: &Image, cfg: &FitConfig, label: &str) -> Result<FitResult, Failure> {
    eprintln!(
        "fitting {label}: {} splats, {} steps, {}x{}",
        cfg.splat_count, cfg.total_steps, target.width, target.height
    );
    Ok(fit_image(target, cfg)?)
}

pub fn fit(args: FitArgs) -> CmdResult {
    let mut cfg = base_config(&args.fit)?;
    cfg.kernel = args.kernel.parse()?;
    cfg.max_rank = rank(args.max_rank)?;
    cfg.validate()?;
    let target = io::read_image(&args.fit.target)?;
    let result = run_fit(&target, &cfg, cfg.kernel.name())?;

    create_dir(&args.out)?;
    let scene = Scene::new_2d(
        target.width,
        target.height,
        result.background,
        cfg.kernel,
        result.splats.clone(),
    );
    io::write_scene(args.out.join("scene.toml"), &scene)?;
    io::write_image(args.out.join("render.ppm"), &result.final_render)?;
    io::write_metrics(args.out.join("metrics.csv"), &result.trace)?;
    let reference = target.over_background(result.background);
    io::write_image(
        args.out.join("comparison.ppm"),
        &io::comparison_strip(&reference, &result.final_render)?,
    )?;
    println!(
        "kernel {} psnr {:.4} dB ssim {:.4} mse {:.6e}",
        cfg.kernel, result.final_psnr, result.final_ssim, result.final_mse
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn default_depth_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("render");
    out.with_file_name(format!("{stem}_depth.ppm"))
}

pub fn render(args: RenderArgs) -> CmdResult {
    let scene = io::read_scene(&args.scene)?;
    let opts = RenderOptions::default();
    match &scene.content {
        SceneSplats::Planar(splats) => {
            if args.camera.is_some() {
                return Err(Failure::Usage("--camera only applies to 3d scenes".into()));
            }
            let img = rasterize_2d(splats, scene.width, scene.height, scene.background, &opts)?;
            io::write_image(&args.out, &img)?;
        }
        SceneSplats::Spatial { splats, camera } => {
            let camera = match &args.camera {
                Some(path) => io::read_camera(path, Some((scene.width, scene.height)))?,
                None => camera.clone().ok_or_else(|| {
                    Failure::Usage("3d scene has no camera; pass --camera".into())
                })?,
            };
            let img = rasterize_3d(splats, &camera, scene.background, &opts)?;
            io::write_image(&args.out, &img)?;
            let depth_path = args
                .depth_out
                .unwrap_or_else(|| default_depth_path(&args.out));
            io::write_image(&depth_path, &io::depth_image(&img)?)?;
            println!("wrote {}", depth_path.display());
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn print_group_errors(errors: &GroupErrors) {
    println!("{:<8} {:>12}  worst", "group", "max_rel");
    for group in ParamGroup::ALL {
        let Some(e) = errors.max_rel.get(&group) else {
            continue;
        };
        let worst = errors
            .worst
            .get(&group)
            .map(|(sel, r)| {
                format!(
                    "splat {} {}: analytic {:.6e} numeric {:.6e}",
                    sel.splat, sel.param, r.analytic, r.numeric
                )
            })
            .unwrap_or_default();
        println!("{:<8} {:>12.3e}  {worst}", group.name(), e);
    }
}

pub fn gradcheck(args: GradcheckArgs) -> CmdResult {
    if args.scenes == 0 || args.splats == 0 {
        return Err(Failure::Usage(
            "need at least one scene and one splat".into(),
        ));
    }
    let opts = RenderOptions::exact();
    let mut total = GroupErrors::default();
    for i in 0..args.scenes {
        let scene = random_check_scene(args.seed.wrapping_add(i as u64), args.splats, args.size)?;
        for lambda in [0.0, 0.2] {
            let cfg = LossConfig {
                lambda_ssim: lambda,
            };
            let e = check_scene(
                &scene.splats,
                &scene.target,
                scene.background,
                &cfg,
                &opts,
                args.step,
            )?;
            total.merge(&e);
        }
    }
    print_group_errors(&total);
    let worst = total.overall_max();
    println!(
        "checked {} partials, max relative error {:.3e} (tolerance {:.1e})",
        total.checked, worst, args.tolerance
    );
    if worst > args.tolerance {
        return Err(Failure::Check(format!(
            "gradient check failed: {worst:.3e} > {:.1e}",
            args.tolerance
        )));
    }
    Ok(())
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

pub fn ortho() -> CmdResult {
    let m = orthogonality_matrix();
    for row in &m {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:>13.6e}")).collect();
        println!("{}", cells.join(" "));
    }
    let off = max_relative_off_diagonal(&m);
    let diag = (0..BASIS_LEN)
        .map(|n| {
            let expect = factorial(n) * (2.0 * std::f64::consts::PI).sqrt();
            (m[n][n] - expect).abs() / expect
        })
        .fold(0.0, f64::max);
    println!("max relative off-diagonal {off:.3e}, max diagonal error {diag:.3e}");
    if off > ORTHO_OFF_DIAGONAL_TOL || diag > ORTHO_DIAGONAL_TOL {
        return Err(Failure::Check("orthogonality check failed".into()));
    }
    Ok(())
}

fn write_trace(dir: &Option<PathBuf>, name: &str, result: &FitResult) -> CmdResult {
    if let Some(dir) = dir {
        create_dir(dir)?;
        io::write_metrics(dir.join(format!("{name}.csv")), &result.trace)?;
    }
    Ok(())
}

fn print_row(label: &str, r: &FitResult) {
    println!(
        "{label:<12} {:>10.4} {:>8.4} {:>12.6e}",
        r.final_psnr, r.final_ssim, r.final_mse
    );
}

pub fn ablate_rank(args: AblateArgs) -> CmdResult {
    let ranks: Vec<HermiteRank> = args
        .ranks
        .split(',')
        .map(|r| {
            r.trim()
                .parse::<usize>()
                .map_err(|_| Failure::Usage(format!("invalid rank '{r}'")))
                .and_then(rank)
        })
        .collect::<Result<_, _>>()?;
    let target = io::read_image(&args.fit.target)?;
    let base = FitConfig {
        kernel: KernelKind::GaussianHermite,
        ..base_config(&args.fit)?
    };
    let mut results = Vec::new();
    for r in ranks {
        let cfg = FitConfig {
            max_rank: r,
            ..base.clone()
        };
        let result = run_fit(&target, &cfg, &format!("rank {r}"))?;
        write_trace(&args.out, &format!("rank{r}"), &result)?;
        results.push((format!("{r}"), result));
    }
    println!("{:<12} {:>10} {:>8} {:>12}", "rank", "psnr", "ssim", "mse");
    for (label, r) in &results {
        print_row(label, r);
    }
    Ok(())
}

pub fn compare_kernels(args: CompareArgs) -> CmdResult {
    let target = io::read_image(&args.fit.target)?;
    let base = FitConfig {
        max_rank: rank(args.max_rank)?,
        ..base_config(&args.fit)?
    };
    let kinds = [
        KernelKind::Gaussian,
        KernelKind::GaussianGl,
        KernelKind::ges(),
        KernelKind::GaussianHermite,
    ];
    let mut results = Vec::new();
    for kind in kinds {
        let cfg = FitConfig {
            kernel: kind,
            ..base.clone()
        };
        let result = run_fit(&target, &cfg, kind.name())?;
        write_trace(&args.out, kind.name(), &result)?;
        results.push((kind.name().to_string(), result));
    }
    println!(
        "{:<12} {:>10} {:>8} {:>12}",
        "kernel", "psnr", "ssim", "mse"
    );
    for (label, r) in &results {
        print_row(label, r);
    }
    Ok(())
}

pub fn synth(args: SynthArgs) -> CmdResult {
    if args.size == 0 {
        return Err(Failure::Usage("size must be positive".into()));
    }
    let img = match args.kind.as_str() {
        "triangle" => targets::fig3_triangle(args.size)?,
        "textured" => targets::textured(args.size, args.size, args.seed)?,
        other => {
            return Err(Failure::Usage(format!(
                "unknown target '{other}' (expected triangle or textured)"
            )))
        }
    };
    io::write_image(&args.out, &img)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_parsing() {
        assert!(matches!(
            parse_background("random"),
            Ok(BackgroundPolicy::RandomPerStep)
        ));
        assert!(matches!(
            parse_background("0.5, 1, 0"),
            Ok(BackgroundPolicy::Fixed([0.5, 1.0, 0.0]))
        ));
        assert!(parse_background("1,2,3").is_err());
        assert!(parse_background("1,1").is_err());
        assert!(parse_background("x").is_err());
    }

    #[test]
    fn depth_path_sits_next_to_output() {
        assert_eq!(
            default_depth_path(Path::new("out/img.ppm")),
            PathBuf::from("out/img_depth.ppm")
        );
    }

    #[test]
    fn factorials() {
        assert_eq!(factorial(0), 1.0);
        assert_eq!(factorial(9), 362880.0);
    }
}
