#![allow(dead_code)]

use ghsplat::geometry::{Camera, Splat2D, Splat3D};
use ghsplat::hermite::{HermiteRank, BASIS_LEN};
use ghsplat::kernel::{GhParams, KernelKind};
use nalgebra::{UnitQuaternion, Vector3, Vector4};
use rand::Rng;

pub fn random_kind(rng: &mut impl Rng) -> KernelKind {
    match rng.random_range(0..4) {
        0 => KernelKind::Gaussian,
        1 => KernelKind::GaussianGl,
        2 => KernelKind::Ges {
            beta: rng.random_range(1.0..8.0),
        },
        _ => KernelKind::GaussianHermite,
    }
}

/// Coefficients at a random rank with decaying random perturbations.
pub fn random_gh(rng: &mut impl Rng) -> GhParams {
    let mut gh = GhParams::gaussian();
    gh.set_rank(HermiteRank::new(rng.random_range(0..=9)).unwrap());
    for n in 0..=gh.active_rank.get() {
        let spread = 0.8 / (1.0 + n as f64);
        gh.c[n] += rng.random_range(-spread..spread);
        gh.d[n] += rng.random_range(-spread..spread);
    }
    debug_assert!(gh.c.len() == BASIS_LEN);
    gh
}

pub fn random_splat_2d(rng: &mut impl Rng, width: usize, height: usize) -> Splat2D {
    let kind = random_kind(rng);
    Splat2D {
        mu: [
            rng.random_range(-0.2..1.2) * width as f64,
            rng.random_range(-0.2..1.2) * height as f64,
        ],
        theta: rng.random_range(0.0..std::f64::consts::TAU),
        scale: [rng.random_range(0.5..10.0), rng.random_range(0.5..10.0)],
        opacity: rng.random_range(0.0..1.0),
        color: [rng.random(), rng.random(), rng.random()],
        kind,
        gh: if kind == KernelKind::GaussianHermite {
            random_gh(rng)
        } else {
            GhParams::gaussian()
        },
        z_order: rng.random_range(-1.0..1.0),
    }
}

pub fn random_rotation(rng: &mut impl Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_euler_angles(
        rng.random_range(-3.1..3.1),
        rng.random_range(-1.5..1.5),
        rng.random_range(-3.1..3.1),
    )
}

pub fn random_splat_3d(rng: &mut impl Rng) -> Splat3D {
    let kind = random_kind(rng);
    Splat3D {
        position: Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ),
        rotation: random_rotation(rng),
        scale: [rng.random_range(0.05..0.5), rng.random_range(0.05..0.5)],
        opacity: rng.random_range(0.0..1.0),
        color: [rng.random(), rng.random(), rng.random()],
        kind,
        gh: if kind == KernelKind::GaussianHermite {
            random_gh(rng)
        } else {
            GhParams::gaussian()
        },
    }
}

/// Pinhole camera on a sphere of radius 3..6 around the origin.
pub fn random_camera(rng: &mut impl Rng, width: usize, height: usize) -> Camera {
    let dir = loop {
        let d: Vector3<f64> = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if d.norm() > 0.2 && d.norm() < 1.0 && d.normalize().y.abs() < 0.95 {
            break d.normalize();
        }
    };
    let eye = dir * rng.random_range(3.0..6.0);
    let focal = rng.random_range(0.8..1.5) * width as f64;
    Camera::look_at(
        eye,
        Vector3::zeros(),
        Vector3::new(0.0, 1.0, 0.0),
        [focal, focal],
        [width as f64 / 2.0, height as f64 / 2.0],
        width,
        height,
    )
    .unwrap()
}

/// Ray through a pixel, from two points at depths 1 and 2 recovered by
/// inverting the camera matrix.
pub fn pixel_ray(camera: &Camera, px: [f64; 2]) -> (Vector3<f64>, Vector3<f64>) {
    let inv = camera.w.try_inverse().unwrap();
    let at = |z: f64| {
        let p = inv * Vector4::new(px[0] * z, px[1] * z, 1.0, z);
        Vector3::new(p.x / p.w, p.y / p.w, p.z / p.w)
    };
    let a = at(1.0);
    (a, at(2.0) - a)
}

/// Plane-ray intersection in world space, expressed in the splat frame.
pub fn plane_oracle(splat: &Splat3D, camera: &Camera, px: [f64; 2]) -> Option<[f64; 2]> {
    let [tu, tv, tw] = splat.tangent_frame();
    let (origin, dir) = pixel_ray(camera, px);
    let denom = dir.dot(&tw);
    if denom.abs() < 1e-6 * dir.norm() {
        return None;
    }
    let t = (splat.position - origin).dot(&tw) / denom;
    let hit = origin + dir * t - splat.position;
    Some([hit.dot(&tu) / splat.scale[0], hit.dot(&tv) / splat.scale[1]])
}

pub fn project_local(splat: &Splat3D, camera: &Camera, uv: [f64; 2]) -> (f64, f64, f64) {
    let [tu, tv, _] = splat.tangent_frame();
    let p = splat.position + tu * (uv[0] * splat.scale[0]) + tv * (uv[1] * splat.scale[1]);
    camera.project(&p)
}
