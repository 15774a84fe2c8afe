mod common;

use common::{plane_oracle, project_local};

use ghsplat::geometry::{
    bounding_box_2d, bounding_box_3d, build_h, local_to_pixel_2d, ray_splat_intersect, Camera,
    Splat3D,
};
use ghsplat::kernel::{splat_response, GlConfig};
use ghsplat::raster::ALPHA_FLOOR;
use nalgebra::{Isometry3, Translation3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn intersection_matches_round_trip_and_plane_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut checked = 0;
    while checked < 1000 {
        let splat = common::random_splat_3d(&mut rng);
        let camera = common::random_camera(&mut rng, 64, 64);
        let target = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let (x, y, z) = project_local(&splat, &camera, target);
        if z <= 0.1 {
            continue;
        }
        let wh = camera.w * build_h(&splat).unwrap();
        let Some(hit) = ray_splat_intersect(&wh, [x, y]) else {
            continue;
        };
        let Some(oracle) = plane_oracle(&splat, &camera, [x, y]) else {
            continue;
        };
        let tol = |a: f64| 1e-6 * (1.0 + a.abs());
        assert!(
            (hit.u - target[0]).abs() < tol(target[0])
                && (hit.v - target[1]).abs() < tol(target[1])
        );
        assert!(
            (hit.u - oracle[0]).abs() < tol(oracle[0])
                && (hit.v - oracle[1]).abs() < tol(oracle[1])
        );
        assert!((hit.z - z).abs() < tol(z));

        let s = wh * Vector4::new(hit.u, hit.v, 1.0, 1.0);
        assert!((s[0] - x * hit.z).abs() < tol(s[0]));
        assert!((s[1] - y * hit.z).abs() < tol(s[1]));
        assert!((s[3] - hit.z).abs() < tol(s[3]));
        checked += 1;
    }
}

#[test]
fn intersection_is_rigidly_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut checked = 0;
    while checked < 500 {
        let splat = common::random_splat_3d(&mut rng);
        let camera = common::random_camera(&mut rng, 64, 64);
        let iso = Isometry3::from_parts(
            Translation3::new(
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
                rng.random_range(-5.0..5.0),
            ),
            common::random_rotation(&mut rng),
        );
        let moved = Splat3D {
            position: iso.transform_point(&splat.position.into()).coords,
            rotation: iso.rotation * splat.rotation,
            ..splat.clone()
        };
        let moved_camera = Camera::new(camera.w * iso.inverse().to_homogeneous(), 64, 64).unwrap();
        let px = [rng.random_range(0.0..64.0), rng.random_range(0.0..64.0)];
        let a = ray_splat_intersect(&(camera.w * build_h(&splat).unwrap()), px);
        let b = ray_splat_intersect(&(moved_camera.w * build_h(&moved).unwrap()), px);
        match (a, b) {
            (Some(a), Some(b)) => {
                if a.u.abs().max(a.v.abs()) > 1e3 {
                    continue;
                }
                assert!((a.u - b.u).abs() < 1e-6 * (1.0 + a.u.abs()));
                assert!((a.v - b.v).abs() < 1e-6 * (1.0 + a.v.abs()));
                assert!((a.z - b.z).abs() < 1e-6 * (1.0 + a.z.abs()));
                checked += 1;
            }
            _ => {}
        }
    }
}

#[test]
fn flipped_normal_gives_same_intersection() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let splat = common::random_splat_3d(&mut rng);
        let camera = common::random_camera(&mut rng, 32, 32);
        let [tu, tv, _] = splat.tangent_frame();
        // (t_u, -t_v, -t_w) is a proper rotation with the opposite normal
        let flip = nalgebra::Rotation3::from_basis_unchecked(&[tu, -tv, -tu.cross(&tv)]);
        let flipped = Splat3D {
            rotation: nalgebra::UnitQuaternion::from_rotation_matrix(&flip),
            ..splat.clone()
        };
        let px = [rng.random_range(0.0..32.0), rng.random_range(0.0..32.0)];
        let a = ray_splat_intersect(&(camera.w * build_h(&splat).unwrap()), px);
        let b = ray_splat_intersect(&(camera.w * build_h(&flipped).unwrap()), px);
        if let (Some(a), Some(b)) = (a, b) {
            assert!((a.u - b.u).abs() < 1e-6 * (1.0 + a.u.abs()));
            assert!((a.v + b.v).abs() < 1e-6 * (1.0 + a.v.abs()));
        }
    }
}

#[test]
fn box_2d_covers_every_visible_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = GlConfig::default();
    let (w, h) = (96, 80);
    for _ in 0..150 {
        let splat = common::random_splat_2d(&mut rng, w, h);
        let rect = bounding_box_2d(&splat, w, h, cfg, ALPHA_FLOOR);
        for y in 0..h {
            for x in 0..w {
                let uv = local_to_pixel_2d(&splat, [x as f64 + 0.5, y as f64 + 0.5]);
                let a = splat_response(uv[0], uv[1], splat.kind, &splat.gh, splat.opacity, cfg);
                if a >= ALPHA_FLOOR {
                    assert!(
                        rect.contains(x, y),
                        "{splat:?} pixel ({x},{y}) a={a} outside {rect:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn box_3d_covers_every_visible_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = GlConfig::default();
    for _ in 0..150 {
        let splat = common::random_splat_3d(&mut rng);
        let camera = common::random_camera(&mut rng, 48, 48);
        let rect = bounding_box_3d(&splat, &camera, cfg, ALPHA_FLOOR).unwrap();
        let wh = camera.w * build_h(&splat).unwrap();
        let drawable = camera.depth_of(&splat.position) > ghsplat::geometry::NEAR_PLANE;
        for y in 0..48 {
            for x in 0..48 {
                let Some(hit) = ray_splat_intersect(&wh, [x as f64 + 0.5, y as f64 + 0.5]) else {
                    continue;
                };
                let a = splat_response(hit.u, hit.v, splat.kind, &splat.gh, splat.opacity, cfg);
                if a >= ALPHA_FLOOR && drawable {
                    assert!(
                        rect.contains(x, y),
                        "pixel ({x},{y}) a={a} outside {rect:?}"
                    );
                }
            }
        }
    }
}

#[test]
fn local_to_pixel_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..1000 {
        let splat = common::random_splat_2d(&mut rng, 64, 64);
        let px = [
            rng.random_range(-50.0..100.0),
            rng.random_range(-50.0..100.0),
        ];
        let uv = local_to_pixel_2d(&splat, px);
        let back = splat.local_to_world(uv);
        assert!((back[0] - px[0]).abs() < 1e-9 && (back[1] - px[1]).abs() < 1e-9);
    }
}

#[test]
fn build_h_matches_vector_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let splat = common::random_splat_3d(&mut rng);
        let (u, v) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let [tu, tv, _] = splat.tangent_frame();
        let expect = splat.position + tu * (u * splat.scale[0]) + tv * (v * splat.scale[1]);
        let got = build_h(&splat).unwrap() * Vector4::new(u, v, 1.0, 1.0);
        assert!((got.xyz() - expect).norm() < 1e-12 && got.w == 1.0);
    }
}
