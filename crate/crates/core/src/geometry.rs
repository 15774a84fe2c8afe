//! Splat frames, the ray-splat intersection and screen-space bounds.
//!
//! Screen-space convention: a camera matrix `W` maps a world point to
//! `(x z, y z, 1, z)`, where `(x, y)` is the pixel position and `z` the view
//! depth. The depth sits in the fourth row so that the planes
//! `(WH)ᵀ(-1, 0, 0, x)` and `(WH)ᵀ(0, -1, 0, y)` select the pixel ray; the
//! constant third row keeps `W` invertible. Pixel `(i, j)` is sampled at its
//! center `(i + 0.5, j + 0.5)`.

use nalgebra::{Matrix4, UnitQuaternion, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::kernel::{cutoff_radius, GhParams, GlConfig, KernelKind};

/// Intersections closer than this depth are treated as misses.
pub const NEAR_PLANE: f64 = 0.01;
/// Ray-splat denominators below this magnitude are edge-on misses.
pub const EDGE_ON_EPS: f64 = 1e-9;

/// A planar splat living directly in the image plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat2D {
    /// Center in pixels.
    pub mu: [f64; 2],
    /// Rotation of the local `u` axis from the image `x` axis, radians.
    pub theta: f64,
    /// Scales along the local axes, pixels.
    pub scale: [f64; 2],
    pub opacity: f64,
    pub color: [f64; 3],
    pub kind: KernelKind,
    pub gh: GhParams,
    /// Blend ordering key; smaller is in front.
    pub z_order: f64,
}

impl Splat2D {
    pub fn validate(&self) -> Result<()> {
        let finite = self
            .mu
            .iter()
            .chain(&self.scale)
            .chain(&self.color)
            .all(|x| x.is_finite())
            && self.theta.is_finite()
            && self.opacity.is_finite()
            && self.z_order.is_finite();
        if !finite {
            return Err(Error::Argument("splat has non-finite fields".into()));
        }
        if self.scale.iter().any(|&s| s <= 1e-3) {
            return Err(Error::Argument(format!(
                "2D splat scales must exceed 1e-3 px, got {:?}",
                self.scale
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Argument(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        self.gh.validate()
    }

    /// Pixel position of local coordinates `(u, v)`.
    pub fn local_to_world(&self, uv: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let a = uv[0] * self.scale[0];
        let b = uv[1] * self.scale[1];
        [self.mu[0] + c * a - s * b, self.mu[1] + s * a + c * b]
    }
}

/// Inverse of the 2D similarity transform: local `(u, v)` of pixel position `px`.
pub fn local_to_pixel_2d(splat: &Splat2D, px: [f64; 2]) -> [f64; 2] {
    let (s, c) = splat.theta.sin_cos();
    let dx = px[0] - splat.mu[0];
    let dy = px[1] - splat.mu[1];
    [
        (c * dx + s * dy) / splat.scale[0],
        (-s * dx + c * dy) / splat.scale[1],
    ]
}

/// A planar splat placed in 3D.
#[derive(Debug, Clone, PartialEq)]
pub struct Splat3D {
    pub position: Vector3<f64>,
    /// Columns of the rotation matrix are `t_u, t_v, t_w`.
    pub rotation: UnitQuaternion<f64>,
    pub scale: [f64; 2],
    pub opacity: f64,
    pub color: [f64; 3],
    pub kind: KernelKind,
    pub gh: GhParams,
}

impl Splat3D {
    pub fn validate(&self) -> Result<()> {
        let q = self.rotation.quaternion();
        if (q.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Argument(
                "splat quaternion is not unit length".into(),
            ));
        }
        if self.scale.iter().any(|&s| !(s > 1e-6)) {
            return Err(Error::Argument(format!(
                "3D splat scales must exceed 1e-6, got {:?}",
                self.scale
            )));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::Argument(format!(
                "opacity {} outside [0, 1]",
                self.opacity
            )));
        }
        if !self
            .position
            .iter()
            .chain(&self.color)
            .all(|x| x.is_finite())
        {
            return Err(Error::Argument("splat has non-finite fields".into()));
        }
        self.gh.validate()
    }

    pub fn tangent_frame(&self) -> [Vector3<f64>; 3] {
        let r = self.rotation.to_rotation_matrix();
        let m = r.matrix();
        [
            m.column(0).into_owned(),
            m.column(1).into_owned(),
            m.column(2).into_owned(),
        ]
    }
}

/// Local-to-world homogeneous transform with columns `s_u t_u, s_v t_v, 0, p`.
pub fn build_h(splat: &Splat3D) -> Result<Matrix4<f64>> {
    let [tu, tv, _] = splat.tangent_frame();
    if tu.cross(&tv).norm() < 1e-9 {
        return Err(Error::Geometry("degenerate splat frame".into()));
    }
    let su = tu * splat.scale[0];
    let sv = tv * splat.scale[1];
    let p = splat.position;
    #[rustfmt::skip]
    let h = Matrix4::new(
        su.x, sv.x, 0.0, p.x,
        su.y, sv.y, 0.0, p.y,
        su.z, sv.z, 0.0, p.z,
        0.0,  0.0,  0.0, 1.0,
    );
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// World-to-screen projective matrix.
    pub w: Matrix4<f64>,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(w: Matrix4<f64>, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Argument("camera image must be non-empty".into()));
        }
        if !w.iter().all(|x| x.is_finite()) || w.determinant().abs() <= 1e-12 {
            return Err(Error::Geometry("camera matrix is not invertible".into()));
        }
        Ok(Camera { w, width, height })
    }

    /// Pinhole camera at `eye` looking at `target`; image `y` grows downward.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: [f64; 2],
        principal: [f64; 2],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Geometry("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::Geometry("up vector is parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let t = Vector3::new(-right.dot(&eye), -down.dot(&eye), -forward.dot(&eye));
        #[rustfmt::skip]
        let view = Matrix4::new(
            right.x,   right.y,   right.z,   t.x,
            down.x,    down.y,    down.z,    t.y,
            forward.x, forward.y, forward.z, t.z,
            0.0,       0.0,       0.0,       1.0,
        );
        #[rustfmt::skip]
        let proj = Matrix4::new(
            focal[0], 0.0,      principal[0], 0.0,
            0.0,      focal[1], principal[1], 0.0,
            0.0,      0.0,      0.0,          1.0,
            0.0,      0.0,      1.0,          0.0,
        );
        Camera::new(proj * view, width, height)
    }

    /// View depth of a world point (fourth screen coordinate).
    pub fn depth_of(&self, p: &Vector3<f64>) -> f64 {
        (self.w * p.push(1.0))[3]
    }

    /// Pixel position and depth of a world point.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64, f64) {
        let s = self.w * p.push(1.0);
        (s[0] / s[3], s[1] / s[3], s[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intersection {
    pub u: f64,
    pub v: f64,
    pub z: f64,
}

/// Local `(u, v)` and depth where the ray through pixel position `px` meets
/// the splat plane. `None` for edge-on splats and hits behind the near plane.
#[inline]
pub fn ray_splat_intersect(wh: &Matrix4<f64>, px: [f64; 2]) -> Option<Intersection> {
    let (x, y) = (px[0], px[1]);
    let hu = [
        -wh[(0, 0)] + x * wh[(3, 0)],
        -wh[(0, 1)] + x * wh[(3, 1)],
        -wh[(0, 2)] + x * wh[(3, 2)],
        -wh[(0, 3)] + x * wh[(3, 3)],
    ];
    let hv = [
        -wh[(1, 0)] + y * wh[(3, 0)],
        -wh[(1, 1)] + y * wh[(3, 1)],
        -wh[(1, 2)] + y * wh[(3, 2)],
        -wh[(1, 3)] + y * wh[(3, 3)],
    ];
    let den = hu[0] * hv[1] - hu[1] * hv[0];
    if den.abs() < EDGE_ON_EPS {
        return None;
    }
    let u = (hu[1] * hv[3] - hu[3] * hv[1]) / den;
    let v = (hu[3] * hv[0] - hu[0] * hv[3]) / den;
    let z = wh[(3, 0)] * u + wh[(3, 1)] * v + wh[(3, 2)] + wh[(3, 3)];
    if z <= NEAR_PLANE {
        return None;
    }
    Some(Intersection { u, v, z })
}

/// Half-open pixel rectangle `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PixelRect {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl PixelRect {
    pub const EMPTY: PixelRect = PixelRect {
        x0: 0,
        y0: 0,
        x1: 0,
        y1: 0,
    };

    pub fn full(width: usize, height: usize) -> Self {
        PixelRect {
            x0: 0,
            y0: 0,
            x1: width,
            y1: height,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn intersects(&self, other: &PixelRect) -> bool {
        !self.is_empty()
            && !other.is_empty()
            && self.x0 < other.x1
            && other.x0 < self.x1
            && self.y0 < other.y1
            && other.y0 < self.y1
    }

    /// Pixels whose centers fall inside the closed box `[lo, hi]`.
    fn from_extent(lo: [f64; 2], hi: [f64; 2], width: usize, height: usize) -> Self {
        let span = |a: f64, b: f64, n: usize| -> (usize, usize) {
            let first = (a - 0.5).ceil().max(0.0);
            let last = (b - 0.5).floor();
            if !(last >= first) || first >= n as f64 {
                return (0, 0);
            }
            (first as usize, (last.min(n as f64 - 1.0) as usize) + 1)
        };
        let (x0, x1) = span(lo[0], hi[0], width);
        let (y0, y1) = span(lo[1], hi[1], height);
        if x0 >= x1 || y0 >= y1 {
            return PixelRect::EMPTY;
        }
        PixelRect { x0, y0, x1, y1 }
    }
}

/// Conservative pixel box of a 2D splat: every pixel whose response reaches
/// `floor` lies inside it.
pub fn bounding_box_2d(
    splat: &Splat2D,
    width: usize,
    height: usize,
    cfg: GlConfig,
    floor: f64,
) -> PixelRect {
    let Some(r) = cutoff_radius(splat.kind, &splat.gh, splat.opacity, cfg, floor) else {
        return PixelRect::EMPTY;
    };
    if !r.is_finite() {
        return PixelRect::full(width, height);
    }
    let (s, c) = splat.theta.sin_cos();
    let (su, sv) = (splat.scale[0], splat.scale[1]);
    let hx = r * ((su * c).powi(2) + (sv * s).powi(2)).sqrt();
    let hy = r * ((su * s).powi(2) + (sv * c).powi(2)).sqrt();
    PixelRect::from_extent(
        [splat.mu[0] - hx, splat.mu[1] - hy],
        [splat.mu[0] + hx, splat.mu[1] + hy],
        width,
        height,
    )
}

/// Conservative pixel box of a 3D splat under `camera`. Splats whose center is
/// not in front of the near plane are never drawn and get an empty box.
pub fn bounding_box_3d(
    splat: &Splat3D,
    camera: &Camera,
    cfg: GlConfig,
    floor: f64,
) -> Result<PixelRect> {
    if camera.depth_of(&splat.position) <= NEAR_PLANE {
        return Ok(PixelRect::EMPTY);
    }
    let Some(r) = cutoff_radius(splat.kind, &splat.gh, splat.opacity, cfg, floor) else {
        return Ok(PixelRect::EMPTY);
    };
    let full = PixelRect::full(camera.width, camera.height);
    if !r.is_finite() {
        return Ok(full);
    }
    let m = camera.w * build_h(splat)?;
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    // the local disc of radius r lies inside this square; its perspective
    // image lies inside the hull of the projected corners
    for (a, b) in [(-r, -r), (r, -r), (r, r), (-r, r)] {
        let s = m * Vector4::new(a, b, 1.0, 1.0);
        if s[3] <= NEAR_PLANE {
            return Ok(full);
        }
        let x = s[0] / s[3];
        let y = s[1] / s[3];
        lo = [lo[0].min(x), lo[1].min(y)];
        hi = [hi[0].max(x), hi[1].max(y)];
    }
    let pad = 1e-7
        * (1.0
            + hi[0]
                .abs()
                .max(hi[1].abs())
                .max(lo[0].abs())
                .max(lo[1].abs()));
    Ok(PixelRect::from_extent(
        [lo[0] - pad, lo[1] - pad],
        [hi[0] + pad, hi[1] + pad],
        camera.width,
        camera.height,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn splat2d(mu: [f64; 2], theta: f64, scale: [f64; 2]) -> Splat2D {
        Splat2D {
            mu,
            theta,
            scale,
            opacity: 1.0,
            color: [1.0, 0.0, 0.0],
            kind: KernelKind::Gaussian,
            gh: GhParams::gaussian(),
            z_order: 0.0,
        }
    }

    fn splat3d(position: Vector3<f64>, rotation: UnitQuaternion<f64>, scale: [f64; 2]) -> Splat3D {
        Splat3D {
            position,
            rotation,
            scale,
            opacity: 1.0,
            color: [0.2, 0.4, 0.6],
            kind: KernelKind::Gaussian,
            gh: GhParams::gaussian(),
        }
    }

    #[test]
    fn local_to_pixel_examples() {
        let s = splat2d([10.0, 5.0], 0.0, [2.0, 1.0]);
        assert_eq!(local_to_pixel_2d(&s, [10.0, 5.0]), [0.0, 0.0]);
        assert_eq!(local_to_pixel_2d(&s, [12.0, 5.0]), [1.0, 0.0]);
        let s = splat2d([3.0, -2.0], 0.8, [1.5, 0.7]);
        let px = [4.2, 1.1];
        let back = s.local_to_world(local_to_pixel_2d(&s, px));
        assert!((back[0] - px[0]).abs() < 1e-9 && (back[1] - px[1]).abs() < 1e-9);
    }

    #[test]
    fn build_h_identity() {
        let s = splat3d(Vector3::zeros(), UnitQuaternion::identity(), [1.0, 1.0]);
        let h = build_h(&s).unwrap();
        assert_eq!(
            h * Vector4::new(1.0, 0.0, 1.0, 1.0),
            Vector4::new(1.0, 0.0, 0.0, 1.0)
        );
        let s = splat3d(
            Vector3::new(1.0, 2.0, 3.0),
            UnitQuaternion::from_euler_angles(0.3, -0.2, 1.1),
            [0.5, 2.0],
        );
        let h = build_h(&s).unwrap();
        assert_eq!(
            h * Vector4::new(0.0, 0.0, 1.0, 1.0),
            Vector4::new(1.0, 2.0, 3.0, 1.0)
        );
    }

    #[test]
    fn center_ray_hits_origin() {
        let cam = Camera::look_at(
            Vector3::new(0.0, 0.0, -5.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            [100.0, 100.0],
            [32.0, 32.0],
            64,
            64,
        )
        .unwrap();
        let s = splat3d(Vector3::zeros(), UnitQuaternion::identity(), [1.0, 1.0]);
        let wh = cam.w * build_h(&s).unwrap();
        let hit = ray_splat_intersect(&wh, [32.0, 32.0]).unwrap();
        assert!(hit.u.abs() < 1e-12 && hit.v.abs() < 1e-12);
        assert!((hit.z - 5.0).abs() < 1e-12);
    }

    #[test]
    fn edge_on_is_miss() {
        let cam = Camera::look_at(
            Vector3::new(0.0, 0.0, -5.0),
            Vector3::zeros(),
            Vector3::new(0.0, 1.0, 0.0),
            [100.0, 100.0],
            [32.0, 32.0],
            64,
            64,
        )
        .unwrap();
        // plane containing the view direction
        let rot = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), std::f64::consts::FRAC_PI_2);
        let s = splat3d(Vector3::zeros(), rot, [1.0, 1.0]);
        let wh = cam.w * build_h(&s).unwrap();
        assert!(ray_splat_intersect(&wh, [32.0, 32.0]).is_none());
    }

    #[test]
    fn singular_camera_rejected() {
        assert!(Camera::new(Matrix4::zeros(), 4, 4).is_err());
    }

    #[test]
    fn box_contains_three_sigma_ellipse() {
        let s = splat2d([32.0, 32.0], 0.4, [3.0, 1.5]);
        let b = bounding_box_2d(&s, 64, 64, GlConfig::default(), 1.0 / 512.0);
        for k in 0..360 {
            let t = (k as f64).to_radians();
            let p = s.local_to_world([3.0 * t.cos(), 3.0 * t.sin()]);
            let (x, y) = (p[0] - 0.5, p[1] - 0.5);
            assert!(
                x >= b.x0 as f64 - 1.0
                    && x <= b.x1 as f64
                    && y >= b.y0 as f64 - 1.0
                    && y <= b.y1 as f64
            );
        }
    }

    #[test]
    fn box_outside_frame_is_empty() {
        let s = splat2d([-100.0, 20.0], 0.0, [2.0, 2.0]);
        assert!(bounding_box_2d(&s, 64, 64, GlConfig::default(), 1.0 / 512.0).is_empty());
        let s = splat2d([20.0, 300.0], 0.0, [2.0, 2.0]);
        assert!(bounding_box_2d(&s, 64, 64, GlConfig::default(), 1.0 / 512.0).is_empty());
    }

    #[test]
    fn rect_intersection() {
        let a = PixelRect {
            x0: 0,
            y0: 0,
            x1: 16,
            y1: 16,
        };
        let b = PixelRect {
            x0: 15,
            y0: 15,
            x1: 20,
            y1: 20,
        };
        let c = PixelRect {
            x0: 16,
            y0: 0,
            x1: 20,
            y1: 20,
        };
        assert!(a.intersects(&b));
        assert!(!a.intersects(&c));
        assert!(!a.intersects(&PixelRect::EMPTY));
    }
}
