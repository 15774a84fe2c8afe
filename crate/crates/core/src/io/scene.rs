//! Human-readable scene files (TOML).
//!
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`
//! field for field.

use nalgebra::{Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Splat2D, Splat3D};
use crate::hermite::{HermiteRank, BASIS_LEN};
use crate::kernel::{GhParams, KernelKind};
use crate::raster::Rgb;

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum SceneSplats {
    Planar(Vec<Splat2D>),
    Spatial {
        splats: Vec<Splat3D>,
        camera: Option<Camera>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub width: usize,
    pub height: usize,
    pub background: Rgb,
    /// Kernel written at the top of the file; splats of another kind carry
    /// their own `kernel` field.
    pub kernel: KernelKind,
    pub content: SceneSplats,
}

impl Scene {
    pub fn new_2d(
        width: usize,
        height: usize,
        background: Rgb,
        kernel: KernelKind,
        splats: Vec<Splat2D>,
    ) -> Self {
        Scene {
            width,
            height,
            background,
            kernel,
            content: SceneSplats::Planar(splats),
        }
    }

    pub fn splat_count(&self) -> usize {
        match &self.content {
            SceneSplats::Planar(s) => s.len(),
            SceneSplats::Spatial { splats, .. } => splats.len(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum Dimension {
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "3d")]
    D3,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc {
    version: u32,
    dimension: Dimension,
    width: usize,
    height: usize,
    background: [f64; 3],
    kernel: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    camera: Option<CameraDoc>,
    #[serde(default, rename = "splat")]
    splats: Vec<SplatDoc>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct SplatDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kernel: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    z_order: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    position: Option<[f64; 3]>,
    /// Unit quaternion `[w, x, y, z]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rotation: Option<[f64; 4]>,
    scale: [f64; 2],
    opacity: f64,
    color: [f64; 3],
    #[serde(default)]
    rank: HermiteRank,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d: Option<Vec<f64>>,
}

/// Either an explicit world-to-screen matrix or a pinhole description.
#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub(crate) struct CameraDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    /// Row-major 4×4.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    matrix: Option<[[f64; 4]; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eye: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    target: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    up: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    focal: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    principal: Option<[f64; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    camera: CameraDoc,
}

fn field_err(field: String, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: String::new(),
        message: format!("{field}: {message}"),
    }
}

fn kind_from(name: &str, beta: Option<f64>, field: &str) -> Result<KernelKind> {
    let kind: KernelKind = name
        .parse()
        .map_err(|e| field_err(format!("{field}.kernel"), e))?;
    match (kind, beta) {
        (KernelKind::Ges { .. }, Some(b)) => Ok(KernelKind::Ges { beta: b }),
        (KernelKind::Ges { .. }, None) => Ok(kind),
        (_, Some(_)) => Err(field_err(
            format!("{field}.beta"),
            format!("only ges splats take a beta, kernel is '{name}'"),
        )),
        (_, None) => Ok(kind),
    }
}

fn coeffs(values: Option<Vec<f64>>, field: String, unit: f64) -> Result<[f64; BASIS_LEN]> {
    let mut out = [0.0; BASIS_LEN];
    out[0] = unit;
    let Some(v) = values else { return Ok(out) };
    if v.is_empty() || v.len() > BASIS_LEN {
        return Err(field_err(
            field,
            format!("expected 1..={BASIS_LEN} coefficients, got {}", v.len()),
        ));
    }
    out[..v.len()].copy_from_slice(&v);
    Ok(out)
}

impl CameraDoc {
    fn from_camera(cam: &Camera) -> Self {
        let m = &cam.w;
        CameraDoc {
            width: Some(cam.width),
            height: Some(cam.height),
            matrix: Some(std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))),
            ..CameraDoc::default()
        }
    }

    fn into_camera(self, default_dims: Option<(usize, usize)>) -> Result<Camera> {
        let dims = match (self.width, self.height, default_dims) {
            (Some(w), Some(h), _) => (w, h),
            (None, None, Some(d)) => d,
            _ => return Err(field_err("camera".into(), "width and height are required")),
        };
        if let Some(m) = self.matrix {
            if self.eye.is_some() || self.target.is_some() || self.focal.is_some() {
                return Err(field_err(
                    "camera".into(),
                    "give either matrix or eye/target/focal, not both",
                ));
            }
            let w = Matrix4::from_fn(|r, c| m[r][c]);
            return Camera::new(w, dims.0, dims.1)
                .map_err(|e| field_err("camera.matrix".into(), e));
        }
        let need = |v: Option<[f64; 3]>, name: &str| {
            v.ok_or_else(|| field_err(format!("camera.{name}"), "missing"))
        };
        let eye = need(self.eye, "eye")?;
        let target = need(self.target, "target")?;
        let up = self.up.unwrap_or([0.0, 1.0, 0.0]);
        let focal = self
            .focal
            .ok_or_else(|| field_err("camera.focal".into(), "missing"))?;
        let principal = self
            .principal
            .unwrap_or([dims.0 as f64 / 2.0, dims.1 as f64 / 2.0]);
        Camera::look_at(
            Vector3::from(eye),
            Vector3::from(target),
            Vector3::from(up),
            focal,
            principal,
            dims.0,
            dims.1,
        )
        .map_err(|e| field_err("camera".into(), e))
    }
}

fn splat_doc(
    kind: KernelKind,
    top: KernelKind,
    gh: &GhParams,
    scale: [f64; 2],
    opacity: f64,
    color: Rgb,
) -> SplatDoc {
    let explicit_kind = std::mem::discriminant(&kind) != std::mem::discriminant(&top);
    let (c, d) = if matches!(kind, KernelKind::GaussianHermite) || *gh != GhParams::gaussian() {
        (Some(gh.c.to_vec()), Some(gh.d.to_vec()))
    } else {
        (None, None)
    };
    SplatDoc {
        kernel: explicit_kind.then(|| kind.name().to_string()),
        beta: kind.beta(),
        scale,
        opacity,
        color,
        rank: gh.active_rank,
        c,
        d,
        ..SplatDoc::default()
    }
}

/// Serializes a scene to TOML text.
pub fn scene_to_string(scene: &Scene) -> Result<String> {
    let top = scene.kernel;
    let (dimension, camera, splats) = match &scene.content {
        SceneSplats::Planar(splats) => (
            Dimension::D2,
            None,
            splats
                .iter()
                .map(|s| SplatDoc {
                    mu: Some(s.mu),
                    theta: Some(s.theta),
                    z_order: Some(s.z_order),
                    ..splat_doc(s.kind, top, &s.gh, s.scale, s.opacity, s.color)
                })
                .collect(),
        ),
        SceneSplats::Spatial { splats, camera } => (
            Dimension::D3,
            camera.as_ref().map(CameraDoc::from_camera),
            splats
                .iter()
                .map(|s| {
                    let q = s.rotation.quaternion();
                    SplatDoc {
                        position: Some([s.position.x, s.position.y, s.position.z]),
                        rotation: Some([q.w, q.i, q.j, q.k]),
                        ..splat_doc(s.kind, top, &s.gh, s.scale, s.opacity, s.color)
                    }
                })
                .collect(),
        ),
    };
    let doc = SceneDoc {
        version: SCENE_VERSION,
        dimension,
        width: scene.width,
        height: scene.height,
        background: scene.background,
        kernel: top.name().to_string(),
        camera,
        splats,
    };
    let mut text = toml::to_string(&doc).map_err(|e| field_err("scene".into(), e))?;
    if !text.ends_with('\n') {
        text.push('\n');
    }
    Ok(text)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses scene text. Errors name the line for syntax problems and the
/// field path (`splat[3].opacity`) for semantic ones.
pub fn scene_from_str(text: &str) -> Result<Scene> {
    let doc: SceneDoc = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start));
        let message = e.message().trim().to_string();
        Error::Parse {
            path: String::new(),
            message: match line {
                Some(l) => format!("line {l}: {message}"),
                None => message,
            },
        }
    })?;
    if doc.version != SCENE_VERSION {
        return Err(field_err(
            "version".into(),
            format!(
                "unsupported version {} (expected {SCENE_VERSION})",
                doc.version
            ),
        ));
    }
    if doc.width == 0 || doc.height == 0 {
        return Err(field_err(
            "width".into(),
            "image dimensions must be positive",
        ));
    }
    let top = kind_from(&doc.kernel, None, "scene")?;
    let dims = (doc.width, doc.height);
    let content = match doc.dimension {
        Dimension::D2 => {
            if doc.camera.is_some() {
                return Err(field_err("camera".into(), "2d scenes take no camera"));
            }
            let mut out = Vec::with_capacity(doc.splats.len());
            for (i, s) in doc.splats.into_iter().enumerate() {
                let f = format!("splat[{i}]");
                let missing =
                    |name: &str| field_err(format!("{f}.{name}"), "missing for a 2d splat");
                if s.position.is_some() || s.rotation.is_some() {
                    return Err(field_err(f, "position/rotation belong to 3d scenes"));
                }
                let kind = kind_from(s.kernel.as_deref().unwrap_or(&doc.kernel), s.beta, &f)?;
                let splat = Splat2D {
                    mu: s.mu.ok_or_else(|| missing("mu"))?,
                    theta: s.theta.ok_or_else(|| missing("theta"))?,
                    scale: s.scale,
                    opacity: s.opacity,
                    color: s.color,
                    kind,
                    gh: GhParams {
                        c: coeffs(s.c, format!("{f}.c"), 1.0)?,
                        d: coeffs(s.d, format!("{f}.d"), 1.0)?,
                        active_rank: s.rank,
                    },
                    z_order: s.z_order.unwrap_or(i as f64),
                };
                splat.validate().map_err(|e| field_err(f, e))?;
                out.push(splat);
            }
            SceneSplats::Planar(out)
        }
        Dimension::D3 => {
            let camera = doc.camera.map(|c| c.into_camera(Some(dims))).transpose()?;
            let mut out = Vec::with_capacity(doc.splats.len());
            for (i, s) in doc.splats.into_iter().enumerate() {
                let f = format!("splat[{i}]");
                let missing =
                    |name: &str| field_err(format!("{f}.{name}"), "missing for a 3d splat");
                if s.mu.is_some() || s.theta.is_some() || s.z_order.is_some() {
                    return Err(field_err(f, "mu/theta/z_order belong to 2d scenes"));
                }
                let kind = kind_from(s.kernel.as_deref().unwrap_or(&doc.kernel), s.beta, &f)?;
                let p = s.position.ok_or_else(|| missing("position"))?;
                let q = s.rotation.ok_or_else(|| missing("rotation"))?;
                let quat = Quaternion::new(q[0], q[1], q[2], q[3]);
                if !((quat.norm() - 1.0).abs() <= 1e-9) {
                    return Err(field_err(
                        format!("{f}.rotation"),
                        "quaternion must have unit length",
                    ));
                }
                let splat = Splat3D {
                    position: Vector3::from(p),
                    rotation: UnitQuaternion::new_unchecked(quat),
                    scale: s.scale,
                    opacity: s.opacity,
                    color: s.color,
                    kind,
                    gh: GhParams {
                        c: coeffs(s.c, format!("{f}.c"), 1.0)?,
                        d: coeffs(s.d, format!("{f}.d"), 1.0)?,
                        active_rank: s.rank,
                    },
                };
                splat.validate().map_err(|e| field_err(f, e))?;
                out.push(splat);
            }
            SceneSplats::Spatial {
                splats: out,
                camera,
            }
        }
    };
    Ok(Scene {
        width: doc.width,
        height: doc.height,
        background: doc.background,
        kernel: top,
        content,
    })
}

/// Parses a standalone camera file holding a single `[camera]` table.
pub fn camera_from_str(text: &str, default_dims: Option<(usize, usize)>) -> Result<Camera> {
    let file: CameraFile = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of(text, s.start)).unwrap_or(1);
        field_err(format!("line {line}"), e.message().trim())
    })?;
    file.camera.into_camera(default_dims)
}
