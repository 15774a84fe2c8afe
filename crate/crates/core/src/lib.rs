//! CPU differentiable splatting with Gaussian-Hermite kernels.
//!
//! The crate covers the full image-fitting loop: Hermite basis evaluation,
//! splat kernels with analytic derivatives, the ray-splat intersection for
//! planar splats in 3D, a tile-based rasterizer, losses with their backward
//! pass, and an Adam-driven fitting schedule that raises the Hermite rank
//! coarse-to-fine.

pub mod error;
pub mod geometry;
pub mod grad;
pub mod hermite;
pub mod io;
pub mod kernel;
pub mod optim;
pub mod raster;
pub mod targets;

pub use error::{Error, Result};
