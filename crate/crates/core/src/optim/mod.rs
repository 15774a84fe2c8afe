//! Adam, the coarse-to-fine rank schedule and the image-fitting driver.

mod adam;
mod fit;
mod schedule;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use fit::{
    fit_image, fit_image_with, initial_splats, psnr, psnr_from_mse, BackgroundPolicy, FitConfig,
    FitResult, LearningRates, MetricsRow, PSNR_CAP_DB,
};
pub use schedule::active_rank;
