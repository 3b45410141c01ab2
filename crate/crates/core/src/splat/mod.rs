//! Differentiable 3D Gaussian splatting on the CPU.
//!
//! Gaussians are stored unconstrained (raw quaternion, log-scale, opacity
//! logit, SH coefficients) so the optimizer works on plain reals. The
//! rasterizer bins projected footprints into square tiles, composites each
//! pixel front to back, and keeps enough state for an exact analytic
//! backward pass.

mod adam;
mod checkpoint;
mod gaussian;
pub mod gradcheck;
mod project;
mod raster;
mod train;


pub use adam::{adam_update, AdamState, LearningRates, BETA1, BETA2, EPSILON};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};
pub use gaussian::{
    covariance_3d, init_from_pointcloud, logit, mean_knn_distance, normalize_quat, prune, quat_to_matrix, rgb_to_sh0,
    sh_color, sigmoid, Gaussian, GaussianCloud, GradientBuffer, DEFAULT_PRUNE_THRESHOLD, INIT_OPACITY, MAX_LOG_SCALE,
    MIN_LOG_SCALE, N_PARAMS, SH_C0, SH_C1,
};
pub use project::{project_gaussian, Projected, COV2D_DILATION, DEFAULT_NEAR, FOOTPRINT_SIGMAS, JACOBIAN_FOV_MARGIN};
pub use raster::{
    rasterize, rasterize_backward, rasterize_forward, ForwardContext, PixelTrace, RasterConfig, MASK_THRESHOLD,
    MAX_ALPHA, MIN_TRANSMITTANCE,
};
pub use train::{scene_extent, train, TrainConfig, TrainOutcome, TrainView};
