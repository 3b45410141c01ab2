//! Training losses, the distance-aware view weight, and evaluation metrics.

mod loss;
mod perceptual;
mod report;
mod ssim;


pub use loss::{
    distance_weight, distance_weight_with, l1, max_reference_distance, mse, psnr, psnr_from_mse, rgb_loss,
    total_view_loss, total_view_loss_and_grad, LambdaMode, LossWeights, RgbLoss, ViewKind, PSNR_CAP,
};
pub use perceptual::{GradientPyramid, PerceptualMetric};
pub use report::{evaluate, MeanMetrics, MetricReport, ViewMetrics};
pub use ssim::{d_ssim, gaussian_window, ssim, ssim_and_grad, C1, C2, K1, K2, SIGMA, WINDOW};
