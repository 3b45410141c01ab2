//! Central finite differences against the analytic rasterizer gradient.
//!
//! The probe loss is `L = Σ w · rgb` for a fixed weight image `w`, which makes
//! `w` the exact upstream gradient.

use super::gaussian::{GaussianCloud, N_PARAMS};
use super::raster::{rasterize, rasterize_backward, rasterize_forward, RasterConfig};
use crate::camera::CameraPose;
use crate::error::Result;
use crate::image::ImageRgb;

pub const PARAM_NAMES: [&str; N_PARAMS] = [
    "mean.x", "mean.y", "mean.z", "rot.w", "rot.x", "rot.y", "rot.z", "scale.x", "scale.y", "scale.z", "opacity",
    "sh0.r", "sh0.g", "sh0.b", "sh1.r", "sh1.g", "sh1.b", "sh2.r", "sh2.g", "sh2.b", "sh3.r", "sh3.g", "sh3.b",
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradMismatch {
    pub gaussian: usize,
    pub param: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub worst: Option<GradMismatch>,
}

impl GradCheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.worst.map_or(0.0, |w| w.relative_error)
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn probe(cloud: &GaussianCloud, pose: &CameraPose, cfg: &RasterConfig, w: &ImageRgb) -> Result<f64> {
    let img = rasterize(cloud, pose, cfg)?;
    Ok(img.rgb.as_slice().iter().zip(w.as_slice()).map(|(a, b)| a * b).sum())
}

/// Checks every parameter of every Gaussian; SH bands above the cloud's
/// degree are skipped since the renderer ignores them.
pub fn check_gradients(
    cloud: &GaussianCloud,
    pose: &CameraPose,
    cfg: &RasterConfig,
    weights: &ImageRgb,
    step: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let (_, ctx) = rasterize_forward(cloud, pose, cfg)?;
    let analytic = rasterize_backward(cloud, pose, &ctx, weights)?;
    let n_used = if cloud.sh_degree() == 0 { 14 } else { N_PARAMS };
    let mut flat = cloud.to_flat();
    let mut report = GradCheckReport {
        checked: 0,
        worst: None,
    };
    for gi in 0..cloud.len() {
        for pi in 0..n_used {
            let idx = gi * N_PARAMS + pi;
            let orig = flat[idx];
            flat[idx] = orig + step;
            let plus = probe(&GaussianCloud::from_flat(&flat, cloud.sh_degree())?, pose, cfg, weights)?;
            flat[idx] = orig - step;
            let minus = probe(&GaussianCloud::from_flat(&flat, cloud.sh_degree())?, pose, cfg, weights)?;
            flat[idx] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic.get(gi)[pi];
            let rel = relative_error(a, numeric, floor);
            report.checked += 1;
            if report.worst.is_none_or(|w| rel > w.relative_error) {
                report.worst = Some(GradMismatch {
                    gaussian: gi,
                    param: pi,
                    analytic: a,
                    numeric,
                    relative_error: rel,
                });
            }
        }
    }
    Ok(report)
}

/// A seeded test scene: `n` anisotropic degree-1 Gaussians in front of a
/// `size × size` camera, with moderate opacities and colors inside `(0, 1)`.
pub fn random_scene(seed: u64, n: usize, size: u32) -> Result<(GaussianCloud, CameraPose)> {
    use super::gaussian::{logit, rgb_to_sh0, Gaussian};
    use crate::camera::{Intrinsics, Vec3};
    use rand::{Rng, SeedableRng};

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let k = Intrinsics::centered(size as f64 * 1.1, size, size)?;
    let eye = Vec3::new(0.2, -0.3, -3.0);
    let pose = CameraPose::looking_at(eye, Vec3::zeros(), -Vec3::y(), k)?;
    let gaussians = (0..n)
        .map(|_| {
            let mut sh = [[0.0; 3]; 4];
            sh[0] = [0; 3].map(|_: u8| rgb_to_sh0(rng.gen_range(0.25..0.75)));
            for band in sh.iter_mut().skip(1) {
                *band = [0; 3].map(|_: u8| rng.gen_range(-0.15..0.15));
            }
            Gaussian {
                mean: Vec3::new(rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(-0.5..0.5)),
                rotation: [0; 4].map(|_: u8| rng.gen_range(-1.0..1.0)),
                log_scale: Vec3::new(rng.gen_range(-2.6..-1.6), rng.gen_range(-2.6..-1.6), rng.gen_range(-2.6..-1.6)),
                opacity_logit: logit(rng.gen_range(0.3..0.8)),
                sh,
            }
        })
        .collect();
    Ok((GaussianCloud::new(gaussians, 1)?, pose))
}
