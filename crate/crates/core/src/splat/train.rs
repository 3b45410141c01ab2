use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamState, LearningRates};
use super::gaussian::{prune, GaussianCloud, DEFAULT_PRUNE_THRESHOLD};
use super::project::DEFAULT_NEAR;
use super::raster::{rasterize, rasterize_backward, rasterize_forward, RasterConfig};
use crate::camera::{CameraPose, Vec3};
use crate::error::{Error, Result};
use crate::image::ImageRgb;
use crate::metrics::{distance_weight_with, total_view_loss_and_grad, LambdaMode, RgbLoss, ViewKind};

/// A training image with its camera and, for synthetic views, a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainView {
    pub image: ImageRgb,
    pub pose: CameraPose,
    pub mask: Option<Vec<bool>>,
}

impl TrainView {
    pub fn new(image: ImageRgb, pose: CameraPose, mask: Option<Vec<bool>>) -> Result<Self> {
        let k = pose.intrinsics();
        if image.width() != k.width as usize || image.height() != k.height as usize {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{} but the camera expects {}x{}",
                image.width(),
                image.height(),
                k.width,
                k.height
            )));
        }
        if let Some(m) = &mask {
            if m.len() != image.pixel_count() {
                return Err(Error::DimensionMismatch(format!(
                    "mask has {} entries for {} pixels",
                    m.len(),
                    image.pixel_count()
                )));
            }
        }
        Ok(TrainView { image, pose, mask })
    }

    fn has_valid_pixels(&self) -> bool {
        self.mask.as_ref().is_none_or(|m| m.iter().any(|&v| v))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Probability of drawing a reference view; `None` means `M / (M + N)`.
    pub p_ref: Option<f64>,
    /// Prune every this many iterations; 0 disables pruning.
    pub prune_interval: usize,
    pub prune_threshold: f64,
    pub lambda_mode: LambdaMode,
    pub learning_rates: LearningRates,
    pub background: [f64; 3],
    pub tile_size: usize,
    pub near: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 1000,
            seed: 0,
            p_ref: None,
            prune_interval: 200,
            prune_threshold: DEFAULT_PRUNE_THRESHOLD,
            lambda_mode: LambdaMode::Formula,
            learning_rates: LearningRates::default(),
            background: [0.0; 3],
            tile_size: 8,
            near: DEFAULT_NEAR,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(p) = self.p_ref {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidInput(format!("p_ref = {p} is outside [0, 1]")));
            }
        }
        if self.tile_size == 0 {
            return Err(Error::InvalidInput("tile_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.prune_threshold) {
            return Err(Error::InvalidInput("prune_threshold must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn raster(&self) -> RasterConfig {
        RasterConfig {
            tile_size: self.tile_size,
            background: self.background,
            near: self.near,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub cloud: GaussianCloud,
    /// Weighted loss of the view drawn at each iteration (0 for skipped views).
    pub losses: Vec<f64>,
    /// Mean weighted loss over every training view, before and after.
    pub initial_objective: f64,
    pub final_objective: f64,
    /// Distance weight of each synthetic view.
    pub lambdas: Vec<f64>,
}

/// 1.1 × the largest distance of a reference camera from their centroid.
pub fn scene_extent(refs: &[CameraPose]) -> f64 {
    if refs.is_empty() {
        return 1.0;
    }
    let c = refs.iter().map(|p| p.position()).sum::<Vec3>() / refs.len() as f64;
    let r = refs.iter().map(|p| (p.position() - c).norm()).fold(0.0, f64::max);
    if r > 0.0 {
        1.1 * r
    } else {
        1.0
    }
}

fn objective(
    cloud: &GaussianCloud,
    views: &[(&TrainView, ViewKind)],
    loss: &RgbLoss,
    raster: &RasterConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for (v, kind) in views {
        if kind.multiplier() == 0.0 || !v.has_valid_pixels() {
            continue;
        }
        let img = rasterize(cloud, &v.pose, raster)?;
        total += total_view_loss_and_grad(loss, *kind, &img.rgb, &v.image, v.mask.as_deref())?.0;
    }
    Ok(total / views.len() as f64)
}

/// Fits `cloud` to the reference and synthetic views, one view per iteration.
pub fn train(
    cloud: GaussianCloud,
    refs: &[TrainView],
    synths: &[TrainView],
    loss: &RgbLoss,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    loss.weights.validate()?;
    if refs.is_empty() {
        return Err(Error::InvalidInput("training needs at least one reference view".into()));
    }
    let ref_poses: Vec<CameraPose> = refs.iter().map(|v| v.pose).collect();
    let lambdas = synths
        .iter()
        .map(|v| distance_weight_with(&v.pose, &ref_poses, config.lambda_mode))
        .collect::<Result<Vec<f64>>>()?;
    let views: Vec<(&TrainView, ViewKind)> = refs
        .iter()
        .map(|v| (v, ViewKind::Reference))
        .chain(synths.iter().zip(&lambdas).map(|(v, &l)| (v, ViewKind::Synthetic { lambda: l })))
        .collect();
    let raster = config.raster();
    let initial_objective = objective(&cloud, &views, loss, &raster)?;

    let p_ref = config
        .p_ref
        .unwrap_or(refs.len() as f64 / (refs.len() + synths.len()) as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut cloud = cloud;
    let mut adam = AdamState::new(cloud.len(), &config.learning_rates, scene_extent(&ref_poses));
    let mut losses = Vec::with_capacity(config.iterations);

    for it in 0..config.iterations {
        let pick_ref = synths.is_empty() || rng.gen::<f64>() < p_ref;
        let idx = if pick_ref {
            rng.gen_range(0..refs.len())
        } else {
            refs.len() + rng.gen_range(0..synths.len())
        };
        let (view, kind) = views[idx];
        if kind.multiplier() == 0.0 || !view.has_valid_pixels() {
            losses.push(0.0);
        } else {
            let (img, ctx) = rasterize_forward(&cloud, &view.pose, &raster)?;
            let (value, grad) = total_view_loss_and_grad(loss, kind, &img.rgb, &view.image, view.mask.as_deref())?;
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { iteration: it });
            }
            let grads = rasterize_backward(&cloud, &view.pose, &ctx, &grad)?;
            adam.step(&mut cloud, &grads)?;
            losses.push(value);
        }
        if config.prune_interval > 0 && (it + 1) % config.prune_interval == 0 {
            let kept = prune(&mut cloud, config.prune_threshold);
            if kept.len() != adam.len() {
                adam.retain(&kept);
            }
            log::debug!("iteration {}: {} Gaussians after pruning", it + 1, cloud.len());
        }
        if (it + 1) % 100 == 0 {
            let recent = &losses[losses.len().saturating_sub(100)..];
            log::info!(
                "iteration {}: mean loss over the last 100 = {:.5}",
                it + 1,
                recent.iter().sum::<f64>() / recent.len() as f64
            );
        }
    }
    let final_objective = objective(&cloud, &views, loss, &raster)?;
    Ok(TrainOutcome {
        cloud,
        losses,
        initial_objective,
        final_objective,
        lambdas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Intrinsics;
    use crate::metrics::LossWeights;
    use crate::splat::gradcheck::random_scene;

    fn views(n: usize, seed: u64) -> (GaussianCloud, Vec<TrainView>) {
        let (truth, _) = random_scene(seed, 12, 16).unwrap();
        let k = Intrinsics::centered(18.0, 16, 16).unwrap();
        let vs = (0..n)
            .map(|i| {
                let a = i as f64 * 0.7;
                let eye = Vec3::new(3.0 * a.sin(), -0.4, -3.0 * a.cos());
                let pose = CameraPose::looking_at(eye, Vec3::zeros(), -Vec3::y(), k).unwrap();
                let img = rasterize(&truth, &pose, &RasterConfig::default()).unwrap().rgb;
                TrainView::new(img, pose, None).unwrap()
            })
            .collect();
        let (start, _) = random_scene(seed + 100, 12, 16).unwrap();
        (start, vs)
    }

    #[test]
    fn zero_iterations_returns_the_input() {
        let (start, refs) = views(2, 1);
        let cfg = TrainConfig { iterations: 0, ..Default::default() };
        let out = train(start.clone(), &refs, &[], &RgbLoss::default(), &cfg).unwrap();
        assert_eq!(out.cloud, start);
        assert!(out.losses.is_empty());
        assert_eq!(out.initial_objective, out.final_objective);
    }

    #[test]
    fn training_reduces_the_loss_and_is_reproducible() {
        let (start, refs) = views(3, 2);
        let cfg = TrainConfig { iterations: 150, seed: 4, ..Default::default() };
        let loss = RgbLoss::new(LossWeights::default());
        let a = train(start.clone(), &refs, &[], &loss, &cfg).unwrap();
        let b = train(start, &refs, &[], &loss, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.final_objective < a.initial_objective, "{} -> {}", a.initial_objective, a.final_objective);
    }

    #[test]
    fn empty_mask_view_contributes_nothing() {
        let (start, refs) = views(2, 3);
        let mut syn = refs[1].clone();
        syn.mask = Some(vec![false; 256]);
        let cfg = TrainConfig { iterations: 20, p_ref: Some(0.0), lambda_mode: LambdaMode::Uniform, ..Default::default() };
        let out = train(start.clone(), &refs, &[syn], &RgbLoss::default(), &cfg).unwrap();
        assert!(out.losses.iter().all(|&l| l == 0.0));
        assert_eq!(out.cloud, start);
    }

    #[test]
    fn distance_weight_needs_two_distinct_references() {
        let (start, refs) = views(2, 3);
        let syn = refs[1].clone();
        let cfg = TrainConfig { iterations: 1, ..Default::default() };
        assert!(train(start, &refs[..1], &[syn], &RgbLoss::default(), &cfg).is_err());
    }

    #[test]
    fn mismatched_view_is_rejected() {
        let (_, refs) = views(1, 4);
        assert!(TrainView::new(ImageRgb::new(8, 8), refs[0].pose, None).is_err());
    }

    #[test]
    fn extent_of_a_ring() {
        let k = Intrinsics::centered(10.0, 8, 8).unwrap();
        let ring: Vec<CameraPose> = (0..4)
            .map(|i| {
                let a = i as f64 * std::f64::consts::FRAC_PI_2;
                CameraPose::looking_at(Vec3::new(3.0 * a.cos(), 3.0 * a.sin(), 0.0), Vec3::zeros(), Vec3::z(), k).unwrap()
            })
            .collect();
        assert!((scene_extent(&ring) - 3.3).abs() < 1e-12);
    }
}
