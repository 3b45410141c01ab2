use serde::{Deserialize, Serialize};

use super::gaussian::{clamp_log_scale, normalize_quat, Gaussian, GaussianCloud, GradientBuffer, N_PARAMS};
use crate::error::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-group step sizes. `mean` is multiplied by the scene extent.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub mean: f64,
    pub rotation: f64,
    pub scale: f64,
    pub opacity: f64,
    pub sh: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        LearningRates {
            mean: 1.6e-4,
            rotation: 1e-3,
            scale: 5e-3,
            opacity: 5e-2,
            sh: 2.5e-3,
        }
    }
}

impl LearningRates {
    pub fn per_param(&self, scene_extent: f64) -> [f64; N_PARAMS] {
        let mut lr = [self.sh; N_PARAMS];
        lr[0..3].fill(self.mean * scene_extent);
        lr[3..7].fill(self.rotation);
        lr[7..10].fill(self.scale);
        lr[10] = self.opacity;
        lr
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Vec<[f64; N_PARAMS]>,
    v: Vec<[f64; N_PARAMS]>,
    step: u64,
    lr: [f64; N_PARAMS],
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// One bias-corrected Adam update on a flat slice; `step` is 1-based.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(params: &mut [f64], grads: &[f64], m: &mut [f64], v: &mut [f64], lr: &[f64], step: u64, b1: f64, b2: f64, eps: f64) {
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        params[i] -= lr[i] * mh / (vh.sqrt() + eps);
    }
}

impl AdamState {
    pub fn new(len: usize, rates: &LearningRates, scene_extent: f64) -> Self {
        AdamState {
            m: vec![[0.0; N_PARAMS]; len],
            v: vec![[0.0; N_PARAMS]; len],
            step: 0,
            lr: rates.per_param(scene_extent),
            beta1: BETA1,
            beta2: BETA2,
            epsilon: EPSILON,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn learning_rates(&self) -> &[f64; N_PARAMS] {
        &self.lr
    }

    /// Applies one update, then renormalizes rotations and clamps scales.
    pub fn step(&mut self, cloud: &mut GaussianCloud, grads: &GradientBuffer) -> Result<()> {
        if grads.len() != cloud.len() || self.m.len() != cloud.len() {
            return Err(Error::ShapeMismatch(format!(
                "cloud has {} Gaussians, gradients {}, optimizer state {}",
                cloud.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.step += 1;
        let (b1, b2, eps, step) = (self.beta1, self.beta2, self.epsilon, self.step);
        for (i, g) in cloud.gaussians_mut().iter_mut().enumerate() {
            let mut p = g.to_params();
            adam_update(&mut p, grads.get(i), &mut self.m[i], &mut self.v[i], &self.lr, step, b1, b2, eps);
            let mut next = Gaussian::from_params(&p);
            next.rotation = normalize_quat(next.rotation);
            next.log_scale = clamp_log_scale(next.log_scale);
            *g = next;
        }
        Ok(())
    }

    /// Keeps the moment rows at `indices`, matching a pruned cloud.
    pub fn retain(&mut self, indices: &[usize]) {
        self.m = indices.iter().map(|&i| self.m[i]).collect();
        self.v = indices.iter().map(|&i| self.v[i]).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::Vec3;

    fn cloud() -> GaussianCloud {
        let mut g = Gaussian::isotropic(Vec3::new(0.1, 0.2, 0.3), -2.0, 0.4, [0.2, 0.5, 0.7]);
        g.rotation = [2.0, 0.0, 0.0, 0.0];
        GaussianCloud::new(vec![g, Gaussian::isotropic(Vec3::zeros(), -1.0, 0.6, [0.1; 3])], 0).unwrap()
    }

    #[test]
    fn zero_gradient_only_renormalizes() {
        let mut c = cloud();
        let before = c.clone();
        let mut adam = AdamState::new(c.len(), &LearningRates::default(), 1.0);
        adam.step(&mut c, &GradientBuffer::zeros(2)).unwrap();
        assert_eq!(c.gaussians()[0].rotation, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(c.gaussians()[1], before.gaussians()[1]);
        let mut g0 = before.gaussians()[0];
        g0.rotation = [1.0, 0.0, 0.0, 0.0];
        assert_eq!(c.gaussians()[0], g0);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut x, mut m, mut v) = ([3.0], [0.0], [0.0]);
        adam_update(&mut x, &[1.0], &mut m, &mut v, &[0.1], 1, BETA1, BETA2, EPSILON);
        assert!((x[0] - 2.9).abs() < 1e-12);
    }

    #[test]
    fn steps_are_reproducible() {
        let run = || {
            let mut c = cloud();
            let mut adam = AdamState::new(c.len(), &LearningRates::default(), 2.0);
            let mut g = GradientBuffer::zeros(2);
            for (i, v) in g.get_mut(0).iter_mut().enumerate() {
                *v = (i as f64 * 0.37).sin();
            }
            adam.step(&mut c, &g).unwrap();
            adam.step(&mut c, &g).unwrap();
            c
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut c = cloud();
        let mut adam = AdamState::new(c.len(), &LearningRates::default(), 1.0);
        assert!(matches!(adam.step(&mut c, &GradientBuffer::zeros(3)), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn scales_are_clamped_after_step() {
        let mut c = cloud();
        c.gaussians_mut()[0].log_scale = Vec3::new(-40.0, 0.0, 20.0);
        let mut adam = AdamState::new(c.len(), &LearningRates::default(), 1.0);
        adam.step(&mut c, &GradientBuffer::zeros(2)).unwrap();
        let s = c.gaussians()[0].log_scale;
        assert_eq!(s.x, super::super::gaussian::MIN_LOG_SCALE);
        assert_eq!(s.z, super::super::gaussian::MAX_LOG_SCALE);
    }
}
