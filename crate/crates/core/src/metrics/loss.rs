use serde::{Deserialize, Serialize};

use super::perceptual::{GradientPyramid, PerceptualMetric};
use super::ssim::ssim_and_grad;
use crate::camera::{camera_distance, CameraPose};
use crate::error::{Error, Result};
use crate::image::ImageRgb;

pub const PSNR_CAP: f64 = 100.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    /// Weight of the D-SSIM term; L1 gets `1 − lambda_s`.
    pub lambda_s: f64,
    pub lambda_p_ref: f64,
    pub lambda_p_syn: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_s: 0.2,
            lambda_p_ref: 0.5,
            lambda_p_syn: 0.1,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_s", self.lambda_s),
            ("lambda_p_ref", self.lambda_p_ref),
            ("lambda_p_syn", self.lambda_p_syn),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidInput(format!("{name} = {v} is outside [0, 1]")));
            }
        }
        Ok(())
    }

    pub fn perceptual(&self, is_reference: bool) -> f64 {
        if is_reference {
            self.lambda_p_ref
        } else {
            self.lambda_p_syn
        }
    }
}

fn check_mask(img: &ImageRgb, mask: Option<&[bool]>) -> Result<usize> {
    match mask {
        None => Ok(img.pixel_count()),
        Some(m) if m.len() != img.pixel_count() => Err(Error::DimensionMismatch(format!(
            "mask has {} entries for {} pixels",
            m.len(),
            img.pixel_count()
        ))),
        Some(m) => match m.iter().filter(|&&v| v).count() {
            0 => Err(Error::InvalidInput("mask selects no pixels".into())),
            n => Ok(n),
        },
    }
}

/// Mean absolute difference over mask-valid pixels and all channels.
pub fn l1(x: &ImageRgb, y: &ImageRgb, mask: Option<&[bool]>) -> Result<f64> {
    x.same_dims(y)?;
    let n = check_mask(x, mask)?;
    let mut s = 0.0;
    for (i, (a, b)) in x.as_slice().chunks_exact(3).zip(y.as_slice().chunks_exact(3)).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            s += (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs();
        }
    }
    Ok(s / (3 * n) as f64)
}

fn l1_and_grad(x: &ImageRgb, y: &ImageRgb, mask: Option<&[bool]>) -> Result<(f64, Vec<f64>)> {
    let v = l1(x, y, mask)?;
    let n = check_mask(x, mask)?;
    let inv = 1.0 / (3 * n) as f64;
    let mut g = vec![0.0; x.as_slice().len()];
    for (i, (a, b)) in x.as_slice().iter().zip(y.as_slice()).enumerate() {
        if mask.is_none_or(|m| m[i / 3]) {
            let d = a - b;
            g[i] = if d > 0.0 {
                inv
            } else if d < 0.0 {
                -inv
            } else {
                0.0
            };
        }
    }
    Ok((v, g))
}

pub fn mse(x: &ImageRgb, y: &ImageRgb) -> Result<f64> {
    x.same_dims(y)?;
    let n = x.as_slice().len().max(1);
    Ok(x.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n as f64)
}

/// `10·log10(1 / MSE)` for unit dynamic range, capped at 100 dB.
pub fn psnr(x: &ImageRgb, y: &ImageRgb) -> Result<f64> {
    Ok(psnr_from_mse(mse(x, y)?))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// How a synthetic view's loss is weighted by its distance to the references.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaMode {
    /// `2·d_min / D_max`: grows with distance from the nearest reference.
    #[default]
    Formula,
    /// `max(0, 2·(1 − d_min / D_max))`: shrinks with distance.
    Inverted,
    /// Constant 1.
    Uniform,
}

/// Largest pairwise distance between reference camera centers.
pub fn max_reference_distance(refs: &[CameraPose]) -> f64 {
    let mut d_max = 0.0f64;
    for (i, a) in refs.iter().enumerate() {
        for b in &refs[i + 1..] {
            d_max = d_max.max(camera_distance(a, b));
        }
    }
    d_max
}

pub fn distance_weight(pose: &CameraPose, refs: &[CameraPose]) -> Result<f64> {
    distance_weight_with(pose, refs, LambdaMode::Formula)
}

pub fn distance_weight_with(pose: &CameraPose, refs: &[CameraPose], mode: LambdaMode) -> Result<f64> {
    if mode == LambdaMode::Uniform {
        return Ok(1.0);
    }
    let d_max = max_reference_distance(refs);
    if !(d_max > 0.0) {
        return Err(Error::Degenerate(
            "reference cameras share one position; the distance weight is undefined".into(),
        ));
    }
    let d_min = refs
        .iter()
        .map(|r| camera_distance(pose, r))
        .fold(f64::INFINITY, f64::min);
    Ok(match mode {
        LambdaMode::Formula => 2.0 * d_min / d_max,
        LambdaMode::Inverted => (2.0 * (1.0 - d_min / d_max)).max(0.0),
        LambdaMode::Uniform => unreachable!(),
    })
}

/// Composite photometric loss with a pluggable perceptual term.
pub struct RgbLoss {
    pub weights: LossWeights,
    pub perceptual: Box<dyn PerceptualMetric>,
}

impl Default for RgbLoss {
    fn default() -> Self {
        RgbLoss::new(LossWeights::default())
    }
}

impl RgbLoss {
    pub fn new(weights: LossWeights) -> Self {
        RgbLoss {
            weights,
            perceptual: Box::new(GradientPyramid::default()),
        }
    }

    pub fn with_perceptual(weights: LossWeights, perceptual: Box<dyn PerceptualMetric>) -> Self {
        RgbLoss { weights, perceptual }
    }

    pub fn value(&self, rendered: &ImageRgb, target: &ImageRgb, is_reference: bool, mask: Option<&[bool]>) -> Result<f64> {
        Ok(self.value_and_grad(rendered, target, is_reference, mask)?.0)
    }

    /// `(1 − λS)·L1 + λS·(1 − SSIM) + λP·P` and its gradient with respect to
    /// `rendered`. Masked-out pixels are replaced by the target before the
    /// windowed terms, so they contribute neither loss nor gradient.
    pub fn value_and_grad(
        &self,
        rendered: &ImageRgb,
        target: &ImageRgb,
        is_reference: bool,
        mask: Option<&[bool]>,
    ) -> Result<(f64, ImageRgb)> {
        rendered.same_dims(target)?;
        let w = &self.weights;
        let lp = w.perceptual(is_reference);
        let (l1v, mut grad) = l1_and_grad(rendered, target, mask)?;
        let mut loss = (1.0 - w.lambda_s) * l1v;
        for g in &mut grad {
            *g *= 1.0 - w.lambda_s;
        }

        let filled;
        let input = match mask {
            Some(m) => {
                let mut f = rendered.clone();
                for (i, &keep) in m.iter().enumerate() {
                    if !keep {
                        f.as_mut_slice()[i * 3..i * 3 + 3].copy_from_slice(&target.as_slice()[i * 3..i * 3 + 3]);
                    }
                }
                filled = f;
                &filled
            }
            None => rendered,
        };
        if w.lambda_s > 0.0 {
            let (s, gs) = ssim_and_grad(target, input)?;
            loss += w.lambda_s * (1.0 - s);
            for (g, v) in grad.iter_mut().zip(gs.as_slice()) {
                *g -= w.lambda_s * v;
            }
        }
        if lp > 0.0 {
            let (p, gp) = self.perceptual.distance_and_grad(input, target)?;
            loss += lp * p;
            for (g, v) in grad.iter_mut().zip(gp.as_slice()) {
                *g += lp * v;
            }
        }
        if let Some(m) = mask {
            for (i, &keep) in m.iter().enumerate() {
                if !keep {
                    grad[i * 3..i * 3 + 3].fill(0.0);
                }
            }
        }
        Ok((loss, ImageRgb::from_vec(rendered.width(), rendered.height(), grad)?))
    }
}

/// `rgb_loss` with the built-in perceptual proxy.
pub fn rgb_loss(
    rendered: &ImageRgb,
    target: &ImageRgb,
    weights: &LossWeights,
    is_reference: bool,
    mask: Option<&[bool]>,
) -> Result<f64> {
    RgbLoss::new(*weights).value(rendered, target, is_reference, mask)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ViewKind {
    Reference,
    /// A synthetic view with its precomputed distance weight.
    Synthetic { lambda: f64 },
}

impl ViewKind {
    pub fn multiplier(&self) -> f64 {
        match self {
            ViewKind::Reference => 1.0,
            ViewKind::Synthetic { lambda } => *lambda,
        }
    }

    pub fn is_reference(&self) -> bool {
        matches!(self, ViewKind::Reference)
    }
}

/// Per-view training loss: unscaled for references, `λ·rgb_loss` for synthetic views.
pub fn total_view_loss(
    loss: &RgbLoss,
    kind: ViewKind,
    rendered: &ImageRgb,
    target: &ImageRgb,
    mask: Option<&[bool]>,
) -> Result<f64> {
    Ok(total_view_loss_and_grad(loss, kind, rendered, target, mask)?.0)
}

pub fn total_view_loss_and_grad(
    loss: &RgbLoss,
    kind: ViewKind,
    rendered: &ImageRgb,
    target: &ImageRgb,
    mask: Option<&[bool]>,
) -> Result<(f64, ImageRgb)> {
    let k = kind.multiplier();
    if k == 0.0 {
        rendered.same_dims(target)?;
        return Ok((0.0, ImageRgb::new(rendered.width(), rendered.height())));
    }
    let (v, mut g) = loss.value_and_grad(rendered, target, kind.is_reference(), mask)?;
    for x in g.as_mut_slice() {
        *x *= k;
    }
    Ok((k * v, g))
}
