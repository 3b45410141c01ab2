use std::path::Path;

use serde::{Deserialize, Serialize};

use super::loss::psnr;
use super::perceptual::PerceptualMetric;
use super::ssim::ssim;
use crate::error::{Error, Result};
use crate::image::ImageRgb;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub id: String,
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub psnr: f64,
    pub ssim: f64,
    pub perceptual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub views: Vec<ViewMetrics>,
    pub mean: MeanMetrics,
    pub perceptual_impl: String,
}

impl MetricReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Per-view PSNR, SSIM and perceptual distance plus their means.
pub fn evaluate(
    ids: &[String],
    rendered: &[ImageRgb],
    truth: &[ImageRgb],
    perceptual: &dyn PerceptualMetric,
) -> Result<MetricReport> {
    if rendered.len() != truth.len() || ids.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} ids, {} rendered and {} ground-truth images",
            ids.len(),
            rendered.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("nothing to evaluate".into()));
    }
    let mut views = Vec::with_capacity(truth.len());
    for ((id, r), t) in ids.iter().zip(rendered).zip(truth) {
        views.push(ViewMetrics {
            id: id.clone(),
            psnr: psnr(r, t)?,
            ssim: ssim(r, t)?,
            perceptual: perceptual.distance(r, t)?,
        });
    }
    let n = views.len() as f64;
    let mean = MeanMetrics {
        psnr: views.iter().map(|v| v.psnr).sum::<f64>() / n,
        ssim: views.iter().map(|v| v.ssim).sum::<f64>() / n,
        perceptual: views.iter().map(|v| v.perceptual).sum::<f64>() / n,
    };
    Ok(MetricReport {
        views,
        mean,
        perceptual_impl: perceptual.kind().to_string(),
    })
}
