use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::camera::Vec3;
use crate::error::{Error, Result};
use crate::metrics::LossWeights;
use crate::pointcloud::SplatConfig;
use crate::sampler::HemisphereConfig;
use crate::splat::TrainConfig;

/// How synthetic cameras are placed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Elevation levels on the upper hemisphere.
    #[default]
    Hemisphere,
    /// Interpolation along the loop of reference cameras.
    Trajectory,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hemisphere" => Ok(Strategy::Hemisphere),
            "trajectory" => Ok(Strategy::Trajectory),
            other => Err(Error::InvalidInput(format!(
                "unknown strategy `{other}` (expected hemisphere or trajectory)"
            ))),
        }
    }
}

/// Serializable form of [`HemisphereConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub levels: usize,
    pub tau: f64,
    pub center: Option<[f64; 3]>,
    pub radius: Option<f64>,
    pub up: Option<[f64; 3]>,
    pub azimuth_offset: f64,
    pub fib_start: usize,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings::from(&HemisphereConfig::default())
    }
}

impl From<&HemisphereConfig> for SamplerSettings {
    fn from(c: &HemisphereConfig) -> Self {
        SamplerSettings {
            levels: c.levels,
            tau: c.tau,
            center: c.center.map(|v| [v.x, v.y, v.z]),
            radius: c.radius,
            up: c.up.map(|v| [v.x, v.y, v.z]),
            azimuth_offset: c.azimuth_offset,
            fib_start: c.fib_start,
        }
    }
}

impl SamplerSettings {
    pub fn hemisphere(&self) -> HemisphereConfig {
        HemisphereConfig {
            levels: self.levels,
            tau: self.tau,
            center: self.center.map(Vec3::from),
            radius: self.radius,
            up: self.up.map(Vec3::from),
            azimuth_offset: self.azimuth_offset,
            fib_start: self.fib_start,
        }
    }
}

/// Every setting of an end-to-end run. The training seed is the run's seed:
/// it also drives the initial subsample of the point cloud.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub strategy: Strategy,
    pub sampler: SamplerSettings,
    /// Synthetic view count for the trajectory strategy; `None` matches the
    /// hemisphere count implied by `sampler`.
    pub trajectory_views: Option<usize>,
    pub render: SplatConfig,
    pub train: TrainConfig,
    pub loss: LossWeights,
    /// Train on synthetic views at all; `false` gives reference-only training.
    pub use_synthetic: bool,
    /// Shell command run once per synthetic image, with `{input}` and
    /// `{output}` replaced by quoted paths. Unset means identity.
    pub enhance: Option<String>,
    /// Gaussians initialized from a seeded subsample of the cloud; `None` uses every point.
    pub init_points: Option<usize>,
    pub sh_degree: u32,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            strategy: Strategy::Hemisphere,
            sampler: SamplerSettings::default(),
            trajectory_views: None,
            render: SplatConfig::default(),
            train: TrainConfig::default(),
            loss: LossWeights::default(),
            use_synthetic: true,
            enhance: None,
            init_points: Some(3000),
            sh_degree: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.sampler.hemisphere().validate()?;
        self.render.validate()?;
        self.train.validate()?;
        self.loss.validate()?;
        if let Some(t) = &self.enhance {
            validate_template(t)?;
        }
        if self.trajectory_views == Some(0) {
            return Err(Error::InvalidInput("trajectory_views must be >= 1".into()));
        }
        if self.init_points == Some(0) {
            return Err(Error::InvalidInput("init_points must be >= 1".into()));
        }
        if self.sh_degree > 1 {
            return Err(Error::InvalidInput(format!("sh_degree {} is not supported (max 1)", self.sh_degree)));
        }
        Ok(())
    }

    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let c: PipelineConfig = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

pub fn validate_template(template: &str) -> Result<()> {
    for key in ["{input}", "{output}"] {
        if !template.contains(key) {
            return Err(Error::InvalidInput(format!("enhance template `{template}` lacks {key}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_json() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_json(&c.to_json(), Path::new("x.json")).unwrap();
        assert_eq!(back, c);
        assert_eq!(c.train.iterations, 1000);
        assert_eq!((c.sampler.levels, c.sampler.tau), (5, 0.8));
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c = PipelineConfig::from_json(r#"{"train": {"iterations": 5}, "strategy": "trajectory"}"#, Path::new("x")).unwrap();
        assert_eq!(c.train.iterations, 5);
        assert_eq!(c.train.prune_interval, 200);
        assert_eq!(c.strategy, Strategy::Trajectory);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(PipelineConfig::from_json(r#"{"iters": 5}"#, Path::new("x")).is_err());
        assert!(PipelineConfig::from_json(r#"{"train": {"iters": 5}}"#, Path::new("x")).is_err());
    }

    #[test]
    fn template_needs_both_placeholders() {
        assert!(validate_template("cp {input} {output}").is_ok());
        assert!(validate_template("cp {input} out.png").is_err());
        let c = PipelineConfig {
            enhance: Some("convert {output}".into()),
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().is_validation());
    }
}
