//! Colored point clouds: PLY ingestion and z-buffered point splatting.

mod ply;
mod render;

pub use ply::{load_ply, save_ply};
pub use render::{render_points, SplatConfig};

use crate::camera::Vec3;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PointCloud {
    positions: Vec<Vec3>,
    colors: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(positions: Vec<Vec3>, colors: Vec<[f64; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::InvalidInput("point cloud is empty".into()));
        }
        if positions.len() != colors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} positions but {} colors",
                positions.len(),
                colors.len()
            )));
        }
        if let Some(i) = positions.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = colors
            .iter()
            .position(|c| !c.iter().all(|v| (0.0..=1.0).contains(v)))
        {
            return Err(Error::InvalidInput(format!("point {i} has a color outside [0, 1]")));
        }
        Ok(PointCloud { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }

    /// Applies `p -> rotation * p + translation` to every point.
    pub fn transformed(&self, rotation: &crate::camera::Mat3, translation: &Vec3) -> Self {
        PointCloud {
            positions: self.positions.iter().map(|p| rotation * p + translation).collect(),
            colors: self.colors.clone(),
        }
    }
}
