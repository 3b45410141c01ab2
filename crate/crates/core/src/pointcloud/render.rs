use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::PointCloud;
use crate::camera::{CameraPose, NEAR_EPSILON};
use crate::error::{Error, Result};
use crate::image::{ImageRgb, RenderedImage};

pub const MAX_SPLAT_RADIUS: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplatConfig {
    /// Half-width in pixels of the square footprint painted by each point.
    pub splat_radius: u32,
    pub background: [f64; 3],
    pub near_epsilon: f64,
}

impl Default for SplatConfig {
    fn default() -> Self {
        SplatConfig {
            splat_radius: 1,
            background: [0.0; 3],
            near_epsilon: NEAR_EPSILON,
        }
    }
}

impl SplatConfig {
    pub fn validate(&self) -> Result<()> {
        if self.splat_radius > MAX_SPLAT_RADIUS {
            return Err(Error::InvalidInput(format!(
                "splat_radius {} exceeds {MAX_SPLAT_RADIUS}",
                self.splat_radius
            )));
        }
        if !self.background.iter().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("background color outside [0, 1]".into()));
        }
        if !(self.near_epsilon.is_finite() && self.near_epsilon >= 0.0) {
            return Err(Error::InvalidInput("near_epsilon must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
struct Projected {
    px: i64,
    py: i64,
    depth: f64,
}

/// Z-buffered square splatting of `cloud` into `pose`'s image.
///
/// Each pixel keeps the point with the smallest camera depth, breaking exact
/// ties by lower point index, so the output does not depend on how work is
/// split across threads.
pub fn render_points(cloud: &PointCloud, pose: &CameraPose, config: &SplatConfig) -> Result<RenderedImage> {
    config.validate()?;
    let k = pose.intrinsics();
    let (w, h) = (k.width as usize, k.height as usize);
    let r = config.splat_radius as i64;

    let projected: Vec<Option<Projected>> = cloud
        .positions()
        .par_iter()
        .map(|p| {
            let proj = pose.project_with_near(p, config.near_epsilon)?;
            if !(proj.u.is_finite() && proj.v.is_finite()) {
                return None;
            }
            let (px, py) = (proj.u.floor(), proj.v.floor());
            // Far outside the image; also keeps the i64 casts meaningful.
            if px < -(r as f64) - 1.0 || py < -(r as f64) - 1.0 || px > (w as i64 + r) as f64 || py > (h as i64 + r) as f64 {
                return None;
            }
            Some(Projected {
                px: px as i64,
                py: py as i64,
                depth: proj.depth,
            })
        })
        .collect();

    // Each band of rows scans every point; bands never share pixels.
    const BAND: usize = 16;
    let mut winner = vec![u32::MAX; w * h];
    let mut depth = vec![f64::INFINITY; w * h];
    winner
        .par_chunks_mut(BAND * w.max(1))
        .zip(depth.par_chunks_mut(BAND * w.max(1)))
        .enumerate()
        .for_each(|(band, (win, dep))| {
            let y0 = (band * BAND) as i64;
            let y1 = y0 + (win.len() / w.max(1)) as i64;
            for (idx, p) in projected.iter().enumerate() {
                let Some(p) = p else { continue };
                let ya = (p.py - r).max(y0);
                let yb = (p.py + r).min(y1 - 1);
                let xa = (p.px - r).max(0);
                let xb = (p.px + r).min(w as i64 - 1);
                for y in ya..=yb {
                    let row = (y - y0) as usize * w;
                    for x in xa..=xb {
                        let i = row + x as usize;
                        // Points arrive in index order, so strict `<` keeps the lower index on ties.
                        if p.depth < dep[i] {
                            dep[i] = p.depth;
                            win[i] = idx as u32;
                        }
                    }
                }
            }
        });

    let colors = cloud.colors();
    let mut rgb = ImageRgb::filled(w, h, config.background);
    let mut mask = vec![false; w * h];
    for (i, &idx) in winner.iter().enumerate() {
        if idx != u32::MAX {
            mask[i] = true;
            rgb.as_mut_slice()[i * 3..i * 3 + 3].copy_from_slice(&colors[idx as usize]);
        }
    }
    Ok(RenderedImage { rgb, depth, mask })
}
