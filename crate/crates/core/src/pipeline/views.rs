//! Directories of synthetic views: `poses.json`, `view_NNNN.png` and,
//! where holes remain, `view_NNNN_mask.png`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use super::config::validate_template;
use super::scene::list_views;
use crate::camera::{read_pose_file, CameraPose};
use crate::error::{Error, Result};
use crate::image::{load_mask_png, save_mask_png, ImageRgb};
use crate::pointcloud::{render_points, PointCloud, SplatConfig};

pub const POSES_FILE: &str = "poses.json";

pub fn synthetic_file_name(i: usize) -> String {
    format!("view_{i:04}.png")
}

pub fn mask_file_name(i: usize) -> String {
    format!("view_{i:04}_mask.png")
}

fn mask_path_for(image: &Path) -> PathBuf {
    let stem = image.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    image.with_file_name(format!("{stem}_mask.png"))
}

/// Renders every pose from `cloud` into `out`, with validity masks.
/// Returns the mean mask coverage. The caller places `poses.json`.
pub fn render_pointcloud_views(cloud: &PointCloud, poses: &[CameraPose], config: &SplatConfig, out: &Path) -> Result<f64> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut coverage = 0.0;
    for (i, pose) in poses.iter().enumerate() {
        let img = render_points(cloud, pose, config)?;
        img.rgb.save_png(out.join(synthetic_file_name(i)))?;
        save_mask_png(&img.mask, img.width(), img.height(), out.join(mask_file_name(i)))?;
        coverage += img.coverage();
    }
    Ok(coverage / poses.len().max(1) as f64)
}

/// One synthetic training view as stored on disk.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticView {
    pub image: ImageRgb,
    pub pose: CameraPose,
    pub mask: Option<Vec<bool>>,
}

/// Loads a synthetic view directory; images pair with poses in file-name order.
pub fn load_synthetic_views(dir: &Path) -> Result<Vec<SyntheticView>> {
    let poses_path = dir.join(POSES_FILE);
    if !poses_path.is_file() {
        return Err(Error::MissingFile(poses_path));
    }
    let poses = read_pose_file(&poses_path)?;
    let files = list_views(dir)?;
    if files.len() != poses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} has {} images for {} poses",
            dir.display(),
            files.len(),
            poses.len()
        )));
    }
    files
        .iter()
        .zip(poses)
        .map(|(f, pose)| {
            let image = ImageRgb::load_png(f)?;
            let mp = mask_path_for(f);
            let mask = if mp.is_file() {
                let (m, w, h) = load_mask_png(&mp)?;
                if (w, h) != (image.width(), image.height()) {
                    return Err(Error::DimensionMismatch(format!("{} does not match its image", mp.display())));
                }
                Some(m)
            } else {
                None
            };
            Ok(SyntheticView { image, pose, mask })
        })
        .collect()
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.to_string_lossy().replace('\'', r"'\''"))
}

/// Copies or enhances every view of `input` into `output`.
///
/// Without a template images are copied byte for byte along with their
/// masks. With one, the command runs once per image through `sh -c`; its
/// output must keep the input's dimensions. An enhancer is expected to fill
/// holes, so masks are not carried over.
pub fn enhance_images(input: &Path, output: &Path, template: Option<&str>) -> Result<usize> {
    if let Some(t) = template {
        validate_template(t)?;
    }
    let files = list_views(input)?;
    fs::create_dir_all(output).map_err(|e| Error::io(output, e))?;
    let poses = input.join(POSES_FILE);
    if poses.is_file() {
        fs::copy(&poses, output.join(POSES_FILE)).map_err(|e| Error::io(&poses, e))?;
    }
    for f in &files {
        let name = f.file_name().expect("listed files have names");
        let dest = output.join(name);
        match template {
            None => {
                fs::copy(f, &dest).map_err(|e| Error::io(f, e))?;
                let mask = mask_path_for(f);
                if mask.is_file() {
                    fs::copy(&mask, mask_path_for(&dest)).map_err(|e| Error::io(&mask, e))?;
                }
            }
            Some(t) => {
                let cmd = t.replace("{input}", &shell_quote(f)).replace("{output}", &shell_quote(&dest));
                let out = Command::new("sh")
                    .arg("-c")
                    .arg(&cmd)
                    .output()
                    .map_err(|e| Error::io(f, e))?;
                if !out.status.success() {
                    return Err(Error::CommandFailed {
                        command: cmd,
                        stderr: String::from_utf8_lossy(&out.stderr).trim().to_string(),
                    });
                }
                if !dest.is_file() {
                    return Err(Error::CommandFailed {
                        command: cmd,
                        stderr: format!("no output written to {}", dest.display()),
                    });
                }
                let (a, b) = (ImageRgb::load_png(f)?, ImageRgb::load_png(&dest)?);
                if (a.width(), a.height()) != (b.width(), b.height()) {
                    return Err(Error::DimensionMismatch(format!(
                        "enhancer changed {} from {}x{} to {}x{}",
                        f.display(),
                        a.width(),
                        a.height(),
                        b.width(),
                        b.height()
                    )));
                }
            }
        }
    }
    Ok(files.len())
}
