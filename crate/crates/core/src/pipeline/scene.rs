use std::fs;
use std::path::{Path, PathBuf};

use crate::camera::{read_pose_file, CameraPose};
use crate::error::{Error, Result};
use crate::image::ImageRgb;

pub const CLOUD_FILE: &str = "cloud.ply";
pub const REF_POSES_FILE: &str = "ref_poses.json";
pub const TEST_POSES_FILE: &str = "test_poses.json";
pub const REF_DIR: &str = "ref";
pub const TEST_DIR: &str = "test";

pub fn view_file_name(i: usize) -> String {
    format!("view_{i:03}.png")
}

/// Images paired with their cameras.
#[derive(Clone, Debug, PartialEq)]
pub struct ViewSet {
    pub names: Vec<String>,
    pub images: Vec<ImageRgb>,
    pub poses: Vec<CameraPose>,
}

impl ViewSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// A validated scene directory.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneBundle {
    pub root: PathBuf,
    pub cloud_path: PathBuf,
    pub references: ViewSet,
    pub tests: Option<ViewSet>,
}

/// Sorted `view_*.png` files in `dir`, excluding `*_mask.png`.
pub fn list_views(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingFile(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("view_") && n.ends_with(".png") && !n.ends_with("_mask.png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn load_views(dir: &Path, poses_path: &Path) -> Result<ViewSet> {
    if !poses_path.exists() {
        return Err(Error::MissingFile(poses_path.to_path_buf()));
    }
    let poses = read_pose_file(poses_path)?;
    let files = list_views(dir)?;
    if files.len() != poses.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} has {} images but {} lists {} poses",
            dir.display(),
            files.len(),
            poses_path.display(),
            poses.len()
        )));
    }
    let mut images = Vec::with_capacity(files.len());
    let mut names = Vec::with_capacity(files.len());
    for (f, pose) in files.iter().zip(&poses) {
        let img = ImageRgb::load_png(f)?;
        let k = pose.intrinsics();
        if img.width() != k.width as usize || img.height() != k.height as usize {
            return Err(Error::DimensionMismatch(format!(
                "{} is {}x{} but its pose expects {}x{}",
                f.display(),
                img.width(),
                img.height(),
                k.width,
                k.height
            )));
        }
        names.push(f.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string());
        images.push(img);
    }
    Ok(ViewSet { names, images, poses })
}

/// Loads and validates a scene directory.
///
/// Expected layout: `cloud.ply`, `ref_poses.json`, `ref/view_*.png` and
/// optionally `test_poses.json` with `test/view_*.png`. Images pair with
/// poses in sorted file-name order.
pub fn ingest_scene(dir: impl AsRef<Path>) -> Result<SceneBundle> {
    let root = dir.as_ref().to_path_buf();
    let cloud_path = root.join(CLOUD_FILE);
    if !cloud_path.is_file() {
        return Err(Error::MissingFile(cloud_path));
    }
    let references = load_views(&root.join(REF_DIR), &root.join(REF_POSES_FILE))?;
    if references.is_empty() {
        return Err(Error::InvalidInput(format!("{} holds no reference views", root.display())));
    }
    let test_poses = root.join(TEST_POSES_FILE);
    let tests = if test_poses.exists() {
        Some(load_views(&root.join(TEST_DIR), &test_poses)?)
    } else {
        None
    };
    Ok(SceneBundle {
        root,
        cloud_path,
        references,
        tests,
    })
}
