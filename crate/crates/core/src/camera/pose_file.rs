//! JSON pose files: an array of
//! `{"rotation": [9, row-major world-to-camera], "position": [3], "fx", "fy", "cx", "cy", "width", "height"}`
//! objects, optionally tagged with the sampler's `level`, `theta` and `phi`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CameraPose, Intrinsics, Mat3, Vec3};
use crate::error::{Error, Result};

/// Rotations farther than this from orthonormal are rejected on read.
pub const POSE_FILE_ROTATION_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub rotation: [f64; 9],
    pub position: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
}

impl PoseRecord {
    pub fn from_pose(pose: &CameraPose) -> Self {
        let r = pose.rotation();
        let p = pose.position();
        let k = pose.intrinsics();
        PoseRecord {
            rotation: [
                r[(0, 0)],
                r[(0, 1)],
                r[(0, 2)],
                r[(1, 0)],
                r[(1, 1)],
                r[(1, 2)],
                r[(2, 0)],
                r[(2, 1)],
                r[(2, 2)],
            ],
            position: [p.x, p.y, p.z],
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            level: None,
            theta: None,
            phi: None,
        }
    }

    pub fn to_pose(&self) -> Result<CameraPose> {
        let k = Intrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)?;
        let r = Mat3::from_row_slice(&self.rotation);
        let p = Vec3::from_column_slice(&self.position);
        CameraPose::from_approx_rotation(r, p, k, POSE_FILE_ROTATION_TOL)
    }
}

pub fn parse_poses(text: &str, path: &Path) -> Result<Vec<CameraPose>> {
    let records: Vec<PoseRecord> = serde_json::from_str(text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    records
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            rec.to_pose()
                .map_err(|e| Error::parse(path, format!("pose {i}: {e}")))
        })
        .collect()
}

pub fn read_pose_file(path: impl AsRef<Path>) -> Result<Vec<CameraPose>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_poses(&text, path)
}

pub fn write_records(path: impl AsRef<Path>, records: &[PoseRecord]) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(records).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_pose_file(path: impl AsRef<Path>, poses: &[CameraPose]) -> Result<()> {
    let records: Vec<PoseRecord> = poses.iter().map(PoseRecord::from_pose).collect();
    write_records(path, &records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::look_at;

    #[test]
    fn roundtrip_is_exact() {
        let k = Intrinsics::new(120.0, 110.0, 64.0, 60.5, 128, 120).unwrap();
        let pose = CameraPose::new(
            look_at(Vec3::new(1.3, -0.2, 2.9), Vec3::new(0.1, 0.2, 0.3), Vec3::z()).unwrap(),
            Vec3::new(1.3, -0.2, 2.9),
            k,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.json");
        write_pose_file(&path, &[pose]).unwrap();
        let back = read_pose_file(&path).unwrap();
        assert_eq!(back, vec![pose]);
    }

    #[test]
    fn rejects_non_orthonormal_rotation() {
        let text = r#"[{"rotation":[1,0.01,0, 0,1,0, 0,0,1],"position":[0,0,0],
            "fx":10,"fy":10,"cx":5,"cy":5,"width":10,"height":10}]"#;
        let err = parse_poses(text, Path::new("p.json")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("orthonormal"), "{msg}");
        assert!(msg.contains("pose 0"), "{msg}");
    }

    #[test]
    fn accepts_sampler_tags() {
        let text = r#"[{"rotation":[1,0,0, 0,1,0, 0,0,1],"position":[0,0,0],
            "fx":10,"fy":10,"cx":5,"cy":5,"width":10,"height":10,"level":2,"theta":0.5,"phi":0.1}]"#;
        assert_eq!(parse_poses(text, Path::new("p.json")).unwrap().len(), 1);
    }
}
