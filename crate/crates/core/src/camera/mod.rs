//! Pinhole camera model and the geometric helpers shared by every stage.
//!
//! Conventions: right-handed world frame; camera frame with +x right, +y down
//! and +z along the optical axis. A camera-frame point `(X, Y, Z)` with
//! `Z > 0` lands on pixel `(fx·X/Z + cx, fy·Y/Z + cy)`. Pixel `(i, j)` covers
//! `[i, i+1) × [j, j+1)`, so its center sits at `(i + 0.5, j + 0.5)`.

mod pose_file;

pub use pose_file::{parse_poses, read_pose_file, write_pose_file, write_records, PoseRecord};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Default visibility clip distance, in world units.
pub const NEAR_EPSILON: f64 = 1e-6;

const ORTHONORMAL_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let k = Intrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn centered(focal: f64, width: u32, height: u32) -> Result<Self> {
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("intrinsics must be finite".into()));
        }
        if self.width < 1 || self.height < 1 {
            return Err(Error::InvalidInput(format!(
                "image size must be at least 1x1, got {}x{}",
                self.width, self.height
            )));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64)
            || !(self.cy > 0.0 && self.cy < self.height as f64)
        {
            return Err(Error::InvalidInput(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// A camera-frame projection of a world point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelProjection {
    pub u: f64,
    pub v: f64,
    /// Camera-frame Z, in world units.
    pub depth: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    origin: Vec3,
    direction: Vec3,
}

impl Ray {
    /// Builds a ray, normalizing `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Degenerate("ray direction has zero length".into()));
        }
        Ok(Ray {
            origin,
            direction: direction / norm,
        })
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn direction(&self) -> Vec3 {
        self.direction
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// World-to-camera rigid transform plus intrinsics.
///
/// `rotation` maps world directions into the camera frame; its rows are the
/// camera's right, down and forward axes expressed in world coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraPose {
    rotation: Mat3,
    position: Vec3,
    intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn new(rotation: Mat3, position: Vec3, intrinsics: Intrinsics) -> Result<Self> {
        intrinsics.validate()?;
        check_rotation(&rotation, ORTHONORMAL_TOL)?;
        if !position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("camera position must be finite".into()));
        }
        Ok(CameraPose {
            rotation,
            position,
            intrinsics,
        })
    }

    /// Camera at `position` aimed at `target`.
    pub fn looking_at(
        position: Vec3,
        target: Vec3,
        up_hint: Vec3,
        intrinsics: Intrinsics,
    ) -> Result<Self> {
        let rotation = look_at(position, target, up_hint)?;
        Self::new(rotation, position, intrinsics)
    }

    /// Accepts a rotation within `tol` of orthonormal and snaps it onto SO(3)
    /// when it is not already exact to 1e-9.
    pub fn from_approx_rotation(
        rotation: Mat3,
        position: Vec3,
        intrinsics: Intrinsics,
        tol: f64,
    ) -> Result<Self> {
        check_rotation(&rotation, tol)?;
        let rotation = if check_rotation(&rotation, ORTHONORMAL_TOL).is_ok() {
            rotation
        } else {
            nearest_rotation(&rotation)
        };
        Self::new(rotation, position, intrinsics)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn position(&self) -> Vec3 {
        self.position
    }

    pub fn intrinsics(&self) -> &Intrinsics {
        &self.intrinsics
    }

    pub fn with_intrinsics(&self, intrinsics: Intrinsics) -> Result<Self> {
        Self::new(self.rotation, self.position, intrinsics)
    }

    pub fn right(&self) -> Vec3 {
        self.rotation.row(0).transpose()
    }

    pub fn down(&self) -> Vec3 {
        self.rotation.row(1).transpose()
    }

    /// Optical axis direction in world coordinates.
    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn optical_axis(&self) -> Ray {
        Ray {
            origin: self.position,
            direction: self.forward(),
        }
    }

    pub fn world_to_camera(&self, point: &Vec3) -> Vec3 {
        self.rotation * (point - self.position)
    }

    pub fn camera_to_world(&self, point: &Vec3) -> Vec3 {
        self.rotation.transpose() * point + self.position
    }

    /// Projects a world point; `None` when it sits at or behind the near plane.
    pub fn project(&self, point: &Vec3) -> Option<PixelProjection> {
        self.project_with_near(point, NEAR_EPSILON)
    }

    pub fn project_with_near(&self, point: &Vec3, near: f64) -> Option<PixelProjection> {
        let p = self.world_to_camera(point);
        if !(p.z > near) {
            return None;
        }
        let k = &self.intrinsics;
        Some(PixelProjection {
            u: k.fx * p.x / p.z + k.cx,
            v: k.fy * p.y / p.z + k.cy,
            depth: p.z,
        })
    }

    /// World point at camera depth `depth` behind pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        let k = &self.intrinsics;
        let cam = Vec3::new(
            (u - k.cx) / k.fx * depth,
            (v - k.cy) / k.fy * depth,
            depth,
        );
        self.camera_to_world(&cam)
    }
}

fn check_rotation(rotation: &Mat3, tol: f64) -> Result<()> {
    if !rotation.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("rotation must be finite".into()));
    }
    let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
    if err > tol {
        return Err(Error::InvalidInput(format!(
            "rotation is not orthonormal: max |RᵀR - I| = {err:.3e} exceeds {tol:.0e}"
        )));
    }
    let det = rotation.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidInput(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

fn nearest_rotation(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}

/// World-to-camera rotation for a camera at `position` looking at `target`.
///
/// The camera +z axis is `normalize(target - position)`, +x is orthogonal to
/// `up_hint`, and +y completes the right-handed frame (pointing away from the
/// hint, since image rows grow downward).
pub fn look_at(position: Vec3, target: Vec3, up_hint: Vec3) -> Result<Mat3> {
    let view = target - position;
    let dist = view.norm();
    if !(dist > 0.0) {
        return Err(Error::Degenerate(
            "look-at target coincides with the camera position".into(),
        ));
    }
    let forward = view / dist;
    let up_norm = up_hint.norm();
    if !(up_norm > 0.0) {
        return Err(Error::Degenerate("look-at up hint has zero length".into()));
    }
    let cross = forward.cross(&(up_hint / up_norm));
    // |f × u| = sin(angle between them)
    if cross.norm() < 1e-6_f64.sin() {
        return Err(Error::Degenerate(
            "look-at up hint is parallel to the view direction".into(),
        ));
    }
    let right = cross.normalize();
    let down = forward.cross(&right);
    Ok(Mat3::from_rows(&[
        right.transpose(),
        down.transpose(),
        forward.transpose(),
    ]))
}

/// Least-squares point closest to a set of lines.
///
/// Minimizes `Σ ‖(I − dᵢdᵢᵀ)(p − oᵢ)‖²`. When the normal matrix is rank
/// deficient (for instance opposing cameras on one line), the minimizer
/// nearest to the centroid of the ray origins is returned, which keeps the
/// result equivariant under rigid motions.
pub fn closest_point_to_rays(rays: &[Ray]) -> Result<Vec3> {
    if rays.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least two rays, got {}",
            rays.len()
        )));
    }
    let min_sin = 1e-3_f64.sin();
    let mut diverse = false;
    'outer: for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            let d = a.direction.dot(&b.direction);
            let s = a.direction.cross(&b.direction).norm();
            if s >= min_sin || d < 0.0 {
                diverse = true;
                break 'outer;
            }
        }
    }
    if !diverse {
        return Err(Error::Degenerate(
            "optical axes are nearly parallel; scene center is undetermined".into(),
        ));
    }

    let centroid = rays.iter().map(|r| r.origin).sum::<Vec3>() / rays.len() as f64;
    // Origins are taken relative to the centroid to limit cancellation.
    let mut a = Mat3::zeros();
    let mut residual = Vec3::zeros();
    for ray in rays {
        let p = Mat3::identity() - ray.direction * ray.direction.transpose();
        a += p;
        residual += p * (ray.origin - centroid);
    }

    let eig = SymmetricEigen::new(a);
    let max_ev = eig.eigenvalues.max();
    let cutoff = 1e-10 * max_ev;
    if eig.eigenvalues.min() > cutoff {
        // Full rank: the direct solve is more accurate than the eigenbasis.
        if let Some(chol) = a.cholesky() {
            return Ok(centroid + chol.solve(&residual));
        }
    }
    let mut offset = Vec3::zeros();
    for i in 0..3 {
        let ev = eig.eigenvalues[i];
        if ev > cutoff {
            let v = eig.eigenvectors.column(i);
            offset += v * (v.dot(&residual) / ev);
        }
    }
    Ok(centroid + offset)
}

/// Least-squares intersection of the cameras' optical axes.
pub fn estimate_scene_center(poses: &[CameraPose]) -> Result<Vec3> {
    let rays: Vec<Ray> = poses.iter().map(CameraPose::optical_axis).collect();
    closest_point_to_rays(&rays)
}

/// Euclidean distance between camera centers; orientation is ignored.
pub fn camera_distance(a: &CameraPose, b: &CameraPose) -> f64 {
    (a.position - b.position).norm()
}

/// Normalized mean of the cameras' "up" axes (the negated image-down rows).
pub fn mean_up(poses: &[CameraPose]) -> Result<Vec3> {
    let sum: Vec3 = poses.iter().map(|p| -p.down()).sum();
    let n = sum.norm();
    if !(n > 1e-12) {
        return Err(Error::Degenerate(
            "camera up axes cancel out; pass an explicit up vector".into(),
        ));
    }
    Ok(sum / n)
}
