//! Synthetic camera placement on the upper hemisphere around a scene.
//!
//! The hemisphere is split into `L` elevation levels. Level `l` (1-based,
//! `l = 1` highest) sits at elevation `φ = τπ/(2L)·(L − l + 1)` above the
//! equatorial plane and carries `F(fib_start + l − 1)` cameras spread
//! uniformly in azimuth, `θ = 2π(k − 1)/count`. Every camera looks at the
//! hemisphere center.

use std::f64::consts::PI;
use std::path::Path;

use crate::camera::{
    camera_distance, estimate_scene_center, look_at, mean_up, CameraPose, Mat3, PoseRecord, Vec3,
};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct HemisphereConfig {
    pub levels: usize,
    pub tau: f64,
    /// Estimated from the reference optical axes when unset.
    pub center: Option<Vec3>,
    /// Mean reference distance to the center when unset.
    pub radius: Option<f64>,
    /// Mean reference up axis when unset.
    pub up: Option<Vec3>,
    pub azimuth_offset: f64,
    pub fib_start: usize,
}

impl Default for HemisphereConfig {
    fn default() -> Self {
        HemisphereConfig {
            levels: 5,
            tau: 0.8,
            center: None,
            radius: None,
            up: None,
            azimuth_offset: 0.0,
            fib_start: 3,
        }
    }
}

impl HemisphereConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels < 1 {
            return Err(Error::InvalidInput("levels must be at least 1".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "tau must lie in (0, 1], got {}",
                self.tau
            )));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidInput(format!("radius must be positive, got {r}")));
            }
        }
        if let Some(up) = self.up {
            if (up.norm() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput("up vector must be unit length".into()));
            }
        }
        if !self.azimuth_offset.is_finite() {
            return Err(Error::InvalidInput("azimuth offset must be finite".into()));
        }
        if self.fib_start < 1 {
            return Err(Error::InvalidInput("fib_start must be at least 1".into()));
        }
        Ok(())
    }

    /// Elevation of level `l` (1-based) above the equatorial plane.
    pub fn elevation(&self, level: usize) -> f64 {
        let l = self.levels as f64;
        self.tau * PI / (2.0 * l) * (l - level as f64 + 1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spherical {
    pub radius: f64,
    /// Azimuth about the up axis.
    pub theta: f64,
    /// Elevation above the equatorial plane.
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledPoseSet {
    pub poses: Vec<CameraPose>,
    /// 1-based elevation level of each pose.
    pub level_of: Vec<usize>,
    pub spherical: Vec<Spherical>,
}

impl SampledPoseSet {
    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn records(&self) -> Vec<PoseRecord> {
        self.poses
            .iter()
            .zip(&self.level_of)
            .zip(&self.spherical)
            .map(|((pose, &level), s)| {
                let mut rec = PoseRecord::from_pose(pose);
                rec.level = Some(level);
                rec.theta = Some(s.theta);
                rec.phi = Some(s.phi);
                rec
            })
            .collect()
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::camera::write_records(path, &self.records())
    }
}

/// Fibonacci count with `F(1) = 1`, `F(2) = 2`.
pub fn fibonacci_count(index: usize) -> Result<u64> {
    if index < 1 {
        return Err(Error::InvalidInput("fibonacci index starts at 1".into()));
    }
    let (mut a, mut b) = (1u64, 2u64);
    for _ in 1..index {
        let next = a
            .checked_add(b)
            .ok_or_else(|| Error::Overflow(format!("fibonacci count at index {index}")))?;
        a = b;
        b = next;
    }
    Ok(a)
}

/// Per-level camera counts, highest level first.
pub fn level_counts(config: &HemisphereConfig) -> Result<Vec<usize>> {
    config.validate()?;
    (0..config.levels)
        .map(|l| {
            let n = fibonacci_count(config.fib_start + l)?;
            usize::try_from(n).map_err(|_| Error::Overflow(format!("level count {n}")))
        })
        .collect()
}

/// Center, radius and orthonormal frame `(e1, e2, up)` of the sampling sphere.
#[derive(Clone, Copy, Debug)]
pub struct SphereFrame {
    pub center: Vec3,
    pub radius: f64,
    pub e1: Vec3,
    pub e2: Vec3,
    pub up: Vec3,
}

impl SphereFrame {
    pub fn resolve(
        center: Option<Vec3>,
        radius: Option<f64>,
        up: Option<Vec3>,
        refs: &[CameraPose],
    ) -> Result<Self> {
        let center = match center {
            Some(c) => c,
            None => estimate_scene_center(refs)?,
        };
        let radius = match radius {
            Some(r) => r,
            None => {
                if refs.is_empty() {
                    return Err(Error::InvalidInput(
                        "reference poses are required to infer the radius".into(),
                    ));
                }
                refs.iter().map(|p| (p.position() - center).norm()).sum::<f64>()
                    / refs.len() as f64
            }
        };
        if !(radius > 0.0) {
            return Err(Error::Degenerate(
                "reference cameras sit on the scene center".into(),
            ));
        }
        let up = match up {
            Some(u) => u.normalize(),
            None => mean_up(refs)?,
        };

        // Azimuth zero points at the first reference camera when possible.
        let from_ref = refs.first().map(|p| {
            let d = p.position() - center;
            d - up * up.dot(&d)
        });
        let e1 = match from_ref {
            Some(v) if v.norm() > 1e-9 * radius => v.normalize(),
            _ => {
                let axis = [Vec3::x(), Vec3::y(), Vec3::z()]
                    .into_iter()
                    .min_by(|a, b| a.dot(&up).abs().total_cmp(&b.dot(&up).abs()))
                    .expect("three axes");
                (axis - up * up.dot(&axis)).normalize()
            }
        };
        let e2 = up.cross(&e1);
        Ok(SphereFrame {
            center,
            radius,
            e1,
            e2,
            up,
        })
    }

    pub fn point(&self, theta: f64, phi: f64) -> Vec3 {
        let horizontal = self.e1 * theta.cos() + self.e2 * theta.sin();
        self.center + (horizontal * phi.cos() + self.up * phi.sin()) * self.radius
    }

    pub fn spherical(&self, p: &Vec3) -> Spherical {
        let d = p - self.center;
        let r = d.norm();
        Spherical {
            radius: r,
            theta: d.dot(&self.e2).atan2(d.dot(&self.e1)),
            phi: (d.dot(&self.up) / r).clamp(-1.0, 1.0).asin(),
        }
    }

    /// Rotation aiming a camera at `position` toward the center. A camera at
    /// the zenith falls back to `e1` as its up hint.
    fn aim(&self, position: Vec3) -> Result<Mat3> {
        match look_at(position, self.center, self.up) {
            Err(Error::Degenerate(_)) => look_at(position, self.center, self.e1),
            other => other,
        }
    }
}

pub fn sample_poses(config: &HemisphereConfig, refs: &[CameraPose]) -> Result<SampledPoseSet> {
    config.validate()?;
    let first = refs
        .first()
        .ok_or_else(|| Error::InvalidInput("at least one reference pose is required".into()))?;
    let intrinsics = *first.intrinsics();
    let frame = SphereFrame::resolve(config.center, config.radius, config.up, refs)?;
    let counts = level_counts(config)?;

    let total: usize = counts.iter().sum();
    let mut out = SampledPoseSet {
        poses: Vec::with_capacity(total),
        level_of: Vec::with_capacity(total),
        spherical: Vec::with_capacity(total),
    };
    for (idx, &count) in counts.iter().enumerate() {
        let level = idx + 1;
        let phi = config.elevation(level);
        for k in 0..count {
            let theta = 2.0 * PI * k as f64 / count as f64 + config.azimuth_offset;
            let position = frame.point(theta, phi);
            let rotation = frame.aim(position)?;
            out.poses.push(CameraPose::new(rotation, position, intrinsics)?);
            out.level_of.push(level);
            out.spherical.push(Spherical {
                radius: frame.radius,
                theta,
                phi,
            });
        }
    }
    Ok(out)
}

/// Baseline placement along the loop of reference cameras.
///
/// References are ordered by azimuth about `center` into a closed loop; `n`
/// positions are linearly interpolated along it at parameters `j·M/n` and
/// pushed back onto the sphere of mean reference radius. All poses look at
/// `center`.
pub fn trajectory_sample(refs: &[CameraPose], n: usize, center: Vec3) -> Result<SampledPoseSet> {
    if refs.len() < 2 {
        return Err(Error::InvalidInput(
            "trajectory sampling needs at least two reference poses".into(),
        ));
    }
    if n < 1 {
        return Err(Error::InvalidInput("sample count must be at least 1".into()));
    }
    if refs
        .iter()
        .all(|p| camera_distance(p, &refs[0]) <= 1e-12)
    {
        return Err(Error::Degenerate("all reference cameras coincide".into()));
    }
    let up = mean_up(refs).unwrap_or_else(|_| Vec3::z());
    let frame = SphereFrame::resolve(Some(center), None, Some(up), refs)?;

    let mut ordered: Vec<(f64, Vec3)> = refs
        .iter()
        .map(|p| (frame.spherical(&p.position()).theta, p.position()))
        .collect();
    ordered.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = ordered.len();
    let intrinsics = *refs[0].intrinsics();

    let mut out = SampledPoseSet {
        poses: Vec::with_capacity(n),
        level_of: Vec::with_capacity(n),
        spherical: Vec::with_capacity(n),
    };
    for j in 0..n {
        let t = (j * m) as f64 / n as f64;
        let i = (t.floor() as usize).min(m - 1);
        let frac = t - i as f64;
        let a = ordered[i].1;
        let b = ordered[(i + 1) % m].1;
        let p = a + (b - a) * frac;
        let d = p - center;
        if d.norm() <= 1e-9 * frame.radius {
            return Err(Error::Degenerate(format!(
                "trajectory sample {j} interpolates through the center"
            )));
        }
        let position = center + d.normalize() * frame.radius;
        let rotation = frame.aim(position)?;
        out.poses.push(CameraPose::new(rotation, position, intrinsics)?);
        out.level_of.push(1);
        out.spherical.push(frame.spherical(&position));
    }
    Ok(out)
}
