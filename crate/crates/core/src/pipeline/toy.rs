use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scene::{view_file_name, CLOUD_FILE, REF_DIR, REF_POSES_FILE, TEST_DIR, TEST_POSES_FILE};
use crate::camera::{CameraPose, Intrinsics, Vec3};
use crate::error::{Error, Result};
use crate::pointcloud::{render_points, save_ply, PointCloud, SplatConfig};

/// A procedural scene: a textured sphere resting above a checkered ground
/// disc, enclosed by a sky dome so that every view is fully covered.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToySceneSpec {
    pub seed: u64,
    /// Points in the exported cloud; ground truth uses 20 times as many.
    pub points: usize,
    pub sphere_radius: f64,
    /// Radius of the ground disc, in multiples of the sphere radius.
    pub ground_extent: f64,
    /// Edge length of a ground checker square, in multiples of the sphere radius.
    pub checker_size: f64,
    /// Bands of the sphere texture along latitude and longitude.
    pub sphere_bands: [u32; 2],
    pub palette: [[f64; 3]; 4],
    pub refs: usize,
    pub tests: usize,
    pub width: u32,
    pub height: u32,
    pub focal: f64,
    /// Test-view elevations in degrees, used alternately.
    pub test_elevations: [f64; 2],
}

impl Default for ToySceneSpec {
    fn default() -> Self {
        ToySceneSpec {
            seed: 0,
            points: 20_000,
            sphere_radius: 1.0,
            ground_extent: 6.0,
            checker_size: 0.75,
            sphere_bands: [6, 12],
            palette: [[0.85, 0.25, 0.2], [0.95, 0.85, 0.3], [0.25, 0.45, 0.3], [0.8, 0.8, 0.75]],
            refs: 4,
            tests: 8,
            width: 128,
            height: 128,
            focal: 100.0,
            test_elevations: [15.0, 35.0],
        }
    }
}

pub const DENSITY_FACTOR: usize = 20;
const RING_RADIUS: f64 = 3.0;
const SPHERE_SHARE: f64 = 0.4;
const GROUND_SHARE: f64 = 0.35;

impl ToySceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 1000 {
            return Err(Error::InvalidInput(format!("toy scene needs >= 1000 points, got {}", self.points)));
        }
        if self.refs < 2 {
            return Err(Error::InvalidInput(format!("toy scene needs >= 2 reference views, got {}", self.refs)));
        }
        let positive = [self.sphere_radius, self.checker_size, self.focal];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::InvalidInput("sphere radius, checker size and focal must be positive".into()));
        }
        if !(self.ground_extent > RING_RADIUS) {
            return Err(Error::InvalidInput("ground extent must exceed the camera ring radius".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::InvalidInput("images must be at least 16x16".into()));
        }
        if self.sphere_bands.contains(&0) {
            return Err(Error::InvalidInput("sphere bands must be >= 1".into()));
        }
        if !self.palette.iter().flatten().all(|c| (0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("palette colors must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn intrinsics(&self) -> Result<Intrinsics> {
        Intrinsics::new(
            self.focal,
            self.focal,
            self.width as f64 / 2.0,
            self.height as f64 / 2.0,
            self.width,
            self.height,
        )
    }

    fn ring_pose(&self, azimuth_deg: f64, elevation_deg: f64) -> Result<CameraPose> {
        let (a, e) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
        let r = RING_RADIUS * self.sphere_radius;
        let eye = Vec3::new(r * e.cos() * a.cos(), r * e.cos() * a.sin(), r * e.sin());
        CameraPose::looking_at(eye, Vec3::zeros(), Vec3::z(), self.intrinsics()?)
    }

    /// Reference cameras evenly spaced on a horizontal ring of radius 3R.
    pub fn reference_poses(&self) -> Result<Vec<CameraPose>> {
        (0..self.refs)
            .map(|i| self.ring_pose(360.0 * i as f64 / self.refs as f64, 0.0))
            .collect()
    }

    /// Held-out cameras at azimuths between the references, alternating elevation.
    pub fn test_poses(&self) -> Result<Vec<CameraPose>> {
        (0..self.tests)
            .map(|i| {
                let az = 360.0 * (i as f64 + 0.5) / self.tests as f64;
                self.ring_pose(az, self.test_elevations[i % 2])
            })
            .collect()
    }

    fn dome_radius(&self) -> f64 {
        let r = self.sphere_radius;
        ((self.ground_extent * r).powi(2) + r * r).sqrt()
    }

    fn sphere_color(&self, p: &Vec3) -> [f64; 3] {
        let r = self.sphere_radius;
        let lat = (p.z / r).clamp(-1.0, 1.0).asin();
        let lon = p.y.atan2(p.x);
        let i = ((lat / PI + 0.5) * self.sphere_bands[0] as f64).floor() as i64;
        let j = ((lon / (2.0 * PI) + 0.5) * self.sphere_bands[1] as f64).floor() as i64;
        let base = if (i + j).rem_euclid(2) == 0 { self.palette[0] } else { self.palette[1] };
        let shade = 0.75 + 0.25 * (p.z / r);
        base.map(|c| (c * shade).clamp(0.0, 1.0))
    }

    fn ground_color(&self, p: &Vec3) -> [f64; 3] {
        let s = self.checker_size * self.sphere_radius;
        let (i, j) = ((p.x / s).floor() as i64, (p.y / s).floor() as i64);
        if (i + j).rem_euclid(2) == 0 {
            self.palette[2]
        } else {
            self.palette[3]
        }
    }

    fn sky_color(&self, p: &Vec3) -> [f64; 3] {
        let h = ((p.z + self.sphere_radius) / (self.dome_radius() + self.sphere_radius)).clamp(0.0, 1.0);
        let az = p.y.atan2(p.x);
        let ripple = 0.05 * (3.0 * az).sin();
        [0.55 - 0.3 * h + ripple, 0.7 - 0.2 * h, 0.9 - 0.05 * h - ripple].map(|c: f64| c.clamp(0.0, 1.0))
    }

    /// Samples `n` points over the sphere, ground disc and dome.
    pub fn sample_cloud(&self, n: usize, seed: u64) -> Result<PointCloud> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = self.sphere_radius;
        let ground = self.ground_extent * r;
        let dome = self.dome_radius();
        let n_sphere = (n as f64 * SPHERE_SHARE).round() as usize;
        let n_ground = (n as f64 * GROUND_SHARE).round() as usize;
        let n_dome = n - n_sphere - n_ground;
        let mut pos = Vec::with_capacity(n);
        let mut col = Vec::with_capacity(n);
        for _ in 0..n_sphere {
            let z: f64 = rng.gen_range(-1.0..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            let p = Vec3::new(r * s * a.cos(), r * s * a.sin(), r * z);
            col.push(self.sphere_color(&p));
            pos.push(p);
        }
        for _ in 0..n_ground {
            let rho = ground * rng.gen::<f64>().sqrt();
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let p = Vec3::new(rho * a.cos(), rho * a.sin(), -r);
            col.push(self.ground_color(&p));
            pos.push(p);
        }
        // Uniform on the dome cap above the ground plane.
        let z_min = -r / dome;
        for _ in 0..n_dome {
            let z: f64 = rng.gen_range(z_min..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let s = (1.0 - z * z).sqrt();
            let p = Vec3::new(dome * s * a.cos(), dome * s * a.sin(), dome * z);
            col.push(self.sky_color(&p));
            pos.push(p);
        }
        PointCloud::new(pos, col)
    }
}

/// What the generator produced, for callers that want to check coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyScene {
    pub reference_coverage: Vec<f64>,
    pub test_coverage: Vec<f64>,
}

/// Writes a complete scene directory for `spec` into `out_dir`.
pub fn generate_toy_scene(spec: &ToySceneSpec, out_dir: impl AsRef<Path>) -> Result<ToyScene> {
    spec.validate()?;
    let out = out_dir.as_ref();
    for d in [out.to_path_buf(), out.join(REF_DIR), out.join(TEST_DIR)] {
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let sparse = spec.sample_cloud(spec.points, spec.seed)?;
    save_ply(&sparse, out.join(CLOUD_FILE))?;
    let dense = spec.sample_cloud(spec.points * DENSITY_FACTOR, spec.seed ^ 0x9e37_79b9_7f4a_7c15)?;
    let truth_cfg = SplatConfig {
        splat_radius: 1,
        ..SplatConfig::default()
    };

    let refs = spec.reference_poses()?;
    let tests = spec.test_poses()?;
    crate::camera::write_pose_file(out.join(REF_POSES_FILE), &refs)?;
    crate::camera::write_pose_file(out.join(TEST_POSES_FILE), &tests)?;
    let mut coverage = [Vec::new(), Vec::new()];
    for (k, (poses, dir)) in [(&refs, REF_DIR), (&tests, TEST_DIR)].into_iter().enumerate() {
        for (i, pose) in poses.iter().enumerate() {
            let img = render_points(&dense, pose, &truth_cfg)?;
            img.rgb.save_png(out.join(dir).join(view_file_name(i)))?;
            coverage[k].push(img.coverage());
        }
    }
    let [reference_coverage, test_coverage] = coverage;
    Ok(ToyScene {
        reference_coverage,
        test_coverage,
    })
}
