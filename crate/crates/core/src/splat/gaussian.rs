use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::camera::{Mat3, Vec3};
use crate::error::{Error, Result};
use crate::pointcloud::PointCloud;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

pub const MIN_LOG_SCALE: f64 = -16.118_095_650_958_32; // ln 1e-7
pub const MAX_LOG_SCALE: f64 = 6.907_755_278_982_137; // ln 1e3

/// Parameters per Gaussian in the flat layout:
/// mean 0..3, rotation 3..7, log-scale 7..10, opacity 10, sh 11..23.
pub const N_PARAMS: usize = 23;

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.005;
pub const INIT_OPACITY: f64 = 0.1;
/// Scale used when a point has no neighbors to measure spacing from.
pub const INIT_FALLBACK_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vec3,
    /// Quaternion `[w, x, y, z]`; normalized before use.
    pub rotation: [f64; 4],
    pub log_scale: Vec3,
    pub opacity_logit: f64,
    /// `sh[k][channel]`; only `sh[0]` is used at degree 0.
    pub sh: [[f64; 3]; 4],
}

impl Gaussian {
    pub fn isotropic(mean: Vec3, log_scale: f64, opacity: f64, color: [f64; 3]) -> Self {
        let mut sh = [[0.0; 3]; 4];
        sh[0] = color.map(rgb_to_sh0);
        Gaussian {
            mean,
            rotation: [1.0, 0.0, 0.0, 0.0],
            log_scale: Vec3::repeat(log_scale),
            opacity_logit: logit(opacity),
            sh,
        }
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn to_params(&self) -> [f64; N_PARAMS] {
        let mut p = [0.0; N_PARAMS];
        p[0..3].copy_from_slice(self.mean.as_slice());
        p[3..7].copy_from_slice(&self.rotation);
        p[7..10].copy_from_slice(self.log_scale.as_slice());
        p[10] = self.opacity_logit;
        for k in 0..4 {
            p[11 + 3 * k..14 + 3 * k].copy_from_slice(&self.sh[k]);
        }
        p
    }

    pub fn from_params(p: &[f64; N_PARAMS]) -> Self {
        let mut sh = [[0.0; 3]; 4];
        for (k, row) in sh.iter_mut().enumerate() {
            row.copy_from_slice(&p[11 + 3 * k..14 + 3 * k]);
        }
        Gaussian {
            mean: Vec3::new(p[0], p[1], p[2]),
            rotation: [p[3], p[4], p[5], p[6]],
            log_scale: Vec3::new(p[7], p[8], p[9]),
            opacity_logit: p[10],
            sh,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud {
    gaussians: Vec<Gaussian>,
    sh_degree: u32,
}

impl GaussianCloud {
    pub fn new(gaussians: Vec<Gaussian>, sh_degree: u32) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::InvalidInput("a Gaussian cloud needs at least one Gaussian".into()));
        }
        if sh_degree > 1 {
            return Err(Error::Unsupported(format!("SH degree {sh_degree} (only 0 and 1)")));
        }
        if let Some(i) = gaussians
            .iter()
            .position(|g| !g.to_params().iter().all(|v| v.is_finite()))
        {
            return Err(Error::InvalidInput(format!("Gaussian {i} has a non-finite parameter")));
        }
        Ok(GaussianCloud { gaussians, sh_degree })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn sh_degree(&self) -> u32 {
        self.sh_degree
    }

    pub fn gaussians(&self) -> &[Gaussian] {
        &self.gaussians
    }

    pub(crate) fn gaussians_mut(&mut self) -> &mut [Gaussian] {
        &mut self.gaussians
    }

    /// Flat parameter vector of length `len() * N_PARAMS`.
    pub fn to_flat(&self) -> Vec<f64> {
        self.gaussians.iter().flat_map(|g| g.to_params()).collect()
    }

    pub fn from_flat(flat: &[f64], sh_degree: u32) -> Result<Self> {
        if !flat.len().is_multiple_of(N_PARAMS) {
            return Err(Error::ShapeMismatch(format!(
                "{} values is not a multiple of {N_PARAMS}",
                flat.len()
            )));
        }
        let gaussians = flat
            .chunks_exact(N_PARAMS)
            .map(|c| Gaussian::from_params(c.try_into().expect("exact chunk")))
            .collect();
        Self::new(gaussians, sh_degree)
    }

    /// Keeps the Gaussians at `indices` (ascending).
    pub fn retain_indices(&mut self, indices: &[usize]) {
        let mut kept = Vec::with_capacity(indices.len());
        for &i in indices {
            kept.push(self.gaussians[i]);
        }
        self.gaussians = kept;
    }
}

/// Per-Gaussian partial derivatives, in the same layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBuffer {
    grads: Vec<[f64; N_PARAMS]>,
}

impl GradientBuffer {
    pub fn zeros(len: usize) -> Self {
        GradientBuffer {
            grads: vec![[0.0; N_PARAMS]; len],
        }
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64; N_PARAMS] {
        &self.grads[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut [f64; N_PARAMS] {
        &mut self.grads[i]
    }

    pub fn as_slice(&self) -> &[[f64; N_PARAMS]] {
        &self.grads
    }

    pub fn scale(&mut self, k: f64) {
        for g in &mut self.grads {
            for v in g.iter_mut() {
                *v *= k;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.grads.iter().all(|g| g.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

pub fn rgb_to_sh0(c: f64) -> f64 {
    (c - 0.5) / SH_C0
}

/// Unit quaternion, falling back to identity for a (near) zero input.
pub fn normalize_quat(q: [f64; 4]) -> [f64; 4] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n < 1e-12 || !n.is_finite() {
        [1.0, 0.0, 0.0, 0.0]
    } else {
        q.map(|v| v / n)
    }
}

/// Rotation matrix of a unit quaternion `[w, x, y, z]`.
pub fn quat_to_matrix(q: [f64; 4]) -> Mat3 {
    let [w, x, y, z] = q;
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn clamp_log_scale(s: Vec3) -> Vec3 {
    s.map(|v| v.clamp(MIN_LOG_SCALE, MAX_LOG_SCALE))
}

/// `R · diag(exp(s))² · Rᵀ` for the normalized `q` and clamped `s`.
pub fn covariance_3d(q: [f64; 4], s: Vec3) -> Mat3 {
    let r = quat_to_matrix(normalize_quat(q));
    let e = clamp_log_scale(s).map(f64::exp);
    let m = r * Mat3::from_diagonal(&e);
    m * m.transpose()
}

/// Degree-0/1 SH color before clamping. `dir` is the unit view direction.
pub fn sh_color(sh: &[[f64; 3]; 4], degree: u32, dir: &Vec3) -> [f64; 3] {
    let mut c = [0.0; 3];
    for ch in 0..3 {
        let mut v = SH_C0 * sh[0][ch] + 0.5;
        if degree >= 1 {
            v += SH_C1 * (-dir.y * sh[1][ch] + dir.z * sh[2][ch] - dir.x * sh[3][ch]);
        }
        c[ch] = v;
    }
    c
}

/// Builds a cloud from (a seeded subsample of) the points.
///
/// Each Gaussian starts isotropic with scale equal to the mean distance to its
/// three nearest sampled neighbors, opacity 0.1 and the point's color.
pub fn init_from_pointcloud(
    cloud: &PointCloud,
    target_count: Option<usize>,
    seed: u64,
    sh_degree: u32,
) -> Result<GaussianCloud> {
    let n = cloud.len();
    let indices: Vec<usize> = match target_count {
        Some(0) => {
            return Err(Error::InvalidInput("target Gaussian count must be >= 1".into()))
        }
        Some(k) if k < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = rand::seq::index::sample(&mut rng, n, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let points: Vec<Vec3> = indices.iter().map(|&i| cloud.positions()[i]).collect();
    let spacing = mean_knn_distance(&points, 3);
    let gaussians = indices
        .iter()
        .zip(&points)
        .zip(spacing)
        .map(|((&i, &p), d)| {
            let scale = d.unwrap_or(INIT_FALLBACK_SCALE).max(1e-7);
            Gaussian::isotropic(p, scale.ln(), INIT_OPACITY, cloud.colors()[i])
        })
        .collect();
    GaussianCloud::new(gaussians, sh_degree)
}

/// Mean distance from each point to its `k` nearest other points (fewer if
/// the set is small; `None` for a lone point). Exact, via a uniform grid.
pub fn mean_knn_distance(points: &[Vec3], k: usize) -> Vec<Option<f64>> {
    let n = points.len();
    if n < 2 || k == 0 {
        return vec![None; n];
    }
    let (mut lo, mut hi) = (points[0], points[0]);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max();
    let cell = if extent > 0.0 {
        extent / (n as f64).cbrt()
    } else {
        1.0
    };
    let key = |p: &Vec3| -> [i64; 3] {
        let c = (p - lo) / cell;
        [c.x.floor() as i64, c.y.floor() as i64, c.z.floor() as i64]
    };
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(key(p)).or_default().push(i);
    }
    let max_ring = (extent / cell).ceil() as i64 + 1;
    let k = k.min(n - 1);

    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let home = key(p);
            let mut best: Vec<f64> = Vec::with_capacity(k + 1);
            for r in 0..=max_ring {
                for dx in -r..=r {
                    for dy in -r..=r {
                        for dz in -r..=r {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != r {
                                continue;
                            }
                            let Some(bucket) = grid.get(&[home[0] + dx, home[1] + dy, home[2] + dz]) else {
                                continue;
                            };
                            for &j in bucket {
                                if j == i {
                                    continue;
                                }
                                let d = (points[j] - p).norm();
                                if best.len() < k || d < best[k - 1] {
                                    let at = best.partition_point(|&b| b <= d);
                                    best.insert(at, d);
                                    best.truncate(k);
                                }
                            }
                        }
                    }
                }
                // Anything in ring r+1 or beyond is at least r·cell away.
                if best.len() == k && best[k - 1] <= r as f64 * cell {
                    break;
                }
            }
            Some(best.iter().sum::<f64>() / best.len() as f64)
        })
        .collect()
}

/// Drops Gaussians whose opacity is below `threshold`, never emptying the
/// cloud. Returns the indices that were kept.
pub fn prune(cloud: &mut GaussianCloud, threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..cloud.len())
        .filter(|&i| cloud.gaussians[i].opacity() >= threshold)
        .collect();
    if kept.is_empty() {
        let best = (0..cloud.len())
            .max_by(|&a, &b| {
                cloud.gaussians[a]
                    .opacity_logit
                    .total_cmp(&cloud.gaussians[b].opacity_logit)
                    .then(b.cmp(&a))
            })
            .expect("cloud is never empty");
        kept.push(best);
    }
    if kept.len() != cloud.len() {
        cloud.retain_indices(&kept);
    }
    kept
}
