//! Screen-space projection of a single Gaussian and its adjoint.

use nalgebra::{Matrix2, Matrix2x3};

use super::gaussian::{
    clamp_log_scale, normalize_quat, MAX_LOG_SCALE, MIN_LOG_SCALE, quat_to_matrix, sh_color, sigmoid, Gaussian, N_PARAMS, SH_C0, SH_C1,
};
use crate::camera::{CameraPose, Intrinsics, Mat3, Vec3};

/// Isotropic pixel² variance added to every projected covariance.
pub const COV2D_DILATION: f64 = 0.3;
/// Footprint half-extent in standard deviations along the major axis.
pub const FOOTPRINT_SIGMAS: f64 = 3.0;
/// Default near-plane depth for Gaussians, in world units.
pub const DEFAULT_NEAR: f64 = 0.2;
/// The projective Jacobian is evaluated no further off-axis than this
/// multiple of the image half-extent.
pub const JACOBIAN_FOV_MARGIN: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projected {
    pub mean2d: [f64; 2],
    /// Symmetric 2×2 covariance `[a, b, c]` for `[[a, b], [b, c]]`, pixels².
    pub cov2d: [f64; 3],
    /// Inverse covariance in the same packing.
    pub conic: [f64; 3],
    pub depth: f64,
    /// Footprint radius in pixels.
    pub radius: f64,
    pub opacity: f64,
    /// Color after clamping to `[0, 1]`.
    pub color: [f64; 3],
    /// Channels whose unclamped color was inside `[0, 1]`.
    pub color_live: [bool; 3],
}

/// Projects `g` into `pose`. `None` when the Gaussian is not beyond depth
/// `near`, numerically degenerate, or its footprint misses the image.
pub fn project_gaussian(g: &Gaussian, sh_degree: u32, pose: &CameraPose, near: f64) -> Option<Projected> {
    let k = pose.intrinsics();
    let w = pose.rotation();
    let t = w * (g.mean - pose.position());
    if !(t.z > near) {
        return None;
    }
    let sigma = covariance(g);
    let j = jacobian(t, k).0;
    let tm = j * w;
    let cov = tm * sigma * tm.transpose();
    let a = cov[(0, 0)] + COV2D_DILATION;
    let b = cov[(0, 1)];
    let c = cov[(1, 1)] + COV2D_DILATION;
    let det = a * c - b * b;
    if !(a.is_finite() && b.is_finite() && c.is_finite() && det > 0.0 && a > 0.0) {
        return None;
    }
    let mean2d = [k.fx * t.x / t.z + k.cx, k.fy * t.y / t.z + k.cy];
    let half = 0.5 * (a - c);
    let lambda_max = 0.5 * (a + c) + (half * half + b * b).sqrt();
    let radius = (FOOTPRINT_SIGMAS * lambda_max.sqrt()).ceil();
    let (wid, hei) = (k.width as f64, k.height as f64);
    if !(mean2d[0] + radius >= 0.0
        && mean2d[0] - radius < wid
        && mean2d[1] + radius >= 0.0
        && mean2d[1] - radius < hei)
    {
        return None;
    }

    let dir = view_dir(g, pose).0;
    let raw = sh_color(&g.sh, sh_degree, &dir);
    Some(Projected {
        mean2d,
        cov2d: [a, b, c],
        conic: [c / det, -b / det, a / det],
        depth: t.z,
        radius,
        opacity: sigmoid(g.opacity_logit),
        color: raw.map(|v| v.clamp(0.0, 1.0)),
        color_live: raw.map(|v| (0.0..=1.0).contains(&v)),
    })
}

/// Upstream partials for one projected Gaussian, as accumulated by the rasterizer.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScreenGrad {
    pub mean2d: [f64; 2],
    pub conic: [f64; 3],
    /// With respect to the sigmoid opacity (not the logit).
    pub opacity: f64,
    pub color: [f64; 3],
}

impl ScreenGrad {
    pub fn add(&mut self, o: &ScreenGrad) {
        for i in 0..2 {
            self.mean2d[i] += o.mean2d[i];
        }
        for i in 0..3 {
            self.conic[i] += o.conic[i];
            self.color[i] += o.color[i];
        }
        self.opacity += o.opacity;
    }
}

fn covariance(g: &Gaussian) -> Mat3 {
    let m = rotation_scale(g).0;
    m * m.transpose()
}

/// `M = R·diag(exp(s))` together with `R` and `exp(s)`.
fn rotation_scale(g: &Gaussian) -> (Mat3, Mat3, Vec3) {
    let r = quat_to_matrix(normalize_quat(g.rotation));
    let e = clamp_log_scale(g.log_scale).map(f64::exp);
    (r * Mat3::from_diagonal(&e), r, e)
}

/// Projective Jacobian at camera-space `t`, with `x/z` and `y/z` clamped to
/// a margin around the image. Also returns the clamped ratios and whether
/// each was inside the margin.
fn jacobian(t: Vec3, k: &Intrinsics) -> (Matrix2x3<f64>, [f64; 2], [bool; 2]) {
    let (w, h) = (k.width as f64, k.height as f64);
    let m = 0.5 * (JACOBIAN_FOV_MARGIN - 1.0);
    let lim = |r: f64, c: f64, size: f64, f: f64| {
        let (lo, hi) = ((-m * size - c) / f, ((1.0 + m) * size - c) / f);
        (r.clamp(lo, hi), (lo..=hi).contains(&r))
    };
    let (u, u_live) = lim(t.x / t.z, k.cx, w, k.fx);
    let (v, v_live) = lim(t.y / t.z, k.cy, h, k.fy);
    let iz = 1.0 / t.z;
    let j = Matrix2x3::new(k.fx * iz, 0.0, -k.fx * u * iz, 0.0, k.fy * iz, -k.fy * v * iz);
    (j, [u, v], [u_live, v_live])
}

/// Unit direction from the camera center to the mean, and the distance.
fn view_dir(g: &Gaussian, pose: &CameraPose) -> (Vec3, f64) {
    let v = g.mean - pose.position();
    let n = v.norm();
    (v / n, n)
}

/// `dR/dq_i` for a unit quaternion `[w, x, y, z]`.
fn rotation_partials(q: [f64; 4]) -> [Mat3; 4] {
    let [w, x, y, z] = q;
    [
        Mat3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0,
        Mat3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0,
        Mat3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0,
        Mat3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0,
    ]
}

/// Chains screen-space partials back to the Gaussian's parameters.
///
/// `p` must be the forward projection of `g` in `pose`.
pub fn project_backward(
    g: &Gaussian,
    sh_degree: u32,
    pose: &CameraPose,
    p: &Projected,
    up: &ScreenGrad,
) -> [f64; N_PARAMS] {
    let mut out = [0.0; N_PARAMS];
    let k = pose.intrinsics();
    let (fx, fy) = (k.fx, k.fy);
    let w = pose.rotation();
    let t = w * (g.mean - pose.position());
    let (x, y, z) = (t.x, t.y, t.z);

    // Mean projection.
    let mut dt = Vec3::new(
        up.mean2d[0] * fx / z,
        up.mean2d[1] * fy / z,
        -up.mean2d[0] * fx * x / (z * z) - up.mean2d[1] * fy * y / (z * z),
    );

    // Conic -> covariance.
    let [a, b, c] = p.cov2d;
    let det = a * c - b * b;
    let d2 = det * det;
    let [ga_, gb_, gc_] = up.conic;
    let ga = ga_ * (-c * c / d2) + gb_ * (b * c / d2) + gc_ * (-b * b / d2);
    let gb = ga_ * (2.0 * b * c / d2) + gb_ * (-(a * c + b * b) / d2) + gc_ * (2.0 * a * b / d2);
    let gc = ga_ * (-b * b / d2) + gb_ * (a * b / d2) + gc_ * (-a * a / d2);
    let gm = Matrix2::new(ga, 0.5 * gb, 0.5 * gb, gc);

    let (m, r, e) = rotation_scale(g);
    let sigma = m * m.transpose();
    let (j, [u, v], live) = jacobian(t, k);
    let tm = j * w;
    let d_sigma: Mat3 = tm.transpose() * gm * tm;
    let d_tm: Matrix2x3<f64> = 2.0 * gm * tm * sigma;
    let d_j: Matrix2x3<f64> = d_tm * w.transpose();

    let z2 = z * z;
    // J02 = -fx·u/z with u = x/z inside the margin and constant outside it.
    let (cu, cv) = (if live[0] { 2.0 } else { 1.0 }, if live[1] { 2.0 } else { 1.0 });
    if live[0] {
        dt.x += d_j[(0, 2)] * (-fx / z2);
    }
    if live[1] {
        dt.y += d_j[(1, 2)] * (-fy / z2);
    }
    dt.z += d_j[(0, 0)] * (-fx / z2)
        + d_j[(0, 2)] * (cu * fx * u / z2)
        + d_j[(1, 1)] * (-fy / z2)
        + d_j[(1, 2)] * (cv * fy * v / z2);
    let mut d_mean = w.transpose() * dt;

    // Covariance -> rotation and scale.
    let d_m = 2.0 * d_sigma * m;
    let mut d_r = Mat3::zeros();
    for col in 0..3 {
        for row in 0..3 {
            d_r[(row, col)] = d_m[(row, col)] * e[col];
        }
    }
    let s_raw = g.log_scale;
    for i in 0..3 {
        if (MIN_LOG_SCALE..=MAX_LOG_SCALE).contains(&s_raw[i]) {
            out[7 + i] = (0..3).map(|row| d_m[(row, i)] * r[(row, i)] * e[i]).sum();
        }
    }
    let qn = q_norm(g.rotation);
    if qn >= 1e-12 && qn.is_finite() {
        let qh = normalize_quat(g.rotation);
        let parts = rotation_partials(qh);
        let gq: [f64; 4] = parts.map(|dr| dr.component_mul(&d_r).sum());
        let dot: f64 = (0..4).map(|i| qh[i] * gq[i]).sum();
        for i in 0..4 {
            out[3 + i] = (gq[i] - qh[i] * dot) / qn;
        }
    }

    // Opacity.
    out[10] = up.opacity * p.opacity * (1.0 - p.opacity);

    // Color.
    let gcol: [f64; 3] = std::array::from_fn(|ch| if p.color_live[ch] { up.color[ch] } else { 0.0 });
    let (dir, dist) = view_dir(g, pose);
    let mut d_dir = Vec3::zeros();
    for ch in 0..3 {
        out[11 + ch] = gcol[ch] * SH_C0;
        if sh_degree >= 1 {
            out[14 + ch] = -gcol[ch] * SH_C1 * dir.y;
            out[17 + ch] = gcol[ch] * SH_C1 * dir.z;
            out[20 + ch] = -gcol[ch] * SH_C1 * dir.x;
            d_dir += gcol[ch] * SH_C1 * Vec3::new(-g.sh[3][ch], -g.sh[1][ch], g.sh[2][ch]);
        }
    }
    if sh_degree >= 1 {
        d_mean += (d_dir - dir * dir.dot(&d_dir)) / dist;
    }
    out[0..3].copy_from_slice(d_mean.as_slice());
    out
}

fn q_norm(q: [f64; 4]) -> f64 {
    q.iter().map(|v| v * v).sum::<f64>().sqrt()
}
